"""
Stage manifests for the run directory.

Every stage directory `<out>/<stage>[_<role>]/` holds a `manifest.txt` of
tab-separated key/value lines: the stage name, tool version, seed, the
resolved config (JSON), and the SHA-256 of every input and output file.
"""
import hashlib
import json
import logging
import os
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, Optional

from pitchform.errors import MissingStage, StaleManifest

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.txt"


# -------------------------------------------------------------------
# Atomic writes
# -------------------------------------------------------------------

@contextmanager
def atomic_path(path: str) -> Iterator[str]:
    """Yield a temp path in the target's directory; renamed onto `path` on success."""
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    suffix = os.path.splitext(path)[1]
    fd, tmp = tempfile.mkstemp(prefix=".tmp_", suffix=suffix, dir=directory)
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def atomic_write_text(path: str, text: str) -> None:
    with atomic_path(path) as tmp:
        with open(tmp, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)


# -------------------------------------------------------------------
# Hashing
# -------------------------------------------------------------------

def file_hash(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def tree_hash(root: str) -> str:
    """Hash of every file under `root` (relative names and contents), manifests excluded."""
    digest = hashlib.sha256()
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            if name == MANIFEST_NAME or name.startswith(".tmp_"):
                continue
            path = os.path.join(dirpath, name)
            digest.update(os.path.relpath(path, root).replace(os.sep, "/").encode("utf-8"))
            digest.update(file_hash(path).encode("ascii"))
    return digest.hexdigest()


def path_hash(path: str) -> str:
    return tree_hash(path) if os.path.isdir(path) else file_hash(path)


def config_digest(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode("utf-8")).hexdigest()


# -------------------------------------------------------------------
# Manifests
# -------------------------------------------------------------------

@dataclass
class StageManifest:
    stage: str
    version: str
    seed: int
    config: dict = field(default_factory=dict)
    inputs: Dict[str, str] = field(default_factory=dict)  # name -> hash
    outputs: Dict[str, str] = field(default_factory=dict)  # file name relative to the stage dir -> hash

    def to_text(self) -> str:
        lines = [
            f"stage\t{self.stage}",
            f"version\t{self.version}",
            f"seed\t{self.seed}",
            f"config\t{json.dumps(self.config, sort_keys=True)}",
        ]
        lines += [f"input\t{name}\t{digest}" for name, digest in sorted(self.inputs.items())]
        lines += [f"output\t{name}\t{digest}" for name, digest in sorted(self.outputs.items())]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "StageManifest":
        values: Dict[str, str] = {}
        inputs: Dict[str, str] = {}
        outputs: Dict[str, str] = {}
        for line in text.splitlines():
            parts = line.split("\t")
            if parts[0] == "input" and len(parts) == 3:
                inputs[parts[1]] = parts[2]
            elif parts[0] == "output" and len(parts) == 3:
                outputs[parts[1]] = parts[2]
            elif len(parts) == 2:
                values[parts[0]] = parts[1]
        return cls(
            stage=values.get("stage", ""),
            version=values.get("version", ""),
            seed=int(values.get("seed", 0)),
            config=json.loads(values.get("config", "{}")),
            inputs=inputs,
            outputs=outputs,
        )


def read_manifest(stage_dir: str) -> Optional[StageManifest]:
    path = os.path.join(stage_dir, MANIFEST_NAME)
    if not os.path.exists(path):
        return None
    with open(path, "r", encoding="utf-8") as f:
        return StageManifest.from_text(f.read())


def write_manifest(stage_dir: str, manifest: StageManifest, outputs: Iterable[str]) -> StageManifest:
    """Hash `outputs` (names relative to stage_dir) and write the manifest last."""
    manifest.outputs = {name: path_hash(os.path.join(stage_dir, name)) for name in outputs}
    atomic_write_text(os.path.join(stage_dir, MANIFEST_NAME), manifest.to_text())
    return manifest


def verify_outputs(stage_dir: str, manifest: StageManifest) -> None:
    """StaleManifest when an output was changed or removed after the manifest was written."""
    for name, digest in manifest.outputs.items():
        path = os.path.join(stage_dir, name)
        if not os.path.exists(path):
            raise StaleManifest(f"{path} is listed in {stage_dir}/{MANIFEST_NAME} but missing")
        if path_hash(path) != digest:
            raise StaleManifest(f"{path} changed after stage '{manifest.stage}' wrote it; rerun that stage")


def require_stage(stage_dir: str, stage: str, command: str) -> StageManifest:
    """The manifest of a finished prior stage, with its outputs verified."""
    manifest = read_manifest(stage_dir)
    if manifest is None:
        raise MissingStage(stage, command)
    verify_outputs(stage_dir, manifest)
    return manifest


def is_up_to_date(stage_dir: str, inputs: Dict[str, str], config: dict, seed: int) -> bool:
    """True when the stage already ran on these inputs with this config and its outputs are intact."""
    manifest = read_manifest(stage_dir)
    if manifest is None:
        return False
    if manifest.inputs != inputs or config_digest(manifest.config) != config_digest(config) or manifest.seed != seed:
        return False
    try:
        verify_outputs(stage_dir, manifest)
    except StaleManifest as e:
        logger.warning("rerunning stage: %s", e)
        return False
    return True
