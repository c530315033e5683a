"""
Command-line entry point.

    python -m pitchform simulate --games 100 --seed 7 --out runs/desk
    python -m pitchform all --role batter --out runs/desk

Each stage writes `<out>/<stage>[_<role>]/` with a manifest.txt; a stage whose
inputs and config are unchanged is a no-op.
"""
import argparse
import json
import logging
import os
import shutil
import sys
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from pitchform import __version__
from pitchform.analytics import (
    DEFAULT_K,
    DEFAULT_STAT_DIM,
    assignment_from_labels,
    cluster_switch_rate,
    compare_clusterings,
    game_start_forms,
    read_assignments,
    read_forms,
    stat_baseline_vectors,
    timeline_report,
    ward_cluster,
    write_assignments,
    write_dendrogram,
    write_forms,
    write_metrics,
)
from pitchform.dataset import ROLES, DatasetConfig, FeatureStore, build_all_windows, read_window_manifest, split_windows, write_window_manifest
from pitchform.errors import EmptyInput, PitchformError
from pitchform.gamestate import REFERENCE_VOCAB_SIZE, enumerate_legal_deltas, load_vocabulary, save_vocabulary
from pitchform.ingest import load_corpus, parse_pitch_csv, read_seasons, reconstruct_games, replay_and_tokenize, save_corpus
from pitchform.manifest import (
    StageManifest,
    atomic_write_text,
    config_digest,
    file_hash,
    is_up_to_date,
    require_stage,
    write_manifest,
)
from pitchform.model import ModelConfig
from pitchform.simulation import SimConfig, read_players, simulate_corpus, write_simulation
from pitchform.stats import (
    STAT_SPEC_PRESETS,
    StatEngine,
    SupplementalTable,
    fit_standardizer,
    read_stat_spec,
    save_pca,
    write_stat_spec,
)
from pitchform.train import TrainConfig, latest_checkpoint, load_checkpoint, read_metrics, train

logger = logging.getLogger(__name__)

PRESETS = ("desk", "paper")
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


@dataclass
class RunConfig:
    subcommand: str
    out: str = "runs/desk"
    input: Optional[str] = None
    seasons: Optional[str] = None
    role: str = "batter"
    preset: str = "desk"
    seed: int = 7
    games: int = 100
    k: int = DEFAULT_K
    stat_dim: int = DEFAULT_STAT_DIM
    tau: Optional[float] = None
    lam: Optional[float] = None
    stride: Optional[int] = None
    max_len: Optional[int] = None
    steps: Optional[int] = None
    players: Optional[List[int]] = None
    dry_run: bool = False
    verbose: bool = False

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if self.preset not in PRESETS:
            raise ValueError(f"preset must be one of {PRESETS}, got {self.preset!r}")
        if self.games < 1:
            raise ValueError(f"games must be >= 1, got {self.games}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        values = vars(args)
        return cls(**{k: values[k] for k in asdict(cls("x")) if k in values})

    def to_dict(self) -> dict:
        return asdict(self)

    def stage_dir(self, stage: str, role_scoped: bool = False) -> str:
        return os.path.join(self.out, f"{stage}_{self.role}" if role_scoped else stage)


# -------------------------------------------------------------------
# Helpers
# -------------------------------------------------------------------

def write_run_config(run: RunConfig) -> str:
    """Preset, seed and overrides of the last successful command, at the run root."""
    path = os.path.join(run.out, "run_config.json")
    os.makedirs(run.out, exist_ok=True)
    atomic_write_text(path, json.dumps(run.to_dict(), indent=2, sort_keys=True) + "\n")
    return path


def _banner(title: str) -> None:
    print("\n" + "=" * 60)
    print(title)
    print("=" * 60)


def _require(run: RunConfig, stage: str, role_scoped: bool = False) -> StageManifest:
    command = f"pitchform {stage} --out {run.out}" + (f" --role {run.role}" if role_scoped else "")
    return require_stage(run.stage_dir(stage, role_scoped), stage, command)


def _digest(manifest: StageManifest) -> str:
    return config_digest(manifest.outputs)


def _up_to_date(out_dir: str, stage: str, inputs: Dict[str, str], config: dict, seed: int) -> bool:
    if is_up_to_date(out_dir, inputs, config, seed):
        logger.info("stage %s unchanged, nothing to do", stage)
        print(f"✓ {stage}: up to date ({out_dir})")
        return True
    return False


def _finish(run: RunConfig, out_dir: str, stage: str, config: dict, inputs: Dict[str, str], outputs: List[str]) -> None:
    write_manifest(out_dir, StageManifest(stage, __version__, run.seed, config, inputs), outputs)
    print(f"✓ {stage}: wrote {out_dir}")


def _format_lr(lr: float) -> str:
    mantissa, exponent = f"{lr:.0e}".split("e")
    return f"{mantissa}e{int(exponent)}"


def _load_table(run: RunConfig) -> SupplementalTable:
    ingest_dir = run.stage_dir("ingest")
    layout = read_stat_spec(os.path.join(ingest_dir, "stat_spec.txt"))
    return SupplementalTable.load(os.path.join(ingest_dir, "supplemental.npz"), layout)


def _load_store(run: RunConfig) -> FeatureStore:
    ingest_dir = run.stage_dir("ingest")
    corpus = load_corpus(ingest_dir)
    vocab = load_vocabulary(os.path.join(ingest_dir, "vocab.txt"))
    return FeatureStore(corpus, _load_table(run), vocab)


def _load_dataset_config(run: RunConfig) -> DatasetConfig:
    with open(os.path.join(run.stage_dir("windows", True), "dataset_config.json"), "r", encoding="utf-8") as f:
        return DatasetConfig.from_dict(json.load(f))


def _archetypes(run: RunConfig) -> Dict[int, str]:
    path = os.path.join(run.stage_dir("simulate"), "players.csv")
    if run.input is not None or not os.path.exists(path):
        return {}
    return {p.player_id: p.archetype for p in read_players(path) if p.role == run.role}


def _configs(run: RunConfig, store: FeatureStore, dataset_config: DatasetConfig):
    model_config = ModelConfig.for_data(
        run.preset, run.role,
        vocab_size=store.vocab.size,
        n_stadiums=store.n_stadiums,
        supplemental_input_dim=store.supplemental_dim,
        max_len=dataset_config.max_len,
        view_size=dataset_config.view_size,
    )
    train_config = TrainConfig.preset(
        run.preset, run.role, seed=run.seed, tau=run.tau, lam=run.lam, total_steps=run.steps,
    )
    return model_config, train_config


# -------------------------------------------------------------------
# Stages
# -------------------------------------------------------------------

def cmd_simulate(run: RunConfig) -> str:
    out_dir = run.stage_dir("simulate")
    sim = SimConfig(seed=run.seed, n_games=run.games)
    config = sim.to_dict()
    if _up_to_date(out_dir, "simulate", {}, config, run.seed):
        return out_dir
    result = simulate_corpus(sim)
    write_simulation(result, out_dir)
    print(f"Simulated {len(result.games)} games, {len(result.events)} pitches, {len(result.players)} players")
    _finish(run, out_dir, "simulate", config, {}, ["events.csv", "seasons.csv", "players.csv"])
    return out_dir


def cmd_vocab(run: RunConfig) -> str:
    out_dir = run.stage_dir("vocab")
    if _up_to_date(out_dir, "vocab", {}, {}, run.seed):
        return out_dir
    os.makedirs(out_dir, exist_ok=True)
    vocab = enumerate_legal_deltas()
    save_vocabulary(vocab, os.path.join(out_dir, "vocab.txt"))
    print(f"Delta vocabulary: {len(vocab)} tokens (reference count {REFERENCE_VOCAB_SIZE})")
    _finish(run, out_dir, "vocab", {}, {}, ["vocab.txt", "vocab_cardinality.txt"])
    return out_dir


def cmd_ingest(run: RunConfig) -> str:
    out_dir = run.stage_dir("ingest")
    vocab_manifest = _require(run, "vocab")
    if run.input is None:
        _require(run, "simulate")
        events_path = os.path.join(run.stage_dir("simulate"), "events.csv")
        seasons_path = run.seasons or os.path.join(run.stage_dir("simulate"), "seasons.csv")
    else:
        events_path, seasons_path = run.input, run.seasons
    for path in (events_path, seasons_path):
        if path is not None and not os.path.exists(path):
            raise FileNotFoundError(f"input not found: {path}")
    inputs = {"events": file_hash(events_path), "vocab": _digest(vocab_manifest)}
    if seasons_path is not None:
        inputs["seasons"] = file_hash(seasons_path)
    config = {"preset": run.preset, "train_fraction": TrainConfig().train_fraction}
    if _up_to_date(out_dir, "ingest", inputs, config, run.seed):
        return out_dir

    vocab = load_vocabulary(os.path.join(run.stage_dir("vocab"), "vocab.txt"))
    parsed = parse_pitch_csv(events_path)
    if not parsed.events:
        raise EmptyInput(f"{events_path}: no valid pitch rows")
    corpus = replay_and_tokenize(reconstruct_games(parsed.events, read_seasons(seasons_path) if seasons_path else None),
                                 vocab)
    save_corpus(corpus, vocab, out_dir, parsed.errors)

    layout = STAT_SPEC_PRESETS[run.preset]()
    write_stat_spec(layout, os.path.join(out_dir, "stat_spec.txt"))
    table = StatEngine(corpus).supplemental_table(layout)
    standardizer = fit_standardizer(table, corpus, config["train_fraction"])
    standardizer.save(os.path.join(out_dir, "standardizer.csv"))
    table.standardize(standardizer).save(os.path.join(out_dir, "supplemental.npz"))

    print(f"Parsed {len(parsed.events)} pitches ({len(parsed.errors)} rows skipped)")
    print(f"Tokenized {corpus.tokenized_count} pitches, {len(corpus.transition_errors)} illegal transitions, "
          f"{len(corpus.gaps)} gaps")
    print(f"Supplemental vector: {len(layout)} slots")
    _finish(run, out_dir, "ingest", config, inputs, [
        "events.csv", "vocab.txt", "batter_index.csv", "pitcher_index.csv", "seasons.csv", "errors.tsv",
        "stat_spec.txt", "standardizer.csv", "supplemental.npz",
    ])
    return out_dir


def cmd_windows(run: RunConfig) -> str:
    out_dir = run.stage_dir("windows", True)
    ingest = _require(run, "ingest")
    dataset_config = DatasetConfig.for_role(run.role, stride=run.stride, max_len=run.max_len)
    config = dataset_config.to_dict()
    inputs = {"ingest": _digest(ingest)}
    if _up_to_date(out_dir, "windows", inputs, config, run.seed):
        return out_dir
    corpus = load_corpus(run.stage_dir("ingest"))
    windows = build_all_windows(corpus, dataset_config)
    if not windows:
        raise EmptyInput(f"no {run.role} has {dataset_config.window_size} at-bats; simulate more games")
    train_windows, held_out = split_windows(windows, corpus, TrainConfig().train_fraction)
    os.makedirs(out_dir, exist_ok=True)
    write_window_manifest(train_windows, corpus, os.path.join(out_dir, "train_windows.csv"))
    write_window_manifest(held_out, corpus, os.path.join(out_dir, "held_out_windows.csv"))
    atomic_write_text(os.path.join(out_dir, "dataset_config.json"), json.dumps(config, indent=2, sort_keys=True))
    print(f"{len(train_windows)} training and {len(held_out)} held-out {run.role} windows")
    _finish(run, out_dir, "windows", config, inputs,
            ["train_windows.csv", "held_out_windows.csv", "dataset_config.json"])
    return out_dir


def cmd_train(run: RunConfig) -> str:
    out_dir = run.stage_dir("train", True)
    ingest = _require(run, "ingest")
    windows_manifest = _require(run, "windows", True)
    store = _load_store(run)
    dataset_config = _load_dataset_config(run)
    model_config, train_config = _configs(run, store, dataset_config)

    _banner(f"TRAIN CONFIG ({run.preset}, {run.role})")
    print(f"learning rate: {_format_lr(train_config.lr)}  betas: ({train_config.beta1}, {train_config.beta2})")
    print(f"warmup steps: {train_config.warmup_steps:,}  total steps: {train_config.total_steps:,}")
    print(f"batch: {train_config.batch_windows} windows ({2 * train_config.batch_windows} views)")
    print(f"tau: {train_config.tau}  lambda: {train_config.lam}  seed: {train_config.seed}")
    print(f"model: {model_config.layers} layers, {model_config.heads} heads, dim {model_config.model_dim}, "
          f"ff {model_config.feedforward_dim}, vocab {model_config.vocab_size}, form {model_config.form_dim}")
    if run.dry_run:
        print("(dry run, nothing trained)")
        return out_dir

    config = {"model": model_config.to_dict(), "train": train_config.to_dict()}
    inputs = {"ingest": _digest(ingest), "windows": _digest(windows_manifest)}
    if _up_to_date(out_dir, "train", inputs, config, run.seed):
        return out_dir
    previous = os.path.join(out_dir, "manifest.txt")
    if os.path.exists(previous):
        logger.warning("inputs or config changed; discarding old checkpoints in %s", out_dir)
        shutil.rmtree(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    atomic_write_text(os.path.join(out_dir, "model_config.json"), json.dumps(model_config.to_dict(), indent=2, sort_keys=True))
    atomic_write_text(os.path.join(out_dir, "train_config.json"), json.dumps(train_config.to_dict(), indent=2, sort_keys=True))

    windows_dir = run.stage_dir("windows", True)
    train_windows = read_window_manifest(os.path.join(windows_dir, "train_windows.csv"), store.corpus)
    held_out = read_window_manifest(os.path.join(windows_dir, "held_out_windows.csv"), store.corpus)
    result = train(model_config, train_config, store, dataset_config, train_windows, held_out, out_dir)
    last = read_metrics(result.metrics_path).iloc[-1]
    print(f"Step {int(last['step'])}: mgm {last['mgm_loss']:.4f}, contrastive {last['con_loss']:.4f}, "
          f"masked acc {last['masked_acc']:.3f}, retrieval {last['retrieval_acc']:.3f}")
    _finish(run, out_dir, "train", config, inputs,
            ["checkpoints", "metrics.csv", "model_config.json", "train_config.json"])
    return out_dir


def cmd_embed(run: RunConfig) -> str:
    out_dir = run.stage_dir("embed", True)
    ingest = _require(run, "ingest")
    train_manifest = _require(run, "train", True)
    inputs = {"ingest": _digest(ingest), "train": _digest(train_manifest)}
    config = {"role": run.role}
    if _up_to_date(out_dir, "embed", inputs, config, run.seed):
        return out_dir
    store = _load_store(run)
    dataset_config = _load_dataset_config(run)
    train_dir = run.stage_dir("train", True)
    with open(os.path.join(train_dir, "model_config.json"), "r", encoding="utf-8") as f:
        expected = ModelConfig.from_dict(json.load(f))
    model, _, step = load_checkpoint(latest_checkpoint(train_dir), expected)
    forms = game_start_forms(store, model, dataset_config)
    if not forms:
        raise EmptyInput(f"no {run.role} has {dataset_config.view_size} at-bats before any game")
    os.makedirs(out_dir, exist_ok=True)
    write_forms(forms, os.path.join(out_dir, "forms.csv"))
    print(f"{len(forms)} game-start forms from the step {step} checkpoint")
    _finish(run, out_dir, "embed", config, inputs, ["forms.csv"])
    return out_dir


def cmd_cluster(run: RunConfig) -> str:
    out_dir = run.stage_dir("cluster", True)
    ingest = _require(run, "ingest")
    embed = _require(run, "embed", True)
    inputs = {"ingest": _digest(ingest), "embed": _digest(embed)}
    config = {"k": run.k, "stat_dim": run.stat_dim, "role": run.role}
    if _up_to_date(out_dir, "cluster", inputs, config, run.seed):
        return out_dir
    store = _load_store(run)
    forms = read_forms(os.path.join(run.stage_dir("embed", True), "forms.csv"))
    keys = [f.key for f in forms]
    X = np.stack([f.form for f in forms])
    k = min(run.k, len(X))
    if k < run.k:
        logger.warning("only %d forms; clustering with k=%d", len(X), k)
    form_dendrogram, form_assignment = ward_cluster(X, k, keys, "form")

    table = _load_table(run)
    stat_dim = min(run.stat_dim, len(X), len(table.layout.columns(exclude_scales=["this_game"])))
    if stat_dim < run.stat_dim:
        logger.warning("stat baseline reduced to %d dimensions", stat_dim)
    stat_vectors, pca = stat_baseline_vectors(store.corpus, table, keys, run.role, stat_dim)
    stat_dendrogram, stat_assignment = ward_cluster(stat_vectors, k, keys, "stat")

    metrics = {f"form_vs_stat_{name}": value for name, value in compare_clusterings(form_assignment, stat_assignment).items()}
    archetypes = _archetypes(run)
    if archetypes and all(player in archetypes for player, _ in keys):
        truth = assignment_from_labels(keys, [archetypes[player] for player, _ in keys], "archetype")
        for name, assignment in (("form", form_assignment), ("stat", stat_assignment)):
            for metric, value in compare_clusterings(assignment, truth).items():
                metrics[f"{name}_vs_archetype_{metric}"] = value

    os.makedirs(out_dir, exist_ok=True)
    write_assignments([form_assignment, stat_assignment], os.path.join(out_dir, "assignments.csv"))
    write_dendrogram(form_dendrogram, os.path.join(out_dir, "dendrogram_form.csv"))
    write_dendrogram(stat_dendrogram, os.path.join(out_dir, "dendrogram_stat.csv"))
    write_metrics(metrics, os.path.join(out_dir, "metrics.csv"))
    save_pca(pca, os.path.join(out_dir, "pca"))
    print(f"Clustered {len(keys)} forms into k={k} (form and stat); form vs stat ARI "
          f"{metrics['form_vs_stat_ari']:.3f}")
    _finish(run, out_dir, "cluster", config, inputs,
            ["assignments.csv", "dendrogram_form.csv", "dendrogram_stat.csv", "metrics.csv", "pca"])
    return out_dir


def cmd_report(run: RunConfig) -> str:
    out_dir = run.stage_dir("report", True)
    cluster = _require(run, "cluster", True)
    inputs = {"cluster": _digest(cluster)}
    config = {"players": run.players, "role": run.role}
    if _up_to_date(out_dir, "report", inputs, config, run.seed):
        return out_dir
    assignments = read_assignments(os.path.join(run.stage_dir("cluster", True), "assignments.csv"))
    archetypes = _archetypes(run)
    outputs: List[str] = []
    rows = []
    for method in sorted(assignments):
        assignment = assignments[method]
        timeline_report(assignment, os.path.join(out_dir, method), run.players, run.role)
        outputs.append(method)
        for player_id in assignment.players():
            rows.append((player_id, method, cluster_switch_rate(assignment, player_id), archetypes.get(player_id, "")))
    lines = ["player_id,method,switch_rate,archetype"]
    lines += [f"{player},{method},{rate:.6f},{archetype}" for player, method, rate, archetype in rows]
    atomic_write_text(os.path.join(out_dir, "switch_rates.csv"), "\n".join(lines) + "\n")
    outputs.append("switch_rates.csv")

    if archetypes:
        _banner("CLUSTER SWITCH RATE BY ARCHETYPE")
        for method in sorted(assignments):
            by_archetype: Dict[str, List[float]] = {}
            for player, m, rate, archetype in rows:
                if m == method and archetype:
                    by_archetype.setdefault(archetype, []).append(rate)
            summary = ", ".join(f"{a} {np.mean(r):.3f}" for a, r in sorted(by_archetype.items()))
            print(f"  {method}: {summary}")
    _finish(run, out_dir, "report", config, inputs, outputs)
    return out_dir


def cmd_all(run: RunConfig) -> str:
    stages: List[Callable[[RunConfig], str]] = [cmd_vocab, cmd_ingest, cmd_windows, cmd_train, cmd_embed,
                                                cmd_cluster, cmd_report]
    if run.input is None:
        stages.insert(0, cmd_simulate)
    out_dir = run.out
    for stage in stages:
        out_dir = stage(run)
        if stage is cmd_train and run.dry_run:
            break
    return out_dir


COMMANDS: Dict[str, Callable[[RunConfig], str]] = {
    "simulate": cmd_simulate,
    "vocab": cmd_vocab,
    "ingest": cmd_ingest,
    "windows": cmd_windows,
    "train": cmd_train,
    "embed": cmd_embed,
    "cluster": cmd_cluster,
    "report": cmd_report,
    "all": cmd_all,
}


# -------------------------------------------------------------------
# Argument parsing
# -------------------------------------------------------------------

def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="runs/desk", help="run directory (default: runs/desk)")
    common.add_argument("--seed", type=int, default=7, help="random seed (default: 7)")
    common.add_argument("--preset", choices=PRESETS, default="desk", help="model/training scale")
    common.add_argument("--role", choices=ROLES, default="batter", help="which player model")
    common.add_argument("--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(
        prog="pitchform",
        description="Player form embeddings from pitch-by-pitch gamestate deltas",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, parents=[common], help=help_text)

    def add_simulation_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--games", type=positive_int, default=100, help="games to simulate (default: 100)")

    def add_ingest_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--input", help="pitch CSV to ingest instead of the simulated corpus")
        p.add_argument("--seasons", help="game_pk,season CSV for --input")

    def add_dataset_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--stride", type=positive_int, help="window stride override")
        p.add_argument("--max-len", dest="max_len", type=positive_int, help="max sequence length override")

    def add_train_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--tau", type=float, help="contrastive temperature override")
        p.add_argument("--lam", type=float, help="contrastive loss weight override")
        p.add_argument("--steps", type=positive_int, help="total training steps override")
        p.add_argument("--dry-run", dest="dry_run", action="store_true", help="echo the configuration and exit")

    def add_cluster_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--k", type=positive_int, default=DEFAULT_K, help=f"clusters (default: {DEFAULT_K})")
        p.add_argument("--stat-dim", dest="stat_dim", type=positive_int, default=DEFAULT_STAT_DIM,
                       help=f"PCA dimension of the stat baseline (default: {DEFAULT_STAT_DIM})")

    def add_report_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--players", type=int, nargs="+", help="player ids for the timeline (default: all)")

    add_simulation_args(add("simulate", "simulate a synthetic league"))
    add("vocab", "enumerate the gamestate-delta vocabulary")
    add_ingest_args(add("ingest", "parse, replay and tokenize pitch data; compute supplemental stats"))
    add_dataset_args(add("windows", "cut training windows"))
    add_train_args(add("train", "train the form encoder"))
    add("embed", "compute game-start forms")
    add_cluster_args(add("cluster", "Ward-cluster forms and the stat baseline"))
    add_report_args(add("report", "timelines and switch rates"))

    everything = add("all", "run every stage for one role")
    for extra in (add_simulation_args, add_ingest_args, add_dataset_args, add_train_args, add_cluster_args,
                  add_report_args):
        extra(everything)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    try:
        run = RunConfig.from_args(args)
    except ValueError as e:
        print(f"pitchform: error: {e}", file=sys.stderr)
        return 2
    try:
        COMMANDS[run.subcommand](run)
    except (PitchformError, OSError, ValueError) as e:
        logger.debug("stage failed", exc_info=True)
        print(f"✗ {run.subcommand} failed: {e}", file=sys.stderr)
        return 1
    write_run_config(run)
    return 0


if __name__ == "__main__":
    sys.exit(main())
