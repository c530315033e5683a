"""
Training: Adam with linear warm-up, the train loop, checkpoints and the metrics log.

Every step draws its batch and dropout noise from generators seeded by
(seed, step), so a run resumed from a checkpoint continues exactly where the
uninterrupted run would have been.
"""
import json
import logging
import os
import signal
import sys
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from torch.optim import Optimizer

from pitchform.dataset import DatasetConfig, FeatureStore, FormWindow, assemble_batch, sample_batch_windows
from pitchform.errors import CheckpointMismatch, NonFiniteGradient, ShapeMismatch
from pitchform.model import FormModel, ModelConfig, batch_tensors, masked_accuracy, retrieval_accuracy, total_loss

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "pitchform-checkpoint-1"
METRICS_COLUMNS = ["step", "lr", "mgm_loss", "con_loss", "masked_acc", "retrieval_acc"]

# (preset, role) -> schedule and batch size
TRAIN_PRESETS = {
    ("desk", "batter"): dict(warmup_steps=200, total_steps=2000, batch_windows=8, checkpoint_every=500, eval_every=100),
    ("desk", "pitcher"): dict(warmup_steps=200, total_steps=2000, batch_windows=8, checkpoint_every=500, eval_every=100),
    ("paper", "batter"): dict(warmup_steps=7500, total_steps=90000, batch_windows=78,
                              checkpoint_every=5000, eval_every=1000),
    ("paper", "pitcher"): dict(warmup_steps=2500, total_steps=35000, batch_windows=36,
                               checkpoint_every=5000, eval_every=1000),
}


@dataclass
class TrainConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    lr: float = 5e-4
    eps: float = 1e-8
    warmup_steps: int = 200
    total_steps: int = 2000
    batch_windows: int = 8  # N; a batch holds 2N views
    tau: float = 0.1
    lam: float = 1.0
    seed: int = 7
    checkpoint_every: int = 500
    eval_every: int = 100
    train_fraction: float = 0.8

    def __post_init__(self):
        if not 0 <= self.warmup_steps < self.total_steps:
            raise ValueError(f"warmup_steps must be in [0, total_steps), got {self.warmup_steps}/{self.total_steps}")
        if self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.batch_windows < 1:
            raise ValueError(f"batch_windows must be >= 1, got {self.batch_windows}")
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ValueError(f"train_fraction must be in (0, 1], got {self.train_fraction}")

    @classmethod
    def preset(cls, preset: str, role: str, **overrides) -> "TrainConfig":
        if (preset, role) not in TRAIN_PRESETS:
            raise ValueError(f"unknown preset {preset!r} for role {role!r}")
        values = dict(TRAIN_PRESETS[(preset, role)])
        given = {k: v for k, v in overrides.items() if v is not None}
        values.update(given)
        if "warmup_steps" not in given and values["warmup_steps"] >= values["total_steps"]:
            # a shortened run warms up over its first tenth
            values["warmup_steps"] = values["total_steps"] // 10
        return cls(**values)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        defaults = cls()
        return cls(**{k: data.get(k, getattr(defaults, k)) for k in asdict(defaults)})


# -------------------------------------------------------------------
# Optimizer
# -------------------------------------------------------------------

def lr_schedule(step: int, warmup: int, base_lr: float) -> float:
    """Linear ramp from 0 at step 0 to base_lr at `warmup`, constant afterwards."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    if warmup <= 0 or step >= warmup:
        return base_lr
    return base_lr * step / warmup


def adam_update(param: torch.Tensor, grad: torch.Tensor, exp_avg: torch.Tensor, exp_avg_sq: torch.Tensor,
                step: int, lr: float, betas: Tuple[float, float], eps: float) -> None:
    """One in-place Adam update with bias correction; `step` counts updates from 1."""
    if grad.shape != param.shape:
        raise ShapeMismatch(f"gradient shape {tuple(grad.shape)} != parameter shape {tuple(param.shape)}")
    beta1, beta2 = betas
    exp_avg.mul_(beta1).add_(grad, alpha=1 - beta1)
    exp_avg_sq.mul_(beta2).addcmul_(grad, grad, value=1 - beta2)
    m_hat = exp_avg / (1 - beta1 ** step)
    v_hat = exp_avg_sq / (1 - beta2 ** step)
    param.sub_(lr * m_hat / (v_hat.sqrt() + eps))


class WarmupAdam(Optimizer):
    """Adam whose learning rate follows `lr_schedule` over the update count."""

    def __init__(self, params, lr=5e-4, betas=(0.9, 0.999), eps=1e-8, warmup=0):
        if lr < 0.0:
            raise ValueError(f"invalid learning rate: {lr}")
        defaults = dict(lr=lr, betas=betas, eps=eps, warmup=warmup)
        super().__init__(params, defaults)
        self.step_count = 0

    def current_lr(self, step: Optional[int] = None) -> float:
        group = self.param_groups[0]
        return lr_schedule(self.step_count if step is None else step, group["warmup"], group["lr"])

    @torch.no_grad()
    def step(self, closure=None):
        loss = None
        if closure is not None:
            with torch.enable_grad():
                loss = closure()
        self.step_count += 1
        for group in self.param_groups:
            lr = lr_schedule(self.step_count, group["warmup"], group["lr"])
            for p in group["params"]:
                if p.grad is None:
                    continue
                state = self.state[p]
                if len(state) == 0:
                    state["exp_avg"] = torch.zeros_like(p)
                    state["exp_avg_sq"] = torch.zeros_like(p)
                adam_update(p, p.grad, state["exp_avg"], state["exp_avg_sq"],
                            self.step_count, lr, group["betas"], group["eps"])
        return loss


def build_optimizer(model: FormModel, config: TrainConfig) -> WarmupAdam:
    return WarmupAdam(model.parameters(), lr=config.lr, betas=(config.beta1, config.beta2),
                      eps=config.eps, warmup=config.warmup_steps)


def check_gradients(model: torch.nn.Module) -> None:
    """Raise NonFiniteGradient naming every parameter whose gradient has a NaN or inf."""
    bad = [name for name, p in model.named_parameters()
           if p.grad is not None and not torch.isfinite(p.grad).all()]
    if bad:
        raise NonFiniteGradient(f"non-finite gradient in {', '.join(bad)}")


def backward(loss: torch.Tensor, model: torch.nn.Module) -> Dict[str, torch.Tensor]:
    """Backpropagate `loss` and return the gradients by parameter name."""
    loss.backward()
    check_gradients(model)
    return {name: p.grad for name, p in model.named_parameters() if p.grad is not None}


# -------------------------------------------------------------------
# Checkpoints
# -------------------------------------------------------------------

def _blob_name(name: str) -> str:
    return name.replace("/", "_") + ".bin"


def save_checkpoint(model: FormModel, optimizer: WarmupAdam, step: int, out_dir: str) -> str:
    """manifest.txt plus one little-endian float32 blob per tensor (weights and Adam moments)."""
    os.makedirs(out_dir, exist_ok=True)
    tensors: List[Tuple[str, torch.Tensor]] = list(model.state_dict().items())
    for name, p in model.named_parameters():
        state = optimizer.state.get(p, {})
        if "exp_avg" in state:
            tensors.append((f"adam.exp_avg.{name}", state["exp_avg"]))
            tensors.append((f"adam.exp_avg_sq.{name}", state["exp_avg_sq"]))
    lines = [
        f"format\t{CHECKPOINT_FORMAT}",
        f"step\t{step}",
        f"optimizer_steps\t{optimizer.step_count}",
        f"config_hash\t{model.config.config_hash()}",
        f"model_config\t{json.dumps(model.config.to_dict(), sort_keys=True)}",
    ]
    for name, tensor in tensors:
        array = tensor.detach().cpu().numpy().astype("<f4")
        array.tofile(os.path.join(out_dir, _blob_name(name)))
        shape = ",".join(str(s) for s in array.shape)
        lines.append(f"tensor\t{name}\t{shape}\tfloat32\t{_blob_name(name)}")
    with open(os.path.join(out_dir, "manifest.txt"), "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
    return out_dir


def read_checkpoint_manifest(ckpt_dir: str) -> Dict:
    path = os.path.join(ckpt_dir, "manifest.txt")
    meta: Dict = {"tensors": []}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            parts = line.rstrip("\n").split("\t")
            if parts[0] == "tensor":
                _, name, shape, dtype, blob = parts
                dims = tuple(int(s) for s in shape.split(",")) if shape else ()
                meta["tensors"].append((name, dims, dtype, blob))
            elif len(parts) == 2:
                meta[parts[0]] = parts[1]
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointMismatch(f"{path}: not a {CHECKPOINT_FORMAT} manifest")
    return meta


def load_checkpoint(ckpt_dir: str, expected: Optional[ModelConfig] = None,
                    optimizer_config: Optional[TrainConfig] = None) -> Tuple[FormModel, Optional[WarmupAdam], int]:
    """
    Rebuild the model (and the optimizer when `optimizer_config` is given).
    CheckpointMismatch when the stored config hash differs from `expected`.
    """
    meta = read_checkpoint_manifest(ckpt_dir)
    config = ModelConfig.from_dict(json.loads(meta["model_config"]))
    if config.config_hash() != meta["config_hash"]:
        raise CheckpointMismatch(f"{ckpt_dir}: manifest config does not match its hash")
    if expected is not None and expected.config_hash() != meta["config_hash"]:
        raise CheckpointMismatch(
            f"{ckpt_dir}: checkpoint config hash {meta['config_hash'][:12]} != expected {expected.config_hash()[:12]}"
        )
    blobs = {}
    for name, dims, dtype, blob in meta["tensors"]:
        array = np.fromfile(os.path.join(ckpt_dir, blob), dtype="<f4")
        blobs[name] = torch.from_numpy(array.reshape(dims).copy())
    model = FormModel(config)
    state = {k: v for k, v in blobs.items() if not k.startswith("adam.")}
    model.load_state_dict(state)
    optimizer = None
    if optimizer_config is not None:
        optimizer = build_optimizer(model, optimizer_config)
        optimizer.step_count = int(meta.get("optimizer_steps", meta["step"]))
        for name, p in model.named_parameters():
            if f"adam.exp_avg.{name}" in blobs:
                optimizer.state[p]["exp_avg"] = blobs[f"adam.exp_avg.{name}"]
                optimizer.state[p]["exp_avg_sq"] = blobs[f"adam.exp_avg_sq.{name}"]
    return model, optimizer, int(meta["step"])


def checkpoint_dirs(run_dir: str) -> List[str]:
    root = os.path.join(run_dir, "checkpoints")
    if not os.path.isdir(root):
        return []
    return [os.path.join(root, d) for d in sorted(os.listdir(root)) if d.startswith("step_")]


def latest_checkpoint(run_dir: str) -> Optional[str]:
    dirs = checkpoint_dirs(run_dir)
    return dirs[-1] if dirs else None


# -------------------------------------------------------------------
# Train loop
# -------------------------------------------------------------------

def build_model(config: ModelConfig, seed: int) -> FormModel:
    torch.manual_seed(seed)
    return FormModel(config)


def step_rng(seed: int, step: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, step, stream])


def _write_metrics_header(path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(METRICS_COLUMNS) + "\n")


def _append_metrics(path: str, row: Dict[str, float]) -> None:
    with open(path, "a", encoding="utf-8", newline="\n") as f:
        values = [str(int(row["step"]))] + [repr(float(row[c])) for c in METRICS_COLUMNS[1:]]
        f.write(",".join(values) + "\n")


def read_metrics(path: str) -> pd.DataFrame:
    return pd.read_csv(path)


def _truncate_metrics(path: str, step: int) -> None:
    """Drop rows logged after `step` (a resumed run writes them again)."""
    if not os.path.exists(path):
        _write_metrics_header(path)
        return
    frame = read_metrics(path)
    _write_metrics_header(path)
    for row in frame[frame["step"] <= step].to_dict("records"):
        _append_metrics(path, row)


@dataclass
class TrainResult:
    model: FormModel
    steps: int
    checkpoints: List[str]
    metrics_path: str


class _InterruptFlag:
    def __init__(self):
        self.requested = False

    def __call__(self, sig, frame):
        print("\n\n🛑 Ctrl+C detected! Saving checkpoint...")
        self.requested = True


def evaluate_retrieval(model: FormModel, windows: Sequence[FormWindow], store: FeatureStore,
                       dataset_config: DatasetConfig, n: int, rng: np.random.Generator) -> float:
    """Top-1 positive-pair retrieval on one batch drawn from `windows`."""
    batch = assemble_batch(sample_batch_windows(windows, n, rng), store, dataset_config, rng)
    was_training = model.training
    model.eval()
    with torch.no_grad():
        outputs = model(batch_tensors(batch))
    model.train(was_training)
    return retrieval_accuracy(outputs["forms"], batch.pairing)


def train_step(model: FormModel, optimizer: WarmupAdam, windows: Sequence[FormWindow], store: FeatureStore,
               dataset_config: DatasetConfig, config: TrainConfig, step: int) -> Dict[str, float]:
    rng = step_rng(config.seed, step)
    torch.manual_seed(config.seed * 1_000_003 + step)
    batch = assemble_batch(sample_batch_windows(windows, config.batch_windows, rng), store, dataset_config, rng)
    inputs = batch_tensors(batch)
    model.train()
    optimizer.zero_grad(set_to_none=True)
    parts = total_loss(model, inputs, config.tau, config.lam)
    backward(parts["total"], model)
    optimizer.step()
    return {
        "step": step,
        "lr": optimizer.current_lr(),
        "mgm_loss": float(parts["mgm"].detach()),
        "con_loss": float(parts["contrastive"].detach()),
        "masked_acc": masked_accuracy(parts["mgm_logits"].detach(), inputs["targets"]),
        "retrieval_acc": retrieval_accuracy(parts["forms"].detach(), inputs["pairing"]),
    }


def _dump_diagnostics(run_dir: str, step: int, model: FormModel, error: Exception) -> str:
    path = os.path.join(run_dir, f"nonfinite_step_{step:06d}.txt")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"step\t{step}\nerror\t{error}\n")
        for name, p in model.named_parameters():
            grad = p.grad
            finite = bool(torch.isfinite(grad).all()) if grad is not None else True
            f.write(f"{name}\tparam_absmax={float(p.detach().abs().max()):.6g}\tgrad_finite={finite}\n")
    return path


def train(model_config: ModelConfig, config: TrainConfig, store: FeatureStore, dataset_config: DatasetConfig,
          windows: Sequence[FormWindow], held_out: Sequence[FormWindow], run_dir: str,
          resume: bool = True, max_steps: Optional[int] = None) -> TrainResult:
    """
    Run (or resume) training into `run_dir`: checkpoints/step_NNNNNN/, metrics.csv.
    `max_steps` stops early without changing the schedule (used for resume tests).
    """
    if not windows:
        raise ValueError("no training windows")
    os.makedirs(run_dir, exist_ok=True)
    metrics_path = os.path.join(run_dir, "metrics.csv")
    start = 0
    ckpt = latest_checkpoint(run_dir) if resume else None
    if ckpt is not None:
        model, optimizer, start = load_checkpoint(ckpt, model_config, config)
        logger.info("resuming from %s at step %d", ckpt, start)
        _truncate_metrics(metrics_path, start)
    else:
        model = build_model(model_config, config.seed)
        optimizer = build_optimizer(model, config)
        _write_metrics_header(metrics_path)

    eval_windows = held_out or windows
    checkpoints: List[str] = []
    flag = _InterruptFlag()
    try:
        previous_handler = signal.signal(signal.SIGINT, flag)
    except ValueError:  # not the main thread
        previous_handler = None
    end = config.total_steps if max_steps is None else min(config.total_steps, max_steps)
    step = start
    try:
        for step in range(start + 1, end + 1):
            try:
                row = train_step(model, optimizer, windows, store, dataset_config, config, step)
            except NonFiniteGradient as e:
                path = _dump_diagnostics(run_dir, step, model, e)
                logger.error("aborting at step %d: %s (diagnostics in %s)", step, e, path)
                raise
            if step == 1 or step % config.eval_every == 0 or step == end:
                row["retrieval_acc"] = evaluate_retrieval(
                    model, eval_windows, store, dataset_config, config.batch_windows, step_rng(config.seed, step, 1)
                )
                _append_metrics(metrics_path, row)
                logger.info(
                    "step %d lr %.3g mgm %.4f con %.4f acc %.3f retrieval %.3f",
                    step, row["lr"], row["mgm_loss"], row["con_loss"], row["masked_acc"], row["retrieval_acc"],
                )
            if step % config.checkpoint_every == 0 or step == end or flag.requested:
                path = os.path.join(run_dir, "checkpoints", f"step_{step:06d}")
                checkpoints.append(save_checkpoint(model, optimizer, step, path))
            if flag.requested:
                print(f"✓ Checkpoint saved at step {step}")
                sys.exit(130)
    finally:
        if previous_handler is not None:
            signal.signal(signal.SIGINT, previous_handler)
    return TrainResult(model=model, steps=step, checkpoints=checkpoints, metrics_path=metrics_path)
