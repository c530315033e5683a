"""
The form encoder.

Every pitch slot is embedded as two halves: the gamestate-delta token, and the
context the pitch happened in (supplemental stats, physics, stadium, lineup
slot, pitch type, plate zone). Ordinal embeddings for the at-bat within the view
and the pitch within the at-bat are added on top. A pre-norm transformer encoder
reads the sequence; the [CLS] slot is projected to the 72-d form embedding.
"""
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from pitchform.dataset import (
    IGNORE_INDEX,
    MAX_PITCH_ORDINAL,
    N_LINEUP_POSITIONS,
    N_PITCH_TYPES,
    N_PLATE_ZONES,
    PHYSICS_DIM,
    ROLE_SHAPES,
    MaskedBatch,
)
from pitchform.errors import BadPairing, IdOutOfRange, NoMaskedPositions

logger = logging.getLogger(__name__)

FORM_DIM = 72

# (preset, role) -> architecture; the data-dependent sizes come from the feature store
MODEL_PRESETS = {
    ("desk", "batter"): dict(layers=2, heads=4, model_dim=64, feedforward_dim=128, dropout=0.1),
    ("desk", "pitcher"): dict(layers=2, heads=4, model_dim=64, feedforward_dim=128, dropout=0.1),
    ("paper", "batter"): dict(layers=8, heads=8, model_dim=512, feedforward_dim=2048, dropout=0.1),
    ("paper", "pitcher"): dict(layers=8, heads=8, model_dim=512, feedforward_dim=2048, dropout=0.1),
}


@dataclass
class ModelConfig:
    layers: int = 2
    heads: int = 4
    model_dim: int = 64
    feedforward_dim: int = 128
    vocab_size: int = 474  # delta tokens plus [CLS], [MASK], [PAD]
    n_stadiums: int = 31
    n_positions: int = N_LINEUP_POSITIONS
    n_pitch_types: int = N_PITCH_TYPES
    n_plate_zones: int = N_PLATE_ZONES
    supplemental_input_dim: int = 114  # values plus presence flags
    physics_dim: int = PHYSICS_DIM
    form_dim: int = FORM_DIM
    max_len: int = 128
    max_at_bats: int = 16  # view at-bats plus the [CLS] ordinal
    max_pitch_ordinal: int = MAX_PITCH_ORDINAL
    dropout: float = 0.1

    def __post_init__(self):
        if self.model_dim % self.heads != 0:
            raise ValueError(f"model_dim {self.model_dim} is not divisible by heads {self.heads}")
        if self.model_dim % 2 != 0:
            raise ValueError(f"model_dim must be even, got {self.model_dim}")
        if self.form_dim != FORM_DIM:
            raise ValueError(f"form_dim is fixed at {FORM_DIM}, got {self.form_dim}")
        if self.vocab_size < 4:
            raise ValueError(f"vocab_size must cover at least one delta and three specials, got {self.vocab_size}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def n_deltas(self) -> int:
        """MGM output classes: the delta tokens without the specials."""
        return self.vocab_size - 3

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        defaults = cls()
        return cls(**{k: data.get(k, getattr(defaults, k)) for k in asdict(defaults)})

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    @classmethod
    def for_data(cls, preset: str, role: str, vocab_size: int, n_stadiums: int,
                 supplemental_input_dim: int, max_len: Optional[int] = None, view_size: Optional[int] = None,
                 **overrides) -> "ModelConfig":
        if (preset, role) not in MODEL_PRESETS:
            raise ValueError(f"unknown preset {preset!r} for role {role!r}")
        _, default_view, _, default_max_len = ROLE_SHAPES[role]
        values = dict(MODEL_PRESETS[(preset, role)])
        values.update(
            vocab_size=vocab_size,
            n_stadiums=n_stadiums,
            supplemental_input_dim=supplemental_input_dim,
            max_len=max_len or default_max_len,
            max_at_bats=(view_size or default_view) + 1,
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


# -------------------------------------------------------------------
# Encoder
# -------------------------------------------------------------------

class MultiHeadSelfAttention(nn.Module):
    def __init__(self, model_dim: int, heads: int, dropout: float = 0.0):
        super().__init__()
        self.heads = heads
        self.head_dim = model_dim // heads
        self.query = nn.Linear(model_dim, model_dim)
        self.key = nn.Linear(model_dim, model_dim)
        self.value = nn.Linear(model_dim, model_dim)
        self.out = nn.Linear(model_dim, model_dim)
        self.dropout = nn.Dropout(dropout)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        B, L, _ = x.shape
        return x.view(B, L, self.heads, self.head_dim).transpose(1, 2)

    def forward(self, x: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        """x: (B, L, d); attention_mask: (B, L) True on real slots. Pad keys get no weight."""
        B, L, d = x.shape
        q, k, v = self._split(self.query(x)), self._split(self.key(x)), self._split(self.value(x))
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        scores = scores.masked_fill(~attention_mask[:, None, None, :], float("-inf"))
        weights = self.dropout(torch.softmax(scores, dim=-1))
        context = (weights @ v).transpose(1, 2).reshape(B, L, d)
        return self.out(context)


class EncoderLayer(nn.Module):
    """Pre-norm block: x + attn(norm(x)), then x + ff(norm(x))."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.model_dim
        self.norm1 = nn.LayerNorm(d)
        self.attention = MultiHeadSelfAttention(d, config.heads, config.dropout)
        self.norm2 = nn.LayerNorm(d)
        self.feedforward = nn.Sequential(
            nn.Linear(d, config.feedforward_dim),
            nn.GELU(),
            nn.Linear(config.feedforward_dim, d),
        )
        self.dropout = nn.Dropout(config.dropout)

    def forward(self, x: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        x = x + self.dropout(self.attention(self.norm1(x), attention_mask))
        return x + self.dropout(self.feedforward(self.norm2(x)))


class FormModel(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        d = config.model_dim
        half = d // 2
        self.delta_embedding = nn.Embedding(config.vocab_size, half)
        self.supplemental_projection = nn.Sequential(
            nn.Linear(config.supplemental_input_dim, half),
            nn.GELU(),
            nn.Linear(half, half),
        )
        self.physics_projection = nn.Linear(config.physics_dim, half)
        self.stadium_embedding = nn.Embedding(config.n_stadiums, half)
        self.lineup_embedding = nn.Embedding(config.n_positions, half)
        self.pitch_type_embedding = nn.Embedding(config.n_pitch_types, half)
        self.zone_embedding = nn.Embedding(config.n_plate_zones, half)
        self.cls_embedding = nn.Parameter(torch.zeros(d))
        self.at_bat_position = nn.Embedding(config.max_at_bats, d)
        self.pitch_position = nn.Embedding(config.max_pitch_ordinal + 1, d)
        self.embedding_dropout = nn.Dropout(config.dropout)
        self.layers = nn.ModuleList([EncoderLayer(config) for _ in range(config.layers)])
        self.final_norm = nn.LayerNorm(d)
        self.mgm_head = nn.Sequential(
            nn.Linear(d, d),
            nn.GELU(),
            nn.LayerNorm(d),
            nn.Linear(d, config.n_deltas),
        )
        self.contrastive_head = nn.Sequential(
            nn.Linear(d, d),
            nn.GELU(),
            nn.Linear(d, config.form_dim),
        )
        nn.init.normal_(self.cls_embedding, std=0.02)

    @property
    def cls_id(self) -> int:
        return self.config.vocab_size - 3

    def _check_ids(self, inputs: Dict[str, torch.Tensor]) -> None:
        tables = {
            "tokens": self.config.vocab_size,
            "stadium": self.config.n_stadiums,
            "lineup": self.config.n_positions,
            "pitch_type": self.config.n_pitch_types,
            "zone": self.config.n_plate_zones,
            "ab_ordinal": self.config.max_at_bats,
            "pitch_ordinal": self.config.max_pitch_ordinal + 1,
        }
        for name, size in tables.items():
            ids = inputs[name]
            if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= size):
                raise IdOutOfRange(
                    f"{name} ids span [{int(ids.min())}, {int(ids.max())}], table has {size} rows"
                )
        if inputs["tokens"].shape[1] > self.config.max_len:
            raise IdOutOfRange(f"sequence length {inputs['tokens'].shape[1]} exceeds max_len {self.config.max_len}")

    def context_half(self, inputs: Dict[str, torch.Tensor]) -> torch.Tensor:
        return (
            self.supplemental_projection(inputs["supplemental"])
            + self.physics_projection(inputs["physics"])
            + self.stadium_embedding(inputs["stadium"])
            + self.lineup_embedding(inputs["lineup"])
            + self.pitch_type_embedding(inputs["pitch_type"])
            + self.zone_embedding(inputs["zone"])
        )

    def embed_inputs(self, inputs: Dict[str, torch.Tensor], positional: bool = True) -> torch.Tensor:
        """(B, L, model_dim): [delta half | context half], [CLS] slots replaced by their own vector."""
        self._check_ids(inputs)
        tokens = inputs["tokens"]
        x = torch.cat([self.delta_embedding(tokens), self.context_half(inputs)], dim=-1)
        is_cls = (tokens == self.cls_id).unsqueeze(-1)
        x = torch.where(is_cls, self.cls_embedding.to(x.dtype).expand_as(x), x)
        if positional:
            x = x + self.at_bat_position(inputs["ab_ordinal"]) + self.pitch_position(inputs["pitch_ordinal"])
        return x

    def encode(self, x: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        h = self.embedding_dropout(x)
        for layer in self.layers:
            h = layer(h, attention_mask)
        return self.final_norm(h)

    def forward(self, inputs: Dict[str, torch.Tensor]) -> Dict[str, torch.Tensor]:
        hidden = self.encode(self.embed_inputs(inputs), inputs["attention_mask"])
        return {
            "hidden": hidden,
            "mgm_logits": self.mgm_head(hidden),
            "forms": self.form_embeddings(hidden),
        }

    def form_embeddings(self, hidden: torch.Tensor) -> torch.Tensor:
        """L2-normalized 72-d projection of the processed [CLS] slot."""
        return F.normalize(self.contrastive_head(hidden[:, 0]), dim=-1)


def batch_tensors(batch: MaskedBatch, dtype: torch.dtype = torch.float32) -> Dict[str, torch.Tensor]:
    out = {
        "tokens": torch.from_numpy(batch.tokens),
        "targets": torch.from_numpy(batch.targets),
        "attention_mask": torch.from_numpy(batch.attention_mask),
        "supplemental": torch.from_numpy(batch.supplemental).to(dtype),
        "physics": torch.from_numpy(batch.physics).to(dtype),
        "pairing": torch.from_numpy(batch.pairing),
    }
    for name in ("stadium", "lineup", "pitch_type", "zone", "ab_ordinal", "pitch_ordinal"):
        out[name] = torch.from_numpy(getattr(batch, name))
    return out


# -------------------------------------------------------------------
# Objectives
# -------------------------------------------------------------------

def mgm_loss(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy over masked slots; targets are IGNORE_INDEX elsewhere."""
    if int((targets != IGNORE_INDEX).sum()) == 0:
        raise NoMaskedPositions("no masked positions in the batch")
    return F.cross_entropy(logits.reshape(-1, logits.shape[-1]), targets.reshape(-1), ignore_index=IGNORE_INDEX)


def masked_accuracy(logits: torch.Tensor, targets: torch.Tensor) -> float:
    masked = targets != IGNORE_INDEX
    if not masked.any():
        return 0.0
    return float((logits.argmax(dim=-1)[masked] == targets[masked]).float().mean())


def check_pairing(pairing) -> None:
    """The pairing must be a fixed-point-free involution on 0..n-1."""
    j = np.asarray(pairing.tolist() if isinstance(pairing, torch.Tensor) else pairing, dtype=np.int64)
    n = len(j)
    idx = np.arange(n)
    if n < 2 or j.min() < 0 or j.max() >= n:
        raise BadPairing(f"pairing must map 0..{n - 1} into itself, got {j.tolist()}")
    if np.any(j == idx):
        raise BadPairing(f"pairing has fixed points at {np.flatnonzero(j == idx).tolist()}")
    if np.any(j[j] != idx):
        raise BadPairing("pairing is not an involution")


def _similarities(z: torch.Tensor, tau: float) -> torch.Tensor:
    sim = z @ z.T / tau
    eye = torch.eye(z.shape[0], dtype=torch.bool, device=z.device)
    return sim.masked_fill(eye, float("-inf"))


def contrastive_loss(z: torch.Tensor, pairing, tau: float) -> torch.Tensor:
    """
    Sum over i of -log(exp(z_i.z_j(i)/tau) / sum_{a != i} exp(z_i.z_a/tau)).
    Each term is >= 0; with all embeddings identical each term is ln(2N-1).
    """
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    check_pairing(pairing)
    j = torch.as_tensor(pairing, dtype=torch.long, device=z.device)
    log_prob = torch.log_softmax(_similarities(z, tau), dim=1)
    return -log_prob[torch.arange(z.shape[0], device=z.device), j].sum()


def retrieval_accuracy(z: torch.Tensor, pairing) -> float:
    """Top-1: fraction of views whose nearest other view is their own pair."""
    j = torch.as_tensor(pairing, dtype=torch.long, device=z.device)
    nearest = _similarities(z.detach(), 1.0).argmax(dim=1)
    return float((nearest == j).float().mean())


def total_loss(model: FormModel, inputs: Dict[str, torch.Tensor], tau: float, lam: float) -> Dict[str, torch.Tensor]:
    """L_total = L_mgm + lam * L_contrastive, with the parts and the forward outputs."""
    outputs = model(inputs)
    mgm = mgm_loss(outputs["mgm_logits"], inputs["targets"])
    con = contrastive_loss(outputs["forms"], inputs["pairing"], tau)
    return {"total": mgm + lam * con, "mgm": mgm, "contrastive": con, **outputs}
