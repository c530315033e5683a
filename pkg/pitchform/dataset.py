"""
Windows, views, masking and batch assembly.

A window is a run of a player's consecutive at-bats; its two views overlap in
the middle and form a positive pair for the contrastive objective. Every pitch
of a view becomes one token slot, with a [CLS] slot in front.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from pitchform.errors import InsufficientHistory, SequenceOverflow, UnknownPlayer
from pitchform.gamestate import DeltaVocabulary
from pitchform.ingest import Corpus, PitchEvent
from pitchform.stats import SupplementalTable, training_games

logger = logging.getLogger(__name__)

ROLES = ("batter", "pitcher")

# role -> (window at-bats, view at-bats, stride, max sequence length)
ROLE_SHAPES = {
    "batter": (20, 15, 5, 128),
    "pitcher": (100, 90, 10, 512),
}

IGNORE_INDEX = -100  # target value at unmasked slots
MAX_PITCH_ORDINAL = 16

PITCH_TYPE_CODES = ("FF", "SI", "FC", "SL", "ST", "SV", "CU", "KC", "CH", "FS", "KN", "EP")
PITCH_TYPE_IDS = {code: i + 1 for i, code in enumerate(PITCH_TYPE_CODES)}
OTHER_PITCH_TYPE = len(PITCH_TYPE_CODES) + 1
N_PITCH_TYPES = len(PITCH_TYPE_CODES) + 2  # 0 is [CLS]/pad

ZONE_GRID = 5
ZONE_X = (-1.5, 1.5)
ZONE_Z = (1.0, 4.0)
N_PLATE_ZONES = ZONE_GRID * ZONE_GRID + 1

N_LINEUP_POSITIONS = 10  # slots 1..9, 0 for [CLS]/pad

# Physics column -> (center, scale); batted-ball columns are 0 when absent
PHYSICS_SCALES = {
    "release_speed": (89.0, 6.0),
    "plate_x": (0.0, 0.8),
    "plate_z": (2.4, 0.9),
    "spin_rate": (2200.0, 300.0),
    "launch_speed": (88.0, 12.0),
    "launch_angle": (14.0, 25.0),
    "hit_distance": (200.0, 130.0),
}
PHYSICS_DIM = len(PHYSICS_SCALES) + 1  # plus batted-ball presence flag


@dataclass
class DatasetConfig:
    role: str = "batter"
    window_size: int = 20
    view_size: int = 15
    stride: int = 5
    max_len: int = 128
    mask_rate: float = 0.15

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if not 0 < self.view_size < self.window_size:
            raise ValueError(f"view_size must be in (0, window_size), got {self.view_size}/{self.window_size}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.max_len < 2:
            raise ValueError(f"max_len must be >= 2, got {self.max_len}")
        if not 0.0 < self.mask_rate <= 1.0:
            raise ValueError(f"mask_rate must be in (0, 1], got {self.mask_rate}")

    @classmethod
    def for_role(cls, role: str, **overrides) -> "DatasetConfig":
        if role not in ROLE_SHAPES:
            raise ValueError(f"role must be one of {ROLES}, got {role!r}")
        window, view, stride, max_len = ROLE_SHAPES[role]
        values = dict(role=role, window_size=window, view_size=view, stride=stride, max_len=max_len)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @property
    def view_offset(self) -> int:
        """Start of the second view inside the window."""
        return self.window_size - self.view_size

    def to_dict(self) -> dict:
        return {
            "role": self.role,
            "window_size": self.window_size,
            "view_size": self.view_size,
            "stride": self.stride,
            "max_len": self.max_len,
            "mask_rate": self.mask_rate,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetConfig":
        base = cls.for_role(data.get("role", "batter"))
        return cls(
            role=base.role,
            window_size=data.get("window_size", base.window_size),
            view_size=data.get("view_size", base.view_size),
            stride=data.get("stride", base.stride),
            max_len=data.get("max_len", base.max_len),
            mask_rate=data.get("mask_rate", base.mask_rate),
        )


# -------------------------------------------------------------------
# Windows
# -------------------------------------------------------------------

@dataclass(frozen=True)
class FormWindow:
    """Consecutive at-bats (corpus at-bat indices) of one player in one role."""
    player_id: int
    role: str
    start: int  # position in the player's appearance index
    at_bats: Tuple[int, ...]

    def __len__(self) -> int:
        return len(self.at_bats)


def extract_windows(
    corpus: Corpus, player_id: int, role: str, stride: int, window_size: Optional[int] = None
) -> List[FormWindow]:
    """Windows starting at 0, stride, 2*stride, ...; a trailing partial window is dropped."""
    if role not in ROLES:
        raise ValueError(f"role must be one of {ROLES}, got {role!r}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    size = window_size or ROLE_SHAPES[role][0]
    index = corpus.batter_index if role == "batter" else corpus.pitcher_index
    if player_id not in index:
        raise UnknownPlayer(player_id, role)
    appearances = index[player_id]
    if len(appearances) < size:
        raise InsufficientHistory(
            f"{role} {player_id} has {len(appearances)} at-bats, a window needs {size}"
        )
    return [
        FormWindow(player_id, role, start, tuple(appearances[start:start + size]))
        for start in range(0, len(appearances) - size + 1, stride)
    ]


def build_all_windows(corpus: Corpus, config: DatasetConfig) -> List[FormWindow]:
    """Windows for every player of the role, players in id order."""
    index = corpus.batter_index if config.role == "batter" else corpus.pitcher_index
    windows: List[FormWindow] = []
    for player_id in sorted(index):
        try:
            windows.extend(extract_windows(corpus, player_id, config.role, config.stride, config.window_size))
        except InsufficientHistory as e:
            logger.info("skipping player: %s", e)
    logger.info("%d %s windows from %d players", len(windows), config.role, len(index))
    return windows


def split_windows(
    windows: Sequence[FormWindow], corpus: Corpus, train_fraction: float
) -> Tuple[List[FormWindow], List[FormWindow]]:
    """Training windows end inside the training games; the rest are held out."""
    train_games = set(training_games(corpus, train_fraction))
    train, held_out = [], []
    for window in windows:
        last_game = corpus.at_bats[window.at_bats[-1]].game_pk
        (train if last_game in train_games else held_out).append(window)
    return train, held_out


def write_window_manifest(windows: Sequence[FormWindow], corpus: Corpus, path: str) -> None:
    rows = []
    for i, w in enumerate(windows):
        first = corpus.at_bats[w.at_bats[0]]
        last = corpus.at_bats[w.at_bats[-1]]
        rows.append((i, w.player_id, w.role, w.start, len(w), first.game_pk, first.ab_number,
                     last.game_pk, last.ab_number))
    frame = pd.DataFrame(rows, columns=[
        "window_id", "player_id", "role", "start", "size",
        "first_game_pk", "first_ab_number", "last_game_pk", "last_ab_number",
    ])
    frame.to_csv(path, index=False, lineterminator="\n")


def read_window_manifest(path: str, corpus: Corpus) -> List[FormWindow]:
    frame = pd.read_csv(path)
    windows = []
    for player_id, role, start, size, first_game, first_ab in zip(
        frame["player_id"], frame["role"], frame["start"], frame["size"],
        frame["first_game_pk"], frame["first_ab_number"],
    ):
        index = corpus.batter_index if role == "batter" else corpus.pitcher_index
        at_bats = tuple(index[int(player_id)][int(start):int(start) + int(size)])
        if len(at_bats) != size or corpus.at_bats[at_bats[0]].key != (first_game, first_ab):
            raise ValueError(f"{path}: window for {role} {player_id} at {start} does not match the corpus")
        windows.append(FormWindow(int(player_id), role, int(start), at_bats))
    return windows


# -------------------------------------------------------------------
# Per-pitch features
# -------------------------------------------------------------------

def plate_zone(plate_x: float, plate_z: float) -> int:
    """1..25 on a 5x5 grid over the plate region, edges clipped."""
    col = int(np.floor((plate_x - ZONE_X[0]) / (ZONE_X[1] - ZONE_X[0]) * ZONE_GRID))
    row = int(np.floor((plate_z - ZONE_Z[0]) / (ZONE_Z[1] - ZONE_Z[0]) * ZONE_GRID))
    col = min(max(col, 0), ZONE_GRID - 1)
    row = min(max(row, 0), ZONE_GRID - 1)
    return 1 + row * ZONE_GRID + col


def physics_features(event: PitchEvent) -> np.ndarray:
    out = np.zeros(PHYSICS_DIM, dtype=np.float32)
    for j, (column, (center, scale)) in enumerate(PHYSICS_SCALES.items()):
        value = getattr(event, column)
        if value is not None:
            out[j] = (value - center) / scale
    out[-1] = 1.0 if event.has_batted_ball else 0.0
    return out


@dataclass
class FormView:
    """Model-ready arrays for one view; slot 0 is [CLS]."""
    player_id: int
    role: str
    at_bats: Tuple[int, ...]
    tokens: np.ndarray  # (T+1,) delta ids, cls id first
    supplemental: np.ndarray  # (T+1, 2S)
    physics: np.ndarray  # (T+1, PHYSICS_DIM)
    stadium: np.ndarray
    lineup: np.ndarray
    pitch_type: np.ndarray
    zone: np.ndarray
    ab_ordinal: np.ndarray  # 1..n_at_bats, 0 at [CLS]
    pitch_ordinal: np.ndarray  # 1..MAX_PITCH_ORDINAL, 0 at [CLS]

    def __len__(self) -> int:
        return len(self.tokens)


class FeatureStore:
    """Per-pitch feature arrays for a whole tokenized corpus."""

    def __init__(self, corpus: Corpus, table: SupplementalTable, vocab: DeltaVocabulary,
                 stadiums: Optional[Sequence[int]] = None):
        if corpus.delta_ids is None:
            raise ValueError("corpus has not been tokenized")
        self.corpus = corpus
        self.vocab = vocab
        self.delta_ids = np.asarray(corpus.delta_ids, dtype=np.int64)
        self.stadiums = sorted(stadiums if stadiums is not None else {e.stadium_id for e in corpus.pitches})
        stadium_ids = {s: i + 1 for i, s in enumerate(self.stadiums)}
        n = len(corpus.pitches)
        self.physics = np.zeros((n, PHYSICS_DIM), dtype=np.float32)
        self.pitch_type = np.zeros(n, dtype=np.int64)
        self.zone = np.zeros(n, dtype=np.int64)
        self.stadium = np.zeros(n, dtype=np.int64)
        self.pitch_ordinal = np.zeros(n, dtype=np.int64)
        for i, event in enumerate(corpus.pitches):
            self.physics[i] = physics_features(event)
            self.pitch_type[i] = PITCH_TYPE_IDS.get(event.pitch_type, OTHER_PITCH_TYPE)
            self.zone[i] = plate_zone(event.plate_x, event.plate_z)
            self.stadium[i] = stadium_ids.get(event.stadium_id, 0)
            self.pitch_ordinal[i] = min(event.pitch_number, MAX_PITCH_ORDINAL)
        self.supplemental = table.inputs()
        self.supplemental_dim = self.supplemental.shape[1]

    @property
    def n_stadiums(self) -> int:
        return len(self.stadiums) + 1

    def build_view(self, player_id: int, role: str, at_bats: Sequence[int], max_len: int) -> FormView:
        """Concatenate the tokenized pitches of `at_bats`; SequenceOverflow past max_len."""
        pitch_rows: List[int] = []
        ab_rows: List[int] = []
        ordinals: List[int] = []
        for ordinal, ab_idx in enumerate(at_bats, start=1):
            ab = self.corpus.at_bats[ab_idx]
            for p in range(ab.start, ab.stop):
                if self.delta_ids[p] >= 0:
                    pitch_rows.append(p)
                    ab_rows.append(ab_idx)
                    ordinals.append(ordinal)
        length = len(pitch_rows) + 1
        if length > max_len:
            raise SequenceOverflow(
                f"{role} {player_id}: view of {len(at_bats)} at-bats has {length} slots, max_len is {max_len}"
            )
        rows = np.asarray(pitch_rows, dtype=np.int64)
        abs_ = np.asarray(ab_rows, dtype=np.int64)

        def with_cls(values: np.ndarray, cls_value=0) -> np.ndarray:
            head = np.full((1,) + values.shape[1:], cls_value, dtype=values.dtype)
            return np.concatenate([head, values], axis=0)

        lineup = np.array([self.corpus.at_bats[a].lineup_slot + 1 for a in ab_rows], dtype=np.int64)
        return FormView(
            player_id=player_id,
            role=role,
            at_bats=tuple(at_bats),
            tokens=with_cls(self.delta_ids[rows], self.vocab.cls_id),
            supplemental=with_cls(self.supplemental[abs_] if len(abs_) else
                                  np.zeros((0, self.supplemental_dim), dtype=np.float32)),
            physics=with_cls(self.physics[rows]),
            stadium=with_cls(self.stadium[rows]),
            lineup=with_cls(lineup),
            pitch_type=with_cls(self.pitch_type[rows]),
            zone=with_cls(self.zone[rows]),
            ab_ordinal=with_cls(np.asarray(ordinals, dtype=np.int64)),
            pitch_ordinal=with_cls(self.pitch_ordinal[rows]),
        )

    def view_before(self, player_id: int, role: str, game_pk: int, view_size: int, max_len: int) -> FormView:
        """The player's last `view_size` at-bats strictly before `game_pk` starts."""
        appearances = self.corpus.appearances(player_id, role)
        if not appearances:
            raise UnknownPlayer(player_id, role)
        keys = [self.corpus.at_bats[i].game_pk for i in appearances]
        p = int(np.searchsorted(np.asarray(keys), game_pk, side="left"))
        if p < view_size:
            raise InsufficientHistory(
                f"{role} {player_id} has {p} at-bats before game {game_pk}, a view needs {view_size}"
            )
        return self.build_view(player_id, role, appearances[p - view_size:p], max_len)


def make_views(window: FormWindow, store: FeatureStore, config: DatasetConfig) -> Tuple[FormView, FormView]:
    """View 1 = window at-bats [0, view); view 2 = [window - view, window)."""
    if len(window) != config.window_size:
        raise ValueError(f"window has {len(window)} at-bats, expected {config.window_size}")
    first = window.at_bats[:config.view_size]
    second = window.at_bats[config.view_offset:]
    return (
        store.build_view(window.player_id, window.role, first, config.max_len),
        store.build_view(window.player_id, window.role, second, config.max_len),
    )


# -------------------------------------------------------------------
# Masking
# -------------------------------------------------------------------

@dataclass
class MaskedView:
    view: FormView
    inputs: np.ndarray  # tokens with [MASK] at masked slots
    targets: np.ndarray  # true delta id at masked slots, IGNORE_INDEX elsewhere

    @property
    def mask_positions(self) -> np.ndarray:
        return np.flatnonzero(self.targets != IGNORE_INDEX)


def mask_view(view: FormView, rate: float, rng: np.random.Generator, mask_id: int) -> MaskedView:
    """
    Mask each delta slot independently with probability `rate`, replacing it
    with [MASK]. Draws again until at least one slot is masked.
    """
    if not 0.0 < rate <= 1.0:
        raise ValueError(f"mask rate must be in (0, 1], got {rate}")
    n = len(view.tokens) - 1
    if n < 1:
        raise ValueError(f"{view.role} {view.player_id}: view has no delta tokens to mask")
    while True:
        chosen = rng.random(n) < rate
        if chosen.any():
            break
    positions = np.flatnonzero(chosen) + 1
    inputs = view.tokens.copy()
    targets = np.full_like(view.tokens, IGNORE_INDEX)
    targets[positions] = view.tokens[positions]
    inputs[positions] = mask_id
    return MaskedView(view, inputs, targets)


# -------------------------------------------------------------------
# Batches
# -------------------------------------------------------------------

@dataclass
class MaskedBatch:
    """2N views padded to max_len; rows 2k and 2k+1 are the views of window k."""
    tokens: np.ndarray  # (B, L) int64, masked inputs
    targets: np.ndarray  # (B, L) int64
    attention_mask: np.ndarray  # (B, L) bool, True on real slots
    supplemental: np.ndarray  # (B, L, 2S) float32
    physics: np.ndarray  # (B, L, PHYSICS_DIM) float32
    stadium: np.ndarray
    lineup: np.ndarray
    pitch_type: np.ndarray
    zone: np.ndarray
    ab_ordinal: np.ndarray
    pitch_ordinal: np.ndarray
    pairing: np.ndarray  # (B,) j(i)
    player_ids: np.ndarray  # (B,)
    windows: List[FormWindow] = field(default_factory=list)

    def __len__(self) -> int:
        return self.tokens.shape[0]

    @property
    def n_masked(self) -> int:
        return int((self.targets != IGNORE_INDEX).sum())


def pair_map(n_views: int) -> np.ndarray:
    """(0<->1), (2<->3), ..."""
    if n_views % 2:
        raise ValueError(f"views come in pairs, got {n_views}")
    return np.arange(n_views, dtype=np.int64) ^ 1


def stack_views(views: Sequence[FormView], max_len: int, pad_id: int,
                masked: Optional[Sequence[MaskedView]] = None) -> Dict[str, np.ndarray]:
    """Pad views to max_len and stack; pad slots carry pad_id / zeros / IGNORE_INDEX."""
    B = len(views)
    S = views[0].supplemental.shape[1]
    out = {
        "tokens": np.full((B, max_len), pad_id, dtype=np.int64),
        "targets": np.full((B, max_len), IGNORE_INDEX, dtype=np.int64),
        "attention_mask": np.zeros((B, max_len), dtype=bool),
        "supplemental": np.zeros((B, max_len, S), dtype=np.float32),
        "physics": np.zeros((B, max_len, PHYSICS_DIM), dtype=np.float32),
    }
    int_fields = ("stadium", "lineup", "pitch_type", "zone", "ab_ordinal", "pitch_ordinal")
    for name in int_fields:
        out[name] = np.zeros((B, max_len), dtype=np.int64)
    for b, view in enumerate(views):
        n = len(view)
        if n > max_len:
            raise SequenceOverflow(f"{view.role} {view.player_id}: {n} slots exceed max_len {max_len}")
        out["tokens"][b, :n] = masked[b].inputs if masked is not None else view.tokens
        if masked is not None:
            out["targets"][b, :n] = masked[b].targets
        out["attention_mask"][b, :n] = True
        out["supplemental"][b, :n] = view.supplemental
        out["physics"][b, :n] = view.physics
        for name in int_fields:
            out[name][b, :n] = getattr(view, name)
    return out


def assemble_batch(
    windows: Sequence[FormWindow], store: FeatureStore, config: DatasetConfig, rng: np.random.Generator
) -> MaskedBatch:
    """
    Two masked views per window. A window whose view overflows max_len is
    skipped with a log message.
    """
    roles = {w.role for w in windows}
    if len(roles) > 1:
        raise ValueError(f"all windows in a batch must share a role, got {sorted(roles)}")
    views: List[FormView] = []
    kept: List[FormWindow] = []
    for window in windows:
        try:
            pair = make_views(window, store, config)
        except SequenceOverflow as e:
            logger.warning("skipping window: %s", e)
            continue
        views.extend(pair)
        kept.append(window)
    if not views:
        raise ValueError("no window in the batch fits max_len")
    masked = [mask_view(view, config.mask_rate, rng, store.vocab.mask_id) for view in views]
    arrays = stack_views(views, config.max_len, store.vocab.pad_id, masked)
    return MaskedBatch(
        pairing=pair_map(len(views)),
        player_ids=np.array([v.player_id for v in views], dtype=np.int64),
        windows=kept,
        **arrays,
    )


def assemble_views(views: Sequence[FormView], max_len: int, pad_id: int) -> MaskedBatch:
    """
    Unmasked batch for inference only. Rows are independent views, so the pairing
    is the identity and the batch must not be fed to the contrastive loss.
    """
    arrays = stack_views(views, max_len, pad_id)
    return MaskedBatch(
        pairing=np.arange(len(views), dtype=np.int64),
        player_ids=np.array([v.player_id for v in views], dtype=np.int64),
        **arrays,
    )


def sample_batch_windows(windows: Sequence[FormWindow], n: int, rng: np.random.Generator) -> List[FormWindow]:
    """N distinct windows; all of them when fewer than N exist."""
    if not windows:
        raise ValueError("no windows to sample from")
    if len(windows) <= n:
        return list(windows)
    picks = rng.choice(len(windows), size=n, replace=False)
    return [windows[i] for i in sorted(picks)]
