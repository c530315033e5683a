"""
Supplemental sabermetric features.

Each plate appearance is reduced to a row of counting tallies (PA, AB, H, ...)
per split (pitch type, count leverage, base state, outs). Per-player prefix sums
over those rows turn any (career, season, last15, this_game) window into one
subtraction, and the formula registry turns tallies into rate stats.
"""
import bisect
import logging
import os
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from pitchform.errors import RankDeficient, UnknownPlayer
from pitchform.ingest import HIT_EVENTS, HBP_EVENTS, SAC_FLY_EVENTS, STRIKEOUT_EVENTS, WALK_EVENTS, Corpus

logger = logging.getLogger(__name__)

ENTITIES = ("batter", "pitcher", "matchup")
SCALES = ("career", "season", "last15", "this_game")
ENTITY_SCALES = {
    "batter": SCALES,
    "pitcher": SCALES,
    "matchup": ("career", "season", "this_game"),
}
LAST_N_GAMES = 15

STAT_SPEC_VERSION = 1


# -------------------------------------------------------------------
# Tallies and splits
# -------------------------------------------------------------------

COMPONENTS = ("PA", "AB", "H", "1B", "2B", "3B", "HR", "BB", "HBP", "SO", "SF", "RUNS", "OUTS", "PITCHES", "FPS")
C = {name: i for i, name in enumerate(COMPONENTS)}

PITCH_TYPE_SPLITS = ("FF", "SI", "SL", "CH", "CU")
SPLITS = ("all",) + PITCH_TYPE_SPLITS + (
    "ahead", "behind", "even", "empty", "runners_on", "risp", "outs0", "outs1", "outs2",
)
S = {name: i for i, name in enumerate(SPLITS)}


def at_bat_tallies(corpus: Corpus) -> np.ndarray:
    """(n_at_bats, n_components) counting stats, one row per plate appearance."""
    tallies = np.zeros((len(corpus.at_bats), len(COMPONENTS)), dtype=np.float64)
    for i, ab in enumerate(corpus.at_bats):
        first = corpus.pitches[ab.start]
        last = corpus.pitches[ab.stop - 1]
        row = tallies[i]
        row[C["PITCHES"]] = ab.n_pitches
        row[C["RUNS"]] = last.post_batting_score - first.batting_score
        row[C["OUTS"]] = last.post_outs - first.outs
        if not ab.events:
            continue
        row[C["PA"]] = 1
        event = ab.events
        if event not in WALK_EVENTS | HBP_EVENTS | SAC_FLY_EVENTS:
            row[C["AB"]] = 1
        if event in HIT_EVENTS:
            row[C["H"]] = 1
            row[C[("1B", "2B", "3B", "HR")[HIT_EVENTS[event] - 1]]] = 1
        row[C["BB"]] = event in WALK_EVENTS
        row[C["HBP"]] = event in HBP_EVENTS
        row[C["SO"]] = event in STRIKEOUT_EVENTS
        row[C["SF"]] = event in SAC_FLY_EVENTS
        first_is_strike = first.post_strikes > first.strikes or (
            first.ends_at_bat and first.events not in WALK_EVENTS | HBP_EVENTS
        )
        row[C["FPS"]] = first_is_strike
    return tallies


def at_bat_splits(corpus: Corpus) -> np.ndarray:
    """(n_at_bats, n_splits) membership mask."""
    splits = np.zeros((len(corpus.at_bats), len(SPLITS)), dtype=bool)
    splits[:, S["all"]] = True
    for i, ab in enumerate(corpus.at_bats):
        first = corpus.pitches[ab.start]
        last = corpus.pitches[ab.stop - 1]
        if last.pitch_type in PITCH_TYPE_SPLITS:
            splits[i, S[last.pitch_type]] = True
        if last.balls > last.strikes:
            splits[i, S["ahead"]] = True
        elif last.strikes > last.balls:
            splits[i, S["behind"]] = True
        else:
            splits[i, S["even"]] = True
        if first.on_2b or first.on_3b:
            splits[i, S["risp"]] = True
        if first.on_1b or first.on_2b or first.on_3b:
            splits[i, S["runners_on"]] = True
        else:
            splits[i, S["empty"]] = True
        splits[i, S[f"outs{first.outs}"]] = True
    return splits


# -------------------------------------------------------------------
# Formula registry
# -------------------------------------------------------------------

Formula = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]


def _ratio(num: np.ndarray, den: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    present = den > 0
    value = np.divide(num, den, out=np.zeros_like(num, dtype=np.float64), where=present)
    return value, present


def _t(tallies: np.ndarray, name: str) -> np.ndarray:
    return tallies[..., C[name]]


def _total_bases(t: np.ndarray) -> np.ndarray:
    return _t(t, "1B") + 2 * _t(t, "2B") + 3 * _t(t, "3B") + 4 * _t(t, "HR")


def _avg(t):
    return _ratio(_t(t, "H"), _t(t, "AB"))


def _obp(t):
    return _ratio(_t(t, "H") + _t(t, "BB") + _t(t, "HBP"), _t(t, "AB") + _t(t, "BB") + _t(t, "HBP") + _t(t, "SF"))


def _slg(t):
    return _ratio(_total_bases(t), _t(t, "AB"))


def _ops(t):
    obp, obp_present = _obp(t)
    slg, slg_present = _slg(t)
    present = obp_present & slg_present
    return np.where(present, obp + slg, 0.0), present


def _iso(t):
    avg, present = _avg(t)
    slg, _ = _slg(t)
    return np.where(present, slg - avg, 0.0), present


def _babip(t):
    return _ratio(_t(t, "H") - _t(t, "HR"), _t(t, "AB") - _t(t, "SO") - _t(t, "HR") + _t(t, "SF"))


def _per_pa(component: str) -> Formula:
    return lambda t: _ratio(_t(t, component), _t(t, "PA"))


def _xbh_rate(t):
    return _ratio(_t(t, "2B") + _t(t, "3B") + _t(t, "HR"), _t(t, "PA"))


def _whip(t):
    return _ratio(_t(t, "BB") + _t(t, "H"), _t(t, "OUTS") / 3.0)


def _count(component: str) -> Formula:
    def formula(t):
        value = _t(t, component).astype(np.float64)
        return value, value > 0
    return formula


FORMULAS: Dict[str, Formula] = {
    "AVG": _avg,
    "OBP": _obp,
    "SLG": _slg,
    "OPS": _ops,
    "ISO": _iso,
    "BABIP": _babip,
    "K_RATE": _per_pa("SO"),
    "BB_RATE": _per_pa("BB"),
    "HR_RATE": _per_pa("HR"),
    "HBP_RATE": _per_pa("HBP"),
    "XBH_RATE": _xbh_rate,
    "RUNS_PER_AB": lambda t: _ratio(_t(t, "RUNS"), _t(t, "AB")),
    "WHIP": _whip,
    "OPP_AVG": _avg,
    "PITCHES_PER_PA": _per_pa("PITCHES"),
    "FIRST_STRIKE_RATE": _per_pa("FPS"),
    "AB": _count("AB"),
    "PA": _count("PA"),
}


def parse_stat_name(name: str) -> Tuple[str, str]:
    """``"OBP@risp"`` -> ("OBP", "risp"); a bare name means the "all" split."""
    formula, _, split = name.partition("@")
    split = split or "all"
    if formula not in FORMULAS:
        raise ValueError(f"unknown statistic {formula!r} in {name!r}")
    if split not in S:
        raise ValueError(f"unknown split {split!r} in {name!r}")
    return formula, split


def evaluate(names: Sequence[str], tallies: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Evaluate named stats on split tallies of shape (..., n_splits, n_components).
    Returns (values, present), each shaped (..., len(names)).
    """
    tallies = np.asarray(tallies, dtype=np.float64)
    values = np.zeros(tallies.shape[:-2] + (len(names),), dtype=np.float64)
    present = np.zeros(values.shape, dtype=bool)
    for j, name in enumerate(names):
        formula, split = parse_stat_name(name)
        v, p = FORMULAS[formula](tallies[..., S[split], :])
        values[..., j] = v
        present[..., j] = p
    return values, present


# -------------------------------------------------------------------
# Stat specs
# -------------------------------------------------------------------

@dataclass(frozen=True)
class StatSpec:
    """Ordered statistics for one (entity, scale) block."""
    entity: str
    scale: str
    names: Tuple[str, ...]

    def __post_init__(self):
        if self.entity not in ENTITIES:
            raise ValueError(f"entity must be one of {ENTITIES}, got {self.entity!r}")
        if self.scale not in ENTITY_SCALES[self.entity]:
            raise ValueError(f"{self.entity} has no {self.scale!r} scale")
        object.__setattr__(self, "names", tuple(self.names))
        for name in self.names:
            parse_stat_name(name)

    def __len__(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class StatLayout:
    """All blocks of a supplemental vector, in entity-major, scale-minor order."""
    blocks: Tuple[StatSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        expected = [(e, s) for e in ENTITIES for s in ENTITY_SCALES[e]]
        got = [(b.entity, b.scale) for b in self.blocks]
        if got != expected:
            raise ValueError(f"blocks must be ordered {expected}, got {got}")

    def __len__(self) -> int:
        return sum(len(block) for block in self.blocks)

    def slices(self) -> List[Tuple[StatSpec, slice]]:
        out, offset = [], 0
        for block in self.blocks:
            out.append((block, slice(offset, offset + len(block))))
            offset += len(block)
        return out

    def columns(self, exclude_scales: Iterable[str] = ()) -> np.ndarray:
        """Column indices of every block whose scale is not excluded."""
        excluded = set(exclude_scales)
        keep = [np.arange(s.start, s.stop) for block, s in self.slices() if block.scale not in excluded]
        return np.concatenate(keep) if keep else np.zeros(0, dtype=np.int64)

    def slot_names(self) -> List[str]:
        return [f"{b.entity}.{b.scale}.{name}" for b in self.blocks for name in b.names]


DESK_BATTER_STATS = ("AVG", "OBP", "SLG", "OPS", "K_RATE", "BB_RATE")
DESK_PITCHER_STATS = ("RUNS_PER_AB", "WHIP", "K_RATE", "BB_RATE", "HR_RATE", "OPP_AVG")
DESK_MATCHUP_STATS = ("AB", "AVG", "OPS")

# Block widths of the full-size layout: 1,541 slots in total
PAPER_BLOCK_SIZES = {
    ("batter", "career"): 167,
    ("batter", "season"): 137,
    ("batter", "last15"): 137,
    ("batter", "this_game"): 137,
    ("pitcher", "career"): 141,
    ("pitcher", "season"): 137,
    ("pitcher", "last15"): 137,
    ("pitcher", "this_game"): 137,
    ("matchup", "career"): 137,
    ("matchup", "season"): 137,
    ("matchup", "this_game"): 137,
}


def desk_stat_spec() -> StatLayout:
    tables = {"batter": DESK_BATTER_STATS, "pitcher": DESK_PITCHER_STATS, "matchup": DESK_MATCHUP_STATS}
    return StatLayout(tuple(
        StatSpec(entity, scale, tables[entity]) for entity in ENTITIES for scale in ENTITY_SCALES[entity]
    ))


def stat_grid() -> List[str]:
    """Every formula on every split, split-major, "all" split first."""
    return [name if split == "all" else f"{name}@{split}" for split in SPLITS for name in FORMULAS]


def paper_stat_spec() -> StatLayout:
    grid = stat_grid()
    blocks = []
    for entity in ENTITIES:
        for scale in ENTITY_SCALES[entity]:
            size = PAPER_BLOCK_SIZES[(entity, scale)]
            if size > len(grid):
                raise ValueError(f"stat grid has only {len(grid)} entries, {entity}/{scale} needs {size}")
            blocks.append(StatSpec(entity, scale, tuple(grid[:size])))
    return StatLayout(tuple(blocks))


STAT_SPEC_PRESETS = {"desk": desk_stat_spec, "paper": paper_stat_spec}


def write_stat_spec(layout: StatLayout, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"version {STAT_SPEC_VERSION}\n")
        for block in layout.blocks:
            f.write(f"[{block.entity} {block.scale}]\n")
            for name in block.names:
                f.write(name + "\n")


def read_stat_spec(path: str) -> StatLayout:
    blocks = []
    entity = scale = None
    names: List[str] = []
    with open(path, "r", encoding="utf-8") as f:
        lines = [line.strip() for line in f if line.strip() and not line.startswith("#")]
    if not lines or lines[0] != f"version {STAT_SPEC_VERSION}":
        raise ValueError(f"{path}: expected 'version {STAT_SPEC_VERSION}' header")
    for line in lines[1:]:
        if line.startswith("["):
            if entity is not None:
                blocks.append(StatSpec(entity, scale, tuple(names)))
            entity, scale = line.strip("[]").split()
            names = []
        else:
            names.append(line)
    if entity is not None:
        blocks.append(StatSpec(entity, scale, tuple(names)))
    return StatLayout(tuple(blocks))


# -------------------------------------------------------------------
# Player histories
# -------------------------------------------------------------------

AsOf = Tuple[int, int]  # (game_pk, ab_number)


class _History:
    """Prefix sums over one player's (or one matchup's) plate appearances."""

    def __init__(self, at_bats: Sequence[int], corpus: Corpus, split_tallies: np.ndarray):
        self.at_bats = np.asarray(at_bats, dtype=np.int64)
        self.keys = [corpus.at_bats[i].key for i in at_bats]
        self.games = [corpus.at_bats[i].game_pk for i in at_bats]
        self.seasons = [corpus.season_of(g) for g in self.games]
        m = len(at_bats)
        self.cum = np.zeros((m + 1,) + split_tallies.shape[1:], dtype=np.float64)
        if m:
            np.cumsum(split_tallies[self.at_bats], axis=0, out=self.cum[1:])
        self.season_start = np.zeros(m, dtype=np.int64)
        self.game_start = np.zeros(m, dtype=np.int64)
        self.game_firsts: List[int] = []
        for i in range(m):
            new_game = i == 0 or self.games[i] != self.games[i - 1]
            if new_game:
                self.game_firsts.append(i)
            self.game_start[i] = i if new_game else self.game_start[i - 1]
            new_season = i == 0 or self.seasons[i] != self.seasons[i - 1]
            self.season_start[i] = i if new_season else self.season_start[i - 1]

    def __len__(self) -> int:
        return len(self.keys)

    def position(self, as_of: AsOf) -> int:
        """Number of appearances strictly before `as_of`."""
        return bisect.bisect_left(self.keys, tuple(as_of))

    def window(self, p: int, scale: str, game_pk: int, season: int) -> Tuple[int, int]:
        if p == 0 or scale == "career":
            return 0, p
        if scale == "season":
            return (int(self.season_start[p - 1]), p) if self.seasons[p - 1] == season else (p, p)
        if scale == "this_game":
            return (int(self.game_start[p - 1]), p) if self.games[p - 1] == game_pk else (p, p)
        if scale == "last15":
            n_games = LAST_N_GAMES if self.games[p - 1] == game_pk else LAST_N_GAMES - 1
            firsts = self.game_firsts[:bisect.bisect_left(self.game_firsts, p)]
            if n_games <= 0:
                return p, p
            return (firsts[-n_games], p) if len(firsts) >= n_games else (0, p)
        raise ValueError(f"unknown scale {scale!r}")

    def tally(self, lo: int, hi: int) -> np.ndarray:
        return self.cum[hi] - self.cum[lo]


@dataclass
class StatValues:
    names: Tuple[str, ...]
    values: np.ndarray
    present: np.ndarray

    def as_dict(self) -> Dict[str, float]:
        return {name: float(v) for name, v in zip(self.names, self.values)}


@dataclass
class SupplementalVector:
    """Standardized values plus the per-slot presence mask."""
    values: np.ndarray
    presence: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    def as_input(self) -> np.ndarray:
        return np.concatenate([self.values, self.presence]).astype(np.float32)


class StatEngine:
    """Read-only stat queries over an immutable corpus."""

    def __init__(self, corpus: Corpus):
        self.corpus = corpus
        tallies = at_bat_tallies(corpus)
        splits = at_bat_splits(corpus)
        self.tallies = tallies
        self.split_tallies = splits[:, :, None] * tallies[:, None, :]
        self.batters = {p: _History(idx, corpus, self.split_tallies) for p, idx in corpus.batter_index.items()}
        self.pitchers = {p: _History(idx, corpus, self.split_tallies) for p, idx in corpus.pitcher_index.items()}
        pairs: Dict[Tuple[int, int], List[int]] = {}
        for i, ab in enumerate(corpus.at_bats):
            pairs.setdefault((ab.batter_id, ab.pitcher_id), []).append(i)
        self.matchups = {key: _History(idx, corpus, self.split_tallies) for key, idx in pairs.items()}
        self._empty = _History([], corpus, self.split_tallies)

    def _history(self, player_id, role: str) -> _History:
        if role == "matchup":
            batter, pitcher = player_id
            self._history(batter, "batter")
            self._history(pitcher, "pitcher")
            return self.matchups.get((batter, pitcher), self._empty)
        table = self.batters if role == "batter" else self.pitchers
        if role not in ("batter", "pitcher"):
            raise ValueError(f"role must be batter, pitcher or matchup, got {role!r}")
        if player_id not in table:
            raise UnknownPlayer(player_id, role)
        return table[player_id]

    def compute_split_stats(
        self, player_id, role: str, as_of: AsOf, scale: str, names: Optional[Sequence[str]] = None
    ) -> StatValues:
        """
        Stats for one player (or a (batter, pitcher) pair when role is
        "matchup") from appearances strictly before `as_of`. Undefined ratios
        are 0 with presence 0.
        """
        if scale not in ENTITY_SCALES["matchup" if role == "matchup" else "batter"]:
            raise ValueError(f"{role} has no {scale!r} scale")
        names = tuple(names or {"batter": DESK_BATTER_STATS, "pitcher": DESK_PITCHER_STATS}.get(role, DESK_MATCHUP_STATS))
        history = self._history(player_id, role)
        game_pk = as_of[0]
        lo, hi = history.window(history.position(as_of), scale, game_pk, self.corpus.season_of(game_pk))
        values, present = evaluate(names, history.tally(lo, hi))
        return StatValues(names, values, present)

    def assemble_supplemental(
        self, layout: StatLayout, batter_id: int, pitcher_id: int, as_of: AsOf,
        standardizer: Optional["Standardizer"] = None,
    ) -> SupplementalVector:
        values = np.zeros(len(layout), dtype=np.float64)
        present = np.zeros(len(layout), dtype=bool)
        subjects = {"batter": batter_id, "pitcher": pitcher_id, "matchup": (batter_id, pitcher_id)}
        for block, s in layout.slices():
            stats = self.compute_split_stats(subjects[block.entity], block.entity, as_of, block.scale, block.names)
            values[s] = stats.values
            present[s] = stats.present
        if standardizer is not None:
            values = standardizer.apply(values, present)
        return SupplementalVector(values, present.astype(np.float64))

    def _block_for_history(self, history: _History, block: StatSpec, rows: np.ndarray, positions: Sequence[int]):
        """Evaluate one block for several corpus at-bats of one history at once."""
        lo_hi = []
        for ab_idx, p in zip(rows, positions):
            ab = self.corpus.at_bats[ab_idx]
            lo_hi.append(history.window(p, block.scale, ab.game_pk, self.corpus.season_of(ab.game_pk)))
        lo = np.array([w[0] for w in lo_hi], dtype=np.int64)
        hi = np.array([w[1] for w in lo_hi], dtype=np.int64)
        return evaluate(block.names, history.cum[hi] - history.cum[lo])

    def supplemental_table(self, layout: StatLayout) -> "SupplementalTable":
        """Raw (unstandardized) vectors for every at-bat in the corpus, as of its first pitch."""
        n = len(self.corpus.at_bats)
        values = np.zeros((n, len(layout)), dtype=np.float64)
        present = np.zeros((n, len(layout)), dtype=bool)
        groups = {"batter": self.batters, "pitcher": self.pitchers, "matchup": self.matchups}
        for block, s in layout.slices():
            for history in groups[block.entity].values():
                rows = history.at_bats
                if len(rows) == 0:
                    continue
                v, p = self._block_for_history(history, block, rows, range(len(rows)))
                values[rows, s] = v
                present[rows, s] = p
        logger.info("supplemental table: %d at-bats x %d slots", n, len(layout))
        return SupplementalTable(layout, values, present)


# -------------------------------------------------------------------
# Standardization
# -------------------------------------------------------------------

@dataclass
class Standardizer:
    """Per-slot mean and std over present values of the training split."""
    names: Tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    def apply(self, values: np.ndarray, present: np.ndarray) -> np.ndarray:
        out = (values - self.mean) / self.std
        return np.where(present.astype(bool), out, 0.0)

    def save(self, path: str) -> None:
        frame = pd.DataFrame({"slot": list(self.names), "mean": self.mean, "std": self.std})
        frame.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")

    @classmethod
    def load(cls, path: str) -> "Standardizer":
        frame = pd.read_csv(path, dtype={"slot": str})
        return cls(tuple(frame["slot"]), frame["mean"].to_numpy(np.float64), frame["std"].to_numpy(np.float64))


def training_games(corpus: Corpus, train_fraction: float) -> List[int]:
    """The first `train_fraction` of games by game_pk (at least one)."""
    if not 0.0 < train_fraction <= 1.0:
        raise ValueError(f"train_fraction must be in (0, 1], got {train_fraction}")
    games = sorted(corpus.games)
    return games[:max(1, int(round(len(games) * train_fraction)))]


def fit_standardizer(table: "SupplementalTable", corpus: Corpus, train_fraction: float = 0.8) -> Standardizer:
    rows = np.concatenate([
        np.arange(*corpus.games[g]) for g in training_games(corpus, train_fraction)
    ]) if corpus.games else np.zeros(0, dtype=np.int64)
    values = table.values[rows]
    present = table.present[rows]
    counts = present.sum(axis=0)
    safe = np.maximum(counts, 1)
    mean = np.where(present, values, 0.0).sum(axis=0) / safe
    var = np.where(present, (values - mean) ** 2, 0.0).sum(axis=0) / safe
    std = np.sqrt(var)
    std = np.where((counts > 1) & (std > 1e-12), std, 1.0)
    mean = np.where(counts > 0, mean, 0.0)
    return Standardizer(tuple(table.layout.slot_names()), mean, std)


@dataclass
class SupplementalTable:
    """One supplemental vector per corpus at-bat, computed once and shared."""
    layout: StatLayout
    values: np.ndarray  # (n_at_bats, L)
    present: np.ndarray  # (n_at_bats, L) bool
    standardized: bool = False

    def standardize(self, standardizer: Standardizer) -> "SupplementalTable":
        return SupplementalTable(self.layout, standardizer.apply(self.values, self.present), self.present, True)

    def row(self, ab_index: int) -> SupplementalVector:
        return SupplementalVector(self.values[ab_index], self.present[ab_index].astype(np.float64))

    def inputs(self) -> np.ndarray:
        """(n_at_bats, 2L) float32 model inputs: values then presence."""
        return np.concatenate([self.values, self.present.astype(np.float64)], axis=1).astype(np.float32)

    @property
    def width(self) -> int:
        return len(self.layout)

    def save(self, path: str) -> None:
        np.savez(path, values=self.values, present=self.present, standardized=np.array(self.standardized))

    @classmethod
    def load(cls, path: str, layout: StatLayout) -> "SupplementalTable":
        with np.load(path) as data:
            values = data["values"]
            if values.shape[1] != len(layout):
                raise ValueError(f"{path}: table width {values.shape[1]} != layout length {len(layout)}")
            return cls(layout, values, data["present"].astype(bool), bool(data["standardized"]))


# -------------------------------------------------------------------
# PCA
# -------------------------------------------------------------------

RANK_TOLERANCE = 1e-10  # eigenvalues at or below this fraction of the largest count as zero


@dataclass
class PcaModel:
    mean: np.ndarray  # (n_features,)
    components: np.ndarray  # (n_components, n_features), orthonormal rows
    explained_variance: np.ndarray  # (n_components,), non-increasing

    @property
    def n_components(self) -> int:
        return self.components.shape[0]


def pca_fit(vectors: np.ndarray, n_components: int) -> PcaModel:
    """
    Top eigenvectors of the sample covariance. Each component's largest-magnitude
    entry is made positive so the result does not depend on the eigensolver's signs.

    RankDeficient is raised only when n_components exceeds the sample or feature
    count. Components past the numerical rank of the data are kept and logged:
    their variance is ~0 and their direction is arbitrary within the null space.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {X.shape}")
    n_samples, n_features = X.shape
    if n_components < 1 or n_components > n_features or n_components > n_samples:
        raise RankDeficient(
            f"cannot extract {n_components} components from {n_samples} samples of {n_features} features"
        )
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / max(n_samples - 1, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(-eigvals, kind="stable")[:n_components]
    components = eigvecs[:, order].T
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    explained = np.clip(eigvals[order], 0.0, None)
    tolerance = RANK_TOLERANCE * max(float(eigvals.max()), 0.0)
    n_null = int(np.sum(explained <= tolerance))
    if n_null:
        logger.warning(
            "PCA: %d of %d components have ~0 variance (data rank below %d)", n_null, n_components, n_components
        )
    return PcaModel(mean, components, explained)


def pca_transform(model: PcaModel, vectors: np.ndarray) -> np.ndarray:
    """Subtract the mean, project onto the components; works on one vector or a matrix."""
    return (np.asarray(vectors, dtype=np.float64) - model.mean) @ model.components.T


def pca_inverse(model: PcaModel, reduced: np.ndarray) -> np.ndarray:
    return np.asarray(reduced, dtype=np.float64) @ model.components + model.mean


def save_pca(model: PcaModel, out_dir: str) -> None:
    """mean.csv, components.csv, explained_variance.csv and a manifest."""
    os.makedirs(out_dir, exist_ok=True)
    pd.DataFrame(model.mean[None, :]).to_csv(
        os.path.join(out_dir, "mean.csv"), index=False, header=False, float_format="%.17g")
    pd.DataFrame(model.components).to_csv(
        os.path.join(out_dir, "components.csv"), index=False, header=False, float_format="%.17g")
    pd.DataFrame(model.explained_variance[:, None]).to_csv(
        os.path.join(out_dir, "explained_variance.csv"), index=False, header=False, float_format="%.17g")
    with open(os.path.join(out_dir, "manifest.txt"), "w", encoding="utf-8", newline="\n") as f:
        f.write(f"n_components\t{model.n_components}\n")
        f.write(f"n_features\t{model.components.shape[1]}\n")
        f.write("files\tmean.csv,components.csv,explained_variance.csv\n")


def load_pca(out_dir: str) -> PcaModel:
    read = lambda name: pd.read_csv(os.path.join(out_dir, name), header=None).to_numpy(np.float64)
    manifest = {}
    with open(os.path.join(out_dir, "manifest.txt"), "r", encoding="utf-8") as f:
        for line in f:
            key, _, value = line.rstrip("\n").partition("\t")
            manifest[key] = value
    model = PcaModel(read("mean.csv")[0], read("components.csv"), read("explained_variance.csv")[:, 0])
    if model.n_components != int(manifest["n_components"]):
        raise ValueError(f"{out_dir}: manifest says {manifest['n_components']} components, found {model.n_components}")
    return model
