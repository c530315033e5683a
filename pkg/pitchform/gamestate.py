"""Game states, gamestate deltas and the delta vocabulary.

A gamestate is the pre-pitch snapshot of count, base occupancy, outs and
score. Each pitch is described by the change it makes to that snapshot, a
`GamestateDelta`; the set of every delta the engine can produce is the token
vocabulary the form model learns to read.
"""
import itertools
import logging
import os
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, FrozenSet, Iterator, List, Optional, Sequence, Tuple

from pitchform.errors import IllegalDelta, InconsistentStates

logger = logging.getLogger(__name__)

Bases = Tuple[bool, bool, bool]
Count = Tuple[int, int]

EMPTY_BASES: Bases = (False, False, False)
BASE_NUMBERS = (1, 2, 3)

# Fate codes used by the event enumeration (bases are 1..3)
OUT = -1
HOME = 4

# Delta vocabulary size quoted for real pitch-by-pitch data
REFERENCE_VOCAB_SIZE = 325

CLS_TOKEN = "[CLS]"
MASK_TOKEN = "[MASK]"
PAD_TOKEN = "[PAD]"
SPECIAL_TOKENS = (CLS_TOKEN, MASK_TOKEN, PAD_TOKEN)


# -------------------------------------------------------------------
# Core state models
# -------------------------------------------------------------------

def _as_bases(bases: Sequence) -> Bases:
    if len(bases) != 3:
        raise ValueError(f"bases must have 3 entries, got {len(bases)}")
    return tuple(bool(b) for b in bases)


@dataclass(frozen=True)
class GameState:
    """Snapshot of a half-inning from the batting team's point of view."""
    balls: int = 0
    strikes: int = 0
    bases: Bases = EMPTY_BASES  # (first, second, third) occupied
    outs: int = 0  # 0..2 before a pitch; 3 only right after the inning-ending pitch
    batting_score: int = 0
    fielding_score: int = 0

    def __post_init__(self):
        object.__setattr__(self, "bases", _as_bases(self.bases))
        if not 0 <= self.balls <= 3:
            raise ValueError(f"balls must be 0..3, got {self.balls}")
        if not 0 <= self.strikes <= 2:
            raise ValueError(f"strikes must be 0..2, got {self.strikes}")
        if not 0 <= self.outs <= 3:
            raise ValueError(f"outs must be 0..3, got {self.outs}")
        if self.batting_score < 0 or self.fielding_score < 0:
            raise ValueError(f"scores must be non-negative, got {self.batting_score}-{self.fielding_score}")

    @property
    def count(self) -> Count:
        return (self.balls, self.strikes)

    @property
    def runners(self) -> List[int]:
        """Occupied base numbers, lowest first."""
        return [base for base, occupied in zip(BASE_NUMBERS, self.bases) if occupied]

    @property
    def is_pre_pitch(self) -> bool:
        return self.outs <= 2


@dataclass(frozen=True)
class GamestateDelta:
    """Canonical change token: the state components a pitch leaves behind."""
    count_after: Count
    bases_after: Bases
    outs_gained: int = 0
    runs_scored: int = 0

    def __post_init__(self):
        object.__setattr__(self, "count_after", tuple(int(c) for c in self.count_after))
        object.__setattr__(self, "bases_after", _as_bases(self.bases_after))
        balls, strikes = self.count_after
        if not 0 <= balls <= 3 or not 0 <= strikes <= 2:
            raise ValueError(f"count_after must be within 0-0..3-2, got {balls}-{strikes}")
        if not 0 <= self.outs_gained <= 3:
            raise ValueError(f"outs_gained must be 0..3, got {self.outs_gained}")
        if not 0 <= self.runs_scored <= 4:
            raise ValueError(f"runs_scored must be 0..4, got {self.runs_scored}")

    @property
    def ends_at_bat(self) -> bool:
        """A reset count only follows the last pitch of an at-bat."""
        return self.count_after == (0, 0)

    @property
    def token(self) -> str:
        return format_token(self)

    def sort_key(self) -> Tuple:
        return (self.count_after, tuple(int(b) for b in self.bases_after), self.outs_gained, self.runs_scored)


def format_token(delta: GamestateDelta) -> str:
    """Canonical text form, e.g. ``2-1|1_3|o1|r0``."""
    balls, strikes = delta.count_after
    mask = "".join(str(base) if occupied else "_" for base, occupied in zip(BASE_NUMBERS, delta.bases_after))
    return f"{balls}-{strikes}|{mask}|o{delta.outs_gained}|r{delta.runs_scored}"


def parse_token(token: str) -> GamestateDelta:
    """Inverse of `format_token`."""
    try:
        count, mask, outs, runs = token.strip().split("|")
        balls, strikes = count.split("-")
        if len(mask) != 3 or not outs.startswith("o") or not runs.startswith("r"):
            raise ValueError(token)
        bases = tuple(ch == str(base) for ch, base in zip(mask, BASE_NUMBERS))
        return GamestateDelta((int(balls), int(strikes)), bases, int(outs[1:]), int(runs[1:]))
    except ValueError as e:
        raise ValueError(f"not a delta token: {token!r}") from e


# -------------------------------------------------------------------
# Legality
# -------------------------------------------------------------------

def _occupied(bases: Bases) -> List[int]:
    return [base for base, occupied in zip(BASE_NUMBERS, bases) if occupied]


def _fates_feasible(origins: List[int], bases_after: Bases, outs: int, runs: int) -> bool:
    """
    Whether the participants starting on `origins` (sorted, 0 = batter) can end
    up as `bases_after` plus `outs` outs and `runs` runs.

    Every participant is either out, scores, or holds a base at or beyond its
    origin; safe runners keep their order and never share a base. The lowest
    participants can always be the ones left on base, so the check reduces to
    conservation plus an order-statistic comparison.
    """
    after = _occupied(bases_after)
    if outs + runs + len(after) != len(origins):
        return False
    return all(origin <= base for origin, base in zip(origins, after))


def is_legal(state: GameState, delta: GamestateDelta) -> bool:
    """True iff some pitch produces `delta` from `state` under the engine's rules."""
    if not state.is_pre_pitch or state.outs + delta.outs_gained > 3:
        return False
    runners = _occupied(state.bases)

    if delta.ends_at_bat:
        # Ball in play, walk, hit-by-pitch or strikeout: the batter takes part
        return _fates_feasible([0] + runners, delta.bases_after, delta.outs_gained, delta.runs_scored)

    balls, strikes = state.count
    if delta.count_after == (balls, strikes):
        # Two-strike foul: nothing else moves
        return (
            strikes == 2
            and delta.bases_after == state.bases
            and delta.outs_gained == 0
            and delta.runs_scored == 0
        )
    if delta.count_after in ((balls + 1, strikes), (balls, strikes + 1)):
        # Ball or strike, with steals, pickoffs and wild pitches riding along.
        # The at-bat survives, so the inning must too.
        if state.outs + delta.outs_gained > 2:
            return False
        return _fates_feasible(runners, delta.bases_after, delta.outs_gained, delta.runs_scored)
    return False


def apply_delta(state: GameState, delta: GamestateDelta) -> GameState:
    """
    Post-pitch state. Outs may reach 3; the half-inning reset is left to the
    replay layer (see `half_inning_start`).
    """
    if not is_legal(state, delta):
        raise IllegalDelta(f"{delta.token} is not reachable from {describe_state(state)}")
    balls, strikes = delta.count_after
    return GameState(
        balls=balls,
        strikes=strikes,
        bases=delta.bases_after,
        outs=state.outs + delta.outs_gained,
        batting_score=state.batting_score + delta.runs_scored,
        fielding_score=state.fielding_score,
    )


def compute_delta(before: GameState, after: GameState, atbat_ended: bool) -> GamestateDelta:
    """The delta that takes `before` to `after`; raises InconsistentStates if none does."""
    if after.fielding_score != before.fielding_score:
        raise InconsistentStates(
            f"fielding score changed {before.fielding_score} -> {after.fielding_score} within a pitch"
        )
    if atbat_ended != (after.count == (0, 0)):
        raise InconsistentStates(
            f"count {after.balls}-{after.strikes} after the pitch contradicts atbat_ended={atbat_ended}"
        )
    outs_gained = after.outs - before.outs
    runs_scored = after.batting_score - before.batting_score
    try:
        delta = GamestateDelta(after.count, after.bases, outs_gained, runs_scored)
    except ValueError as e:
        raise InconsistentStates(f"{describe_state(before)} -> {describe_state(after)}: {e}") from e
    if not is_legal(before, delta):
        raise InconsistentStates(
            f"no legal pitch maps {describe_state(before)} -> {describe_state(after)}"
        )
    return delta


def half_inning_start(previous: Optional[GameState] = None) -> GameState:
    """
    First pre-pitch state of a half-inning. With no previous half this is the
    game's first pitch; otherwise the teams swap and the scores swap with them.
    """
    if previous is None:
        return GameState()
    return GameState(batting_score=previous.fielding_score, fielding_score=previous.batting_score)


def describe_state(state: GameState) -> str:
    mask = "".join(str(base) if occupied else "_" for base, occupied in zip(BASE_NUMBERS, state.bases))
    return (
        f"({state.balls}-{state.strikes}, bases {mask}, {state.outs} out, "
        f"{state.batting_score}-{state.fielding_score})"
    )


# -------------------------------------------------------------------
# Brute-force event enumeration
# -------------------------------------------------------------------

def _fate_choices(origin: int) -> List[int]:
    first_base = max(origin, 1)
    return [OUT, HOME] + list(range(first_base, 4))


def _enumerate_fates(origins: List[int]) -> Iterator[Tuple[Bases, int, int]]:
    """Every (bases_after, outs, runs) the participants can produce."""
    for fates in itertools.product(*[_fate_choices(origin) for origin in origins]):
        safe = [dest for dest in fates if dest != OUT]
        # origins are sorted, so safe destinations must rise strictly until home
        if not all(a < b or a == b == HOME for a, b in zip(safe, safe[1:])):
            continue
        bases_after = tuple(base in fates for base in BASE_NUMBERS)
        yield bases_after, fates.count(OUT), fates.count(HOME)


@lru_cache(maxsize=None)
def _situation_deltas(balls: int, strikes: int, bases: Bases, outs: int) -> FrozenSet[GamestateDelta]:
    runners = _occupied(bases)
    deltas = set()

    # At-bat ends: ball in play, walk, hit-by-pitch, strikeout
    for bases_after, out_count, runs in _enumerate_fates([0] + runners):
        if outs + out_count <= 3:
            deltas.add(GamestateDelta((0, 0), bases_after, out_count, runs))

    # At-bat continues on a ball or a strike
    next_counts = []
    if balls < 3:
        next_counts.append((balls + 1, strikes))
    if strikes < 2:
        next_counts.append((balls, strikes + 1))
    runner_fates = list(_enumerate_fates(runners))
    for count in next_counts:
        for bases_after, out_count, runs in runner_fates:
            if outs + out_count <= 2:
                deltas.add(GamestateDelta(count, bases_after, out_count, runs))

    # Two-strike foul
    if strikes == 2:
        deltas.add(GamestateDelta((balls, 2), bases, 0, 0))
    return frozenset(deltas)


def legal_deltas_from(state: GameState) -> FrozenSet[GamestateDelta]:
    """Every delta reachable from `state`, found by enumerating events."""
    if not state.is_pre_pitch:
        return frozenset()
    return _situation_deltas(state.balls, state.strikes, state.bases, state.outs)


def iter_pre_pitch_states(max_score: int = 0) -> Iterator[GameState]:
    """All pre-pitch states with both scores in 0..max_score."""
    for balls, strikes, outs in itertools.product(range(4), range(3), range(3)):
        for bases in itertools.product((False, True), repeat=3):
            for batting, fielding in itertools.product(range(max_score + 1), repeat=2):
                yield GameState(balls, strikes, bases, outs, batting, fielding)


# -------------------------------------------------------------------
# Vocabulary
# -------------------------------------------------------------------

@dataclass(frozen=True)
class DeltaVocabulary:
    """Ordered delta tokens; ids are line numbers, specials follow the deltas."""
    tokens: Tuple[GamestateDelta, ...]
    _ids: Dict[GamestateDelta, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        ids = {delta: i for i, delta in enumerate(self.tokens)}
        if len(ids) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")
        object.__setattr__(self, "_ids", ids)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, delta: GamestateDelta) -> bool:
        return delta in self._ids

    def id_of(self, delta: GamestateDelta) -> int:
        return self._ids[delta]

    def delta_of(self, token_id: int) -> GamestateDelta:
        return self.tokens[token_id]

    @property
    def cls_id(self) -> int:
        return len(self.tokens)

    @property
    def mask_id(self) -> int:
        return len(self.tokens) + 1

    @property
    def pad_id(self) -> int:
        return len(self.tokens) + 2

    @property
    def size(self) -> int:
        """Embedding table size: deltas plus the reserved specials."""
        return len(self.tokens) + len(SPECIAL_TOKENS)

    def token_lines(self) -> List[str]:
        return [format_token(delta) for delta in self.tokens] + list(SPECIAL_TOKENS)


def enumerate_legal_deltas() -> DeltaVocabulary:
    """Union of the deltas reachable from every pre-pitch situation, sorted canonically."""
    seen = set()
    for balls, strikes, outs in itertools.product(range(4), range(3), range(3)):
        for bases in itertools.product((False, True), repeat=3):
            seen |= _situation_deltas(balls, strikes, bases, outs)
    vocab = DeltaVocabulary(tuple(sorted(seen, key=GamestateDelta.sort_key)))
    logger.info("delta vocabulary: %d tokens (reference count %d)", len(vocab), REFERENCE_VOCAB_SIZE)
    return vocab


def save_vocabulary(vocab: DeltaVocabulary, path: str) -> None:
    """One token per line (UTF-8); line index = id. Cardinality file written alongside."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for line in vocab.token_lines():
            f.write(line + "\n")
    cardinality_path = os.path.join(os.path.dirname(path) or ".", "vocab_cardinality.txt")
    write_cardinality(vocab, cardinality_path)


def load_vocabulary(path: str) -> DeltaVocabulary:
    with open(path, "r", encoding="utf-8") as f:
        lines = [line.rstrip("\n") for line in f if line.strip()]
    deltas = [parse_token(line) for line in lines if line not in SPECIAL_TOKENS]
    specials = [line for line in lines if line in SPECIAL_TOKENS]
    if tuple(specials) != SPECIAL_TOKENS or lines[len(deltas):] != list(SPECIAL_TOKENS):
        raise ValueError(f"{path}: special tokens must close the file in order {SPECIAL_TOKENS}")
    return DeltaVocabulary(tuple(deltas))


def write_cardinality(vocab: DeltaVocabulary, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"cardinality\t{len(vocab)}\n")
        f.write(f"reference\t{REFERENCE_VOCAB_SIZE}\n")


def read_cardinality(path: str) -> int:
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            key, _, value = line.strip().partition("\t")
            if key == "cardinality":
                return int(value)
    raise ValueError(f"{path}: no cardinality line")
