"""
Pitch-by-pitch CSV ingestion.

Rows are keyed by (game_pk, ab_number, pitch_number); sorting on those three
values rebuilds every game, and replaying the rows through the gamestate engine
turns each pitch into a delta token.
"""
import csv
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import pandas as pd

from pitchform.errors import (
    DuplicateKey,
    GapInSequence,
    IllegalTransition,
    InconsistentStates,
    RowError,
    SchemaMismatch,
)
from pitchform.gamestate import (
    DeltaVocabulary,
    GameState,
    compute_delta,
    describe_state,
    half_inning_start,
    save_vocabulary,
)

logger = logging.getLogger(__name__)

PitchKey = Tuple[int, int, int]

HALVES = ("top", "bot")

# At-bat result labels (the `events` column); empty while the at-bat continues
HIT_EVENTS = {"single": 1, "double": 2, "triple": 3, "home_run": 4}
WALK_EVENTS = {"walk"}
HBP_EVENTS = {"hit_by_pitch"}
STRIKEOUT_EVENTS = {"strikeout"}
SAC_FLY_EVENTS = {"sac_fly"}
OUT_IN_PLAY_EVENTS = {"field_out", "grounded_into_double_play", "sac_fly"}
AT_BAT_EVENTS = set(HIT_EVENTS) | WALK_EVENTS | HBP_EVENTS | STRIKEOUT_EVENTS | OUT_IN_PLAY_EVENTS


# -------------------------------------------------------------------
# Pitch rows
# -------------------------------------------------------------------

@dataclass(frozen=True)
class PitchEvent:
    """One pitch: keys, participants, pitch and batted-ball physics, state before and after."""
    game_pk: int
    ab_number: int
    pitch_number: int  # starts at 1 in every at-bat
    inning: int
    half: str  # "top" or "bot"
    batter_id: int
    pitcher_id: int
    stadium_id: int
    pitch_type: str
    release_speed: float  # mph
    plate_x: float  # feet, catcher's view
    plate_z: float  # feet above ground
    spin_rate: float  # rpm
    launch_speed: Optional[float]  # mph, balls in play only
    launch_angle: Optional[float]  # degrees, balls in play only
    hit_distance: Optional[float]  # feet, balls in play only
    balls: int
    strikes: int
    on_1b: int
    on_2b: int
    on_3b: int
    outs: int
    batting_score: int
    fielding_score: int
    events: str  # at-bat result on its last pitch, "" otherwise
    post_balls: int
    post_strikes: int
    post_on_1b: int
    post_on_2b: int
    post_on_3b: int
    post_outs: int
    post_batting_score: int
    post_fielding_score: int

    @property
    def key(self) -> PitchKey:
        return (self.game_pk, self.ab_number, self.pitch_number)

    @property
    def ends_at_bat(self) -> bool:
        return self.events != ""

    @property
    def has_batted_ball(self) -> bool:
        return self.launch_speed is not None

    def pre_state(self) -> GameState:
        return GameState(
            self.balls, self.strikes, (self.on_1b, self.on_2b, self.on_3b),
            self.outs, self.batting_score, self.fielding_score,
        )

    def post_state(self) -> GameState:
        return GameState(
            self.post_balls, self.post_strikes, (self.post_on_1b, self.post_on_2b, self.post_on_3b),
            self.post_outs, self.post_batting_score, self.post_fielding_score,
        )


PITCH_COLUMNS = [f.name for f in fields(PitchEvent)]

INT_COLUMNS = {
    "game_pk", "ab_number", "pitch_number", "inning", "batter_id", "pitcher_id", "stadium_id",
    "balls", "strikes", "outs", "batting_score", "fielding_score",
    "post_balls", "post_strikes", "post_outs", "post_batting_score", "post_fielding_score",
}
FLAG_COLUMNS = {"on_1b", "on_2b", "on_3b", "post_on_1b", "post_on_2b", "post_on_3b"}
FLOAT_COLUMNS = {"release_speed", "plate_x", "plate_z", "spin_rate"}
OPTIONAL_FLOAT_COLUMNS = {"launch_speed", "launch_angle", "hit_distance"}
TEXT_COLUMNS = {"half", "pitch_type", "events"}

# Inclusive bounds checked on top of the type conversion
COLUMN_RANGES = {
    "game_pk": (1, None),
    "ab_number": (1, None),
    "pitch_number": (1, None),
    "inning": (1, None),
    "balls": (0, 3),
    "strikes": (0, 2),
    "outs": (0, 2),
    "batting_score": (0, None),
    "fielding_score": (0, None),
    "post_balls": (0, 3),
    "post_strikes": (0, 2),
    "post_outs": (0, 3),
    "post_batting_score": (0, None),
    "post_fielding_score": (0, None),
}


@dataclass
class ParseResult:
    """Typed events plus the rows that were skipped."""
    events: List[PitchEvent] = field(default_factory=list)
    errors: List[RowError] = field(default_factory=list)


def _convert(column: str, raw: str, line: int):
    text = raw.strip()
    if column in TEXT_COLUMNS:
        return text
    if column in OPTIONAL_FLOAT_COLUMNS:
        if text == "":
            return None
        try:
            return float(text)
        except ValueError:
            raise RowError(line, column, f"not a number: {raw!r}")
    if text == "":
        raise RowError(line, column, "empty value")
    if column in FLOAT_COLUMNS:
        try:
            return float(text)
        except ValueError:
            raise RowError(line, column, f"not a number: {raw!r}")
    try:
        value = int(text)
    except ValueError:
        raise RowError(line, column, f"not an integer: {raw!r}")
    if column in FLAG_COLUMNS and value not in (0, 1):
        raise RowError(line, column, f"must be 0 or 1, got {value}")
    lo, hi = COLUMN_RANGES.get(column, (None, None))
    if lo is not None and value < lo:
        if column == "pitch_number":
            raise RowError(line, column, f"pitch numbering starts at 1, got {value}")
        raise RowError(line, column, f"must be >= {lo}, got {value}")
    if hi is not None and value > hi:
        raise RowError(line, column, f"must be <= {hi}, got {value}")
    return value


def _row_to_event(row: Dict[str, str], line: int) -> PitchEvent:
    values = {column: _convert(column, row[column], line) for column in PITCH_COLUMNS}
    if values["half"] not in HALVES:
        raise RowError(line, "half", f"must be one of {HALVES}, got {values['half']!r}")
    if values["events"] and values["events"] not in AT_BAT_EVENTS:
        raise RowError(line, "events", f"unknown at-bat result {values['events']!r}")
    if values["events"] and (values["post_balls"], values["post_strikes"]) != (0, 0):
        raise RowError(line, "post_balls", "an at-bat result must leave a 0-0 count")
    return PitchEvent(**values)


def parse_pitch_csv(path: str) -> ParseResult:
    """
    Read a pitch CSV (UTF-8, header row, RFC-4180 quoting).

    Raises SchemaMismatch when a documented column is missing. Rows that fail
    typing or validation are skipped, logged and returned as RowErrors carrying
    their file line number. Extra columns are ignored.
    """
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, encoding="utf-8")
    missing = [column for column in PITCH_COLUMNS if column not in frame.columns]
    if missing:
        raise SchemaMismatch(missing)

    result = ParseResult()
    for offset, row in enumerate(frame[PITCH_COLUMNS].to_dict("records")):
        line = offset + 2  # header is line 1
        try:
            result.events.append(_row_to_event(row, line))
        except RowError as e:
            logger.warning("skipping row: %s", e)
            result.errors.append(e)
    logger.info("parsed %s: %d events, %d rejected rows", path, len(result.events), len(result.errors))
    return result


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def event_rows(events: Iterable[PitchEvent]) -> List[List[str]]:
    return [[_format_value(getattr(event, column)) for column in PITCH_COLUMNS] for event in events]


def write_pitch_csv(events: Sequence[PitchEvent], path: str, extra: Optional[Dict[str, Sequence]] = None) -> None:
    """Write events in the documented schema; `extra` appends columns (e.g. delta ids)."""
    frame = pd.DataFrame(event_rows(events), columns=PITCH_COLUMNS)
    for column, values in (extra or {}).items():
        frame[column] = [_format_value(v) for v in values]
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8", quoting=csv.QUOTE_MINIMAL)


# -------------------------------------------------------------------
# Seasons
# -------------------------------------------------------------------

def write_seasons(seasons: Dict[int, int], path: str) -> None:
    frame = pd.DataFrame(sorted(seasons.items()), columns=["game_pk", "season"])
    frame.to_csv(path, index=False, lineterminator="\n")


def read_seasons(path: str) -> Dict[int, int]:
    frame = pd.read_csv(path, dtype={"game_pk": "int64", "season": "int64"})
    return {int(g): int(s) for g, s in zip(frame["game_pk"], frame["season"])}


# -------------------------------------------------------------------
# Corpus
# -------------------------------------------------------------------

@dataclass(frozen=True)
class AtBat:
    """One plate appearance; `start:stop` slices the corpus' pitch list."""
    game_pk: int
    ab_number: int
    inning: int
    half: str
    batter_id: int
    pitcher_id: int
    stadium_id: int
    lineup_slot: int  # batting-order position 0..8 within the game
    start: int
    stop: int
    events: str  # result on the final pitch, "" if the at-bat never finished

    @property
    def key(self) -> Tuple[int, int]:
        return (self.game_pk, self.ab_number)

    @property
    def n_pitches(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True)
class Corpus:
    """Ordered games with per-player appearance indices (at-bat indices, chronological)."""
    pitches: Tuple[PitchEvent, ...]
    at_bats: Tuple[AtBat, ...]
    games: Dict[int, Tuple[int, int]]  # game_pk -> at-bat index range
    batter_index: Dict[int, Tuple[int, ...]]
    pitcher_index: Dict[int, Tuple[int, ...]]
    seasons: Dict[int, int] = field(default_factory=dict)
    gaps: Tuple[GapInSequence, ...] = ()
    delta_ids: Optional[Tuple[int, ...]] = None  # -1 where the pitch was rejected
    transition_errors: Tuple[IllegalTransition, ...] = ()

    @property
    def game_pks(self) -> List[int]:
        return list(self.games)

    def season_of(self, game_pk: int) -> int:
        return self.seasons.get(game_pk, 0)

    def at_bat_index(self) -> Dict[Tuple[int, int], int]:
        return {ab.key: i for i, ab in enumerate(self.at_bats)}

    def appearances(self, player_id: int, role: str) -> Tuple[int, ...]:
        index = self.batter_index if role == "batter" else self.pitcher_index
        return index.get(player_id, ())

    def game_at_bats(self, game_pk: int) -> range:
        start, stop = self.games[game_pk]
        return range(start, stop)

    @property
    def tokenized_count(self) -> int:
        if self.delta_ids is None:
            return 0
        return sum(1 for token_id in self.delta_ids if token_id >= 0)

    def token_histogram(self) -> Dict[int, int]:
        counts: Dict[int, int] = {}
        for token_id in self.delta_ids or ():
            if token_id >= 0:
                counts[token_id] = counts.get(token_id, 0) + 1
        return counts


def _lineup_slots(pitches: Sequence[PitchEvent]) -> Dict[Tuple[int, str, int], int]:
    """(game_pk, half, batter) -> order of first appearance for that batting side."""
    slots: Dict[Tuple[int, str, int], int] = {}
    seen: Dict[Tuple[int, str], int] = {}
    for event in pitches:
        key = (event.game_pk, event.half, event.batter_id)
        if key not in slots:
            side = (event.game_pk, event.half)
            slots[key] = seen.get(side, 0)
            seen[side] = slots[key] + 1
    return slots


def reconstruct_games(events: Iterable[PitchEvent], seasons: Optional[Dict[int, int]] = None) -> Corpus:
    """
    Sort events by (game_pk, ab_number, pitch_number) and build the game and
    player indices. Duplicate keys are fatal; pitch-number gaps are reported
    per at-bat in `Corpus.gaps`.
    """
    pitches = sorted(events, key=lambda e: e.key)
    for previous, current in zip(pitches, pitches[1:]):
        if previous.key == current.key:
            raise DuplicateKey(current.key)

    slots = _lineup_slots(pitches)
    at_bats: List[AtBat] = []
    gaps: List[GapInSequence] = []
    start = 0
    while start < len(pitches):
        first = pitches[start]
        stop = start
        while stop < len(pitches) and pitches[stop].game_pk == first.game_pk and pitches[stop].ab_number == first.ab_number:
            stop += 1
        numbers = [p.pitch_number for p in pitches[start:stop]]
        expected = set(range(1, max(numbers) + 1))
        missing = sorted(expected - set(numbers))
        if missing:
            gap = GapInSequence(first.game_pk, first.ab_number, missing)
            logger.warning("%s", gap)
            gaps.append(gap)
        last = pitches[stop - 1]
        at_bats.append(AtBat(
            game_pk=first.game_pk,
            ab_number=first.ab_number,
            inning=first.inning,
            half=first.half,
            batter_id=first.batter_id,
            pitcher_id=first.pitcher_id,
            stadium_id=first.stadium_id,
            lineup_slot=min(slots[(first.game_pk, first.half, first.batter_id)], 8),
            start=start,
            stop=stop,
            events=last.events,
        ))
        start = stop

    games: Dict[int, Tuple[int, int]] = {}
    batter_index: Dict[int, List[int]] = {}
    pitcher_index: Dict[int, List[int]] = {}
    for i, ab in enumerate(at_bats):
        lo, _ = games.get(ab.game_pk, (i, i))
        games[ab.game_pk] = (lo, i + 1)
        batter_index.setdefault(ab.batter_id, []).append(i)
        pitcher_index.setdefault(ab.pitcher_id, []).append(i)

    return Corpus(
        pitches=tuple(pitches),
        at_bats=tuple(at_bats),
        games=games,
        batter_index={p: tuple(v) for p, v in batter_index.items()},
        pitcher_index={p: tuple(v) for p, v in pitcher_index.items()},
        seasons=dict(seasons or {}),
        gaps=tuple(gaps),
    )


def replay_and_tokenize(corpus: Corpus, vocab: DeltaVocabulary) -> Corpus:
    """
    Replay every game through the gamestate engine and attach a delta id per pitch.

    A pitch is accepted when its recorded pre-pitch state matches the replayed
    state (the previous pitch's post-pitch state, or the half-inning start) and
    its own pre -> post change is a legal delta. A rejected pitch produces
    exactly one IllegalTransition and gets id -1; the replay then continues from
    its recorded post-pitch state.
    """
    delta_ids = [-1] * len(corpus.pitches)
    errors: List[IllegalTransition] = []

    previous: Optional[PitchEvent] = None
    expected: Optional[GameState] = None
    for i, event in enumerate(corpus.pitches):
        if previous is None or previous.game_pk != event.game_pk:
            expected = half_inning_start(None)
        elif (previous.inning, previous.half) != (event.inning, event.half):
            expected = half_inning_start(previous.post_state())

        try:
            pre = event.pre_state()
            post = event.post_state()
        except ValueError as e:
            errors.append(IllegalTransition(event.key, str(e)))
            previous, expected = event, None
            continue

        reason = None
        if expected is not None and pre != expected:
            reason = f"recorded state {describe_state(pre)} but replay reached {describe_state(expected)}"
        else:
            try:
                delta = compute_delta(pre, post, event.ends_at_bat)
            except InconsistentStates as e:
                reason = str(e)
            else:
                if delta in vocab:
                    delta_ids[i] = vocab.id_of(delta)
                else:
                    reason = f"delta {delta.token} is not in the vocabulary"

        if reason is not None:
            error = IllegalTransition(event.key, reason)
            logger.warning("%s", error)
            errors.append(error)
        previous = event
        expected = post

    tokenized = replace(corpus, delta_ids=tuple(delta_ids), transition_errors=tuple(errors))
    logger.info(
        "replayed %d pitches: %d tokenized, %d illegal transitions",
        len(corpus.pitches), tokenized.tokenized_count, len(errors),
    )
    return tokenized


# -------------------------------------------------------------------
# Persistence
# -------------------------------------------------------------------

def _write_player_index(index: Dict[int, Tuple[int, ...]], at_bats: Sequence[AtBat], path: str) -> None:
    rows = []
    for player_id in sorted(index):
        for ordinal, ab_idx in enumerate(index[player_id]):
            ab = at_bats[ab_idx]
            rows.append((player_id, ordinal, ab.game_pk, ab.ab_number))
    pd.DataFrame(rows, columns=["player_id", "ordinal", "game_pk", "ab_number"]).to_csv(
        path, index=False, lineterminator="\n"
    )


def write_error_report(path: str, row_errors: Sequence[RowError] = (), corpus: Optional[Corpus] = None) -> int:
    """TSV of every skipped row, gap and illegal transition. Returns the number of lines written."""
    rows = [("row", "", "", "", e.line, f"{e.column}: {e.reason}") for e in row_errors]
    if corpus is not None:
        for gap in corpus.gaps:
            rows.append(("gap", gap.game_pk, gap.ab_number, "", "", f"missing pitch number(s) {gap.missing}"))
        for error in corpus.transition_errors:
            game_pk, ab_number, pitch_number = error.key
            rows.append(("transition", game_pk, ab_number, pitch_number, "", error.reason))
    frame = pd.DataFrame(rows, columns=["kind", "game_pk", "ab_number", "pitch_number", "line", "message"])
    frame.to_csv(path, sep="\t", index=False, lineterminator="\n")
    return len(rows)


def read_transition_errors(path: str) -> Tuple[IllegalTransition, ...]:
    """The illegal transitions recorded in an error report, in file order."""
    frame = pd.read_csv(path, sep="\t", dtype=str, keep_default_na=False)
    rows = frame[frame["kind"] == "transition"]
    return tuple(
        IllegalTransition((int(g), int(a), int(p)), message)
        for g, a, p, message in zip(rows["game_pk"], rows["ab_number"], rows["pitch_number"], rows["message"])
    )


def save_corpus(corpus: Corpus, vocab: DeltaVocabulary, out_dir: str, row_errors: Sequence[RowError] = ()) -> None:
    """events.csv (with delta ids), vocab.txt, index CSVs, seasons.csv and errors.tsv."""
    os.makedirs(out_dir, exist_ok=True)
    delta_ids = corpus.delta_ids if corpus.delta_ids is not None else [-1] * len(corpus.pitches)
    write_pitch_csv(corpus.pitches, os.path.join(out_dir, "events.csv"), extra={"delta_id": delta_ids})
    save_vocabulary(vocab, os.path.join(out_dir, "vocab.txt"))
    _write_player_index(corpus.batter_index, corpus.at_bats, os.path.join(out_dir, "batter_index.csv"))
    _write_player_index(corpus.pitcher_index, corpus.at_bats, os.path.join(out_dir, "pitcher_index.csv"))
    write_seasons(corpus.seasons, os.path.join(out_dir, "seasons.csv"))
    write_error_report(os.path.join(out_dir, "errors.tsv"), row_errors, corpus)


def load_corpus(corpus_dir: str) -> Corpus:
    """
    Inverse of `save_corpus`: the stored delta ids are reattached without replaying.
    Gaps are found again from the stored pitches; illegal transitions come back from errors.tsv.
    """
    events_path = os.path.join(corpus_dir, "events.csv")
    parsed = parse_pitch_csv(events_path)
    seasons = read_seasons(os.path.join(corpus_dir, "seasons.csv"))
    corpus = reconstruct_games(parsed.events, seasons)
    ids_frame = pd.read_csv(events_path, usecols=["game_pk", "ab_number", "pitch_number", "delta_id"])
    ids_by_key = {
        (int(g), int(a), int(p)): int(d)
        for g, a, p, d in zip(ids_frame["game_pk"], ids_frame["ab_number"], ids_frame["pitch_number"], ids_frame["delta_id"])
    }
    delta_ids = tuple(ids_by_key.get(event.key, -1) for event in corpus.pitches)
    errors_path = os.path.join(corpus_dir, "errors.tsv")
    transition_errors = read_transition_errors(errors_path) if os.path.exists(errors_path) else ()
    return replace(corpus, delta_ids=delta_ids, transition_errors=transition_errors)
