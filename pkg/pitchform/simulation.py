"""
Synthetic league simulator.

Produces pitch-by-pitch games in the ingest schema so the whole pipeline can run
without real data. Players belong to archetypes: per-player at-bat outcome
tables plus sequencing habits (count depth, two-strike fouls). Streaky players
flip between a hot and a cold table from game to game. Every pitch goes through
`apply_delta`, so the simulator can only emit legal transitions.
"""
import logging
import os
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

from pitchform.gamestate import GameState, GamestateDelta, apply_delta, half_inning_start
from pitchform.ingest import PitchEvent, write_pitch_csv, write_seasons

logger = logging.getLogger(__name__)

OUTCOMES = ("strikeout", "walk", "hit_by_pitch", "single", "double", "triple", "home_run", "in_play_out")

LINEUP_SIZE = 9
ROTATION_SIZE = 5


# -------------------------------------------------------------------
# Archetypes
# -------------------------------------------------------------------

def _check_table(name: str, table: Dict[str, float]) -> None:
    unknown = set(table) - set(OUTCOMES)
    if unknown:
        raise ValueError(f"{name}: unknown outcome(s) {sorted(unknown)}")
    if any(p < 0 for p in table.values()):
        raise ValueError(f"{name}: probabilities must be non-negative")
    total = sum(table.values())
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"{name}: outcome probabilities sum to {total}, expected 1")


@dataclass
class ArchetypeProfile:
    """Outcome table and sequencing habits shared by every player of one archetype."""
    name: str
    outcome_probs: Dict[str, float]
    patience: float = 0.5  # 0..1, deeper counts when higher
    foul_rate: float = 0.3  # chance of each extra two-strike foul
    cold_outcome_probs: Optional[Dict[str, float]] = None
    streak_switch: float = 0.0  # per-game chance of flipping hot <-> cold
    pitch_mix: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_PITCH_MIX))
    velocity_offset: float = 0.0

    def __post_init__(self):
        _check_table(self.name, self.outcome_probs)
        if self.cold_outcome_probs is not None:
            _check_table(f"{self.name} (cold)", self.cold_outcome_probs)
        for attr in ("patience", "foul_rate", "streak_switch"):
            value = getattr(self, attr)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{self.name}: {attr} must be in [0, 1], got {value}")
        if self.streak_switch > 0 and self.cold_outcome_probs is None:
            raise ValueError(f"{self.name}: streak_switch needs cold_outcome_probs")
        unknown = set(self.pitch_mix) - set(PITCH_TYPES)
        if unknown:
            raise ValueError(f"{self.name}: unknown pitch type(s) {sorted(unknown)}")

    def table(self, hot: bool = True) -> Dict[str, float]:
        if hot or self.cold_outcome_probs is None:
            return self.outcome_probs
        return self.cold_outcome_probs

    @property
    def is_streaky(self) -> bool:
        return self.streak_switch > 0


# Pitch type -> (release speed mean, sd, spin mean, sd)
PITCH_TYPES = {
    "FF": (94.0, 1.5, 2300.0, 100.0),
    "SI": (92.5, 1.5, 2150.0, 100.0),
    "SL": (85.0, 2.0, 2450.0, 150.0),
    "CH": (85.5, 2.0, 1750.0, 120.0),
    "CU": (78.5, 2.0, 2550.0, 150.0),
}
BREAKING_BALLS = ("SL", "CU")

DEFAULT_PITCH_MIX = {"FF": 0.45, "SI": 0.15, "SL": 0.2, "CH": 0.12, "CU": 0.08}

LEAGUE_TABLE = {
    "strikeout": 0.22, "walk": 0.08, "hit_by_pitch": 0.01, "single": 0.15,
    "double": 0.045, "triple": 0.005, "home_run": 0.03, "in_play_out": 0.46,
}

# Batter archetypes: patient and aggressive share outcome rates and differ only in sequencing
BATTER_ARCHETYPES = {
    "contact": ArchetypeProfile("contact", {
        "strikeout": 0.14, "walk": 0.07, "hit_by_pitch": 0.01, "single": 0.20,
        "double": 0.05, "triple": 0.01, "home_run": 0.015, "in_play_out": 0.505,
    }, patience=0.4, foul_rate=0.45),
    "power": ArchetypeProfile("power", {
        "strikeout": 0.28, "walk": 0.10, "hit_by_pitch": 0.01, "single": 0.10,
        "double": 0.05, "triple": 0.005, "home_run": 0.07, "in_play_out": 0.385,
    }, patience=0.55, foul_rate=0.2),
    "patient": ArchetypeProfile("patient", dict(LEAGUE_TABLE), patience=0.9, foul_rate=0.55),
    "aggressive": ArchetypeProfile("aggressive", dict(LEAGUE_TABLE), patience=0.05, foul_rate=0.1),
    "streaky": ArchetypeProfile("streaky", {
        "strikeout": 0.15, "walk": 0.09, "hit_by_pitch": 0.01, "single": 0.20,
        "double": 0.06, "triple": 0.01, "home_run": 0.06, "in_play_out": 0.42,
    }, patience=0.5, foul_rate=0.3, cold_outcome_probs={
        "strikeout": 0.32, "walk": 0.05, "hit_by_pitch": 0.01, "single": 0.10,
        "double": 0.03, "triple": 0.0, "home_run": 0.01, "in_play_out": 0.48,
    }, streak_switch=0.2),
}

ACE_TABLE = {
    "strikeout": 0.30, "walk": 0.06, "hit_by_pitch": 0.01, "single": 0.12,
    "double": 0.035, "triple": 0.005, "home_run": 0.02, "in_play_out": 0.45,
}

PITCHER_ARCHETYPES = {
    "ace": ArchetypeProfile("ace", dict(ACE_TABLE), patience=0.45, foul_rate=0.35,
                            pitch_mix={"FF": 0.5, "SL": 0.3, "CH": 0.1, "CU": 0.1}, velocity_offset=1.5),
    "control": ArchetypeProfile("control", {
        "strikeout": 0.18, "walk": 0.03, "hit_by_pitch": 0.005, "single": 0.17,
        "double": 0.05, "triple": 0.005, "home_run": 0.03, "in_play_out": 0.53,
    }, patience=0.25, foul_rate=0.3, pitch_mix={"SI": 0.4, "FF": 0.2, "CH": 0.25, "CU": 0.15},
        velocity_offset=-1.0),
    "wild": ArchetypeProfile("wild", {
        "strikeout": 0.24, "walk": 0.14, "hit_by_pitch": 0.02, "single": 0.14,
        "double": 0.045, "triple": 0.005, "home_run": 0.035, "in_play_out": 0.375,
    }, patience=0.8, foul_rate=0.25, pitch_mix={"FF": 0.6, "SL": 0.25, "CU": 0.15}, velocity_offset=1.0),
    "streaky": ArchetypeProfile("streaky", dict(ACE_TABLE), patience=0.45, foul_rate=0.3,
                                cold_outcome_probs={
                                    "strikeout": 0.16, "walk": 0.12, "hit_by_pitch": 0.02, "single": 0.18,
                                    "double": 0.06, "triple": 0.01, "home_run": 0.05, "in_play_out": 0.40,
                                }, streak_switch=0.25),
}

# Batted-ball physics per at-bat result:
# (launch speed mean, sd, launch angle mean, sd, distance mean, sd)
BATTED_BALL = {
    "single": (89.0, 7.0, 9.0, 10.0, 170.0, 60.0),
    "double": (98.0, 5.0, 17.0, 7.0, 300.0, 35.0),
    "triple": (97.0, 5.0, 18.0, 6.0, 340.0, 25.0),
    "home_run": (105.0, 3.0, 28.0, 4.0, 405.0, 20.0),
    "field_out": (86.0, 9.0, 18.0, 22.0, 200.0, 90.0),
    "grounded_into_double_play": (88.0, 6.0, -6.0, 6.0, 40.0, 15.0),
    "sac_fly": (92.0, 5.0, 33.0, 6.0, 290.0, 30.0),
}


# -------------------------------------------------------------------
# Configuration
# -------------------------------------------------------------------

@dataclass
class SimConfig:
    """League layout, seeds and archetype tables for one synthetic corpus."""
    seed: int = 7
    n_games: int = 100
    innings: int = 9
    n_teams: int = 6
    games_per_season: int = 40
    first_game_pk: int = 1001
    first_season: int = 2015
    steal_rate: float = 0.06  # attempts per pitch with first occupied and second open
    steal_success: float = 0.72
    wild_pitch_rate: float = 0.01  # per ball with runners on
    batter_archetypes: Dict[str, ArchetypeProfile] = field(default_factory=lambda: dict(BATTER_ARCHETYPES))
    pitcher_archetypes: Dict[str, ArchetypeProfile] = field(default_factory=lambda: dict(PITCHER_ARCHETYPES))

    def __post_init__(self):
        if self.n_games < 1:
            raise ValueError(f"n_games must be >= 1, got {self.n_games}")
        if self.innings < 1:
            raise ValueError(f"innings must be >= 1, got {self.innings}")
        if self.n_teams < 2:
            raise ValueError(f"n_teams must be >= 2, got {self.n_teams}")
        if self.games_per_season < 1:
            raise ValueError(f"games_per_season must be >= 1, got {self.games_per_season}")
        for attr in ("steal_rate", "steal_success", "wild_pitch_rate"):
            value = getattr(self, attr)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{attr} must be in [0, 1], got {value}")
        if not self.batter_archetypes or not self.pitcher_archetypes:
            raise ValueError("at least one batter and one pitcher archetype are required")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_games": self.n_games,
            "innings": self.innings,
            "n_teams": self.n_teams,
            "games_per_season": self.games_per_season,
            "first_game_pk": self.first_game_pk,
            "first_season": self.first_season,
            "steal_rate": self.steal_rate,
            "steal_success": self.steal_success,
            "wild_pitch_rate": self.wild_pitch_rate,
            "batter_archetypes": sorted(self.batter_archetypes),
            "pitcher_archetypes": sorted(self.pitcher_archetypes),
        }


# -------------------------------------------------------------------
# League
# -------------------------------------------------------------------

@dataclass(frozen=True)
class SimPlayer:
    player_id: int
    role: str  # "batter" or "pitcher"
    team: int
    archetype: str


def batter_id(team: int, slot: int) -> int:
    return (team + 1) * 100 + slot


def pitcher_id(team: int, rotation_slot: int) -> int:
    return (team + 1) * 100 + 50 + rotation_slot


def build_league(config: SimConfig) -> List[SimPlayer]:
    """Archetypes are dealt round-robin so every team carries a mix."""
    batter_names = sorted(config.batter_archetypes)
    pitcher_names = sorted(config.pitcher_archetypes)
    players = []
    for team in range(config.n_teams):
        for slot in range(LINEUP_SIZE):
            name = batter_names[(team * LINEUP_SIZE + slot) % len(batter_names)]
            players.append(SimPlayer(batter_id(team, slot), "batter", team, name))
        for r in range(ROTATION_SIZE):
            name = pitcher_names[(team * ROTATION_SIZE + r) % len(pitcher_names)]
            players.append(SimPlayer(pitcher_id(team, r), "pitcher", team, name))
    return players


@dataclass
class SimulationResult:
    """Games in play order plus the ground truth the simulator planted."""
    games: List[List[PitchEvent]]
    seasons: Dict[int, int]
    players: List[SimPlayer]
    hot: Dict[int, Dict[int, bool]]  # player -> game_pk -> hot?

    @property
    def events(self) -> List[PitchEvent]:
        return [event for game in self.games for event in game]

    def archetype_of(self, player_id: int) -> str:
        for player in self.players:
            if player.player_id == player_id:
                return player.archetype
        raise KeyError(player_id)


# -------------------------------------------------------------------
# Pitch-level helpers
# -------------------------------------------------------------------

def _sample(rng: random.Random, table: Dict[str, float]) -> str:
    names = [name for name in OUTCOMES if name in table]
    return rng.choices(names, weights=[table[name] for name in names])[0]


def _mix_tables(a: Dict[str, float], b: Dict[str, float]) -> Dict[str, float]:
    return {name: 0.5 * (a.get(name, 0.0) + b.get(name, 0.0)) for name in OUTCOMES}


def _binomial(rng: random.Random, n: int, p: float) -> int:
    return sum(1 for _ in range(n) if rng.random() < p)


def _final_count(rng: random.Random, outcome: str, patience: float) -> Tuple[int, int]:
    """Count before the at-bat's last pitch; higher patience goes deeper."""
    balls = _binomial(rng, 3, 0.1 + 0.65 * patience)
    strikes = _binomial(rng, 2, 0.25 + 0.6 * patience)
    if outcome == "strikeout":
        strikes = 2
    elif outcome == "walk":
        balls = 3
    return balls, strikes


def _pitch_sequence(rng: random.Random, balls: int, strikes: int, foul_rate: float) -> List[str]:
    """Order of non-final pitches: 'B' ball, 'S' strike, 'F' two-strike foul."""
    fouls = 0
    if strikes == 2:
        while fouls < 6 and rng.random() < foul_rate:
            fouls += 1
    sequence = []
    b_left, s_left, current_strikes = balls, strikes, 0
    while b_left or s_left or (current_strikes == 2 and fouls):
        options = [("B", b_left), ("S", s_left), ("F", fouls if current_strikes == 2 else 0)]
        kinds = [kind for kind, weight in options if weight]
        kind = rng.choices(kinds, weights=[weight for _, weight in options if weight])[0]
        if kind == "B":
            b_left -= 1
        elif kind == "S":
            s_left -= 1
            current_strikes += 1
        else:
            fouls -= 1
        sequence.append(kind)
    return sequence


def _forced_advance(bases: Tuple[bool, bool, bool]) -> Tuple[Tuple[bool, bool, bool], int]:
    first, second, third = bases
    runs = 0
    if first:
        if second:
            if third:
                runs = 1
            third = True
        second = True
    return (True, second, third), runs


def _resolve_outcome(
    rng: random.Random, outcome: str, bases: Tuple[bool, bool, bool], outs: int
) -> Tuple[str, Tuple[bool, bool, bool], int, int]:
    """(event label, bases after, outs gained, runs) for the at-bat's last pitch."""
    first, second, third = bases
    n_runners = int(first) + int(second) + int(third)
    if outcome == "strikeout":
        return "strikeout", bases, 1, 0
    if outcome in ("walk", "hit_by_pitch"):
        after, runs = _forced_advance(bases)
        return outcome, after, 0, runs
    if outcome == "home_run":
        return "home_run", (False, False, False), 0, n_runners + 1
    if outcome == "triple":
        return "triple", (False, False, True), 0, n_runners
    if outcome == "double":
        runs = int(second) + int(third)
        runner_to_third = False
        if first:
            if rng.random() < 0.4:
                runs += 1
            else:
                runner_to_third = True
        return "double", (False, True, runner_to_third), 0, runs
    if outcome == "single":
        runs = int(third)
        after = [True, False, False]
        if second:
            if rng.random() < 0.6:
                runs += 1
            else:
                after[2] = True
        if first:
            if not after[2] and rng.random() < 0.25:
                after[2] = True
            else:
                after[1] = True
        return "single", tuple(after), 0, runs
    # in_play_out
    if first and outs <= 1 and rng.random() < 0.3:
        return "grounded_into_double_play", (False, second, third), 2, 0
    if third and outs <= 1 and rng.random() < 0.4:
        return "sac_fly", (first, second, False), 1, 1
    return "field_out", bases, 1, 0


def _runner_play(
    rng: random.Random, config: SimConfig, kind: str, state: GameState
) -> Tuple[Tuple[bool, bool, bool], int, int]:
    """Steal, caught stealing or wild pitch riding along with a ball or strike."""
    first, second, third = state.bases
    if kind == "B" and state.runners and rng.random() < config.wild_pitch_rate:
        return (False, first, second), 0, int(third)
    if first and not second and rng.random() < config.steal_rate:
        if rng.random() < config.steal_success:
            return (False, True, third), 0, 0
        if state.outs <= 1:
            return (False, False, third), 1, 0
    return state.bases, 0, 0


def _location(rng: random.Random, kind: str) -> Tuple[float, float]:
    if kind == "B":
        side = rng.choice((-1.0, 1.0))
        return side * (1.05 + abs(rng.gauss(0.0, 0.3))), rng.gauss(2.5, 0.8)
    if kind == "HBP":
        side = rng.choice((-1.0, 1.0))
        return side * (1.7 + abs(rng.gauss(0.0, 0.15))), rng.gauss(2.8, 0.4)
    return rng.gauss(0.0, 0.45), rng.gauss(2.5, 0.4)


def _choose_pitch_type(rng: random.Random, pitcher: ArchetypeProfile, state: GameState) -> str:
    names = sorted(pitcher.pitch_mix)
    weights = []
    for name in names:
        weight = pitcher.pitch_mix[name]
        if state.strikes == 2 and name in BREAKING_BALLS:
            weight *= 2.0
        if state.balls == 3 and name == "FF":
            weight *= 2.0
        weights.append(weight)
    return rng.choices(names, weights=weights)[0]


# -------------------------------------------------------------------
# Game loop
# -------------------------------------------------------------------

@dataclass
class _GameContext:
    game_pk: int
    stadium_id: int
    rng: random.Random
    config: SimConfig
    profiles: Dict[int, ArchetypeProfile]
    hot: Dict[int, bool]
    rows: List[PitchEvent] = field(default_factory=list)
    ab_number: int = 0


def _emit_pitch(
    ctx: _GameContext, inning: int, half: str, batter: int, pitcher: int, pitch_number: int,
    state: GameState, delta: GamestateDelta, kind: str, event: str,
) -> GameState:
    post = apply_delta(state, delta)
    profile = ctx.profiles[pitcher]
    rng = ctx.rng
    pitch_type = _choose_pitch_type(rng, profile, state)
    speed_mean, speed_sd, spin_mean, spin_sd = PITCH_TYPES[pitch_type]
    plate_x, plate_z = _location(rng, kind)
    launch_speed = launch_angle = hit_distance = None
    if event in BATTED_BALL:
        ls_mean, ls_sd, la_mean, la_sd, d_mean, d_sd = BATTED_BALL[event]
        launch_speed = round(rng.gauss(ls_mean, ls_sd), 1)
        launch_angle = float(round(rng.gauss(la_mean, la_sd)))
        hit_distance = float(max(0, round(rng.gauss(d_mean, d_sd))))
    ctx.rows.append(PitchEvent(
        game_pk=ctx.game_pk,
        ab_number=ctx.ab_number,
        pitch_number=pitch_number,
        inning=inning,
        half=half,
        batter_id=batter,
        pitcher_id=pitcher,
        stadium_id=ctx.stadium_id,
        pitch_type=pitch_type,
        release_speed=round(rng.gauss(speed_mean + profile.velocity_offset, speed_sd), 1),
        plate_x=round(plate_x, 2),
        plate_z=round(plate_z, 2),
        spin_rate=float(round(rng.gauss(spin_mean, spin_sd))),
        launch_speed=launch_speed,
        launch_angle=launch_angle,
        hit_distance=hit_distance,
        balls=state.balls,
        strikes=state.strikes,
        on_1b=int(state.bases[0]),
        on_2b=int(state.bases[1]),
        on_3b=int(state.bases[2]),
        outs=state.outs,
        batting_score=state.batting_score,
        fielding_score=state.fielding_score,
        events=event,
        post_balls=post.balls,
        post_strikes=post.strikes,
        post_on_1b=int(post.bases[0]),
        post_on_2b=int(post.bases[1]),
        post_on_3b=int(post.bases[2]),
        post_outs=post.outs,
        post_batting_score=post.batting_score,
        post_fielding_score=post.fielding_score,
    ))
    return post


def _simulate_at_bat(
    ctx: _GameContext, inning: int, half: str, batter: int, pitcher: int, state: GameState
) -> GameState:
    rng = ctx.rng
    batter_profile = ctx.profiles[batter]
    pitcher_profile = ctx.profiles[pitcher]
    table = _mix_tables(batter_profile.table(ctx.hot[batter]), pitcher_profile.table(ctx.hot[pitcher]))
    outcome = _sample(rng, table)
    patience = 0.5 * (batter_profile.patience + pitcher_profile.patience)
    balls, strikes = _final_count(rng, outcome, patience)
    sequence = _pitch_sequence(rng, balls, strikes, batter_profile.foul_rate)

    ctx.ab_number += 1
    pitch_number = 0
    for kind in sequence:
        pitch_number += 1
        if kind == "F":
            delta = GamestateDelta(state.count, state.bases, 0, 0)
        else:
            count = (state.balls + 1, state.strikes) if kind == "B" else (state.balls, state.strikes + 1)
            bases_after, outs, runs = _runner_play(rng, ctx.config, kind, state)
            delta = GamestateDelta(count, bases_after, outs, runs)
        state = _emit_pitch(ctx, inning, half, batter, pitcher, pitch_number, state, delta, kind, "")

    event, bases_after, outs, runs = _resolve_outcome(rng, outcome, state.bases, state.outs)
    kind = {"walk": "B", "hit_by_pitch": "HBP", "strikeout": "S"}.get(event, "X")
    delta = GamestateDelta((0, 0), bases_after, outs, runs)
    return _emit_pitch(ctx, inning, half, batter, pitcher, pitch_number + 1, state, delta, kind, event)


def _simulate_game(
    ctx: _GameContext, away_lineup: Sequence[int], home_lineup: Sequence[int],
    away_starter: int, home_starter: int,
) -> List[PitchEvent]:
    lineup_position = {"top": 0, "bot": 0}
    previous: Optional[GameState] = None
    for inning in range(1, ctx.config.innings + 1):
        for half, lineup, pitcher in (("top", away_lineup, home_starter), ("bot", home_lineup, away_starter)):
            state = half_inning_start(previous)
            while state.outs < 3:
                batter = lineup[lineup_position[half] % LINEUP_SIZE]
                lineup_position[half] += 1
                state = _simulate_at_bat(ctx, inning, half, batter, pitcher, state)
            previous = state
    return ctx.rows


def _schedule(config: SimConfig) -> List[Tuple[int, int]]:
    """(away, home) for every game; a shuffled cycle of all ordered team pairs."""
    rng = random.Random(config.seed)
    pairs = [(a, h) for a in range(config.n_teams) for h in range(config.n_teams) if a != h]
    games: List[Tuple[int, int]] = []
    while len(games) < config.n_games:
        cycle = list(pairs)
        rng.shuffle(cycle)
        games.extend(cycle)
    return games[:config.n_games]


def _streaks(config: SimConfig, players: Sequence[SimPlayer], game_pks: Sequence[int],
             profiles: Dict[int, ArchetypeProfile]) -> Dict[int, Dict[int, bool]]:
    rng = random.Random(f"{config.seed}:streaks")
    hot: Dict[int, Dict[int, bool]] = {}
    for player in players:
        profile = profiles[player.player_id]
        state = True
        per_game = {}
        for game_pk in game_pks:
            if profile.is_streaky and rng.random() < profile.streak_switch:
                state = not state
            per_game[game_pk] = state
        hot[player.player_id] = per_game
    return hot


def simulate_corpus(config: SimConfig) -> SimulationResult:
    """
    Simulate `config.n_games` full games. Each game draws from its own RNG
    seeded by (seed, game_pk), so games are independent of each other; the
    hot/cold streak states are drawn up front.
    """
    players = build_league(config)
    profiles = {
        p.player_id: (config.batter_archetypes if p.role == "batter" else config.pitcher_archetypes)[p.archetype]
        for p in players
    }
    game_pks = [config.first_game_pk + g for g in range(config.n_games)]
    hot = _streaks(config, players, game_pks, profiles)
    rotation = [0] * config.n_teams
    games = []
    seasons = {}
    for g, (game_pk, (away, home)) in enumerate(zip(game_pks, _schedule(config))):
        starters = []
        for team in (away, home):
            starters.append(pitcher_id(team, rotation[team] % ROTATION_SIZE))
            rotation[team] += 1
        ctx = _GameContext(
            game_pk=game_pk,
            stadium_id=home + 1,
            rng=random.Random(f"{config.seed}:{game_pk}"),
            config=config,
            profiles=profiles,
            hot={pid: states[game_pk] for pid, states in hot.items()},
        )
        away_lineup = [batter_id(away, s) for s in range(LINEUP_SIZE)]
        home_lineup = [batter_id(home, s) for s in range(LINEUP_SIZE)]
        games.append(_simulate_game(ctx, away_lineup, home_lineup, starters[0], starters[1]))
        seasons[game_pk] = config.first_season + g // config.games_per_season
    logger.info(
        "simulated %d games, %d pitches (seed %d)",
        len(games), sum(len(game) for game in games), config.seed,
    )
    return SimulationResult(games=games, seasons=seasons, players=players, hot=hot)


# -------------------------------------------------------------------
# Save / load
# -------------------------------------------------------------------

def write_players(players: Sequence[SimPlayer], path: str) -> None:
    frame = pd.DataFrame(
        [(p.player_id, p.role, p.team, p.archetype) for p in players],
        columns=["player_id", "role", "team", "archetype"],
    )
    frame.to_csv(path, index=False, lineterminator="\n")


def read_players(path: str) -> List[SimPlayer]:
    frame = pd.read_csv(path, dtype={"player_id": "int64", "role": str, "team": "int64", "archetype": str})
    return [
        SimPlayer(int(pid), role, int(team), archetype)
        for pid, role, team, archetype in zip(frame["player_id"], frame["role"], frame["team"], frame["archetype"])
    ]


def write_simulation(result: SimulationResult, out_dir: str) -> List[str]:
    """events.csv, seasons.csv and players.csv (archetype ground truth)."""
    os.makedirs(out_dir, exist_ok=True)
    paths = [os.path.join(out_dir, name) for name in ("events.csv", "seasons.csv", "players.csv")]
    write_pitch_csv(result.events, paths[0])
    write_seasons(result.seasons, paths[1])
    write_players(result.players, paths[2])
    return paths
