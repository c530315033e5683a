"""
Shared fixtures: one small simulated league, replayed and tokenized once per session.
"""
import os
import sys

import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from pitchform.dataset import FeatureStore
from pitchform.gamestate import enumerate_legal_deltas
from pitchform.ingest import PitchEvent, reconstruct_games, replay_and_tokenize
from pitchform.simulation import SimConfig, simulate_corpus
from pitchform.stats import StatEngine, desk_stat_spec, fit_standardizer

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running training or exhaustive checks")


@pytest.fixture(scope="session")
def vocab():
    return enumerate_legal_deltas()


@pytest.fixture(scope="session")
def simulation():
    return simulate_corpus(SimConfig(seed=7, n_games=30))


@pytest.fixture(scope="session")
def league():
    """A full 100-game league, for the checks that need production-sized volume."""
    return simulate_corpus(SimConfig(seed=21, n_games=100))


@pytest.fixture(scope="session")
def corpus(simulation, vocab):
    return replay_and_tokenize(reconstruct_games(simulation.events, simulation.seasons), vocab)


@pytest.fixture(scope="session")
def engine(corpus):
    return StatEngine(corpus)


@pytest.fixture(scope="session")
def raw_table(engine):
    return engine.supplemental_table(desk_stat_spec())


@pytest.fixture(scope="session")
def table(raw_table, corpus):
    return raw_table.standardize(fit_standardizer(raw_table, corpus))


@pytest.fixture(scope="session")
def store(corpus, table, vocab):
    return FeatureStore(corpus, table, vocab)


def make_pitch(game_pk=1, ab_number=1, pitch_number=1, **overrides) -> PitchEvent:
    """A ball on a 0-0 count with bases empty, unless overridden."""
    values = dict(
        game_pk=game_pk, ab_number=ab_number, pitch_number=pitch_number, inning=1, half="top",
        batter_id=101, pitcher_id=251, stadium_id=1, pitch_type="FF", release_speed=94.0,
        plate_x=0.1, plate_z=2.5, spin_rate=2300.0, launch_speed=None, launch_angle=None, hit_distance=None,
        balls=0, strikes=0, on_1b=0, on_2b=0, on_3b=0, outs=0, batting_score=0, fielding_score=0, events="",
        post_balls=1, post_strikes=0, post_on_1b=0, post_on_2b=0, post_on_3b=0, post_outs=0,
        post_batting_score=0, post_fielding_score=0,
    )
    values.update(overrides)
    return PitchEvent(**values)


def plate_appearance(game_pk, ab_number, result, batter_id=101, pitcher_id=251, **overrides) -> PitchEvent:
    """A one-pitch plate appearance ending in `result`."""
    return make_pitch(
        game_pk, ab_number, 1, batter_id=batter_id, pitcher_id=pitcher_id, events=result,
        post_balls=0, post_strikes=0, **overrides,
    )
