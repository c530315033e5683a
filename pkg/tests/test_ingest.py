"""
Tests for CSV ingestion, game reconstruction and replay.
"""
import dataclasses
import os
import random

import pandas as pd
import pytest

from conftest import make_pitch
from pitchform.errors import DuplicateKey, SchemaMismatch
from pitchform.ingest import (
    PITCH_COLUMNS,
    load_corpus,
    parse_pitch_csv,
    reconstruct_games,
    replay_and_tokenize,
    save_corpus,
    write_error_report,
    write_pitch_csv,
)


def write_rows(path, rows):
    pd.DataFrame(rows).to_csv(path, index=False, lineterminator="\n")


def test_three_row_file(tmp_path):
    events = [
        make_pitch(pitch_number=1),
        make_pitch(pitch_number=2, balls=1, post_balls=1, post_strikes=1),
        make_pitch(pitch_number=3, balls=1, strikes=1, post_balls=0, post_strikes=0, events="single",
                   post_on_1b=1, launch_speed=91.5, launch_angle=8.0, hit_distance=150.0),
    ]
    path = tmp_path / "three.csv"
    write_pitch_csv(events, str(path))
    result = parse_pitch_csv(str(path))
    assert result.events == events
    assert result.errors == []


def test_pitch_number_zero_is_a_row_error(tmp_path):
    rows = [dataclasses.asdict(make_pitch(pitch_number=1)), dataclasses.asdict(make_pitch(pitch_number=0))]
    for row in rows:
        for column in ("launch_speed", "launch_angle", "hit_distance"):
            row[column] = ""
    path = tmp_path / "zero.csv"
    write_rows(path, rows)
    result = parse_pitch_csv(str(path))
    assert len(result.events) == 1
    assert len(result.errors) == 1
    error = result.errors[0]
    assert error.line == 3
    assert error.column == "pitch_number"


def test_bad_values_are_skipped_not_fatal(tmp_path):
    good = dataclasses.asdict(make_pitch(ab_number=1))
    bad_flag = dataclasses.asdict(make_pitch(ab_number=2))
    bad_flag["on_1b"] = 2
    bad_number = dataclasses.asdict(make_pitch(ab_number=3))
    bad_number["release_speed"] = "fast"
    rows = [good, bad_flag, bad_number]
    for row in rows:
        for column in ("launch_speed", "launch_angle", "hit_distance"):
            row[column] = ""
    path = tmp_path / "bad.csv"
    write_rows(path, rows)
    result = parse_pitch_csv(str(path))
    assert [e.ab_number for e in result.events] == [1]
    assert [(e.line, e.column) for e in result.errors] == [(3, "on_1b"), (4, "release_speed")]


def test_missing_column_is_schema_mismatch(tmp_path):
    row = dataclasses.asdict(make_pitch())
    del row["spin_rate"]
    path = tmp_path / "schema.csv"
    write_rows(path, [row])
    with pytest.raises(SchemaMismatch) as excinfo:
        parse_pitch_csv(str(path))
    assert excinfo.value.missing == ["spin_rate"]


def test_simulated_corpus_csv_roundtrip(simulation, tmp_path):
    path = tmp_path / "events.csv"
    write_pitch_csv(simulation.events, str(path))
    result = parse_pitch_csv(str(path))
    assert result.errors == []
    assert reconstruct_games(result.events, simulation.seasons) == reconstruct_games(
        simulation.events, simulation.seasons
    )


@pytest.mark.slow
def test_hundred_game_league_csv_roundtrip(league, vocab, tmp_path):
    path = tmp_path / "events.csv"
    write_pitch_csv(league.events, str(path))
    result = parse_pitch_csv(str(path))
    assert result.errors == []
    assert len(result.events) == len(league.events)
    reparsed = replay_and_tokenize(reconstruct_games(result.events, league.seasons), vocab)
    original = replay_and_tokenize(reconstruct_games(league.events, league.seasons), vocab)
    assert reparsed == original
    assert len(reparsed.game_pks) == 100
    assert reparsed.transition_errors == ()


def test_shuffled_game_reconstructs_identically(simulation):
    game = simulation.games[0]
    shuffled = list(game)
    random.Random(3).shuffle(shuffled)
    assert reconstruct_games(shuffled) == reconstruct_games(game)
    assert list(reconstruct_games(shuffled).pitches) == game


def test_interleaved_games_separate(simulation):
    a, b = simulation.games[0], simulation.games[1]
    interleaved = [e for pair in zip(a, b) for e in pair] + a[len(b):] + b[len(a):]
    corpus = reconstruct_games(interleaved)
    assert corpus.game_pks == [a[0].game_pk, b[0].game_pk]
    for game_pk, game in ((a[0].game_pk, a), (b[0].game_pk, b)):
        lo, hi = corpus.games[game_pk]
        start, stop = corpus.at_bats[lo].start, corpus.at_bats[hi - 1].stop
        assert list(corpus.pitches[start:stop]) == game


def test_duplicate_key_is_fatal():
    with pytest.raises(DuplicateKey) as excinfo:
        reconstruct_games([make_pitch(), make_pitch()])
    assert excinfo.value.key == (1, 1, 1)


def test_gap_reported_per_at_bat():
    events = [make_pitch(pitch_number=1), make_pitch(pitch_number=3), make_pitch(ab_number=2, pitch_number=1)]
    corpus = reconstruct_games(events)
    assert len(corpus.gaps) == 1
    gap = corpus.gaps[0]
    assert (gap.game_pk, gap.ab_number, gap.missing) == (1, 1, [2])


def test_player_index_matches_recount(simulation, corpus):
    batter = simulation.games[0][0].batter_id
    expected = []
    for game in simulation.games:
        for e in game:
            if e.batter_id == batter and e.pitch_number == 1:
                expected.append((e.game_pk, e.ab_number))
    index = corpus.appearances(batter, "batter")
    assert [corpus.at_bats[i].key for i in index] == expected
    assert len(index) == len(expected)
    assert list(index) == sorted(index)


def test_simulated_corpus_fully_tokenized(simulation, corpus):
    assert corpus.transition_errors == ()
    assert corpus.tokenized_count == len(simulation.events)
    assert sum(corpus.token_histogram().values()) == len(corpus.pitches)


def test_one_corrupted_outs_field_gives_one_illegal_transition(simulation, vocab):
    events = list(simulation.games[0])
    target = next(i for i, e in enumerate(events) if e.pitch_number == 2 and e.outs == 0)
    events[target] = dataclasses.replace(events[target], outs=1)
    corpus = replay_and_tokenize(reconstruct_games(events), vocab)
    assert len(corpus.transition_errors) == 1
    assert corpus.transition_errors[0].key == events[target].key
    assert corpus.tokenized_count == len(events) - 1


def test_corpus_save_load_roundtrip(corpus, vocab, tmp_path):
    save_corpus(corpus, vocab, str(tmp_path))
    for name in ("events.csv", "vocab.txt", "batter_index.csv", "pitcher_index.csv", "seasons.csv", "errors.tsv"):
        assert os.path.exists(tmp_path / name)
    loaded = load_corpus(str(tmp_path))
    assert loaded.delta_ids == corpus.delta_ids
    assert loaded.at_bats == corpus.at_bats
    assert loaded.batter_index == corpus.batter_index
    assert loaded.seasons == corpus.seasons
    assert loaded.transition_errors == ()


def test_reloaded_corpus_keeps_its_transition_errors(simulation, vocab, tmp_path):
    events = list(simulation.games[0])
    target = next(i for i, e in enumerate(events) if e.pitch_number == 2 and e.outs == 0)
    events[target] = dataclasses.replace(events[target], outs=1)
    corpus = replay_and_tokenize(reconstruct_games(events), vocab)
    save_corpus(corpus, vocab, str(tmp_path))
    loaded = load_corpus(str(tmp_path))
    assert [(e.key, e.reason) for e in loaded.transition_errors] == [
        (e.key, e.reason) for e in corpus.transition_errors
    ]
    assert loaded.transition_errors[0].key == events[target].key
    assert loaded.delta_ids == corpus.delta_ids


def test_error_report_lists_every_problem(simulation, vocab, tmp_path):
    events = list(simulation.games[0])
    del events[1]
    corpus = replay_and_tokenize(reconstruct_games(events), vocab)
    path = tmp_path / "errors.tsv"
    lines = write_error_report(str(path), corpus=corpus)
    frame = pd.read_csv(path, sep="\t")
    assert lines == len(frame) == len(corpus.gaps) + len(corpus.transition_errors)
    assert set(frame["kind"]) <= {"gap", "transition"}
    assert list(frame.columns) == ["kind", "game_pk", "ab_number", "pitch_number", "line", "message"]


def test_schema_columns_are_the_documented_ones():
    assert PITCH_COLUMNS[:3] == ["game_pk", "ab_number", "pitch_number"]
    assert "launch_speed" in PITCH_COLUMNS and "post_outs" in PITCH_COLUMNS


if __name__ == "__main__":
    test_duplicate_key_is_fatal()
    test_gap_reported_per_at_bat()
