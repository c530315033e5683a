"""
Tests for the supplemental stat engine, stat layouts and PCA.
"""
import numpy as np
import pytest

from conftest import plate_appearance
from pitchform.errors import RankDeficient, UnknownPlayer
from pitchform.ingest import reconstruct_games
from pitchform.stats import (
    StatEngine,
    desk_stat_spec,
    evaluate,
    load_pca,
    paper_stat_spec,
    pca_fit,
    pca_inverse,
    pca_transform,
    read_stat_spec,
    save_pca,
    write_stat_spec,
)


def one_game_engine():
    results = ["single", "strikeout", "field_out", "double", "strikeout",
               "field_out", "home_run", "strikeout", "field_out", "field_out"]
    events = [plate_appearance(1, i + 1, r) for i, r in enumerate(results)]
    events.append(plate_appearance(1, 11, "walk", batter_id=102, pitcher_id=252))
    return StatEngine(reconstruct_games(events, {1: 2015}))


def test_avg_three_for_ten_over_last15():
    engine = one_game_engine()
    stats = engine.compute_split_stats(101, "batter", (1, 11), "last15", ["AVG", "SLG", "K_RATE"])
    assert stats.values[0] == pytest.approx(0.3)
    assert stats.values[1] == pytest.approx(0.7)
    assert stats.values[2] == pytest.approx(0.3)
    assert stats.present.all()


def test_first_at_bat_has_no_history():
    engine = one_game_engine()
    for scale in ("career", "season", "last15", "this_game"):
        stats = engine.compute_split_stats(101, "batter", (1, 1), scale)
        assert not stats.values.any()
        assert not stats.present.any()


def test_scales_follow_games_and_seasons():
    # one at-bat per game; hits in games 1-10, outs in games 11-20
    events = [plate_appearance(g, 1, "single" if g <= 10 else "field_out") for g in range(1, 21)]
    events.append(plate_appearance(21, 1, "field_out"))
    seasons = {g: 2015 if g <= 10 else 2016 for g in range(1, 22)}
    engine = StatEngine(reconstruct_games(events, seasons))
    as_of = (21, 1)
    avg = lambda scale: engine.compute_split_stats(101, "batter", as_of, scale, ["AVG"])
    assert avg("career").values[0] == pytest.approx(0.5)
    # the current game counts toward the fifteen, so 14 earlier games remain
    assert avg("last15").values[0] == pytest.approx(4 / 14)
    season = avg("season")
    assert season.values[0] == 0.0 and season.present[0]
    this_game = avg("this_game")
    assert this_game.values[0] == 0.0 and not this_game.present[0]


def test_obp_matches_recount(corpus, engine):
    last_game = corpus.game_pks[-1]
    ab = corpus.at_bats[corpus.games[last_game][0] + 3]
    hits = on_base = denominator = 0
    for previous in corpus.at_bats:
        if previous.batter_id != ab.batter_id or previous.key >= ab.key or not previous.events:
            continue
        reached = previous.events in ("single", "double", "triple", "home_run", "walk", "hit_by_pitch")
        on_base += reached
        denominator += 1
        hits += previous.events in ("single", "double", "triple", "home_run")
    stats = engine.compute_split_stats(ab.batter_id, "batter", ab.key, "career", ["OBP"])
    assert denominator > 0 and hits > 0
    assert stats.values[0] == on_base / denominator


def test_stats_are_causal(simulation, corpus, engine):
    layout = desk_stat_spec()
    ab = corpus.at_bats[len(corpus.at_bats) // 2]
    earlier = [e for e in simulation.events if (e.game_pk, e.ab_number) < ab.key]
    earlier += [e for e in simulation.events if (e.game_pk, e.ab_number) == ab.key]
    truncated = StatEngine(reconstruct_games(earlier, simulation.seasons))
    full = engine.assemble_supplemental(layout, ab.batter_id, ab.pitcher_id, ab.key)
    cut = truncated.assemble_supplemental(layout, ab.batter_id, ab.pitcher_id, ab.key)
    assert np.array_equal(full.values, cut.values)
    assert np.array_equal(full.presence, cut.presence)


def test_table_rows_match_single_queries(corpus, engine, raw_table):
    layout = desk_stat_spec()
    for i in (0, 17, len(corpus.at_bats) - 1):
        ab = corpus.at_bats[i]
        single = engine.assemble_supplemental(layout, ab.batter_id, ab.pitcher_id, ab.key)
        np.testing.assert_allclose(raw_table.values[i], single.values, rtol=0, atol=1e-12)
        assert np.array_equal(raw_table.present[i].astype(np.float64), single.presence)


def test_vector_lengths(raw_table):
    desk = desk_stat_spec()
    assert len(desk) == 57
    assert len(desk.columns(exclude_scales=["this_game"])) == 42
    assert len(paper_stat_spec()) == 1_541
    assert raw_table.inputs().shape == (raw_table.values.shape[0], 114)
    assert raw_table.inputs().dtype == np.float32


def test_matchup_without_history_is_absent():
    engine = one_game_engine()
    layout = desk_stat_spec()
    vector = engine.assemble_supplemental(layout, 101, 252, (1, 12))
    matchup = [s for block, s in layout.slices() if block.entity == "matchup"]
    for s in matchup:
        assert not vector.values[s].any()
        assert not vector.presence[s].any()
    batter_career = layout.slices()[0][1]
    assert vector.presence[batter_career].all()


def test_unknown_player():
    engine = one_game_engine()
    with pytest.raises(UnknownPlayer):
        engine.compute_split_stats(999, "batter", (1, 1), "career")
    with pytest.raises(UnknownPlayer):
        engine.compute_split_stats((101, 999), "matchup", (1, 1), "career")


def test_split_names_select_split_tallies():
    tallies = np.zeros((15, 15))
    tallies[0, :3] = [10, 8, 2]  # PA, AB, H on the "all" split
    values, present = evaluate(["AVG", "AVG@risp"], tallies)
    assert values.tolist() == [0.25, 0.0]
    assert present.tolist() == [True, False]
    with pytest.raises(ValueError):
        evaluate(["AVG@nowhere"], tallies)


def test_stat_spec_file_roundtrip(tmp_path):
    for layout in (desk_stat_spec(), paper_stat_spec()):
        path = tmp_path / "stat_spec.txt"
        write_stat_spec(layout, str(path))
        assert read_stat_spec(str(path)) == layout


# -------------------------------------------------------------------
# PCA
# -------------------------------------------------------------------

def test_pca_on_a_line():
    t = np.arange(-2.0, 3.0)
    model = pca_fit(np.stack([t, 2 * t], axis=1), 1)
    np.testing.assert_allclose(model.components[0], np.array([1.0, 2.0]) / np.sqrt(5.0), atol=1e-12)
    assert model.explained_variance[0] == pytest.approx(5 * t.var(ddof=1))
    np.testing.assert_allclose(pca_transform(model, model.mean), [0.0], atol=1e-12)


def test_pca_full_rank_reconstruction():
    X = np.random.default_rng(0).normal(size=(50, 10))
    model = pca_fit(X, 10)
    assert np.abs(pca_inverse(model, pca_transform(model, X)) - X).max() < 1e-8
    np.testing.assert_allclose(model.components @ model.components.T, np.eye(10), atol=1e-10)
    assert np.all(np.diff(model.explained_variance) <= 1e-12)


def test_pca_preserves_distances_at_full_rank():
    X = np.random.default_rng(1).normal(size=(20, 6))
    Z = pca_transform(pca_fit(X, 6), X)
    for i, j in ((0, 1), (3, 17), (5, 19)):
        assert np.linalg.norm(Z[i] - Z[j]) == pytest.approx(np.linalg.norm(X[i] - X[j]), rel=1e-10)


def test_pca_rank_checks():
    X = np.random.default_rng(2).normal(size=(5, 10))
    with pytest.raises(RankDeficient):
        pca_fit(X, 6)
    with pytest.raises(RankDeficient):
        pca_fit(X, 0)


def test_pca_logs_components_past_the_data_rank(caplog):
    X = np.random.default_rng(4).normal(size=(20, 4))
    X[:, 3] = X[:, 0] + X[:, 1]
    with caplog.at_level("WARNING", logger="pitchform.stats"):
        pca_fit(X, 3)
    assert "~0 variance" not in caplog.text
    with caplog.at_level("WARNING", logger="pitchform.stats"):
        model = pca_fit(X, 4)
    assert "1 of 4 components have ~0 variance" in caplog.text
    assert model.explained_variance[-1] == pytest.approx(0.0, abs=1e-10)


def test_pca_save_load(tmp_path):
    model = pca_fit(np.random.default_rng(3).normal(size=(30, 8)), 4)
    save_pca(model, str(tmp_path / "pca"))
    loaded = load_pca(str(tmp_path / "pca"))
    assert np.array_equal(loaded.mean, model.mean)
    assert np.array_equal(loaded.components, model.components)
    assert np.array_equal(loaded.explained_variance, model.explained_variance)


if __name__ == "__main__":
    test_avg_three_for_ten_over_last15()
    test_pca_on_a_line()
    print("✓ stats")
