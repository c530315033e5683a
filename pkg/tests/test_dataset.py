"""
Tests for windows, views, masking and batch assembly.
"""
import dataclasses

import numpy as np
import pytest

from conftest import plate_appearance
from pitchform.dataset import (
    IGNORE_INDEX,
    DatasetConfig,
    FeatureStore,
    FormView,
    FormWindow,
    assemble_batch,
    assemble_views,
    build_all_windows,
    extract_windows,
    make_views,
    mask_view,
    pair_map,
    plate_zone,
    read_window_manifest,
    split_windows,
    write_window_manifest,
)
from pitchform.errors import BadPairing, InsufficientHistory, SequenceOverflow, UnknownPlayer
from pitchform.ingest import reconstruct_games
from pitchform.model import check_pairing
from pitchform.stats import StatEngine, desk_stat_spec

PITCHER = 900


def one_pitch_corpus(n_at_bats, per_game=10):
    """One pitcher and one batter meeting in `n_at_bats` one-pitch plate appearances."""
    events = [
        plate_appearance(1 + i // per_game, 1 + i % per_game, "field_out", pitcher_id=PITCHER)
        for i in range(n_at_bats)
    ]
    corpus = reconstruct_games(events)
    return dataclasses.replace(corpus, delta_ids=tuple([0] * len(corpus.pitches)))


def one_pitch_store(vocab, n_at_bats):
    corpus = one_pitch_corpus(n_at_bats)
    table = StatEngine(corpus).supplemental_table(desk_stat_spec())
    return FeatureStore(corpus, table, vocab)


# -------------------------------------------------------------------
# Windows
# -------------------------------------------------------------------

@pytest.mark.parametrize("n_at_bats, expected", [(19, 0), (20, 1), (30, 3), (34, 3), (35, 4)])
def test_batter_window_counts(n_at_bats, expected):
    corpus = one_pitch_corpus(n_at_bats)
    if expected == 0:
        with pytest.raises(InsufficientHistory):
            extract_windows(corpus, 101, "batter", 5)
        return
    windows = extract_windows(corpus, 101, "batter", 5)
    assert len(windows) == expected
    assert [w.start for w in windows] == [5 * k for k in range(expected)]
    assert all(len(w) == 20 for w in windows)


def test_pitcher_window_count():
    corpus = one_pitch_corpus(205)
    windows = extract_windows(corpus, PITCHER, "pitcher", 10)
    assert len(windows) == 11
    assert windows[-1].at_bats == corpus.appearances(PITCHER, "pitcher")[100:200]


def test_unknown_player_has_no_windows():
    with pytest.raises(UnknownPlayer):
        extract_windows(one_pitch_corpus(20), 555, "batter", 5)


def test_build_all_windows_skips_short_histories(corpus):
    config = DatasetConfig.for_role("batter")
    windows = build_all_windows(corpus, config)
    assert windows
    players = {w.player_id for w in windows}
    for player_id in players:
        assert len(corpus.appearances(player_id, "batter")) >= 20
    assert [w.player_id for w in windows] == sorted(w.player_id for w in windows)


def test_window_manifest_roundtrip(corpus, tmp_path):
    windows = build_all_windows(corpus, DatasetConfig.for_role("batter"))
    path = tmp_path / "windows.csv"
    write_window_manifest(windows, corpus, str(path))
    assert read_window_manifest(str(path), corpus) == windows


def test_split_is_disjoint_and_complete(corpus):
    windows = build_all_windows(corpus, DatasetConfig.for_role("batter"))
    train, held_out = split_windows(windows, corpus, 0.8)
    assert len(train) + len(held_out) == len(windows)
    assert not set(train) & set(held_out)
    cutoff = max(corpus.game_pks[:24])
    for window in train:
        assert corpus.at_bats[window.at_bats[-1]].game_pk <= cutoff
    for window in held_out:
        assert corpus.at_bats[window.at_bats[-1]].game_pk > cutoff


def test_config_presets_and_validation():
    pitcher = DatasetConfig.for_role("pitcher")
    assert (pitcher.window_size, pitcher.view_size, pitcher.stride, pitcher.max_len) == (100, 90, 10, 512)
    assert pitcher.view_offset == 10
    assert DatasetConfig.from_dict(pitcher.to_dict()) == pitcher
    assert DatasetConfig.for_role("batter", stride=None).stride == 5
    with pytest.raises(ValueError):
        DatasetConfig(view_size=20, window_size=20)
    with pytest.raises(ValueError):
        DatasetConfig(mask_rate=0.0)


# -------------------------------------------------------------------
# Views
# -------------------------------------------------------------------

def test_batter_views_overlap(vocab):
    store = one_pitch_store(vocab, 20)
    config = DatasetConfig.for_role("batter")
    window = extract_windows(store.corpus, 101, "batter", 5)[0]
    first, second = make_views(window, store, config)
    assert first.at_bats == window.at_bats[0:15]
    assert second.at_bats == window.at_bats[5:20]
    assert len(set(first.at_bats) & set(second.at_bats)) == 10


def test_pitcher_views_overlap(vocab):
    store = one_pitch_store(vocab, 100)
    config = DatasetConfig.for_role("pitcher")
    window = extract_windows(store.corpus, PITCHER, "pitcher", 10)[0]
    first, second = make_views(window, store, config)
    assert first.at_bats == window.at_bats[0:90]
    assert second.at_bats == window.at_bats[10:100]
    assert len(set(first.at_bats) & set(second.at_bats)) == 80
    assert len(first) == 91


def test_view_layout(vocab):
    store = one_pitch_store(vocab, 20)
    view = store.build_view(101, "batter", range(4), 128)
    assert view.tokens.tolist() == [vocab.cls_id, 0, 0, 0, 0]
    assert view.ab_ordinal.tolist() == [0, 1, 2, 3, 4]
    assert view.pitch_ordinal.tolist() == [0, 1, 1, 1, 1]
    assert view.lineup.tolist() == [0, 1, 1, 1, 1]
    assert view.supplemental.shape == (5, 114)
    assert not view.supplemental[0].any()
    assert np.array_equal(view.supplemental[3], store.supplemental[2])
    assert view.physics[1, -1] == 0.0


def test_view_overflow(vocab):
    store = one_pitch_store(vocab, 20)
    with pytest.raises(SequenceOverflow):
        store.build_view(101, "batter", range(15), 10)


def test_view_before_is_causal(vocab):
    store = one_pitch_store(vocab, 120)
    view = store.view_before(PITCHER, "pitcher", 11, 90, 512)
    assert view.at_bats == tuple(range(10, 100))
    assert all(store.corpus.at_bats[a].game_pk < 11 for a in view.at_bats)
    with pytest.raises(InsufficientHistory):
        store.view_before(PITCHER, "pitcher", 5, 90, 512)


def test_plate_zone_grid():
    assert plate_zone(0.1, 2.5) == 13
    assert plate_zone(-10.0, -10.0) == 1
    assert plate_zone(10.0, 10.0) == 25


# -------------------------------------------------------------------
# Masking
# -------------------------------------------------------------------

def long_view(n_tokens, cls_id):
    tokens = np.concatenate([[cls_id], np.arange(n_tokens) % 7]).astype(np.int64)
    zeros = np.zeros(n_tokens + 1, dtype=np.int64)
    return FormView(
        player_id=1, role="batter", at_bats=(), tokens=tokens,
        supplemental=np.zeros((n_tokens + 1, 2), dtype=np.float32),
        physics=np.zeros((n_tokens + 1, 8), dtype=np.float32),
        stadium=zeros, lineup=zeros, pitch_type=zeros, zone=zeros, ab_ordinal=zeros, pitch_ordinal=zeros,
    )


def test_full_mask_rate_masks_every_delta(vocab):
    view = long_view(50, vocab.cls_id)
    masked = mask_view(view, 1.0, np.random.default_rng(0), vocab.mask_id)
    assert masked.inputs[0] == vocab.cls_id
    assert (masked.inputs[1:] == vocab.mask_id).all()
    assert masked.mask_positions.tolist() == list(range(1, 51))
    assert np.array_equal(masked.targets[1:], view.tokens[1:])
    assert masked.targets[0] == IGNORE_INDEX


def test_mask_rate_is_respected(vocab):
    view = long_view(40_000, vocab.cls_id)
    masked = mask_view(view, 0.15, np.random.default_rng(1), vocab.mask_id)
    rate = len(masked.mask_positions) / 40_000
    assert abs(rate - 0.15) <= 0.01, rate


def test_mask_is_seeded(vocab):
    view = long_view(200, vocab.cls_id)
    a = mask_view(view, 0.15, np.random.default_rng(5), vocab.mask_id)
    b = mask_view(view, 0.15, np.random.default_rng(5), vocab.mask_id)
    assert np.array_equal(a.inputs, b.inputs)


def test_short_view_always_gets_a_mask(vocab):
    view = long_view(1, vocab.cls_id)
    for seed in range(20):
        masked = mask_view(view, 0.15, np.random.default_rng(seed), vocab.mask_id)
        assert masked.mask_positions.tolist() == [1]


# -------------------------------------------------------------------
# Batches
# -------------------------------------------------------------------

def fitting_windows(store, config, n):
    windows = []
    for window in build_all_windows(store.corpus, config):
        try:
            make_views(window, store, config)
        except SequenceOverflow:
            continue
        windows.append(window)
        if len(windows) == n:
            return windows
    raise AssertionError("not enough windows fit max_len")


def test_batch_layout(store, vocab):
    config = DatasetConfig.for_role("batter")
    windows = fitting_windows(store, config, 2)
    batch = assemble_batch(windows, store, config, np.random.default_rng(0))
    assert len(batch) == 4
    assert batch.pairing.tolist() == [1, 0, 3, 2]
    assert batch.tokens.shape == (4, 128)
    assert batch.supplemental.shape == (4, 128, 114)
    assert batch.physics.shape == (4, 128, 8)
    assert (batch.tokens[:, 0] == vocab.cls_id).all()
    masked = batch.targets != IGNORE_INDEX
    assert not (masked & ~batch.attention_mask).any()
    assert not masked[:, 0].any()
    assert masked.any(axis=1).all()
    assert (batch.tokens[~batch.attention_mask] == vocab.pad_id).all()
    assert (batch.tokens[masked] == vocab.mask_id).all()
    assert batch.player_ids.tolist() == [windows[0].player_id] * 2 + [windows[1].player_id] * 2


def test_batch_rejects_mixed_roles(store):
    config = DatasetConfig.for_role("batter")
    windows = fitting_windows(store, config, 1)
    other = FormWindow(windows[0].player_id, "pitcher", 0, windows[0].at_bats)
    with pytest.raises(ValueError):
        assemble_batch([windows[0], other], store, config, np.random.default_rng(0))


def test_inference_batch_is_unmasked(store):
    config = DatasetConfig.for_role("batter")
    window = fitting_windows(store, config, 1)[0]
    views = make_views(window, store, config)
    batch = assemble_views(views, config.max_len, store.vocab.pad_id)
    assert batch.n_masked == 0
    assert batch.pairing.tolist() == [0, 1]
    assert np.array_equal(batch.tokens[0, :len(views[0])], views[0].tokens)
    with pytest.raises(BadPairing):
        check_pairing(batch.pairing)
    check_pairing(pair_map(len(views)))


def test_pair_map():
    assert pair_map(6).tolist() == [1, 0, 3, 2, 5, 4]
    with pytest.raises(ValueError):
        pair_map(3)


if __name__ == "__main__":
    test_pitcher_window_count()
    test_pair_map()
    print("✓ dataset")
