"""
Tests for the pitchform command line.
"""
import json
import os

import pytest

from pitchform.cli import RunConfig, build_parser, main


def run_cli(*argv):
    return main([str(a) for a in argv])


def test_games_must_be_positive(tmp_path):
    assert run_cli("simulate", "--games", 0, "--out", tmp_path) == 2
    assert run_cli("simulate", "--games", "many", "--out", tmp_path) == 2


def test_ingest_before_vocab_fails(tmp_path, capsys):
    assert run_cli("ingest", "--out", tmp_path) == 1
    assert "pitchform vocab" in capsys.readouterr().err


def test_missing_input_file(tmp_path):
    assert run_cli("vocab", "--out", tmp_path) == 0
    assert run_cli("ingest", "--out", tmp_path, "--input", tmp_path / "missing.csv") == 1


def test_simulation_is_reproducible(tmp_path, capsys):
    for name in ("a", "b"):
        assert run_cli("simulate", "--games", 2, "--seed", 3, "--out", tmp_path / name) == 0
    for name in ("events.csv", "seasons.csv", "players.csv"):
        a = (tmp_path / "a" / "simulate" / name).read_bytes()
        b = (tmp_path / "b" / "simulate" / name).read_bytes()
        assert a == b, name
    capsys.readouterr()
    assert run_cli("simulate", "--games", 2, "--seed", 3, "--out", tmp_path / "a") == 0
    assert "✓ simulate: up to date" in capsys.readouterr().out


def test_run_config_recorded_at_run_root(tmp_path):
    assert run_cli("simulate", "--games", 2, "--seed", 3, "--out", tmp_path) == 0
    path = tmp_path / "run_config.json"
    recorded = json.loads(path.read_text(encoding="utf-8"))
    assert (recorded["subcommand"], recorded["games"], recorded["seed"], recorded["preset"]) == ("simulate", 2, 3, "desk")
    assert RunConfig(**recorded) == RunConfig("simulate", out=str(tmp_path), games=2, seed=3)

    assert run_cli("train", "--out", tmp_path) == 1
    assert json.loads(path.read_text(encoding="utf-8"))["subcommand"] == "simulate"


def test_dry_run_echoes_the_full_size_schedule(tmp_path, capsys):
    out = tmp_path / "run"
    for argv in (("simulate", "--games", 10), ("vocab",), ("ingest",), ("windows",)):
        assert run_cli(*argv, "--out", out) == 0, argv
    capsys.readouterr()
    assert run_cli("train", "--preset", "paper", "--dry-run", "--out", out) == 0
    echoed = capsys.readouterr().out
    assert "learning rate: 5e-4" in echoed
    assert "warmup steps: 7,500" in echoed
    assert "total steps: 90,000" in echoed
    assert "batch: 78 windows (156 views)" in echoed
    assert not os.path.exists(out / "train_batter" / "manifest.txt")


def test_train_needs_windows(tmp_path, capsys):
    out = tmp_path / "run"
    for argv in (("simulate", "--games", 3), ("vocab",), ("ingest",)):
        assert run_cli(*argv, "--out", out) == 0
    assert run_cli("train", "--dry-run", "--out", out) == 1
    assert "pitchform windows" in capsys.readouterr().err


def test_run_config_from_arguments():
    args = build_parser().parse_args(["all", "--role", "pitcher", "--k", "8", "--steps", "50", "--out", "x"])
    run = RunConfig.from_args(args)
    assert (run.subcommand, run.role, run.k, run.steps, run.out) == ("all", "pitcher", 8, 50, "x")
    assert run.stage_dir("train", role_scoped=True) == os.path.join("x", "train_pitcher")
    with pytest.raises(ValueError):
        RunConfig("all", k=0)


@pytest.mark.slow
def test_full_pipeline_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run_cli("all", "--games", 12, "--steps", 3, "--k", 4, "--stat-dim", 4, "--out", tmp_path / name) == 0
    for stage, name in (("embed_batter", "forms.csv"), ("cluster_batter", "assignments.csv"),
                        ("cluster_batter", "metrics.csv"), ("report_batter", "switch_rates.csv")):
        a = (tmp_path / "a" / stage / name).read_bytes()
        b = (tmp_path / "b" / stage / name).read_bytes()
        assert a == b, (stage, name)
    assert os.path.exists(tmp_path / "a" / "report_batter" / "form" / "timeline.svg")
