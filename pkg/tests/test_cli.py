import csv
import json
import subprocess
import sys

import pytest

from leas.cli import dispatch


@pytest.fixture(scope="module")
def campaign_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("camp")
    assert dispatch(["synth", "campaign", "--out-dir", str(d), "--rng-seed", "3", "--n-seeds", "3"]) == 0
    assert dispatch(["build-graph", "--bipartite", str(d / "events.jsonl"), "--out-dir", str(d)]) == 0
    return d


def run_args(d, out, *extra):
    return [
        "--graph", str(d / "graph.tsv"), "--owners", str(d / "owners.tsv"),
        "--bipartite", str(d / "events.jsonl"), "--seeds", str(d / "seeds.txt"),
        "--out-dir", str(out), *extra,
    ]


def test_expand_help():
    proc = subprocess.run([sys.executable, "-m", "leas", "expand", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for flag in ("--graph", "--owners", "--bipartite", "--seeds", "--config", "--out-dir", "--k", "--l",
                 "--n-min", "--cap-n", "--d-max", "--m", "--delta-t", "--rho-min", "--workers",
                 "--rng-seed", "--krylov-order", "--binary-adjacency"):
        assert flag in proc.stdout


def test_defaults_echo(campaign_dir, tmp_path, capsys):
    assert dispatch(["expand", *run_args(campaign_dir, tmp_path)]) == 0
    echo = capsys.readouterr().out
    for line in ("k = 3", "l = 3", "d_max = 500"):
        assert line in echo.splitlines()


def test_pipeline_end_to_end(campaign_dir, tmp_path):
    assert dispatch(["pipeline", *run_args(campaign_dir, tmp_path, "--m", "2")]) == 0
    clusters = [json.loads(l) for l in (tmp_path / "clusters.jsonl").read_text().splitlines()]
    tiers = json.loads((tmp_path / "tiers.json").read_text())
    rows = list(csv.DictReader((tmp_path / "timing.csv").open()))
    seeds = [int(s) for s in (campaign_dir / "seeds.txt").read_text().split()]
    assert len(rows) == len(seeds) == len(clusters) == 3
    assert list(rows[0]) == ["seed_id", "n_sampled", "lp_iters", "wall_ms"]
    assert set(clusters[0]) == {"seed", "members", "conductance", "density", "tabc", "warnings"}
    assert all(c["tabc"] for c in clusters)
    assert tiers["tier1_count"] > 0


def test_config_echo_reproduces_run(campaign_dir, tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert dispatch(["expand", *run_args(campaign_dir, first, "--m", "2", "--n-min", "8")]) == 0
    cfg = first / "resolved_config.txt"
    assert dispatch(["expand", *run_args(campaign_dir, second, "--config", str(cfg))]) == 0
    assert (first / "clusters.jsonl").read_bytes() == (second / "clusters.jsonl").read_bytes()


def test_flags_override_config(campaign_dir, tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("k = 5\nl = 2\n")
    assert dispatch(["expand", *run_args(campaign_dir, tmp_path, "--config", str(cfg), "--k", "4")]) == 0
    echo = capsys.readouterr().out.splitlines()
    assert "k = 4" in echo and "l = 2" in echo


def test_inputs_not_mutated(campaign_dir, tmp_path):
    before = {p.name: p.read_bytes() for p in campaign_dir.iterdir() if p.is_file()}
    dispatch(["pipeline", *run_args(campaign_dir, tmp_path)])
    assert {p.name: p.read_bytes() for p in campaign_dir.iterdir() if p.is_file()} == before


def test_metrics_and_validate(campaign_dir, tmp_path):
    assert dispatch(["expand", *run_args(campaign_dir, tmp_path, "--m", "2")]) == 0
    base = ["--graph", str(campaign_dir / "graph.tsv"), "--clusters", str(tmp_path / "clusters.jsonl"),
            "--out-dir", str(tmp_path)]
    assert dispatch(["metrics", *base]) == 0
    met = [json.loads(l) for l in (tmp_path / "metrics.jsonl").read_text().splitlines()]
    assert len(met) == 3 and all(0 <= r["flake_odf"] <= 1 for r in met)
    assert dispatch(["validate", *base, "--bipartite", str(campaign_dir / "events.jsonl"), "--m", "2"]) == 0
    val = [json.loads(l) for l in (tmp_path / "validation.jsonl").read_text().splitlines()]
    assert all(r["verdict"] for r in val)


def test_synth_planted(tmp_path):
    assert dispatch(["synth", "planted", "--out-dir", str(tmp_path), "--rng-seed", "1"]) == 0
    assert (tmp_path / "graph.tsv").stat().st_size > 0
    assert len((tmp_path / "truth.tsv").read_text().splitlines()) == 500
    assert json.loads((tmp_path / "spec.json").read_text())["rng"] == "numpy.random.PCG64"


@pytest.mark.parametrize(
    "argv",
    [
        ["expand", "--bogus"],
        ["expand", "--out-dir", "x"],
        ["pipeline", "--graph", "/nonexistent.tsv", "--seed", "1", "--out-dir", "x"],
        ["expand", "--k", "-1", "--graph", "g", "--seed", "1", "--out-dir", "x"],
        [],
    ],
)
def test_input_errors_exit_1(argv, capsys):
    assert dispatch(argv) == 1
    assert "error" in capsys.readouterr().err


def test_missing_flag_prints_usage(capsys):
    assert dispatch(["expand", "--nope"]) == 1
    assert "usage:" in capsys.readouterr().err


def test_log_level_env(campaign_dir, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("LEAS_LOG_LEVEL", "info")
    assert dispatch(["expand", *run_args(campaign_dir, tmp_path)]) == 0
    assert "INFO" in capsys.readouterr().err
