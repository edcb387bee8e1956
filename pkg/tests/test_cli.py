"""CLI surface: exit codes, error lines, and the full pipeline."""

import json
import subprocess
import sys

import pytest

from lobforge.cli import main
from lobforge.flowio import FlowReader
from lobforge.remote import LineChannel


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def seed_flow(workdir):
    path = workdir / "seed.flow"
    rc = main([
        "synth-seed", "--profile", "default", "--out", str(path),
        "--seed", "3", "--n", "4000",
    ])
    assert rc == 0
    return path


@pytest.fixture(scope="module")
def model(workdir, seed_flow):
    path = workdir / "model.json"
    rc = main(["fit", "--data", str(seed_flow), "--out", str(path)])
    assert rc == 0
    return path


# ----------------------------------------------------------------------
# exit codes and error lines


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "usage:" in capsys.readouterr().out


def test_subcommand_help_exits_zero(capsys):
    assert main(["impact", "--help"]) == 0
    assert "--lambda" in capsys.readouterr().out


def test_missing_required_flag_exits_one(capsys):
    assert main(["fit", "--out", "/tmp/never.json"]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert "--data" in err


def test_unknown_flag_exits_one(capsys):
    rc = main(["replay", "--data", "x.flow", "--frobnicate"])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_unknown_subcommand_exits_one(capsys):
    assert main(["transmogrify"]) == 1


def test_runtime_failure_exits_two(capsys, workdir):
    rc = main(["stats", "--log", str(workdir / "missing.flow"),
               "--out", str(workdir / "nowhere")])
    assert rc == 2
    err = capsys.readouterr().err
    assert err.startswith("error:")


def test_bad_time_flag_exits_one(capsys):
    rc = main(["replay", "--data", "x.flow", "--until", "quarter past"])
    assert rc == 1


# ----------------------------------------------------------------------
# pipeline


def test_synth_seed_writes_flow_and_params(workdir, seed_flow, capsys):
    assert seed_flow.exists()
    params = workdir / "seed.flow.params.json"
    assert params.exists()
    doc = json.loads(params.read_text())
    assert "type_probs" in doc


def test_fit_writes_model(model):
    doc = json.loads(model.read_text())
    assert "type_probs" in doc and "bounds" in doc


def test_replay_reports_counts(seed_flow, capsys):
    assert main(["replay", "--data", str(seed_flow)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("config:")
    assert "exec_mismatches: 0" in out


def test_simulate_writes_log(workdir, seed_flow, model, capsys):
    out_log = workdir / "sim.flow"
    rc = main([
        "simulate", "--model", str(model), "--data", str(seed_flow),
        "--seed", "5", "--out", str(out_log), "--max-actions", "300",
    ])
    assert rc == 0
    stdout = capsys.readouterr().out
    assert '"seed": 5' in stdout.splitlines()[0]
    rows = list(FlowReader(out_log))
    assert len(rows) > 300


def test_simulate_is_reproducible(workdir, seed_flow, model):
    logs = []
    for attempt in ("a", "b"):
        out_log = workdir / f"repro_{attempt}.flow"
        rc = main([
            "simulate", "--model", str(model), "--data", str(seed_flow),
            "--seed", "21", "--out", str(out_log), "--max-actions", "150",
        ])
        assert rc == 0
        logs.append(out_log.read_bytes())
    assert logs[0] == logs[1]


def test_stats_report_with_figures(workdir, seed_flow, capsys):
    out_dir = workdir / "stats"
    rc = main(["stats", "--log", str(seed_flow), "--out", str(out_dir),
               "--plot"])
    assert rc == 0
    names = {f.name for f in out_dir.iterdir()}
    assert {"stats.json", "returns.csv", "acf.csv", "proportions.csv"} <= names
    assert {"returns.png", "acf.png", "profiles.png"} <= names


def test_impact_report_files(workdir, seed_flow, model, capsys):
    out_dir = workdir / "impact"
    rc = main([
        "impact", "--model", str(model), "--data", str(seed_flow),
        "--lambda", "0.3", "--direction", "buy", "--runs", "2",
        "--out", str(out_dir), "--window", "09:31-09:34",
        "--warmup-until", "09:31", "--until", "09:36",
        "--slice-s", "30", "--bucket-s", "30", "--base-seed", "1",
    ])
    assert rc == 0
    out = capsys.readouterr().out
    assert "reference_volume:" in out
    names = {f.name for f in out_dir.iterdir()}
    assert names >= {"impact.csv", "impact.json", "impact.png"}
    doc = json.loads((out_dir / "impact.json").read_text())
    assert doc["runs"] == 2


def test_export_dataset_both_forms(workdir, seed_flow, model):
    raw = workdir / "pairs.csv"
    codec = workdir / "vectors.csv"
    assert main(["export-dataset", "--data", str(seed_flow),
                 "--out", str(raw)]) == 0
    assert main(["export-dataset", "--data", str(seed_flow),
                 "--out", str(codec), "--form", "codec",
                 "--model", str(model)]) == 0
    assert raw.read_text().startswith("#v1")
    assert codec.read_text().startswith("#v1")


def test_export_codec_without_model_exits_one(workdir, seed_flow, capsys):
    rc = main(["export-dataset", "--data", str(seed_flow),
               "--out", str(workdir / "x.csv"), "--form", "codec"])
    assert rc == 1
    assert "bounds" in capsys.readouterr().err


# ----------------------------------------------------------------------
# step server subprocess over stdio


def test_step_server_round_trip(workdir, seed_flow, model):
    proc = subprocess.Popen(
        [sys.executable, "-m", "lobforge.cli", "step-server",
         "--model", str(model), "--data", str(seed_flow)],
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        bufsize=0,
    )
    try:
        channel = LineChannel.over_pipes(proc.stdout, proc.stdin)
        hello = channel.recv(10.0)
        assert hello["type"] == "hello" and hello["T"] == 5
        channel.send({"type": "ack"})
        channel.send({"type": "reset", "seed": 4})
        state = channel.recv(10.0)
        assert state["type"] == "state" and len(state["window"]) == 5
        channel.send({"type": "step",
                      "vector": [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0],
                      "dt_ns": 1_000_000})
        stepped = channel.recv(10.0)
        assert stepped["applied"] and stepped["ts"] == state["ts"] + 1_000_000
        channel.send({"type": "close"})
        assert proc.wait(10.0) == 0
    finally:
        proc.terminate()
        proc.wait(5.0)
