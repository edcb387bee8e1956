"""Shared fixtures: a simulator workspace built through its CLI only.

Everything the suite needs from the simulator (training flow, fitted
model, vector datasets, step server, driven sessions) is produced by
invoking `lobforge` as a subprocess, never by importing it.
"""

import shutil
import subprocess

import pytest

from cgan_agent.gan import GanConfig
from cgan_agent.train import train

LOBFORGE = shutil.which("lobforge")


def run_lobforge(*args: str) -> subprocess.CompletedProcess:
    assert LOBFORGE, "lobforge CLI must be installed for this suite"
    proc = subprocess.run(
        [LOBFORGE, *args], capture_output=True, text=True, timeout=300
    )
    assert proc.returncode == 0, proc.stderr
    return proc


@pytest.fixture(scope="session")
def workspace(tmp_path_factory):
    ws = tmp_path_factory.mktemp("sim")
    flow = ws / "train.flow"
    model = ws / "model.json"
    dataset = ws / "train.csv"
    holdout = ws / "holdout.csv"
    run_lobforge("synth-seed", "--seed", "11", "--n", "20000", "--out", str(flow))
    run_lobforge("fit", "--data", str(flow), "--out", str(model))
    run_lobforge(
        "export-dataset", "--data", str(flow), "--T", "5",
        "--out", str(dataset), "--form", "codec", "--model", str(model),
    )
    heldout_flow = ws / "holdout.flow"
    run_lobforge("synth-seed", "--seed", "12", "--n", "4000", "--out", str(heldout_flow))
    run_lobforge(
        "export-dataset", "--data", str(heldout_flow), "--T", "5",
        "--out", str(holdout), "--form", "codec", "--model", str(model),
    )
    return {"flow": flow, "model": model, "dataset": dataset, "holdout": holdout}


@pytest.fixture(scope="session")
def sim_command(workspace):
    return (
        f"{LOBFORGE} step-server --model {workspace['model']} "
        f"--data {workspace['flow']} --warmup-until 09:40 --until 16:00"
    )


@pytest.fixture(scope="session")
def checkpoint(workspace, sim_command, tmp_path_factory):
    """Toy-scale but genuinely trained; several tests share the cost."""
    out = tmp_path_factory.mktemp("ckpt")
    config = GanConfig(epochs=100, seed=1)
    history = train(
        workspace["dataset"], workspace["model"], out, config,
        sim_command=sim_command,
    )
    return out, history
