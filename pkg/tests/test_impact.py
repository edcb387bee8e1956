"""Percent-of-volume burst agent and paired impact measurement."""

import json
from dataclasses import dataclass

import pytest

from lobforge.actions import ActionKind
from lobforge.explicit import ExplicitAgent
from lobforge.flowio import FlowRecord
from lobforge.impact import (
    NS_PER_MIN,
    ImpactReport,
    PovAgent,
    PovSpec,
    peak_mean_impact,
    reference_volume,
    run_impact,
    window_mean_impact,
)
from lobforge.kernel import SimConfig, clock_ns
from lobforge.orderbook import Side
from lobforge.synth import ground_truth_params, synthesize


@dataclass
class _Fill:
    quantity: int


def _spec(lam=0.5, direction=Side.BID, ref=6_000):
    return PovSpec(
        lam,
        direction,
        ref,
        window_start=clock_ns(9, 45),
        window_end=clock_ns(9, 50),
    )


@pytest.fixture(scope="module")
def flow_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("impact") / "warmup.flow"
    synthesize(7, 4_000, path)
    return path


@pytest.fixture(scope="module")
def config(flow_path):
    return SimConfig(
        seed=600,
        data_path=flow_path,
        warmup_until=clock_ns(9, 40),
        session_end=clock_ns(9, 52),
    )


@pytest.fixture(scope="module")
def world_factory():
    params = ground_truth_params()
    return lambda book: ExplicitAgent(params, book)


def test_spec_rejects_bad_inputs():
    with pytest.raises(ValueError):
        PovSpec(-0.1, Side.BID, 1000)
    with pytest.raises(ValueError):
        PovSpec(1.5, Side.BID, 1000)
    with pytest.raises(ValueError):
        PovSpec(0.1, Side.BID, -1)
    with pytest.raises(ValueError):
        PovSpec(0.1, Side.BID, 1000, window_start=10, window_end=10)
    with pytest.raises(ValueError):
        PovSpec(0.1, Side.BID, 1000, slice_interval_ns=0)


def test_target_is_rounded_share_of_reference():
    assert PovSpec(0.1, Side.BID, 10_000).target == 1_000
    assert PovSpec(0.0, Side.BID, 10_000).target == 0
    assert PovSpec(1.0, Side.ASK, 123).target == 123


def test_schedule_is_uniform_over_window():
    spec = PovSpec(
        0.1,
        Side.BID,
        30_000,
        window_start=clock_ns(10, 30),
        window_end=clock_ns(11, 0),
    )
    agent = PovAgent(spec)
    times = []
    while agent.next_wakeup() is not None:
        ts = agent.next_wakeup()
        times.append(ts)
        action = agent.wakeup(ts, None)
        assert action.kind is ActionKind.MARKET
        assert action.side is Side.BID
        agent.on_fills([_Fill(action.quantity)])
    assert len(times) == 30
    assert times[0] == spec.window_start
    assert times[-1] < spec.window_end
    assert all(b - a == NS_PER_MIN for a, b in zip(times, times[1:]))
    assert agent.filled == spec.target


def test_orders_stop_once_target_filled():
    agent = PovAgent(_spec(lam=0.5))
    ts = agent.next_wakeup()
    first = agent.wakeup(ts, None)
    # One oversized fill satisfies the whole target in the first slice.
    agent.on_fills([_Fill(agent.spec.target)])
    idle = [agent.wakeup(agent.next_wakeup(), None) for _ in range(4)]
    assert first is not None
    assert all(a is None for a in idle)
    assert agent.submitted == first.quantity


def test_unfilled_quantity_rolls_into_later_slices():
    agent = PovAgent(_spec(lam=0.5))
    sizes = []
    while agent.next_wakeup() is not None:
        sizes.append(agent.wakeup(agent.next_wakeup(), None).quantity)
    # No fills ever arrive, so each slice re-spreads the full remainder.
    assert sizes == sorted(sizes)
    assert sizes[-1] == agent.spec.target


def test_reference_volume_sums_executions_inside_window():
    rows = [
        FlowRecord(100, "E", ref_order_id=1, qty=30),
        FlowRecord(150, "A", order_id=9, side="B", price_ticks=10, qty=999),
        FlowRecord(200, "E", ref_order_id=2, qty=12),
        FlowRecord(300, "E", ref_order_id=3, qty=7),
    ]
    assert reference_volume(rows, 100, 300) == 42
    assert reference_volume(rows, 101, 300) == 12
    assert reference_volume(rows, 0, 50) == 0


def test_zero_participation_leaves_every_bucket_at_zero(config, world_factory):
    report = run_impact(config, world_factory, _spec(lam=0.0), runs=2)
    assert report.runs == 2
    for stat in (report.mean, report.std, report.p5, report.p95):
        assert all(x == 0.0 for x in stat)


@pytest.fixture(scope="module")
def buy_report(config, world_factory):
    return run_impact(config, world_factory, _spec(direction=Side.BID), runs=10)


@pytest.fixture(scope="module")
def sell_report(config, world_factory):
    return run_impact(config, world_factory, _spec(direction=Side.ASK), runs=10)


def _early_window_mean(report):
    # The burst lifts the mid mechanically while it runs; afterwards the
    # world unwinds the imbalance it left behind, sometimes past zero.
    # The sign check therefore reads the first half of the window.
    lo = report.meta["window_start_ns"]
    hi = (lo + report.meta["window_end_ns"]) // 2
    vals = [m for ts, m in zip(report.bucket_ts_ns, report.mean) if lo < ts <= hi]
    return sum(vals) / len(vals)


def test_buy_burst_lifts_the_mid(buy_report):
    assert _early_window_mean(buy_report) > 0
    assert peak_mean_impact(buy_report) > 0
    assert buy_report.meta["direction"] == "BUY"


def test_sell_burst_depresses_the_mid(sell_report):
    assert _early_window_mean(sell_report) < 0
    assert peak_mean_impact(sell_report) < 0
    assert sell_report.meta["direction"] == "SELL"


def test_percentiles_bracket_the_mean(buy_report):
    # Nearest-rank p5/p95 at ten runs are the min and max, so the
    # bracket must hold bucket by bucket.
    for m, lo, hi in zip(buy_report.mean, buy_report.p5, buy_report.p95):
        assert lo <= m <= hi


def test_runs_record_their_fills(buy_report):
    per_run = buy_report.meta["per_run"]
    assert len(per_run) == 10
    assert [r["seed"] for r in per_run] == list(range(600, 610))
    for r in per_run:
        assert r["filled"] == r["target"] == buy_report.meta["lambda"] * 6_000


def test_report_write_emits_csv_and_json(tmp_path, buy_report):
    csv_path, json_path = buy_report.write(tmp_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "bucket_ts_ns,mean,std,p5,p95"
    assert len(lines) == len(buy_report.bucket_ts_ns) + 1
    doc = json.loads(json_path.read_text())
    assert doc["runs"] == 10
    assert doc["lambda"] == 0.5
    assert doc["window_start_ns"] == clock_ns(9, 45)


def test_report_requires_at_least_one_run(config, world_factory):
    with pytest.raises(ValueError):
        run_impact(config, world_factory, _spec(), runs=0)


def test_window_mean_requires_buckets(config):
    report = ImpactReport(
        bucket_ts_ns=[0],
        mean=[0.0],
        std=[0.0],
        p5=[0.0],
        p95=[0.0],
        runs=1,
        meta={"window_start_ns": 10, "window_end_ns": 20},
    )
    with pytest.raises(ValueError):
        window_mean_impact(report)
