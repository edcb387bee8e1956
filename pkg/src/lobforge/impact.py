"""Percent-of-volume burst experiments and the paired impact statistic.

Each run simulates the same seed twice, once with the burst agent and
once without, so the world streams coincide until the first burst order
and every later divergence is attributable to it.  Impact at a time
bucket is the mid-price difference between the two runs normalized by
the mid at warm-up handover.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from lobforge.actions import Action, ActionKind
from lobforge.distributions import nearest_rank
from lobforge.kernel import Kernel, RunResult, SimConfig, clock_ns
from lobforge.orderbook import Book, Side

NS_PER_MIN = 60_000_000_000


@dataclass(frozen=True)
class PovSpec:
    """Burst sizing: trade lam x reference_volume inside the window."""

    lam: float
    direction: Side
    reference_volume: int
    window_start: int = clock_ns(10, 30)
    window_end: int = clock_ns(11, 0)
    slice_interval_ns: int = NS_PER_MIN

    def __post_init__(self) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.window_end <= self.window_start:
            raise ValueError("window must have positive length")
        if self.slice_interval_ns <= 0:
            raise ValueError("slice interval must be positive")
        if self.reference_volume < 0:
            raise ValueError("reference volume must be non-negative")

    @property
    def target(self) -> int:
        return int(round(self.lam * self.reference_volume))


class PovAgent:
    """Experimental agent slicing the target into uniform market orders."""

    def __init__(self, spec: PovSpec):
        self.spec = spec
        self.filled = 0
        self.submitted = 0
        self._times = list(
            range(spec.window_start, spec.window_end, spec.slice_interval_ns)
        )

    def next_wakeup(self) -> int | None:
        return self._times[0] if self._times else None

    def wakeup(self, ts_ns: int, kernel) -> Action | None:
        slices_left = len(self._times)
        self._times.pop(0)
        remaining = self.spec.target - self.filled
        if remaining <= 0:
            return None
        qty = max(1, math.ceil(remaining / slices_left))
        self.submitted += qty
        return Action(ActionKind.MARKET, self.spec.direction, quantity=qty)

    def on_fills(self, trades) -> None:
        self.filled += sum(t.quantity for t in trades)


def reference_volume(records, window_start: int, window_end: int) -> int:
    """Total executed volume inside the window of a recorded flow."""
    return sum(
        r.qty
        for r in records
        if r.msg == "E" and window_start <= r.ts_ns < window_end
    )


def mid_series(result: RunResult, edges: list[int]) -> list[float]:
    """Mid sampled at bucket edges: the last event mid at or before each edge."""
    mids: list[float] = []
    last = result.handover_mid or 0.0
    events = iter(result.events)
    pending = next(events, None)
    for edge in edges:
        while pending is not None and pending.ts_ns <= edge:
            if pending.mid > 0:
                last = pending.mid
            pending = next(events, None)
        mids.append(last)
    return mids


@dataclass
class ImpactReport:
    bucket_ts_ns: list[int]
    mean: list[float]
    std: list[float]
    p5: list[float]
    p95: list[float]
    runs: int
    meta: dict = field(default_factory=dict)

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "impact.csv"
        with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("bucket_ts_ns,mean,std,p5,p95\n")
            for row in zip(self.bucket_ts_ns, self.mean, self.std, self.p5, self.p95):
                fh.write(",".join(repr(x) if isinstance(x, float) else str(x) for x in row) + "\n")
        json_path = out / "impact.json"
        doc = {"runs": self.runs, **self.meta}
        json_path.write_text(json.dumps(doc, indent=2) + "\n")
        return csv_path, json_path


def run_impact(
    config: SimConfig,
    world_agent_factory: Callable[[Book], object],
    spec: PovSpec,
    runs: int = 25,
    bucket_ns: int = NS_PER_MIN,
    warmup_records=None,
) -> ImpactReport:
    """Paired runs over consecutive seeds; per-bucket impact statistics.

    Any run that fails identifies its seed in the raised error.
    """
    if runs < 1:
        raise ValueError("need at least one run")
    per_run: list[list[float]] = []
    meta_runs = []
    buckets = list(range(config.warmup_until, config.session_end + 1, bucket_ns))
    for i in range(runs):
        seed = config.seed + i
        cfg = SimConfig(
            seed=seed,
            data_path=config.data_path,
            session_start=config.session_start,
            warmup_until=config.warmup_until,
            session_end=config.session_end,
            window_length=config.window_length,
            tick_size=config.tick_size,
            max_world_actions=config.max_world_actions,
        )
        try:
            base = Kernel(cfg, world_agent_factory).run(warmup_records)
            agent = PovAgent(spec)
            treated = Kernel(cfg, world_agent_factory, experimental_agent=agent).run(
                warmup_records
            )
        except Exception as exc:
            raise RuntimeError(f"impact run with seed {seed} failed: {exc}") from exc
        denom = base.handover_mid
        if not denom or denom <= 0:
            raise RuntimeError(f"impact run with seed {seed} has no handover mid")
        base_mids = mid_series(base, buckets)
        trt_mids = mid_series(treated, buckets)
        per_run.append(
            [(w - wo) / denom for w, wo in zip(trt_mids, base_mids)]
        )
        meta_runs.append(
            {
                "seed": seed,
                "target": spec.target,
                "filled": agent.filled,
                "submitted": agent.submitted,
                "handover_mid": denom,
            }
        )

    n = len(per_run)
    mean, std, p5, p95 = [], [], [], []
    for j in range(len(buckets)):
        col = [per_run[i][j] for i in range(n)]
        m = sum(col) / n
        mean.append(m)
        std.append(math.sqrt(sum((x - m) ** 2 for x in col) / n))
        ordered = sorted(col)
        p5.append(float(nearest_rank(ordered, 5.0)))
        p95.append(float(nearest_rank(ordered, 95.0)))
    return ImpactReport(
        bucket_ts_ns=buckets,
        mean=mean,
        std=std,
        p5=p5,
        p95=p95,
        runs=n,
        meta={
            "lambda": spec.lam,
            "direction": "BUY" if spec.direction is Side.BID else "SELL",
            "reference_volume": spec.reference_volume,
            "window_start_ns": spec.window_start,
            "window_end_ns": spec.window_end,
            "slice_interval_ns": spec.slice_interval_ns,
            "bucket_ns": bucket_ns,
            "base_seed": config.seed,
            "per_run": meta_runs,
        },
    )


def window_mean_impact(report: ImpactReport) -> float:
    """Mean impact over buckets inside the burst window."""
    lo = report.meta["window_start_ns"]
    hi = report.meta["window_end_ns"]
    vals = [
        m
        for ts, m in zip(report.bucket_ts_ns, report.mean)
        if lo < ts <= hi
    ]
    if not vals:
        raise ValueError("no buckets inside the burst window")
    return sum(vals) / len(vals)


def peak_mean_impact(report: ImpactReport) -> float:
    signed = max if report.meta["direction"] == "BUY" else min
    return signed(report.mean)
