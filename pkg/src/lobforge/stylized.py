"""Realism metrics computed from event logs.

Every metric here reads one flow log and reduces it to the numbers the
report cares about: minutely log returns and their autocorrelation,
time from limit-order placement to first fill, per-minute add volume,
the depth distribution of incoming limit orders, spread and top-of-book
volume profiles, and the mix of action types.  The arithmetic stays in
plain sequential Python on purpose: each value must be reproducible by
hand or by an independent reference implementation, with no tolerance
for reduction-order drift.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from lobforge.distributions import nearest_rank
from lobforge.flowio import FlowRecord
from lobforge.orderbook import Book, Side
from lobforge.replay import Replayer

NS_PER_MIN = 60_000_000_000

ACTION_KINDS = ("A", "M", "C", "R")


# ----------------------------------------------------------------------
# return series


def minute_mids(points: Iterable[tuple[int, float]], bucket_minutes: int = 1):
    """Last mid per bucket, carrying forward over buckets with no events.

    Returns a list of (bucket_index, mid).  Buckets are absolute, i.e.
    ts_ns // bucket width, so series from different logs line up.
    """
    width = bucket_minutes * NS_PER_MIN
    last_by_bucket: dict[int, float] = {}
    for ts, mid in points:
        if mid <= 0:
            raise ValueError(f"non-positive mid {mid} at ts {ts}")
        last_by_bucket[ts // width] = mid
    if not last_by_bucket:
        return []
    lo, hi = min(last_by_bucket), max(last_by_bucket)
    out = []
    current = None
    for b in range(lo, hi + 1):
        current = last_by_bucket.get(b, current)
        out.append((b, current))
    return out


def log_returns(points: Iterable[tuple[int, float]], bucket_minutes: int = 1):
    """ln(m_k / m_{k-1}) over per-bucket closing mids."""
    mids = minute_mids(points, bucket_minutes)
    if len(mids) < 2:
        raise ValueError("need at least two buckets for returns")
    return [math.log(b / a) for (_, a), (_, b) in zip(mids, mids[1:])]


def acf(series: Sequence[float], max_lag: int) -> list[float]:
    """Sample autocorrelation with the biased 1/n normalization."""
    n = len(series)
    if n <= max_lag:
        raise ValueError(f"series of {n} values cannot support lag {max_lag}")
    mean = sum(series) / n
    centered = [x - mean for x in series]
    denom = sum(c * c for c in centered)
    if denom == 0.0:
        raise ValueError("degenerate series")
    out = [1.0]
    for lag in range(1, max_lag + 1):
        cov = sum(centered[t] * centered[t - lag] for t in range(lag, n))
        out.append(cov / denom)
    return out


# ----------------------------------------------------------------------
# time to first fill


@dataclass
class FillStats:
    seconds: list[float]
    unfilled: int
    no_fills: bool

    @property
    def mean(self) -> float | None:
        return sum(self.seconds) / len(self.seconds) if self.seconds else None

    def percentile(self, p: float) -> float | None:
        return float(nearest_rank(self.seconds, p)) if self.seconds else None


def first_fill_seconds(records: Iterable[FlowRecord]) -> FillStats:
    """Per placed limit order, seconds from placement to first execution.

    A log groups each action row with the execution rows it caused, so a
    placement immediately followed by executions was marketable on
    arrival and fills at time zero.  Orders the log never executes
    (cancelled or still resting at the end) are excluded from the
    distribution and only counted.
    """
    placed_at: dict[int, int] = {}
    filled: set[int] = set()
    seconds: list[float] = []
    last_action: FlowRecord | None = None

    def _fill(order_id: int | None, ts: int) -> None:
        if order_id in placed_at and order_id not in filled:
            filled.add(order_id)
            seconds.append((ts - placed_at[order_id]) / 1e9)

    for rec in records:
        if rec.msg == "E":
            _fill(rec.ref_order_id, rec.ts_ns)
            if last_action is not None and last_action.msg in ("A", "R"):
                _fill(last_action.order_id, rec.ts_ns)
            continue
        last_action = rec
        if rec.msg in ("A", "R") and rec.order_id is not None:
            placed_at[rec.order_id] = rec.ts_ns
    unfilled = len(placed_at) - len(filled)
    return FillStats(seconds=seconds, unfilled=unfilled, no_fills=not seconds)


# ----------------------------------------------------------------------
# book-state profiles


@dataclass
class BucketStat:
    bucket: int
    mean: float
    p5: float
    p95: float


def _bucket_stats(samples: dict[int, list[float]]) -> list[BucketStat]:
    out = []
    for b in sorted(samples):
        vals = samples[b]
        out.append(
            BucketStat(
                bucket=b,
                mean=sum(vals) / len(vals),
                p5=float(nearest_rank(vals, 5.0)),
                p95=float(nearest_rank(vals, 95.0)),
            )
        )
    return out


@dataclass
class ProfileMetrics:
    mid_points: list[tuple[int, float]]
    add_volume_per_minute: list[tuple[int, int]]
    add_volume_mean: float
    add_volume_p5: float
    add_volume_p95: float
    depth_hist: dict[str, dict[int, float]]
    spread_profile: list[BucketStat]
    l1_profile: dict[str, list[BucketStat]]
    type_proportions: dict[str, float]
    type_counts: dict[str, int]


def profile_metrics(records: Iterable[FlowRecord]) -> ProfileMetrics:
    """One replay pass collecting every book-state metric.

    Depth is measured against the same-side best quote the instant
    before the add applies; adds with no reference quote are skipped.
    Spread and top-of-book volumes are sampled after every action row.
    """
    book = Book()
    replayer = Replayer(book)
    mid_points: list[tuple[int, float]] = []
    add_volume: dict[int, int] = {}
    depth_counts = {"bid": {}, "ask": {}}
    spread_samples: dict[int, list[float]] = {}
    l1_samples = {"bid": {}, "ask": {}}
    type_counts = dict.fromkeys(ACTION_KINDS, 0)
    first_min = last_min = None

    for rec in records:
        if rec.msg == "E":
            replayer.step(rec)
            continue
        minute = rec.ts_ns // NS_PER_MIN
        first_min = minute if first_min is None else first_min
        last_min = minute
        type_counts[rec.msg] += 1
        if rec.msg == "A":
            add_volume[minute] = add_volume.get(minute, 0) + rec.qty
            side = Side.BID if rec.side is Side.BID or rec.side == "B" else Side.ASK
            best = book.best_price(side)
            if best is not None:
                depth = best - rec.price_ticks if side is Side.BID else rec.price_ticks - best
                key = "bid" if side is Side.BID else "ask"
                depth_counts[key][depth] = depth_counts[key].get(depth, 0) + 1
        replayer.step(rec)
        bb, ba = book.best_price(Side.BID), book.best_price(Side.ASK)
        if bb is not None and ba is not None:
            mid_points.append((rec.ts_ns, (bb + ba) / 2))
            spread_samples.setdefault(minute, []).append(float(ba - bb))
            l1_samples["bid"].setdefault(minute, []).append(
                float(book.level_volume(Side.BID, bb))
            )
            l1_samples["ask"].setdefault(minute, []).append(
                float(book.level_volume(Side.ASK, ba))
            )

    if first_min is None:
        raise ValueError("log contains no action rows")
    volumes = [
        (m, add_volume.get(m, 0)) for m in range(first_min, last_min + 1)
    ]
    vol_values = [float(v) for _, v in volumes]
    depth_hist = {}
    for key, counts in depth_counts.items():
        total = sum(counts.values())
        depth_hist[key] = {
            d: counts[d] / total for d in sorted(counts)
        } if total else {}
    n_actions = sum(type_counts.values())
    return ProfileMetrics(
        mid_points=mid_points,
        add_volume_per_minute=volumes,
        add_volume_mean=sum(vol_values) / len(vol_values),
        add_volume_p5=float(nearest_rank(vol_values, 5.0)),
        add_volume_p95=float(nearest_rank(vol_values, 95.0)),
        depth_hist=depth_hist,
        spread_profile=_bucket_stats(spread_samples),
        l1_profile={k: _bucket_stats(v) for k, v in l1_samples.items()},
        type_proportions={k: v / n_actions for k, v in type_counts.items()},
        type_counts=type_counts,
    )


# ----------------------------------------------------------------------
# report


@dataclass
class StatsReport:
    returns: list[float]
    return_hist: tuple[list[float], list[float]]  # (densities, bin edges)
    returns_acf: list[float] | None
    squared_acf: list[float] | None
    fills: FillStats
    profile: ProfileMetrics
    bucket_minutes: int
    max_lag: int
    meta: dict = field(default_factory=dict)

    def write(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []

        def _csv(name: str, header: str, rows) -> None:
            path = out / name
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(header + "\n")
                for row in rows:
                    fh.write(",".join(_cell(x) for x in row) + "\n")
            written.append(path)

        mids = minute_mids(self.profile.mid_points, self.bucket_minutes)
        _csv(
            "returns.csv",
            "bucket,mid,log_return",
            (
                (b, m, r)
                for (b, m), r in zip(mids[1:], self.returns)
            ),
        )
        if self.returns_acf is not None:
            sq = self.squared_acf or [""] * len(self.returns_acf)
            _csv(
                "acf.csv",
                "lag,returns_acf,squared_returns_acf",
                zip(range(len(self.returns_acf)), self.returns_acf, sq),
            )
        _csv("first_fill_seconds.csv", "seconds", ((s,) for s in self.fills.seconds))
        _csv("add_volume.csv", "minute,volume", self.profile.add_volume_per_minute)
        _csv(
            "depth_hist.csv",
            "side,depth,fraction",
            (
                (side, d, f)
                for side in ("bid", "ask")
                for d, f in self.profile.depth_hist[side].items()
            ),
        )
        _csv(
            "spread.csv",
            "minute,mean,p5,p95",
            ((s.bucket, s.mean, s.p5, s.p95) for s in self.profile.spread_profile),
        )
        _csv(
            "l1_volume.csv",
            "minute,side,mean,p5,p95",
            (
                (s.bucket, side, s.mean, s.p5, s.p95)
                for side in ("bid", "ask")
                for s in self.profile.l1_profile[side]
            ),
        )
        _csv(
            "proportions.csv",
            "type,fraction",
            self.profile.type_proportions.items(),
        )

        doc = {
            "bucket_minutes": self.bucket_minutes,
            "max_lag": self.max_lag,
            "n_returns": len(self.returns),
            "return_hist": {
                "density": self.return_hist[0],
                "bin_edges": self.return_hist[1],
            },
            "first_fill": {
                "count": len(self.fills.seconds),
                "unfilled": self.fills.unfilled,
                "no_fills": self.fills.no_fills,
                "mean_s": self.fills.mean,
                "median_s": self.fills.percentile(50.0),
                "p75_s": self.fills.percentile(75.0),
            },
            "add_volume": {
                "mean": self.profile.add_volume_mean,
                "p5": self.profile.add_volume_p5,
                "p95": self.profile.add_volume_p95,
            },
            "type_proportions": self.profile.type_proportions,
            "type_counts": self.profile.type_counts,
            **self.meta,
        }
        json_path = out / "stats.json"
        json_path.write_text(json.dumps(doc, indent=2) + "\n")
        written.append(json_path)
        return written


def _cell(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def build_report(
    records: Sequence[FlowRecord],
    bucket_minutes: int = 1,
    max_lag: int = 20,
    meta: dict | None = None,
) -> StatsReport:
    """All metrics over one log; ACF lags clamp to what the series allows."""
    profile = profile_metrics(records)
    fills = first_fill_seconds(records)
    returns = log_returns(profile.mid_points, bucket_minutes)
    lag = min(max_lag, len(returns) - 1)
    returns_acf = squared_acf = None
    if lag >= 1:
        try:
            returns_acf = acf(returns, lag)
        except ValueError:
            pass
        try:
            squared_acf = acf([r * r for r in returns], lag)
        except ValueError:
            pass
    density, edges = np.histogram(returns, bins="auto", density=True)
    return StatsReport(
        returns=returns,
        return_hist=(density.tolist(), edges.tolist()),
        returns_acf=returns_acf,
        squared_acf=squared_acf,
        fills=fills,
        profile=profile,
        bucket_minutes=bucket_minutes,
        max_lag=lag,
        meta=meta or {},
    )
