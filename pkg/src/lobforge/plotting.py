"""Figure rendering for impact and stats reports.

Headless by construction: the Agg backend is forced before pyplot loads,
so report generation works on machines with no display.  Every function
writes PNG files next to the delimited output and returns their paths.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  backend must be set first

from lobforge.stylized import NS_PER_MIN, StatsReport, minute_mids

BAND_KW = {"alpha": 0.2, "linewidth": 0}


def plot_impact(report, out_dir: str | Path) -> Path:
    """Mean impact curve in basis points with the p5-p95 run envelope."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    w0 = report.meta["window_start_ns"]
    w1 = report.meta["window_end_ns"]
    xs = [(ts - w0) / NS_PER_MIN for ts in report.bucket_ts_ns]
    to_bp = lambda vals: [v * 1e4 for v in vals]

    fig, ax = plt.subplots(figsize=(8.0, 4.5))
    ax.axvspan(0.0, (w1 - w0) / NS_PER_MIN, color="tab:orange", alpha=0.08)
    ax.fill_between(xs, to_bp(report.p5), to_bp(report.p95),
                    color="tab:blue", **BAND_KW, label="p5-p95")
    ax.plot(xs, to_bp(report.mean), color="tab:blue", label="mean")
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("minutes since window start")
    ax.set_ylabel("mid impact (bp)")
    lam = report.meta.get("participation")
    direction = report.meta.get("direction", "")
    ax.set_title(f"{direction} burst, participation {lam}, {report.runs} runs")
    ax.legend(loc="upper left", frameon=False)
    fig.tight_layout()
    path = out / "impact.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_stats(report: StatsReport, out_dir: str | Path) -> list[Path]:
    """Return series, ACF, fill-time and book-profile figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [
        _returns_figure(report, out / "returns.png"),
        _acf_figure(report, out / "acf.png"),
        _profiles_figure(report, out / "profiles.png"),
    ]
    if report.fills.seconds:
        written.append(_fills_figure(report, out / "first_fill.png"))
    return written


def _returns_figure(report: StatsReport, path: Path) -> Path:
    mids = minute_mids(report.profile.mid_points, report.bucket_minutes)
    xs = [b for b, _ in mids]
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(8.0, 6.0), sharex=True)
    top.plot(xs, [m for _, m in mids], color="tab:blue")
    top.set_ylabel("mid (ticks)")
    bottom.bar(xs[1:], [r * 1e4 for r in report.returns],
               width=report.bucket_minutes, color="tab:gray")
    bottom.set_ylabel("log return (bp)")
    bottom.set_xlabel(f"bucket ({report.bucket_minutes} min)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _acf_figure(report: StatsReport, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(8.0, 4.0))
    if report.returns_acf is not None:
        lags = range(1, len(report.returns_acf))
        ax.bar([l - 0.2 for l in lags], report.returns_acf[1:], width=0.4,
               color="tab:blue", label="returns")
        if report.squared_acf is not None:
            ax.bar([l + 0.2 for l in lags], report.squared_acf[1:], width=0.4,
                   color="tab:orange", label="squared returns")
        band = 3.0 / math.sqrt(len(report.returns))
        ax.axhspan(-band, band, color="tab:gray", alpha=0.15,
                   label="3/sqrt(n)")
        ax.legend(loc="upper right", frameon=False)
    else:
        ax.text(0.5, 0.5, "series too short for ACF", ha="center",
                transform=ax.transAxes)
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("lag")
    ax.set_ylabel("autocorrelation")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _fills_figure(report: StatsReport, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(8.0, 4.0))
    ax.hist(report.fills.seconds, bins=40, color="tab:blue")
    ax.set_xlabel("seconds to first fill")
    ax.set_ylabel("orders")
    ax.set_title(f"{len(report.fills.seconds)} filled, "
                 f"{report.fills.unfilled} never filled")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _profiles_figure(report: StatsReport, path: Path) -> Path:
    prof = report.profile
    fig, axes = plt.subplots(2, 2, figsize=(10.0, 7.0))
    vol, spread, l1, depth = axes.flat

    vol.plot([m for m, _ in prof.add_volume_per_minute],
             [v for _, v in prof.add_volume_per_minute], color="tab:blue")
    vol.set_title("add volume per minute")

    xs = [s.bucket for s in prof.spread_profile]
    spread.fill_between(xs, [s.p5 for s in prof.spread_profile],
                        [s.p95 for s in prof.spread_profile],
                        color="tab:blue", **BAND_KW)
    spread.plot(xs, [s.mean for s in prof.spread_profile], color="tab:blue")
    spread.set_title("spread (ticks)")

    for side, color in (("bid", "tab:green"), ("ask", "tab:red")):
        stats = prof.l1_profile[side]
        l1.plot([s.bucket for s in stats], [s.mean for s in stats],
                color=color, label=side)
    l1.set_title("top-of-book volume")
    l1.legend(frameon=False)

    for side, color, shift in (("bid", "tab:green", -0.2), ("ask", "tab:red", 0.2)):
        hist = prof.depth_hist[side]
        depth.bar([d + shift for d in hist], list(hist.values()),
                  width=0.4, color=color, label=side)
    depth.set_title("limit order depth")
    depth.set_xlabel("ticks from same-side best")
    depth.legend(frameon=False)

    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
