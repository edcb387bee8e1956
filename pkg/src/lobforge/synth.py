"""Synthetic seed flows with known generating parameters.

Running the explicit model closed-loop from a hand-written parameter set
produces a flow file whose true distributions are known exactly, which is
what the fitting round-trip checks need: synthesize, extract, re-fit, and
the recovered parameters must land near the originals.  The profile below
keeps the book dense near the touch so cancels rarely miss their level;
heavy censoring there would bias the recovered cancel law.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from lobforge.actions import ActionKind
from lobforge.codec import ScalerBounds
from lobforge.distributions import CountModel, GammaParams
from lobforge.explicit import (
    CancelModel,
    DepthModel,
    ExplicitAgent,
    ExplicitParams,
    QuantityModel,
    save_model,
)
from lobforge.flowio import FlowRecord
from lobforge.kernel import Kernel, RunResult, SimConfig, clock_ns
from lobforge.orderbook import Side


@dataclass(frozen=True)
class SynthProfile:
    start_price: int = 10_000
    ladder_levels: int = 7
    orders_per_level: int = 12
    bootstrap_qty: int = 120
    session_start: int = clock_ns(9, 30)


def ground_truth_params() -> ExplicitParams:
    """A stable, liquid regime.

    Two failure modes shaped this profile.  A side that empties can never
    be repopulated (adds price off the same-side best), so the side
    logistics lean hard against top-of-book imbalance and adds stop near
    the depth the imbalance window can see.  And every time the best
    price retreats, the depth labels shift and holes open inside the
    cancel laws' reach; cancels sampled into a hole are dropped, which
    censors the deep tail and biases the refitted depth means low.  The
    cure for both is keeping the touch anchored: in-spread adds improve
    by exactly one tick and become likely as the spread widens, so gaps
    close before anything can cross, while at spread one almost nothing
    crosses and the opposite touch survives.  Cancel depth then stays
    well inside the always-populated shelf and the censoring all but
    vanishes.
    """
    return ExplicitParams(
        type_probs=(0.475, 0.10, 0.315, 0.11),
        side_coefs={
            ActionKind.ADD_LIMIT: (-3.0, 6.0),
            ActionKind.MARKET: (-4.0, 8.0),
            ActionKind.CANCEL: (2.0, -4.0),
            ActionKind.REPLACE: (1.0, -2.0),
        },
        depth=DepthModel(
            neg_coefs=(-3.4, 1.1, -0.4),
            neg_alpha=1.0,
            neg_beta=3.0,
            neg_max=1,
            pos_values=(0, 1, 2, 3, 4, 5, 6),
            pos_probs=(0.40, 0.26, 0.14, 0.09, 0.05, 0.035, 0.025),
            tail_lo=7,
            tail_hi=7,
            tail_prob=0.0,
        ),
        quantity=QuantityModel(
            p_hundred=0.40,
            hundreds=CountModel.negbinom(r=0.8, p=0.5),
            other=CountModel.negbinom(r=1.416, p=0.0389),
        ),
        cancels={
            ActionKind.CANCEL: CancelModel(
                depth=CountModel.negbinom(r=2.0, p=0.69),
                queue_alpha=0.8,
                queue_beta=1.2,
                queue_len_hint=4,
            ),
            ActionKind.REPLACE: CancelModel(
                depth=CountModel.negbinom(r=2.2, p=0.70),
                queue_alpha=1.0,
                queue_beta=1.0,
                queue_len_hint=4,
            ),
        },
        interarrival=GammaParams(shape=1.6, scale=0.125e9),
        bounds=ScalerBounds(
            depth=(-3.0, 8.0),
            cancel_depth=(0.0, 10.0),
            qty_x=(1.0, 500.0),
            qty_100x=(1.0, 15.0),
            v1=(0.0, 12000.0),
            v5=(0.0, 48000.0),
            spread=(1.0, 10.0),
        ),
        meta={"source": "synthetic-profile"},
    )


def bootstrap_records(profile: SynthProfile) -> list[FlowRecord]:
    """Ladder of resting orders on both sides, all stamped at session start.

    Identical timestamps give the first world event a clean reference
    point and keep the bootstrap out of the inter-arrival fit, which
    ignores zero gaps.
    """
    rows: list[FlowRecord] = []
    ts, oid = profile.session_start, 0
    for d in range(profile.ladder_levels):
        for side, price in (
            (Side.BID, profile.start_price - 1 - d),
            (Side.ASK, profile.start_price + 1 + d),
        ):
            for _ in range(profile.orders_per_level):
                oid += 1
                rows.append(
                    FlowRecord(ts, "A", oid, side, price, profile.bootstrap_qty)
                )
    return rows


def synthesize(
    seed: int,
    n_actions: int,
    out_path: str | Path,
    params_path: str | Path | None = None,
    params: ExplicitParams | None = None,
    profile: SynthProfile = SynthProfile(),
    window_length: int = 5,
) -> RunResult:
    """Generate a flow file of n_actions world events; optionally save truth."""
    truth = params if params is not None else ground_truth_params()
    config = SimConfig(
        seed=seed,
        session_start=profile.session_start,
        warmup_until=profile.session_start + 1,
        session_end=clock_ns(23, 59),
        window_length=window_length,
        max_world_actions=n_actions,
    )
    kernel = Kernel(config, lambda book: ExplicitAgent(truth, book))
    result = kernel.run(bootstrap_records(profile))
    result.write_log(out_path)
    if params_path is not None:
        save_model(truth, params_path)
    return result
