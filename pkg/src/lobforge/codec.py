"""Universal fixed-width action vectors.

Every order becomes a 7-component vector

    (depth, cancel_depth, qty_x, qty_100x, qty_type, order_type, side)

with order_type in {-1, 0, 1} meaning market / add / cancel, side +1 for
BID and -1 for ASK, and the quantity split per qty_type: +1 selects the
raw qty_x branch, -1 the hundreds branch where quantity = 100 * qty_100x.
Round-lot quantities always travel on the hundreds branch.  A replace is
a cancel vector followed by an add vector.

Ordinal components min-max scale to [-1, 1] under persisted bounds and
clip outside them.  Categorical components harden to the nearest legal
value, ties toward zero then negative.  Queue position is deliberately
not represented: decoding a cancel samples it from the fitted
beta-binomial rescaled by the live queue length.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from lobforge.actions import Action, ActionKind
from lobforge.distributions import sample_beta_binomial
from lobforge.marketstate import MarketState
from lobforge.orderbook import Side

VECTOR_FIELDS = (
    "depth",
    "cancel_depth",
    "qty_x",
    "qty_100x",
    "qty_type",
    "order_type",
    "side",
)

ORDER_TYPE_MARKET = -1.0
ORDER_TYPE_ADD = 0.0
ORDER_TYPE_CANCEL = 1.0


@dataclass(frozen=True)
class ScalerBounds:
    """Min/max per scaled component, fitted once and persisted with a model."""

    depth: tuple[float, float]
    cancel_depth: tuple[float, float]
    qty_x: tuple[float, float]
    qty_100x: tuple[float, float]
    v1: tuple[float, float]
    v5: tuple[float, float]
    spread: tuple[float, float]

    def to_dict(self) -> dict:
        return {f.name: list(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerBounds":
        return cls(**{f.name: tuple(d[f.name]) for f in fields(cls)})


def scale(x: float, lo: float, hi: float) -> float:
    if hi <= lo:
        return 0.0
    v = 2.0 * (x - lo) / (hi - lo) - 1.0
    return min(1.0, max(-1.0, v))


def unscale(v: float, lo: float, hi: float) -> int:
    v = min(1.0, max(-1.0, v))
    if hi <= lo:
        return round(lo)
    return round((v + 1.0) / 2.0 * (hi - lo) + lo)


def harden(v: float, legal: tuple[float, ...]) -> float:
    return min(legal, key=lambda c: (abs(c - v), abs(c), c))


def encode(action: Action, bounds: ScalerBounds) -> list[tuple[float, ...]]:
    """Vector(s) for an action; a replace yields its cancel then its add."""
    if action.kind is ActionKind.REPLACE:
        return encode(
            Action(
                ActionKind.CANCEL,
                action.side,
                cancel_depth=action.cancel_depth,
                queue_position=action.queue_position,
            ),
            bounds,
        ) + encode(
            Action(
                ActionKind.ADD_LIMIT,
                action.side,
                depth=action.depth,
                quantity=action.quantity,
            ),
            bounds,
        )

    side = 1.0 if action.side is Side.BID else -1.0
    if action.kind is ActionKind.CANCEL:
        return [
            (
                0.0,
                scale(action.cancel_depth, *bounds.cancel_depth),
                0.0,
                0.0,
                0.0,
                ORDER_TYPE_CANCEL,
                side,
            )
        ]

    qty = action.quantity
    if qty % 100 == 0:
        qty_type = -1.0
        qty_x, qty_100x = 0.0, scale(qty // 100, *bounds.qty_100x)
    else:
        qty_type = 1.0
        qty_x, qty_100x = scale(qty, *bounds.qty_x), 0.0

    if action.kind is ActionKind.MARKET:
        return [(0.0, 0.0, qty_x, qty_100x, qty_type, ORDER_TYPE_MARKET, side)]
    return [
        (
            scale(action.depth, *bounds.depth),
            0.0,
            qty_x,
            qty_100x,
            qty_type,
            ORDER_TYPE_ADD,
            side,
        )
    ]


def decode(
    vector,
    bounds: ScalerBounds,
    queue_len: int,
    rng: np.random.Generator,
    queue_bb: tuple[float, float] = (1.0, 1.0),
) -> Action:
    """Action for one vector; attributes the order type ignores are dropped."""
    v = tuple(float(x) for x in vector)
    if len(v) != len(VECTOR_FIELDS):
        raise ValueError(f"expected {len(VECTOR_FIELDS)} components, got {len(v)}")
    order_type = harden(v[5], (-1.0, 0.0, 1.0))
    side = Side.BID if harden(v[6], (-1.0, 1.0)) > 0 else Side.ASK

    if order_type == ORDER_TYPE_CANCEL:
        position = sample_beta_binomial(max(queue_len, 1) - 1, *queue_bb, rng)
        return Action(
            ActionKind.CANCEL,
            side,
            cancel_depth=max(0, unscale(v[1], *bounds.cancel_depth)),
            queue_position=position,
        )

    if harden(v[4], (-1.0, 1.0)) > 0:
        qty = max(1, unscale(v[2], *bounds.qty_x))
    else:
        qty = 100 * max(1, unscale(v[3], *bounds.qty_100x))

    if order_type == ORDER_TYPE_MARKET:
        return Action(ActionKind.MARKET, side, quantity=qty)
    return Action(
        ActionKind.ADD_LIMIT, side, depth=unscale(v[0], *bounds.depth), quantity=qty
    )


def normalize_state(state: MarketState, bounds: ScalerBounds) -> tuple[float, ...]:
    """State vector with its unbounded components min-max scaled to [-1, 1]."""
    return (
        state.i1,
        state.i5,
        state.o128,
        state.o256,
        scale(state.v1, *bounds.v1),
        scale(state.v5, *bounds.v5),
        scale(state.spread, *bounds.spread),
        state.r1,
        state.r50,
    )
