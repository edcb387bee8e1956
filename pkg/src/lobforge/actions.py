"""Agent-facing action types and the agent contract.

An Action describes one book operation in the coordinates a flow model
uses: depths relative to the same-side best quote instead of absolute
prices.  Positive depth sits away from the best, depth zero at it, and
negative depth inside (or across) the spread.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Protocol

import numpy as np

from lobforge.distributions import (  # re-exported: agents own inter-arrival law
    ConstantParams,
    GammaParams,
    fit_gamma,
    sample_interarrival,
)
from lobforge.marketstate import MarketState
from lobforge.orderbook import Book, Side, UndefinedReference

__all__ = [
    "ActionKind",
    "Action",
    "TimedAction",
    "WorldAgent",
    "depth_to_price",
    "GammaParams",
    "ConstantParams",
    "fit_gamma",
    "sample_interarrival",
]


class ActionKind(Enum):
    ADD_LIMIT = "A"
    MARKET = "M"
    CANCEL = "C"
    REPLACE = "R"


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    side: Side
    depth: int | None = None
    quantity: int | None = None
    cancel_depth: int | None = None
    queue_position: int | None = None

    def validate(self) -> None:
        k = self.kind
        if k in (ActionKind.ADD_LIMIT, ActionKind.MARKET, ActionKind.REPLACE):
            if self.quantity is None or self.quantity <= 0:
                raise ValueError(f"{k.name} needs a positive quantity")
        if k in (ActionKind.ADD_LIMIT, ActionKind.REPLACE):
            if self.depth is None:
                raise ValueError(f"{k.name} needs a depth")
        if k in (ActionKind.CANCEL, ActionKind.REPLACE):
            if self.cancel_depth is None or self.cancel_depth < 0:
                raise ValueError(f"{k.name} needs a non-negative cancel depth")
            if self.queue_position is None or self.queue_position < 0:
                raise ValueError(f"{k.name} needs a non-negative queue position")


@dataclass(frozen=True)
class TimedAction:
    """An action plus the wait preceding it, in integer nanoseconds."""

    action: Action
    dt_ns: int

    def __post_init__(self) -> None:
        if self.dt_ns < 1:
            raise ValueError("dt_ns must be at least 1")


class WorldAgent(Protocol):
    """Anything that can emit the next market event given recent states."""

    def next(
        self, window: tuple[MarketState, ...], rng: np.random.Generator
    ) -> TimedAction: ...


def depth_to_price(book: Book, side: Side, depth: int) -> int:
    """Resolve a depth to an absolute tick price against the same-side best."""
    best = book.best_price(side)
    if best is None:
        raise UndefinedReference(f"{side.name} side empty, no reference price")
    return best - depth if side is Side.BID else best + depth
