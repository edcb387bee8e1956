"""Two-sided limit order book with price-time priority matching.

Prices are integer ticks, quantities integer shares.  The book supports the
four message types a trading feed carries: add limit, market, cancel and
replace.  Cancels and replaces address orders by (depth, queue position)
relative to the same-side best quote rather than by id, which is how a
generative flow model thinks about them; id-addressed cancellation is kept
as plumbing for historical replay.
"""

from __future__ import annotations

import bisect
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Deque, Iterator


class Side(Enum):
    BID = "B"
    ASK = "S"

    @property
    def opposite(self) -> "Side":
        return Side.ASK if self is Side.BID else Side.BID

    @property
    def sign(self) -> int:
        """+1 for BID, -1 for ASK; depth arithmetic uses this."""
        return 1 if self is Side.BID else -1


class OrderRejected(ValueError):
    """Order failed validation (non-positive price or quantity, id reuse)."""


class NoSuchLevel(LookupError):
    """Cancel/replace resolved to a price with no resting orders."""


class UndefinedReference(LookupError):
    """Depth arithmetic needs a same-side best quote and the side is empty."""


@dataclass
class Order:
    order_id: int
    side: Side
    price: int
    quantity: int
    entry_seq: int


@dataclass(frozen=True)
class Trade:
    """One fill: an aggressor consumed part of a resting order."""

    price: int
    quantity: int
    maker_id: int
    maker_side: Side
    taker_side: Side


@dataclass(frozen=True)
class MarketFill:
    trades: tuple[Trade, ...]
    unfilled: int
    no_liquidity: bool


@dataclass(frozen=True)
class ReplaceResult:
    cancelled: Order
    new_order_id: int | None
    trades: tuple[Trade, ...]
    drop_reason: str | None = None
    new_price: int | None = None


class _Level:
    """FIFO queue at one price, with its total volume cached."""

    __slots__ = ("price", "orders", "volume")

    def __init__(self, price: int) -> None:
        self.price = price
        self.orders: Deque[Order] = deque()
        self.volume = 0


class Book:
    """Continuous double-auction book.

    Invariants maintained here and checked by the test suite:
    best bid < best ask whenever both sides are quoted, FIFO execution
    within a level, and volume conservation across every operation.
    """

    def __init__(self) -> None:
        self._levels: dict[Side, dict[int, _Level]] = {Side.BID: {}, Side.ASK: {}}
        # ascending price lists; best bid is [-1], best ask is [0]
        self._prices: dict[Side, list[int]] = {Side.BID: [], Side.ASK: []}
        self._orders: dict[int, Order] = {}
        self._side_volume: dict[Side, int] = {Side.BID: 0, Side.ASK: 0}
        self._next_id = 1
        self._next_seq = 1
        self.last_trade: tuple[int, int, Side] | None = None

    # ------------------------------------------------------------------
    # queries

    def best_price(self, side: Side) -> int | None:
        prices = self._prices[side]
        if not prices:
            return None
        return prices[-1] if side is Side.BID else prices[0]

    def side_volume(self, side: Side) -> int:
        return self._side_volume[side]

    def total_volume(self) -> int:
        return self._side_volume[Side.BID] + self._side_volume[Side.ASK]

    def order(self, order_id: int) -> Order | None:
        return self._orders.get(order_id)

    def is_live(self, order_id: int) -> bool:
        return order_id in self._orders

    def level_queue(self, side: Side, price: int) -> tuple[Order, ...]:
        level = self._levels[side].get(price)
        return tuple(level.orders) if level else ()

    def level_volume(self, side: Side, price: int) -> int:
        level = self._levels[side].get(price)
        return level.volume if level else 0

    def depth_of(self, side: Side, price: int) -> int | None:
        """Distance of `price` from the same-side best, None if side empty."""
        best = self.best_price(side)
        if best is None:
            return None
        return (best - price) if side is Side.BID else (price - best)

    def price_at_depth(self, side: Side, depth: int) -> int:
        """Inverse of depth_of; negative depth lies inside or across the spread."""
        best = self.best_price(side)
        if best is None:
            raise UndefinedReference(f"{side.name} side empty, no reference price")
        return (best - depth) if side is Side.BID else (best + depth)

    def snapshot_levels(self, n: int) -> "BookSnapshot":
        bids = []
        for price in reversed(self._prices[Side.BID][-n:]):
            bids.append((price, self._levels[Side.BID][price].volume))
        asks = []
        for price in self._prices[Side.ASK][:n]:
            asks.append((price, self._levels[Side.ASK][price].volume))
        return BookSnapshot(
            bids=tuple(bids),
            asks=tuple(asks),
            padded=len(bids) < n or len(asks) < n,
        )

    def dump(self) -> dict[str, list[tuple[int, list[tuple[int, int]]]]]:
        """Full book content in deterministic order, for equality checks."""
        out: dict[str, list[tuple[int, list[tuple[int, int]]]]] = {}
        for side in (Side.BID, Side.ASK):
            prices = sorted(self._prices[side], reverse=(side is Side.BID))
            out[side.value] = [
                (p, [(o.order_id, o.quantity) for o in self._levels[side][p].orders])
                for p in prices
            ]
        return out

    def iter_orders(self) -> Iterator[Order]:
        return iter(self._orders.values())

    # ------------------------------------------------------------------
    # mutations

    def add_limit(
        self, side: Side, price: int, quantity: int, order_id: int | None = None
    ) -> tuple[int, tuple[Trade, ...]]:
        """Insert a limit order, matching first if it crosses.

        Returns the assigned order id and any trades.  A fully matched
        order never rests; the id is still consumed and returned.
        """
        self._validate(price, quantity)
        if order_id is None:
            order_id = self._next_id
        elif order_id in self._orders:
            raise OrderRejected(f"order id {order_id} already live")
        self._next_id = max(self._next_id, order_id + 1)

        remaining, trades = self._match(side, quantity, limit_price=price)
        if remaining > 0:
            order = Order(order_id, side, price, remaining, self._next_seq)
            self._next_seq += 1
            self._insert(order)
        return order_id, tuple(trades)

    def market_order(self, side: Side, quantity: int) -> MarketFill:
        """Consume the opposite side; any unfilled remainder is discarded."""
        if quantity <= 0:
            raise OrderRejected(f"quantity must be positive, got {quantity}")
        no_liquidity = self.best_price(side.opposite) is None
        remaining, trades = self._match(side, quantity, limit_price=None)
        return MarketFill(tuple(trades), remaining, no_liquidity)

    def cancel_at(self, side: Side, cancel_depth: int, queue_position: int) -> Order:
        """Remove the order at (depth, position) relative to the same-side best.

        queue_position clamps to the last order in the queue; the level
        itself must exist.
        """
        best = self.best_price(side)
        if best is None:
            raise NoSuchLevel(f"{side.name} side empty")
        price = (best - cancel_depth) if side is Side.BID else (best + cancel_depth)
        level = self._levels[side].get(price)
        if level is None:
            raise NoSuchLevel(f"no {side.name} level at {price}")
        idx = min(queue_position, len(level.orders) - 1)
        order = level.orders[idx]
        return self._remove(order)

    def cancel_by_id(self, order_id: int) -> Order:
        order = self._orders.get(order_id)
        if order is None:
            raise NoSuchLevel(f"order {order_id} not live")
        return self._remove(order)

    def replace(
        self,
        side: Side,
        cancel_depth: int,
        queue_position: int,
        new_depth: int,
        new_quantity: int,
        new_order_id: int | None = None,
    ) -> ReplaceResult:
        """Cancel at (depth, position), then add at new_depth with a fresh id.

        The new order joins the back of its queue: a replace always loses
        time priority.  The new depth is resolved against the best quote
        after the cancel has been applied; if that side went empty or the
        resolved price is invalid, the add half is dropped and the cancel
        stands.
        """
        if new_quantity <= 0:
            raise OrderRejected(f"new quantity must be positive, got {new_quantity}")
        cancelled = self.cancel_at(side, cancel_depth, queue_position)
        best = self.best_price(side)
        if best is None:
            return ReplaceResult(cancelled, None, (), "undefined reference price")
        price = (best - new_depth) if side is Side.BID else (best + new_depth)
        if price <= 0:
            return ReplaceResult(cancelled, None, (), f"resolved price {price} invalid")
        new_id, trades = self.add_limit(side, price, new_quantity, new_order_id)
        return ReplaceResult(cancelled, new_id, trades, new_price=price)

    # ------------------------------------------------------------------
    # internals

    @staticmethod
    def _validate(price: int, quantity: int) -> None:
        if price <= 0:
            raise OrderRejected(f"price must be positive, got {price}")
        if quantity <= 0:
            raise OrderRejected(f"quantity must be positive, got {quantity}")

    def _crosses(self, side: Side, limit_price: int | None, best_opp: int) -> bool:
        if limit_price is None:
            return True
        return limit_price >= best_opp if side is Side.BID else limit_price <= best_opp

    def _match(
        self, side: Side, quantity: int, limit_price: int | None
    ) -> tuple[int, list[Trade]]:
        opp = side.opposite
        trades: list[Trade] = []
        remaining = quantity
        while remaining > 0:
            best_opp = self.best_price(opp)
            if best_opp is None or not self._crosses(side, limit_price, best_opp):
                break
            level = self._levels[opp][best_opp]
            maker = level.orders[0]
            take = min(remaining, maker.quantity)
            maker.quantity -= take
            level.volume -= take
            self._side_volume[opp] -= take
            remaining -= take
            trades.append(Trade(best_opp, take, maker.order_id, opp, side))
            self.last_trade = (best_opp, take, side)
            if maker.quantity == 0:
                level.orders.popleft()
                del self._orders[maker.order_id]
                if not level.orders:
                    self._drop_level(opp, best_opp)
        return remaining, trades

    def _insert(self, order: Order) -> None:
        levels = self._levels[order.side]
        level = levels.get(order.price)
        if level is None:
            level = _Level(order.price)
            levels[order.price] = level
            bisect.insort(self._prices[order.side], order.price)
        level.orders.append(order)
        level.volume += order.quantity
        self._side_volume[order.side] += order.quantity
        self._orders[order.order_id] = order

    def _remove(self, order: Order) -> Order:
        level = self._levels[order.side][order.price]
        level.orders.remove(order)
        level.volume -= order.quantity
        self._side_volume[order.side] -= order.quantity
        del self._orders[order.order_id]
        if not level.orders:
            self._drop_level(order.side, order.price)
        return order

    def _drop_level(self, side: Side, price: int) -> None:
        del self._levels[side][price]
        prices = self._prices[side]
        idx = bisect.bisect_left(prices, price)
        prices.pop(idx)


@dataclass(frozen=True)
class BookSnapshot:
    """Top-of-book view: (price, volume) per level, best first."""

    bids: tuple[tuple[int, int], ...]
    asks: tuple[tuple[int, int], ...]
    padded: bool = False
