"""Historical replay: apply flow records to a book, in model coordinates.

Each applied record is also expressed as an Action (depths relative to
the same-side best at decision time) so the same pass that reconstructs
the book yields training pairs.  Execute rows are verified against the
fills the matcher actually produced rather than applied.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from lobforge.actions import Action, ActionKind
from lobforge.flowio import FlowRecord
from lobforge.orderbook import Book, NoSuchLevel, OrderRejected, Side, Trade


@dataclass(frozen=True)
class StepResult:
    record: FlowRecord
    applied: bool
    is_execution: bool = False
    action: Action | None = None
    trades: tuple[Trade, ...] = ()
    queue_len: int | None = None
    degenerate: bool = False  # a depth had no same-side reference quote
    drop_reason: str | None = None
    exec_mismatch: bool = False


def market_sign(action: Action) -> int:
    """+1 for a sell market order, -1 for a buy one, 0 for anything else."""
    if action.kind is not ActionKind.MARKET:
        return 0
    return 1 if action.side is Side.ASK else -1


class Replayer:
    """Feeds records through a book, checking fills claimed by the file."""

    def __init__(self, book: Book):
        self.book = book
        self.dropped = 0
        self.exec_mismatches = 0
        self._pending_fills: deque[tuple[int, int, int]] = deque()

    def step(self, rec: FlowRecord) -> StepResult:
        if rec.msg == "E":
            return self._verify_execution(rec)
        # a new action closes the verification window of the previous one
        self._pending_fills.clear()
        if rec.msg == "A":
            return self._apply_add(rec)
        if rec.msg == "M":
            return self._apply_market(rec)
        if rec.msg == "C":
            return self._apply_cancel(rec)
        return self._apply_replace(rec)

    # ------------------------------------------------------------------

    def _remember(self, trades: tuple[Trade, ...]) -> None:
        for t in trades:
            self._pending_fills.append((t.maker_id, t.price, t.quantity))

    def _drop(self, rec: FlowRecord, reason: str) -> StepResult:
        self.dropped += 1
        return StepResult(rec, applied=False, drop_reason=reason)

    def _verify_execution(self, rec: FlowRecord) -> StepResult:
        expected = self._pending_fills.popleft() if self._pending_fills else None
        got = (rec.ref_order_id, rec.price_ticks, rec.qty)
        ok = expected == got
        if not ok:
            self.exec_mismatches += 1
        return StepResult(rec, applied=True, is_execution=True, exec_mismatch=not ok)

    def _apply_add(self, rec: FlowRecord) -> StepResult:
        book = self.book
        depth = book.depth_of(rec.side, rec.price_ticks)
        action = Action(
            ActionKind.ADD_LIMIT, rec.side, depth=depth, quantity=rec.qty
        )
        try:
            _, trades = book.add_limit(rec.side, rec.price_ticks, rec.qty, rec.order_id)
        except OrderRejected as exc:
            return self._drop(rec, str(exc))
        self._remember(trades)
        return StepResult(
            rec, applied=True, action=action, trades=trades, degenerate=depth is None
        )

    def _apply_market(self, rec: FlowRecord) -> StepResult:
        action = Action(ActionKind.MARKET, rec.side, quantity=rec.qty)
        try:
            fill = self.book.market_order(rec.side, rec.qty)
        except OrderRejected as exc:
            return self._drop(rec, str(exc))
        self._remember(fill.trades)
        return StepResult(rec, applied=True, action=action, trades=fill.trades)

    def _cancel_coords(self, rec: FlowRecord) -> tuple | None:
        """(order, cancel_depth, queue_position, queue_len) for a live ref."""
        book = self.book
        order = book.order(rec.ref_order_id)
        if order is None:
            return None
        depth = book.depth_of(order.side, order.price)
        queue = book.level_queue(order.side, order.price)
        position = next(i for i, o in enumerate(queue) if o.order_id == order.order_id)
        return order, depth, position, len(queue)

    def _apply_cancel(self, rec: FlowRecord) -> StepResult:
        coords = self._cancel_coords(rec)
        if coords is None:
            return self._drop(rec, f"cancel ref {rec.ref_order_id} not live")
        order, depth, position, queue_len = coords
        action = Action(
            ActionKind.CANCEL, order.side, cancel_depth=depth, queue_position=position
        )
        self.book.cancel_by_id(order.order_id)
        return StepResult(
            rec, applied=True, action=action, queue_len=queue_len
        )

    def _apply_replace(self, rec: FlowRecord) -> StepResult:
        book = self.book
        coords = self._cancel_coords(rec)
        if coords is None:
            return self._drop(rec, f"replace ref {rec.ref_order_id} not live")
        order, depth, position, queue_len = coords
        book.cancel_by_id(order.order_id)
        new_depth = book.depth_of(order.side, rec.new_price_ticks)
        action = Action(
            ActionKind.REPLACE,
            order.side,
            depth=new_depth,
            quantity=rec.new_qty,
            cancel_depth=depth,
            queue_position=position,
        )
        try:
            _, trades = book.add_limit(
                order.side, rec.new_price_ticks, rec.new_qty, rec.order_id
            )
        except OrderRejected as exc:
            # the cancel half stands, mirroring live replace semantics
            return StepResult(
                rec,
                applied=True,
                action=Action(
                    ActionKind.CANCEL,
                    order.side,
                    cancel_depth=depth,
                    queue_position=position,
                ),
                queue_len=queue_len,
                drop_reason=str(exc),
            )
        self._remember(trades)
        return StepResult(
            rec,
            applied=True,
            action=action,
            trades=trades,
            queue_len=queue_len,
            degenerate=new_depth is None,
        )
