"""Event-driven simulation kernel.

A run has two phases.  Phase one replays recorded flow up to the warm-up
boundary, priming the book and the feature history.  Phase two hands the
clock to the world agent: sample a timed action, advance, apply, observe,
repeat until the session ends.  An optional experimental agent owns a set
of wake-up times; whenever one falls due before the world agent's next
event it fires first, and an action it actually emits causes the pending
world event to be discarded and re-sampled so the world agent always sees
the intervention.  Runs are deterministic given (config, seed): every
consumer draws from its own seeded stream.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, NamedTuple, Protocol

from lobforge.actions import Action, ActionKind, TimedAction, WorldAgent
from lobforge.flowio import FlowReader, FlowRecord, write_flow
from lobforge.marketstate import MarketState, StateTracker
from lobforge.orderbook import (
    Book,
    NoSuchLevel,
    OrderRejected,
    Side,
    Trade,
    UndefinedReference,
)
from lobforge.replay import Replayer, market_sign
from lobforge.rng import (
    STREAM_CODEC,
    STREAM_EXPERIMENTAL,
    STREAM_WORLD,
    action_stream,
    stream,
)

NS_PER_SEC = 1_000_000_000


def clock_ns(hours: int, minutes: int = 0, seconds: int = 0) -> int:
    """Nanoseconds since midnight."""
    return (hours * 3600 + minutes * 60 + seconds) * NS_PER_SEC

SOURCE_REPLAY = "replay"
SOURCE_WORLD = "world"
SOURCE_EXPERIMENTAL = "experimental"


@dataclass(frozen=True)
class SimConfig:
    seed: int
    data_path: str | None = None
    session_start: int = clock_ns(9, 30)
    warmup_until: int = clock_ns(10, 0)
    session_end: int = clock_ns(16, 0)
    window_length: int = 5
    tick_size: float = 0.01  # dollars per tick, reporting only
    max_world_actions: int | None = None

    def __post_init__(self) -> None:
        if not self.session_start <= self.warmup_until <= self.session_end:
            raise ValueError("need session_start <= warmup_until <= session_end")
        if self.window_length < 1:
            raise ValueError("window_length must be >= 1")

    def describe(self) -> dict:
        return {
            "seed": self.seed,
            "data": self.data_path,
            "session_start_ns": self.session_start,
            "warmup_until_ns": self.warmup_until,
            "session_end_ns": self.session_end,
            "window_length": self.window_length,
            "tick_size": self.tick_size,
        }


class EventSummary(NamedTuple):
    ts_ns: int
    source: str
    kind: str
    side: str
    traded_qty: int
    mid: float
    book_volume: int


class ExperimentalAgent(Protocol):
    """Schedule-driven agent layered on top of the world flow."""

    def next_wakeup(self) -> int | None: ...

    def wakeup(self, ts_ns: int, kernel: "Kernel") -> Action | None: ...

    def on_fills(self, trades: tuple[Trade, ...]) -> None: ...


@dataclass
class RunResult:
    flow_rows: list[FlowRecord]
    events: list[EventSummary]
    summary: dict
    handover_mid: float | None
    handover_volume: int

    def write_log(self, path: str | Path) -> int:
        return write_flow(self.flow_rows, path)


def queue_len_at(book: Book, side: Side, cancel_depth: int) -> int:
    best = book.best_price(side)
    if best is None:
        return 0
    price = best - cancel_depth if side is Side.BID else best + cancel_depth
    return len(book.level_queue(side, price))


class Kernel:
    def __init__(
        self,
        config: SimConfig,
        world_agent_factory: Callable[[Book], WorldAgent] | None = None,
        experimental_agent: ExperimentalAgent | None = None,
    ):
        self.config = config
        self.book = Book()
        self.tracker = StateTracker(self.book, config.window_length)
        self.replayer = Replayer(self.book)
        self.experimental_rng = stream(config.seed, STREAM_EXPERIMENTAL)
        self.codec_rng = stream(config.seed, STREAM_CODEC)
        self.agent = world_agent_factory(self.book) if world_agent_factory else None
        self.exp_agent = experimental_agent
        self.clock = config.session_start
        self.flow_rows: list[FlowRecord] = []
        self.events: list[EventSummary] = []
        self.drops = {
            "no_such_level": 0,
            "undefined_reference": 0,
            "validation": 0,
            "replace_add_dropped": 0,
        }
        self.counts = {SOURCE_REPLAY: 0, SOURCE_WORLD: 0, SOURCE_EXPERIMENTAL: 0}
        self.kind_counts = {k.value: 0 for k in ActionKind}
        self.reader_skipped = 0
        self.handover_mid: float | None = None
        self.handover_volume = 0
        self._pending: TimedAction | None = None
        self._world_actions = 0
        self._done = False

    # ------------------------------------------------------------------
    # phase one

    def warmup(self, records: Iterable[FlowRecord] | None = None) -> None:
        """Replay records below the warm-up boundary, then mark handover."""
        if records is None and self.config.data_path is not None:
            reader = FlowReader(self.config.data_path)
            self._replay(iter(reader))
            self.reader_skipped = reader.skipped_unresolved
        elif records is not None:
            self._replay(iter(records))
        self.clock = self.config.warmup_until
        self.handover_mid = self.tracker.last_mid
        self.handover_volume = self.book.total_volume()

    def _replay(self, records) -> None:
        until = self.config.warmup_until
        for rec in records:
            if rec.ts_ns >= until:
                break
            result = self.replayer.step(rec)
            if not result.applied:
                continue
            self.flow_rows.append(rec)
            if result.is_execution:
                continue
            self.clock = rec.ts_ns
            self._observe(rec.ts_ns, SOURCE_REPLAY, result.action, result.trades)

    # ------------------------------------------------------------------
    # phase two

    def window(self) -> tuple[MarketState, ...]:
        return self.tracker.window.snapshot()

    def step(self) -> bool:
        """Advance by exactly one applied-or-dropped event; False once done."""
        if self._done or self.agent is None:
            self._done = True
            return False
        cfg = self.config
        if cfg.max_world_actions is not None and self._world_actions >= cfg.max_world_actions:
            self._done = True
            return False
        if self._pending is None:
            # One generator per action ordinal: a re-sample after an
            # intervention reuses the ordinal, so paired runs stay on
            # common random numbers.
            rng = action_stream(cfg.seed, STREAM_WORLD, self._world_actions)
            self._pending = self.agent.next(self.window(), rng)
        target = self.clock + self._pending.dt_ns

        exp = self.exp_agent
        while exp is not None:
            wake = exp.next_wakeup()
            if wake is None or wake > min(target, cfg.session_end):
                break
            action = exp.wakeup(wake, self)
            if action is None:
                continue  # nothing emitted; the pending world event stands
            self.clock = wake
            trades = self._apply(action, wake, SOURCE_EXPERIMENTAL)
            exp.on_fills(trades)
            # world agent re-queries with the intervention in its window
            self._pending = None
            return True

        if target > cfg.session_end:
            self.clock = cfg.session_end
            self._done = True
            return False
        self.clock = target
        self._apply(self._pending.action, target, SOURCE_WORLD)
        self._pending = None
        self._world_actions += 1
        return True

    def run(self, warmup_records: Iterable[FlowRecord] | None = None) -> RunResult:
        t0 = time.perf_counter()
        self.warmup(warmup_records)
        while self.step():
            pass
        return self._result(time.perf_counter() - t0)

    # ------------------------------------------------------------------
    # applying actions

    def _apply(self, action: Action, ts: int, source: str) -> tuple[Trade, ...]:
        try:
            action.validate()
            rows, trades = self._book_op(action, ts)
        except NoSuchLevel:
            self.drops["no_such_level"] += 1
            return ()
        except UndefinedReference:
            self.drops["undefined_reference"] += 1
            return ()
        except (OrderRejected, ValueError):
            self.drops["validation"] += 1
            return ()
        self.flow_rows.extend(rows)
        self._observe(ts, source, action, trades)
        return trades

    def _book_op(
        self, action: Action, ts: int
    ) -> tuple[list[FlowRecord], tuple[Trade, ...]]:
        book, side = self.book, action.side
        if action.kind is ActionKind.ADD_LIMIT:
            price = self._resolve_price(side, action.depth)
            oid, trades = book.add_limit(side, price, action.quantity)
            rows = [FlowRecord(ts, "A", oid, side, price, action.quantity)]
            rows += self._exec_rows(ts, trades)
            return rows, trades
        if action.kind is ActionKind.MARKET:
            fill = book.market_order(side, action.quantity)
            rows = [FlowRecord(ts, "M", None, side, None, action.quantity)]
            rows += self._exec_rows(ts, fill.trades)
            return rows, fill.trades
        if action.kind is ActionKind.CANCEL:
            gone = book.cancel_at(side, action.cancel_depth, action.queue_position)
            return [FlowRecord(ts, "C", None, side, ref_order_id=gone.order_id)], ()
        res = book.replace(
            side,
            action.cancel_depth,
            action.queue_position,
            action.depth,
            action.quantity,
        )
        if res.new_order_id is None:
            self.drops["replace_add_dropped"] += 1
            rows = [FlowRecord(ts, "C", None, side, ref_order_id=res.cancelled.order_id)]
            return rows, ()
        rows = [
            FlowRecord(
                ts,
                "R",
                res.new_order_id,
                side,
                ref_order_id=res.cancelled.order_id,
                new_price_ticks=res.new_price,
                new_qty=action.quantity,
            )
        ]
        rows += self._exec_rows(ts, res.trades)
        return rows, res.trades

    def _resolve_price(self, side: Side, depth: int) -> int:
        best = self.book.best_price(side)
        if best is None:
            raise UndefinedReference(f"{side.name} side empty")
        price = best - depth if side is Side.BID else best + depth
        if price <= 0:
            raise OrderRejected(f"resolved price {price} invalid")
        return price

    @staticmethod
    def _exec_rows(ts: int, trades: tuple[Trade, ...]) -> list[FlowRecord]:
        return [
            FlowRecord(
                ts, "E", None, t.maker_side, t.price, t.quantity, ref_order_id=t.maker_id
            )
            for t in trades
        ]

    def _observe(
        self, ts: int, source: str, action: Action, trades: tuple[Trade, ...]
    ) -> None:
        self.tracker.observe(market_sign(action))
        self.counts[source] += 1
        self.kind_counts[action.kind.value] += 1
        self.events.append(
            EventSummary(
                ts_ns=ts,
                source=source,
                kind=action.kind.value,
                side=action.side.value,
                traded_qty=sum(t.quantity for t in trades),
                mid=self.tracker.last_mid or 0.0,
                book_volume=self.book.total_volume(),
            )
        )

    # ------------------------------------------------------------------

    def _result(self, runtime_s: float) -> RunResult:
        book = self.book
        bb, ba = book.best_price(Side.BID), book.best_price(Side.ASK)
        summary = {
            "config": self.config.describe(),
            "counts": dict(self.counts),
            "kinds": dict(self.kind_counts),
            "drops": dict(self.drops),
            "replay": {
                "skipped_unresolved": self.reader_skipped,
                "dropped": self.replayer.dropped,
                "exec_mismatches": self.replayer.exec_mismatches,
            },
            "degenerate_feature_events": self.tracker.degenerate_events,
            "handover": {
                "ts_ns": self.config.warmup_until,
                "mid": self.handover_mid,
                "book_volume": self.handover_volume,
            },
            "final": {
                "ts_ns": self.clock,
                "best_bid": bb,
                "best_ask": ba,
                "book_volume": book.total_volume(),
                "live_orders": sum(1 for _ in book.iter_orders()),
            },
            "runtime_s": round(runtime_s, 3),
        }
        return RunResult(
            flow_rows=self.flow_rows,
            events=self.events,
            summary=summary,
            handover_mid=self.handover_mid,
            handover_volume=self.handover_volume,
        )


def run_simulation(
    config: SimConfig,
    world_agent_factory: Callable[[Book], WorldAgent] | None,
    experimental_agent: ExperimentalAgent | None = None,
) -> RunResult:
    return Kernel(config, world_agent_factory, experimental_agent).run()
