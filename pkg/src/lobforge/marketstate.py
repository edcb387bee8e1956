"""Observable market-state features.

Each applied event yields one nine-dimensional state vector:

    (I1, I5, O128, O256, V1, V5, spread, r1, r50)

where I^i is the volume imbalance over the top i levels, O_N the mean
sign of the last N events (+1 sell market order, -1 buy market order,
0 anything else), V^i the total volume over the top i levels, spread the
best-ask/best-bid gap in ticks and r_N the mid-price return over the
last N events.  Agents condition on a window of the most recent T states.
"""

from __future__ import annotations

from collections import deque
from itertools import islice
from typing import NamedTuple

from lobforge.orderbook import Book, Side

FEATURE_NAMES = ("i1", "i5", "o128", "o256", "v1", "v5", "spread", "r1", "r50")

SIGN_WINDOW = 256
RETURN_WINDOW = 50


class MarketState(NamedTuple):
    i1: float
    i5: float
    o128: float
    o256: float
    v1: float
    v5: float
    spread: float
    r1: float
    r50: float


# neutral placeholder used to left-pad windows before any event exists
ZERO_STATE = MarketState(0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


class MarketStateError(ValueError):
    """A feature is undefined for the current book or history."""


def volume_imbalance(book: Book, levels: int) -> float:
    """Bid share of the volume resting on the top `levels` of each side.

    Saturates to 1.0 (0.0) when only bids (asks) are quoted; undefined
    on an entirely empty book.
    """
    snap = book.snapshot_levels(levels)
    bid = sum(v for _, v in snap.bids)
    ask = sum(v for _, v in snap.asks)
    if bid + ask == 0:
        raise MarketStateError("book empty, imbalance undefined")
    return bid / (bid + ask)


def absolute_volume(book: Book, levels: int) -> int:
    """Total volume over the top `levels` of both sides; 0 on an empty book."""
    snap = book.snapshot_levels(levels)
    return sum(v for _, v in snap.bids) + sum(v for _, v in snap.asks)


def spread(book: Book) -> int:
    bb, ba = book.best_price(Side.BID), book.best_price(Side.ASK)
    if bb is None or ba is None:
        raise MarketStateError("spread undefined with an empty side")
    return ba - bb


def mid_price(book: Book) -> float:
    bb, ba = book.best_price(Side.BID), book.best_price(Side.ASK)
    if bb is None or ba is None:
        raise MarketStateError("mid undefined with an empty side")
    return (bb + ba) / 2.0


class _SignSum:
    """Running sum over the trailing n event signs."""

    __slots__ = ("n", "buf", "total")

    def __init__(self, n: int) -> None:
        self.n = n
        self.buf: deque[int] = deque(maxlen=n)
        self.total = 0

    def push(self, sign: int) -> None:
        if len(self.buf) == self.n:
            self.total -= self.buf[0]
        self.buf.append(sign)
        self.total += sign


class EventHistory:
    """Ring buffers over past events: market-order signs and mid prices."""

    def __init__(self) -> None:
        self._sums = {128: _SignSum(128), SIGN_WINDOW: _SignSum(SIGN_WINDOW)}
        self.mids: deque[float] = deque(maxlen=RETURN_WINDOW + 1)

    def push(self, sign: int, mid: float) -> None:
        for s in self._sums.values():
            s.push(sign)
        self.mids.append(mid)

    def sign_sum(self, n: int) -> int:
        tracked = self._sums.get(n)
        if tracked is not None:
            return tracked.total
        signs = self._sums[SIGN_WINDOW].buf
        if n > SIGN_WINDOW:
            raise MarketStateError(f"sign history holds {SIGN_WINDOW} events")
        take = min(n, len(signs))
        return sum(islice(signs, len(signs) - take, len(signs)))

    def has_returns(self, n: int) -> bool:
        return len(self.mids) > n


def order_sign_imbalance(history: EventHistory, n: int) -> float:
    """Mean event sign over the last n events; missing history counts as 0."""
    if n <= 0:
        raise MarketStateError("sign window must be positive")
    return history.sign_sum(n) / n


def price_return(history: EventHistory, n: int) -> float:
    """Mid-price return over the last n events; 0 before enough history."""
    mids = history.mids
    if len(mids) <= n:
        return 0.0
    past = mids[len(mids) - 1 - n]
    if past <= 0.0:
        # placeholder mids from a never-quoted book carry no information
        return 0.0
    return mids[-1] / past - 1.0


def build_state(book: Book, history: EventHistory) -> MarketState:
    """Assemble the state vector; propagates feature errors on degenerate books."""
    return MarketState(
        i1=volume_imbalance(book, 1),
        i5=volume_imbalance(book, 5),
        o128=order_sign_imbalance(history, 128),
        o256=order_sign_imbalance(history, 256),
        v1=float(absolute_volume(book, 1)),
        v5=float(absolute_volume(book, 5)),
        spread=float(spread(book)),
        r1=price_return(history, 1),
        r50=price_return(history, RETURN_WINDOW),
    )


class StateWindow:
    """The last T states, oldest first, left-padded until T exist."""

    def __init__(self, length: int) -> None:
        if length < 1:
            raise ValueError("window length must be >= 1")
        self.length = length
        self._states: deque[MarketState] = deque(maxlen=length)

    def push(self, state: MarketState) -> None:
        self._states.append(state)

    def snapshot(self) -> tuple[MarketState, ...]:
        states = tuple(self._states)
        if len(states) == self.length:
            return states
        pad = states[0] if states else ZERO_STATE
        return (pad,) * (self.length - len(states)) + states

    def last(self) -> MarketState:
        return self._states[-1] if self._states else ZERO_STATE

    def __len__(self) -> int:
        return len(self._states)


class StateTracker:
    """Per-event feature bookkeeping for a live simulation or replay.

    Implements the degenerate-book policy: with one side empty the
    imbalance saturates, and spread/mid reuse their last defined values
    so returns stay computable.  Every such event is counted.
    """

    def __init__(self, book: Book, window_length: int) -> None:
        self.book = book
        self.history = EventHistory()
        self.window = StateWindow(window_length)
        self.degenerate_events = 0
        self._last_spread: float | None = None
        self._last_mid: float | None = None

    @property
    def last_mid(self) -> float | None:
        """Mid price after the latest event, carried through one-sided books."""
        return self._last_mid

    def observe(self, sign: int) -> MarketState:
        """Record one applied event and return the resulting state."""
        book = self.book
        bb, ba = book.best_price(Side.BID), book.best_price(Side.ASK)
        if bb is not None and ba is not None:
            self._last_spread = float(ba - bb)
            self._last_mid = (bb + ba) / 2.0
        else:
            self.degenerate_events += 1

        if bb is None and ba is None:
            i1 = i5 = 0.5
        else:
            i1 = volume_imbalance(book, 1)
            i5 = volume_imbalance(book, 5)

        mid = self._last_mid if self._last_mid is not None else 0.0
        self.history.push(sign, mid)

        state = MarketState(
            i1=i1,
            i5=i5,
            o128=order_sign_imbalance(self.history, 128),
            o256=order_sign_imbalance(self.history, 256),
            v1=float(absolute_volume(book, 1)),
            v5=float(absolute_volume(book, 5)),
            spread=self._last_spread if self._last_spread is not None else 0.0,
            r1=price_return(self.history, 1) if mid else 0.0,
            r50=price_return(self.history, RETURN_WINDOW) if mid else 0.0,
        )
        self.window.push(state)
        return state
