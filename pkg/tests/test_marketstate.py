"""Feature computation tests, pinned against hand-computed values."""

import pytest

from lobforge.marketstate import (
    FEATURE_NAMES,
    RETURN_WINDOW,
    ZERO_STATE,
    EventHistory,
    MarketState,
    MarketStateError,
    StateTracker,
    StateWindow,
    absolute_volume,
    build_state,
    mid_price,
    order_sign_imbalance,
    price_return,
    spread,
    volume_imbalance,
)
from lobforge.orderbook import Book, Side

from test_orderbook import make_book


def test_feature_vector_order_is_fixed():
    assert MarketState._fields == FEATURE_NAMES
    assert FEATURE_NAMES == (
        "i1", "i5", "o128", "o256", "v1", "v5", "spread", "r1", "r50",
    )


def test_volume_imbalance():
    book = make_book(bids=[(10_000, 100)], asks=[(10_001, 300)])
    assert volume_imbalance(book, 1) == pytest.approx(0.25)
    book = make_book(bids=[(10_000, 100)], asks=[(10_001, 100)])
    assert volume_imbalance(book, 5) == pytest.approx(0.5)


def test_volume_imbalance_counts_only_top_levels():
    book = make_book(
        bids=[(10_000, 100), (9_999, 900)],
        asks=[(10_001, 100)],
    )
    assert volume_imbalance(book, 1) == pytest.approx(0.5)
    assert volume_imbalance(book, 5) == pytest.approx(1000 / 1100)


def test_volume_imbalance_saturates_one_sided():
    book = make_book(bids=[(10_000, 100)])
    assert volume_imbalance(book, 5) == 1.0
    book = make_book(asks=[(10_000, 100)])
    assert volume_imbalance(book, 5) == 0.0


def test_volume_imbalance_empty_book_undefined():
    with pytest.raises(MarketStateError):
        volume_imbalance(Book(), 5)


def test_absolute_volume():
    book = make_book(
        bids=[(10_000, 100), (9_999, 50)],
        asks=[(10_001, 70)],
    )
    assert absolute_volume(book, 1) == 170
    assert absolute_volume(book, 5) == 220
    assert absolute_volume(Book(), 5) == 0


def test_order_sign_imbalance():
    hist = EventHistory()
    # +1 sell market order, -1 buy market order, 0 anything else
    for sign in (1, -1, 0, 0, 1, 1):
        hist.push(sign, 100.0)
    assert order_sign_imbalance(hist, 128) == pytest.approx(2 / 128)
    assert order_sign_imbalance(hist, 256) == pytest.approx(2 / 256)
    assert order_sign_imbalance(hist, 4) == pytest.approx(2 / 4)


def test_order_sign_imbalance_empty_history():
    assert order_sign_imbalance(EventHistory(), 128) == 0.0


def test_order_sign_ring_evicts():
    hist = EventHistory()
    hist.push(1, 100.0)
    for _ in range(256):
        hist.push(0, 100.0)
    assert order_sign_imbalance(hist, 256) == 0.0


def test_spread():
    book = make_book(bids=[(10_000, 1)], asks=[(10_002, 1)])
    assert spread(book) == 2
    assert mid_price(book) == pytest.approx(10_001.0)
    with pytest.raises(MarketStateError):
        spread(make_book(bids=[(10_000, 1)]))
    with pytest.raises(MarketStateError):
        spread(Book())


def test_price_return():
    hist = EventHistory()
    hist.push(0, 100.0)
    hist.push(0, 101.0)
    assert price_return(hist, 1) == pytest.approx(0.01)
    assert price_return(hist, 50) == 0.0  # not enough history yet
    assert not hist.has_returns(50)


def test_price_return_window():
    hist = EventHistory()
    for i in range(RETURN_WINDOW + 1):
        hist.push(0, 100.0 + i)
    assert price_return(hist, RETURN_WINDOW) == pytest.approx(150.0 / 100.0 - 1.0)
    assert hist.has_returns(RETURN_WINDOW)


def test_build_state_values():
    book = make_book(
        bids=[(10_000, 100), (9_999, 50)],
        asks=[(10_002, 200)],
    )
    hist = EventHistory()
    hist.push(1, 10_000.0)
    hist.push(-1, 10_001.0)
    state = build_state(book, hist)
    assert state.i1 == pytest.approx(100 / 300)
    assert state.i5 == pytest.approx(150 / 350)
    assert state.o128 == pytest.approx(0.0)
    assert state.o256 == pytest.approx(0.0)
    assert state.v1 == 300.0
    assert state.v5 == 350.0
    assert state.spread == 2.0
    assert state.r1 == pytest.approx(10_001.0 / 10_000.0 - 1.0)
    assert state.r50 == 0.0


def test_build_state_propagates_errors():
    with pytest.raises(MarketStateError):
        build_state(Book(), EventHistory())


# ---------------------------------------------------------------------------
# windows


def test_window_keeps_last_t():
    win = StateWindow(3)
    states = [ZERO_STATE._replace(v1=float(i)) for i in range(5)]
    for s in states:
        win.push(s)
    assert [s.v1 for s in win.snapshot()] == [2.0, 3.0, 4.0]


def test_window_pads_with_earliest():
    win = StateWindow(4)
    win.push(ZERO_STATE._replace(v1=7.0))
    snap = win.snapshot()
    assert len(snap) == 4
    assert all(s.v1 == 7.0 for s in snap)


def test_window_empty_pads_with_zero_state():
    win = StateWindow(3)
    assert win.snapshot() == (ZERO_STATE,) * 3
    assert win.last() == ZERO_STATE


def test_window_length_validation():
    with pytest.raises(ValueError):
        StateWindow(0)


# ---------------------------------------------------------------------------
# tracker policy on degenerate books


def test_tracker_reuses_last_quotes_when_side_empties():
    book = make_book(bids=[(10_000, 100)], asks=[(10_002, 50)])
    tracker = StateTracker(book, window_length=3)
    s0 = tracker.observe(0)
    assert s0.spread == 2.0

    book.market_order(Side.BID, 50)  # wipes the ask side
    s1 = tracker.observe(-1)
    assert s1.i5 == 1.0  # saturated
    assert s1.spread == 2.0  # reused
    assert tracker.degenerate_events == 1
    # mid reused as well, so the return over the degenerate event is zero
    assert s1.r1 == pytest.approx(0.0)


def test_tracker_signs_feed_imbalance():
    book = make_book(bids=[(10_000, 100)], asks=[(10_002, 50)])
    tracker = StateTracker(book, window_length=2)
    tracker.observe(1)
    tracker.observe(1)
    state = tracker.observe(-1)
    assert state.o128 == pytest.approx(1 / 128)
