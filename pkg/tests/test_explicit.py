"""Fitting and sampling of the explicit world model.

The round-trip tests sample actions under exogenously varied market
states, so every conditional stage is identified, then refit and compare
against the generating parameters.  Closed-loop round trips, where the
states come from the model's own book, live in the acceptance suite.
"""

from dataclasses import replace as dc_replace

import numpy as np
import pytest

from lobforge.actions import Action, ActionKind
from lobforge.dataset import StateActionPair
from lobforge.distributions import logistic_prob, sample_interarrival
from lobforge.explicit import (
    DEFAULT_CANCEL,
    TYPE_ORDER,
    ExplicitAgent,
    FitError,
    fit,
    from_dict,
    load_model,
    sample_action,
    save_model,
    to_dict,
)
from lobforge.marketstate import MarketState
from lobforge.orderbook import Book, Side
from lobforge.synth import ground_truth_params


def _state(i5=0.5, spread=2.0, v1=1200.0, v5=6000.0):
    return MarketState(0.5, i5, 0.0, 0.0, v1, v5, spread, 0.0, 0.0)


def _window(i5=0.5, spread=2.0, length=5):
    return (_state(i5=i5, spread=spread),) * length


def _pair(action, i5=0.5, spread=2.0, dt=200_000_000, queue_len=None):
    return StateActionPair(
        window=_window(i5=i5, spread=spread),
        action=action,
        dt_ns=dt,
        queue_len=queue_len,
    )


def _mixed_pairs(rnd, n_add, n_mkt, n_can, n_rep):
    """Hand-countable dataset with enough variety to identify every fit."""
    pairs = []
    for i in range(n_add):
        pairs.append(
            _pair(
                Action(ActionKind.ADD_LIMIT, Side.BID if i % 2 else Side.ASK,
                       depth=i % 4, quantity=100 if i % 3 == 0 else 37 + i % 5),
                i5=0.3 + 0.4 * rnd.random(),
            )
        )
    for i in range(n_mkt):
        pairs.append(
            _pair(Action(ActionKind.MARKET, Side.BID if i % 2 else Side.ASK,
                         quantity=200 if i % 2 else 51),
                  i5=0.3 + 0.4 * rnd.random())
        )
    for i in range(n_can):
        pairs.append(
            _pair(Action(ActionKind.CANCEL, Side.ASK if i % 3 else Side.BID,
                         cancel_depth=i % 3, queue_position=i % 2),
                  i5=0.3 + 0.4 * rnd.random(), queue_len=4)
        )
    for i in range(n_rep):
        pairs.append(
            _pair(Action(ActionKind.REPLACE, Side.BID, depth=1, quantity=60 + i,
                         cancel_depth=i % 2, queue_position=0),
                  i5=0.3 + 0.4 * rnd.random(), queue_len=3)
        )
    return pairs


def test_type_probs_are_empirical_proportions():
    rnd = np.random.default_rng(7)
    pairs = _mixed_pairs(rnd, 500, 100, 300, 100)
    params = fit(pairs)
    assert params.type_probs == (0.5, 0.1, 0.3, 0.1)


def test_fit_rejects_empty_dataset():
    with pytest.raises(FitError):
        fit([])


def test_missing_replace_branch_falls_back_with_warning():
    rnd = np.random.default_rng(8)
    pairs = _mixed_pairs(rnd, 50, 10, 30, 0)
    params = fit(pairs)
    assert params.type_probs[3] == 0.0
    assert params.cancels[ActionKind.REPLACE] == DEFAULT_CANCEL
    assert any("REPLACE" in w for w in params.meta["warnings"])


def test_fit_meta_counts_match_dataset():
    rnd = np.random.default_rng(9)
    pairs = _mixed_pairs(rnd, 40, 10, 20, 10)
    params = fit(pairs)
    assert params.meta["pairs"] == 80
    assert params.meta["counts"] == {
        "ADD_LIMIT": 40, "MARKET": 10, "CANCEL": 20, "REPLACE": 10,
    }


def _sample_iid(truth, n, seed):
    """Draw actions under independently varied (i5, spread) conditioning."""
    rng = np.random.default_rng(seed)
    pairs = []
    spreads = (1.0, 2.0, 3.0, 4.0)
    for _ in range(n):
        i5 = 0.25 + 0.5 * rng.random()
        window = _window(i5=i5, spread=spreads[rng.integers(4)])
        timed = sample_action(truth, window, rng)
        a = timed.action
        queue_len = None
        if a.cancel_depth is not None:
            queue_len = truth.cancels[a.kind].queue_len_hint
        pairs.append(
            StateActionPair(window=window, action=a, dt_ns=timed.dt_ns,
                           queue_len=queue_len)
        )
    return pairs


def _neg_depth_mean(depth):
    if depth.neg_max <= 0:
        return 0.0
    return 1.0 + (depth.neg_max - 1) * depth.neg_alpha / (
        depth.neg_alpha + depth.neg_beta
    )


def test_iid_round_trip_recovers_generating_parameters():
    truth = ground_truth_params()
    pairs = _sample_iid(truth, 100_000, seed=411)
    fitted = fit(pairs)

    for t, f in zip(truth.type_probs, fitted.type_probs):
        assert abs(t - f) < 0.02
    assert abs(truth.quantity.p_hundred - fitted.quantity.p_hundred) < 0.02
    for v, t in zip(truth.depth.pos_values, truth.depth.pos_probs):
        f = dict(zip(fitted.depth.pos_values, fitted.depth.pos_probs)).get(v, 0.0)
        assert abs(t - f) < 0.02

    # conditional probabilities compared on a grid, not by raw coefficients
    for kind in TYPE_ORDER:
        for i5 in (0.3, 0.4, 0.5, 0.6, 0.7):
            pt = logistic_prob(truth.side_coefs[kind], (i5,))
            pf = logistic_prob(fitted.side_coefs[kind], (i5,))
            assert abs(pt - pf) < 0.02
    for spread in (1.0, 2.0, 3.0, 4.0):
        for i5 in (0.3, 0.5, 0.7):
            pt = logistic_prob(truth.depth.neg_coefs, (spread, i5))
            pf = logistic_prob(fitted.depth.neg_coefs, (spread, i5))
            assert abs(pt - pf) < 0.02

    def close(a, b, tol=0.05):
        assert abs(a - b) / abs(a) < tol

    close(truth.quantity.hundreds.mean, fitted.quantity.hundreds.mean)
    close(truth.quantity.hundreds.variance, fitted.quantity.hundreds.variance)
    close(truth.quantity.other.mean, fitted.quantity.other.mean)
    close(truth.quantity.other.variance, fitted.quantity.other.variance)
    for kind in (ActionKind.CANCEL, ActionKind.REPLACE):
        close(truth.cancels[kind].depth.mean, fitted.cancels[kind].depth.mean)
        close(truth.cancels[kind].depth.variance,
              fitted.cancels[kind].depth.variance)
        tc, fc = truth.cancels[kind], fitted.cancels[kind]
        close(tc.queue_alpha / (tc.queue_alpha + tc.queue_beta),
              fc.queue_alpha / (fc.queue_alpha + fc.queue_beta))
    close(truth.interarrival.shape * truth.interarrival.scale,
          fitted.interarrival.shape * fitted.interarrival.scale)
    assert _neg_depth_mean(fitted.depth) == _neg_depth_mean(truth.depth)


def test_monte_carlo_type_frequencies_match_probs():
    truth = ground_truth_params()
    rng = np.random.default_rng(55)
    window = _window()
    counts = dict.fromkeys(TYPE_ORDER, 0)
    n = 1_000_000
    for _ in range(n):
        counts[sample_action(truth, window, rng).action.kind] += 1
    for kind, p in zip(TYPE_ORDER, truth.type_probs):
        assert abs(counts[kind] / n - p) < 0.005


def test_point_mass_type_always_sampled():
    params = dc_replace(ground_truth_params(), type_probs=(1.0, 0.0, 0.0, 0.0))
    rng = np.random.default_rng(3)
    for _ in range(200):
        assert sample_action(params, _window(), rng).action.kind is ActionKind.ADD_LIMIT


def test_side_probability_monotone_in_imbalance():
    truth = ground_truth_params()
    grid = [0.1 * k for k in range(11)]
    for kind in TYPE_ORDER:
        b = truth.side_coefs[kind][1]
        probs = [logistic_prob(truth.side_coefs[kind], (x,)) for x in grid]
        diffs = [q - p for p, q in zip(probs, probs[1:])]
        if b > 0:
            assert all(d > 0 for d in diffs)
        else:
            assert all(d < 0 for d in diffs)

    # empirical check at the extremes for the heaviest branch
    rng = np.random.default_rng(21)
    rates = []
    for i5 in (0.05, 0.95):
        asks = 0
        n = 20_000
        for _ in range(n):
            a = sample_action(truth, _window(i5=i5), rng).action
            if a.kind is ActionKind.ADD_LIMIT and a.side is Side.ASK:
                asks += 1
        adds = truth.type_probs[0]
        rates.append(asks / (n * adds))
    assert rates[0] < 0.2 < 0.8 < rates[1]


def test_quantity_round_lot_fraction_matches_mixture_weight():
    truth = ground_truth_params()
    rng = np.random.default_rng(77)
    n = 1_000_000
    hits = sum(1 for _ in range(n) if truth.quantity.sample(rng) % 100 == 0)
    assert abs(hits / n - truth.quantity.p_hundred) < 0.01


def test_quantity_branches_never_leak_round_lots():
    truth = ground_truth_params()
    rng = np.random.default_rng(78)
    only_other = type(truth.quantity)(
        p_hundred=0.0, hundreds=truth.quantity.hundreds, other=truth.quantity.other
    )
    only_hundred = type(truth.quantity)(
        p_hundred=1.0, hundreds=truth.quantity.hundreds, other=truth.quantity.other
    )
    for _ in range(5_000):
        assert only_other.sample(rng) % 100 != 0
        assert only_hundred.sample(rng) % 100 == 0


def test_interarrival_positive_integer_nanoseconds():
    truth = ground_truth_params()
    rng = np.random.default_rng(12)
    for _ in range(1_000):
        dt = sample_interarrival(truth.interarrival, rng)
        assert isinstance(dt, int) and dt >= 1


def test_model_file_round_trip(tmp_path):
    truth = ground_truth_params()
    assert from_dict(to_dict(truth)) == truth
    path = tmp_path / "model.json"
    save_model(truth, path)
    assert load_model(path) == truth


def test_model_file_rejects_foreign_documents(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"format": "something-else", "version": 1}')
    with pytest.raises(ValueError):
        load_model(path)


def test_agent_uses_live_queue_length():
    params = dc_replace(ground_truth_params(), type_probs=(0.0, 0.0, 1.0, 0.0))
    book = Book()
    for _ in range(6):
        book.add_limit(Side.BID, 100, 10)
        book.add_limit(Side.ASK, 101, 10)
    agent = ExplicitAgent(params, book)
    rng = np.random.default_rng(5)
    positions = set()
    for _ in range(2_000):
        a = agent.next(_window(), rng).action
        if a.cancel_depth == 0:
            positions.add(a.queue_position)
    # uniform-ish queue law must reach both ends of the live 6-deep queue
    assert min(positions) == 0 and max(positions) == 5
