"""Explicit world model: a product of fitted conditional distributions.

Event generation factorises as

    type -> side | type -> ordinal attributes | type, side

with every stage fitted in closed form from replayed flow: empirical
proportions for the order type, logistic regressions on top-5 imbalance
for the side and on (spread, imbalance) for the sign of limit-order
depth, a beta-binomial for depths inside the spread, an empirical
multinomial with a uniform tail bucket for the rest, two negative
binomials for quantities split at round lots, and per-type negative
binomial / beta-binomial pairs for cancel coordinates.  Inter-arrival
times share one gamma fit.
"""

from __future__ import annotations

import hashlib
import json
import logging
from bisect import bisect_left
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from lobforge.actions import Action, ActionKind, TimedAction
from lobforge.codec import ScalerBounds
from lobforge.distributions import (
    ConstantParams,
    CountModel,
    DegenerateDistribution,
    GammaParams,
    fit_beta_binomial,
    fit_beta_fractions,
    fit_gamma,
    fit_negative_binomial,
    logistic_fit,
    logistic_prob,
    nearest_rank,
    sample_beta_binomial,
    sample_count,
    sample_interarrival,
)
from lobforge.marketstate import MarketState
from lobforge.orderbook import Side

log = logging.getLogger(__name__)

MODEL_FORMAT = "lobforge-model"
MODEL_VERSION = 1

TYPE_ORDER = (
    ActionKind.ADD_LIMIT,
    ActionKind.MARKET,
    ActionKind.CANCEL,
    ActionKind.REPLACE,
)

TAIL_PERCENTILE = 99.9


@dataclass
class DepthModel:
    """Signed depth of adds: logistic mixture of in-spread and at-or-behind."""

    neg_coefs: tuple[float, float, float]  # intercept, spread, i5
    neg_alpha: float
    neg_beta: float
    neg_max: int  # largest in-spread magnitude; 0 disables the branch
    pos_values: tuple[int, ...]
    pos_probs: tuple[float, ...]
    tail_lo: int
    tail_hi: int
    tail_prob: float
    _cum: tuple[float, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self) -> None:
        acc, cum = 0.0, []
        for p in self.pos_probs:
            acc += p
            cum.append(acc)
        cum.append(acc + self.tail_prob)
        object.__setattr__(self, "_cum", tuple(cum))

    def sample_positive(self, rng: np.random.Generator) -> int:
        u = rng.random() * self._cum[-1]
        idx = bisect_left(self._cum, u)
        if idx >= len(self.pos_values):
            return int(rng.integers(self.tail_lo, self.tail_hi + 1))
        return self.pos_values[idx]


@dataclass(frozen=True)
class QuantityModel:
    """Round-lot mixture: multiples of 100 vs everything else."""

    p_hundred: float
    hundreds: CountModel  # over quantity/100 - 1
    other: CountModel  # over quantity - 1

    def sample(self, rng: np.random.Generator) -> int:
        if rng.random() < self.p_hundred:
            return 100 * (1 + sample_count(self.hundreds, rng))
        qty = 1 + sample_count(self.other, rng)
        if qty % 100 == 0:
            qty += 1  # this branch never produces round lots
        return qty


@dataclass(frozen=True)
class CancelModel:
    """Where a cancel or replace lands: level depth plus queue position."""

    depth: CountModel
    queue_alpha: float
    queue_beta: float
    queue_len_hint: int


@dataclass(frozen=True)
class ExplicitParams:
    type_probs: tuple[float, float, float, float]  # in TYPE_ORDER
    side_coefs: dict[ActionKind, tuple[float, float]]  # P(SELL | I5)
    depth: DepthModel
    quantity: QuantityModel
    cancels: dict[ActionKind, CancelModel]  # CANCEL and REPLACE entries
    interarrival: GammaParams | ConstantParams
    bounds: ScalerBounds
    meta: dict = field(default_factory=dict, compare=False)


DEFAULT_SIDE_COEFS = (0.0, 0.0)
DEFAULT_DEPTH = DepthModel(
    neg_coefs=(-20.0, 0.0, 0.0),
    neg_alpha=1.0,
    neg_beta=1.0,
    neg_max=0,
    pos_values=(0,),
    pos_probs=(1.0,),
    tail_lo=0,
    tail_hi=0,
    tail_prob=0.0,
)
DEFAULT_QUANTITY = QuantityModel(
    p_hundred=0.5, hundreds=CountModel.poisson(1.0), other=CountModel.poisson(100.0)
)
DEFAULT_CANCEL = CancelModel(
    depth=CountModel.poisson(0.5), queue_alpha=1.0, queue_beta=1.0, queue_len_hint=1
)
DEFAULT_INTERARRIVAL = ConstantParams(1e8)


class FitError(ValueError):
    """The dataset cannot support a model fit at all."""


def fit(pairs) -> ExplicitParams:
    """Fit every stage of the model from extracted state/action pairs.

    Pairs whose depth had no reference quote contribute to type and side
    stages but are excluded from depth fitting.  A missing order type
    leaves its branch at documented defaults with a warning.
    """
    pairs = list(pairs)
    if not pairs:
        raise FitError("empty dataset")

    warnings: list[str] = []
    by_kind: dict[ActionKind, list] = {k: [] for k in TYPE_ORDER}
    for p in pairs:
        by_kind[p.action.kind].append(p)

    total = len(pairs)
    type_probs = tuple(len(by_kind[k]) / total for k in TYPE_ORDER)
    for k in TYPE_ORDER:
        if not by_kind[k]:
            warnings.append(f"no {k.name} actions; branch left at defaults")

    side_coefs: dict[ActionKind, tuple[float, float]] = {}
    for k in TYPE_ORDER:
        rows = by_kind[k]
        if not rows:
            side_coefs[k] = DEFAULT_SIDE_COEFS
            continue
        x = np.array([r.window[-1].i5 for r in rows])
        y = np.array([1.0 if r.action.side is Side.ASK else 0.0 for r in rows])
        coef = logistic_fit(x, y)
        side_coefs[k] = (float(coef[0]), float(coef[1]))

    depth_rows = [
        r
        for k in (ActionKind.ADD_LIMIT, ActionKind.REPLACE)
        for r in by_kind[k]
        if r.action.depth is not None
    ]
    depth = _fit_depth(depth_rows, warnings)

    qty_rows = [
        r
        for k in (ActionKind.ADD_LIMIT, ActionKind.MARKET, ActionKind.REPLACE)
        for r in by_kind[k]
        if r.action.quantity is not None
    ]
    quantity = _fit_quantity(qty_rows, warnings)

    cancels = {
        k: _fit_cancel(by_kind[k], k, warnings)
        for k in (ActionKind.CANCEL, ActionKind.REPLACE)
    }

    dts = [p.dt_ns for p in pairs if p.dt_ns > 0]
    try:
        interarrival: GammaParams | ConstantParams = fit_gamma(dts)
    except DegenerateDistribution as exc:
        mean = float(np.mean(dts)) if dts else DEFAULT_INTERARRIVAL.value
        warnings.append(f"gamma fit degenerate ({exc}); constant dt {mean:.0f}ns")
        interarrival = ConstantParams(mean)

    bounds = _fit_bounds(pairs, depth_rows, qty_rows)

    for w in warnings:
        log.warning("%s", w)
    meta = {
        "pairs": total,
        "counts": {k.name: len(by_kind[k]) for k in TYPE_ORDER},
        "degenerate_pairs": sum(
            1
            for p in pairs
            if p.action.kind in (ActionKind.ADD_LIMIT, ActionKind.REPLACE)
            and p.action.depth is None
        ),
        "warnings": warnings,
    }
    return ExplicitParams(
        type_probs=type_probs,
        side_coefs=side_coefs,
        depth=depth,
        quantity=quantity,
        cancels=cancels,
        interarrival=interarrival,
        bounds=bounds,
        meta=meta,
    )


def _fit_depth(rows, warnings: list[str]) -> DepthModel:
    if not rows:
        warnings.append("no depth observations; depth model left at defaults")
        return DEFAULT_DEPTH
    depths = np.array([r.action.depth for r in rows])
    feats = np.array([(r.window[-1].spread, r.window[-1].i5) for r in rows])
    labels = (depths < 0).astype(float)
    coef = logistic_fit(feats, labels)

    neg = -depths[depths < 0]
    if neg.size:
        neg_max = int(neg.max())
        alpha, beta = fit_beta_binomial(neg - 1, max(neg_max - 1, 1))
    else:
        neg_max, (alpha, beta) = 0, (1.0, 1.0)

    pos = np.sort(depths[depths >= 0])
    if pos.size == 0:
        warnings.append("no at-or-behind depths; pinned to depth 0")
        pos = np.array([0])
    cutoff = nearest_rank(pos, TAIL_PERCENTILE)
    head = pos[pos <= cutoff]
    tail = pos[pos > cutoff]
    values, counts = np.unique(head, return_counts=True)
    n = pos.size
    return DepthModel(
        neg_coefs=(float(coef[0]), float(coef[1]), float(coef[2])),
        neg_alpha=alpha,
        neg_beta=beta,
        neg_max=neg_max,
        pos_values=tuple(int(v) for v in values),
        pos_probs=tuple(float(c) / n for c in counts),
        tail_lo=int(tail.min()) if tail.size else int(cutoff),
        tail_hi=int(tail.max()) if tail.size else int(cutoff),
        tail_prob=tail.size / n,
    )


def _fit_quantity(rows, warnings: list[str]) -> QuantityModel:
    if not rows:
        warnings.append("no quantities observed; quantity model left at defaults")
        return DEFAULT_QUANTITY
    qty = np.array([r.action.quantity for r in rows])
    hundreds = qty[qty % 100 == 0]
    other = qty[qty % 100 != 0]
    p_hundred = hundreds.size / qty.size
    h_model = (
        fit_negative_binomial(hundreds // 100 - 1)
        if hundreds.size
        else DEFAULT_QUANTITY.hundreds
    )
    o_model = (
        fit_negative_binomial(other - 1) if other.size else DEFAULT_QUANTITY.other
    )
    return QuantityModel(p_hundred=p_hundred, hundreds=h_model, other=o_model)


def _fit_cancel(rows, kind: ActionKind, warnings: list[str]) -> CancelModel:
    rows = [r for r in rows if r.action.cancel_depth is not None]
    if not rows:
        warnings.append(f"no {kind.name} coordinates; cancel branch at defaults")
        return DEFAULT_CANCEL
    depth_model = fit_negative_binomial([r.action.cancel_depth for r in rows])
    fractions = [
        r.action.queue_position / (r.queue_len - 1)
        for r in rows
        if r.queue_len is not None and r.queue_len >= 2
    ]
    alpha, beta = fit_beta_fractions(fractions)
    lens = [r.queue_len for r in rows if r.queue_len]
    hint = int(nearest_rank(lens, 95.0)) if lens else 1
    return CancelModel(
        depth=depth_model, queue_alpha=alpha, queue_beta=beta, queue_len_hint=hint
    )


def _fit_bounds(pairs, depth_rows, qty_rows) -> ScalerBounds:
    def span(values, fallback=(0.0, 1.0)):
        vals = list(values)
        if not vals:
            return fallback
        return float(min(vals)), float(max(vals))

    qty = [r.action.quantity for r in qty_rows]
    states = [p.window[-1] for p in pairs]
    return ScalerBounds(
        depth=span(r.action.depth for r in depth_rows),
        cancel_depth=span(
            p.action.cancel_depth
            for p in pairs
            if p.action.cancel_depth is not None
        ),
        qty_x=span(q for q in qty if q % 100 != 0),
        qty_100x=span(q // 100 for q in qty if q % 100 == 0),
        v1=span(s.v1 for s in states),
        v5=span(s.v5 for s in states),
        spread=span(s.spread for s in states),
    )


# ---------------------------------------------------------------------------
# sampling


def sample_action(
    params: ExplicitParams,
    window: tuple[MarketState, ...],
    rng: np.random.Generator,
    queue_len_fn=None,
) -> TimedAction:
    """Draw the next event; conditioning reads the freshest state only.

    `queue_len_fn(side, cancel_depth) -> int` supplies the live queue
    length for cancel coordinates; without it the fitted hint is used.
    """
    state = window[-1]
    u = rng.random()
    acc = 0.0
    kind = TYPE_ORDER[-1]
    for k, p in zip(TYPE_ORDER, params.type_probs):
        acc += p
        if u < acc:
            kind = k
            break

    p_sell = logistic_prob(params.side_coefs[kind], (state.i5,))
    side = Side.ASK if rng.random() < p_sell else Side.BID

    depth = quantity = cancel_depth = queue_position = None
    if kind in (ActionKind.ADD_LIMIT, ActionKind.REPLACE):
        depth = _sample_depth(params.depth, state, rng)
    if kind in (ActionKind.ADD_LIMIT, ActionKind.MARKET, ActionKind.REPLACE):
        quantity = params.quantity.sample(rng)
    if kind in (ActionKind.CANCEL, ActionKind.REPLACE):
        model = params.cancels[kind]
        cancel_depth = sample_count(model.depth, rng)
        if queue_len_fn is not None:
            queue_len = queue_len_fn(side, cancel_depth)
        else:
            queue_len = model.queue_len_hint
        queue_position = sample_beta_binomial(
            max(queue_len, 1) - 1, model.queue_alpha, model.queue_beta, rng
        )

    action = Action(
        kind,
        side,
        depth=depth,
        quantity=quantity,
        cancel_depth=cancel_depth,
        queue_position=queue_position,
    )
    dt = sample_interarrival(params.interarrival, rng)
    return TimedAction(action, dt)


def _sample_depth(model: DepthModel, state: MarketState, rng) -> int:
    if model.neg_max > 0:
        p_neg = logistic_prob(model.neg_coefs, (state.spread, state.i5))
        if rng.random() < p_neg:
            mag = 1 + sample_beta_binomial(
                model.neg_max - 1, model.neg_alpha, model.neg_beta, rng
            )
            return -mag
    return model.sample_positive(rng)


class ExplicitAgent:
    """WorldAgent adapter; binds fitted parameters to a live book."""

    def __init__(self, params: ExplicitParams, book=None):
        self.params = params
        self.book = book

    def _queue_len(self, side: Side, cancel_depth: int) -> int:
        best = self.book.best_price(side)
        if best is None:
            return 0
        price = best - cancel_depth if side is Side.BID else best + cancel_depth
        return len(self.book.level_queue(side, price))

    def next(self, window, rng: np.random.Generator) -> TimedAction:
        fn = self._queue_len if self.book is not None else None
        return sample_action(self.params, window, rng, queue_len_fn=fn)


# ---------------------------------------------------------------------------
# persistence


def _count_to_dict(m: CountModel) -> dict:
    if m.family == "poisson":
        return {"family": "poisson", "mean": m.mean}
    return {"family": "negbinom", "r": m.r, "p": m.p}


def _count_from_dict(d: dict) -> CountModel:
    if d["family"] == "poisson":
        return CountModel.poisson(d["mean"])
    return CountModel.negbinom(d["r"], d["p"])


def to_dict(params: ExplicitParams) -> dict:
    d = params.depth
    inter = params.interarrival
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "type_probs": list(params.type_probs),
        "side_coefs": {k.name: list(v) for k, v in params.side_coefs.items()},
        "depth": {
            "neg_coefs": list(d.neg_coefs),
            "neg_alpha": d.neg_alpha,
            "neg_beta": d.neg_beta,
            "neg_max": d.neg_max,
            "pos_values": list(d.pos_values),
            "pos_probs": list(d.pos_probs),
            "tail_lo": d.tail_lo,
            "tail_hi": d.tail_hi,
            "tail_prob": d.tail_prob,
        },
        "quantity": {
            "p_hundred": params.quantity.p_hundred,
            "hundreds": _count_to_dict(params.quantity.hundreds),
            "other": _count_to_dict(params.quantity.other),
        },
        "cancels": {
            k.name: {
                "depth": _count_to_dict(c.depth),
                "queue_alpha": c.queue_alpha,
                "queue_beta": c.queue_beta,
                "queue_len_hint": c.queue_len_hint,
            }
            for k, c in params.cancels.items()
        },
        "interarrival": (
            {"family": "constant", "value": inter.value}
            if isinstance(inter, ConstantParams)
            else {"family": "gamma", "shape": inter.shape, "scale": inter.scale}
        ),
        "bounds": params.bounds.to_dict(),
        "meta": params.meta,
    }


def from_dict(doc: dict) -> ExplicitParams:
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError("not a model file")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')!r}")
    d = doc["depth"]
    inter = doc["interarrival"]
    return ExplicitParams(
        type_probs=tuple(doc["type_probs"]),
        side_coefs={
            ActionKind[k]: tuple(v) for k, v in doc["side_coefs"].items()
        },
        depth=DepthModel(
            neg_coefs=tuple(d["neg_coefs"]),
            neg_alpha=d["neg_alpha"],
            neg_beta=d["neg_beta"],
            neg_max=d["neg_max"],
            pos_values=tuple(d["pos_values"]),
            pos_probs=tuple(d["pos_probs"]),
            tail_lo=d["tail_lo"],
            tail_hi=d["tail_hi"],
            tail_prob=d["tail_prob"],
        ),
        quantity=QuantityModel(
            p_hundred=doc["quantity"]["p_hundred"],
            hundreds=_count_from_dict(doc["quantity"]["hundreds"]),
            other=_count_from_dict(doc["quantity"]["other"]),
        ),
        cancels={
            ActionKind[k]: CancelModel(
                depth=_count_from_dict(c["depth"]),
                queue_alpha=c["queue_alpha"],
                queue_beta=c["queue_beta"],
                queue_len_hint=c["queue_len_hint"],
            )
            for k, c in doc["cancels"].items()
        },
        interarrival=(
            ConstantParams(inter["value"])
            if inter["family"] == "constant"
            else GammaParams(inter["shape"], inter["scale"])
        ),
        bounds=ScalerBounds.from_dict(doc["bounds"]),
        meta=doc.get("meta", {}),
    )


def save_model(params: ExplicitParams, path: str | Path) -> None:
    Path(path).write_text(json.dumps(to_dict(params), indent=2) + "\n")


def load_model(path: str | Path) -> ExplicitParams:
    return from_dict(json.loads(Path(path).read_text()))


def dataset_fingerprint(path: str | Path) -> str:
    """Stable identifier for the data a model was fitted from."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]
