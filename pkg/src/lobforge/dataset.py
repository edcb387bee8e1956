"""Training datasets: replayed flow as (state window, action) pairs.

Each applied action message yields one pair whose window holds the T
states preceding the action, so fitting sees exactly the conditioning a
closed-loop agent will see.  Execute rows never form pairs.  Pairs also
carry the live queue length behind cancel coordinates, which the
queue-position fit normalises by, and a degenerate flag for depths that
had no reference quote.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from lobforge.actions import Action, ActionKind
from lobforge.codec import ScalerBounds, encode, normalize_state
from lobforge.flowio import FlowReader, FlowRecord, VERSION_LINE
from lobforge.marketstate import FEATURE_NAMES, MarketState, StateTracker
from lobforge.orderbook import Book, Side
from lobforge.replay import Replayer, market_sign


@dataclass(frozen=True)
class StateActionPair:
    window: tuple[MarketState, ...]
    action: Action
    dt_ns: int
    queue_len: int | None = None
    degenerate: bool = False


def extract_pairs(
    records: Iterable[FlowRecord], window_length: int
) -> tuple[list[StateActionPair], Replayer]:
    """Replay records into pairs; the replayer is returned for its counters."""
    book = Book()
    tracker = StateTracker(book, window_length)
    replayer = Replayer(book)
    pairs: list[StateActionPair] = []
    last_ts: int | None = None
    for rec in records:
        if rec.msg == "E":
            replayer.step(rec)
            continue
        window = tracker.window.snapshot()
        result = replayer.step(rec)
        if not result.applied:
            continue
        tracker.observe(market_sign(result.action))
        pairs.append(
            StateActionPair(
                window=window,
                action=result.action,
                dt_ns=rec.ts_ns - last_ts if last_ts is not None else 0,
                queue_len=result.queue_len,
                degenerate=result.degenerate,
            )
        )
        last_ts = rec.ts_ns
    return pairs, replayer


def extract_dataset(path: str | Path, window_length: int) -> list[StateActionPair]:
    pairs, _ = extract_pairs(FlowReader(path), window_length)
    return pairs


# ---------------------------------------------------------------------------
# dataset files

_ACTION_COLUMNS = (
    "dt_ns",
    "kind",
    "side",
    "depth",
    "quantity",
    "cancel_depth",
    "queue_position",
    "queue_len",
    "degenerate",
)


def _window_columns(length: int) -> list[str]:
    return [f"s{j}_{name}" for j in range(length) for name in FEATURE_NAMES]


def write_dataset(
    pairs: list[StateActionPair], path: str | Path, window_length: int
) -> int:
    """Raw-form dataset CSV: action coordinates plus the flattened window."""
    header = ",".join(_ACTION_COLUMNS) + "," + ",".join(_window_columns(window_length))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(VERSION_LINE + "\n")
        fh.write(header + "\n")
        for p in pairs:
            a = p.action
            cells = [
                str(p.dt_ns),
                a.kind.value,
                a.side.value,
                "" if a.depth is None else str(a.depth),
                "" if a.quantity is None else str(a.quantity),
                "" if a.cancel_depth is None else str(a.cancel_depth),
                "" if a.queue_position is None else str(a.queue_position),
                "" if p.queue_len is None else str(p.queue_len),
                "1" if p.degenerate else "0",
            ]
            for state in p.window:
                cells.extend(repr(x) for x in state)
            fh.write(",".join(cells) + "\n")
    return len(pairs)


def read_dataset(path: str | Path) -> tuple[list[StateActionPair], int]:
    """Inverse of write_dataset; returns pairs and the window length."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        version = fh.readline().rstrip("\n")
        if version != VERSION_LINE:
            raise ValueError(f"expected {VERSION_LINE!r}, got {version!r}")
        header = fh.readline().rstrip("\n").split(",")
        n_action = len(_ACTION_COLUMNS)
        n_window = len(header) - n_action
        if n_window <= 0 or n_window % len(FEATURE_NAMES):
            raise ValueError("malformed dataset header")
        length = n_window // len(FEATURE_NAMES)
        if header != list(_ACTION_COLUMNS) + _window_columns(length):
            raise ValueError("dataset header mismatch")
        pairs = []
        for line in fh:
            cells = line.rstrip("\n").split(",")
            opt = lambda c: None if c == "" else int(c)
            action = Action(
                kind=ActionKind(cells[1]),
                side=Side(cells[2]),
                depth=opt(cells[3]),
                quantity=opt(cells[4]),
                cancel_depth=opt(cells[5]),
                queue_position=opt(cells[6]),
            )
            floats = [float(c) for c in cells[n_action:]]
            window = tuple(
                MarketState(*floats[j * 9 : (j + 1) * 9]) for j in range(length)
            )
            pairs.append(
                StateActionPair(
                    window=window,
                    action=action,
                    dt_ns=int(cells[0]),
                    queue_len=opt(cells[7]),
                    degenerate=cells[8] == "1",
                )
            )
    return pairs, length


def write_codec_dataset(
    pairs: list[StateActionPair],
    path: str | Path,
    window_length: int,
    bounds: ScalerBounds,
) -> int:
    """Vector-form dataset: one row per encoded vector, windows normalised.

    Replaces expand to their cancel/add vector pair sharing one window;
    the add half gets a 1ns wait.  A sidecar JSON carries the window
    length and bounds so consumers need nothing else.
    """
    header = ",".join(
        ["dt_ns"]
        + [f"v{i}" for i in range(7)]
        + [f"w{j}" for j in range(window_length * len(FEATURE_NAMES))]
    )
    rows = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(VERSION_LINE + "\n")
        fh.write(header + "\n")
        for p in pairs:
            if p.degenerate:
                continue
            window_cells = [
                repr(x) for state in p.window for x in normalize_state(state, bounds)
            ]
            dt = p.dt_ns
            for vec in encode(p.action, bounds):
                cells = [str(dt)] + [repr(v) for v in vec] + window_cells
                fh.write(",".join(cells) + "\n")
                rows += 1
                dt = 1  # the add half of a replace follows immediately
    meta = {
        "T": window_length,
        "bounds": bounds.to_dict(),
        "features": list(FEATURE_NAMES),
        "vector_rows": rows,
    }
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    return rows
