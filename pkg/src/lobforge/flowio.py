"""Canonical order-flow file format.

One CSV per session: a `#v1` version comment, a fixed header, then one
row per message.  Message kinds: A add, E execute, C cancel, R replace,
M market.  Execute rows record fills against resting orders; they are
outputs of matching, never inputs to it, so replay verifies rather than
applies them.  All text is UTF-8 with LF newlines; prices are integer
ticks and timestamps integer nanoseconds since midnight.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from lobforge.orderbook import Side

VERSION_LINE = "#v1"
HEADER = "ts_ns,msg,order_id,side,price_ticks,qty,ref_order_id,new_price_ticks,new_qty"
_COLUMNS = HEADER.split(",")

KINDS = frozenset("AECRM")


class FlowFormatError(ValueError):
    """The file violates the format in a way a reader must not paper over."""


@dataclass(frozen=True)
class FlowRecord:
    ts_ns: int
    msg: str
    order_id: int | None = None
    side: Side | None = None
    price_ticks: int | None = None
    qty: int | None = None
    ref_order_id: int | None = None
    new_price_ticks: int | None = None
    new_qty: int | None = None

    def to_row(self) -> str:
        def cell(v) -> str:
            if v is None:
                return ""
            if isinstance(v, Side):
                return v.value
            return str(v)

        return ",".join(
            (
                str(self.ts_ns),
                self.msg,
                cell(self.order_id),
                cell(self.side),
                cell(self.price_ticks),
                cell(self.qty),
                cell(self.ref_order_id),
                cell(self.new_price_ticks),
                cell(self.new_qty),
            )
        )


def _parse_int(cell: str, column: str, line_no: int) -> int | None:
    if cell == "":
        return None
    try:
        return int(cell)
    except ValueError:
        raise FlowFormatError(f"line {line_no}: {column} not an integer: {cell!r}")


def write_flow(records: Iterable[FlowRecord], path: str | Path) -> int:
    """Write records in canonical form; returns the number written."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(VERSION_LINE + "\n")
        fh.write(HEADER + "\n")
        for rec in records:
            fh.write(rec.to_row() + "\n")
            count += 1
    return count


class FlowReader:
    """Validating streamed reader.

    Hard errors (bad version, header, kinds, timestamps running backwards)
    raise FlowFormatError.  Records whose ref_order_id does not resolve to
    a previously seen, still-live order are skipped and counted, since one
    bad reference must not poison a session file.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.skipped_unresolved = 0
        self.records_read = 0

    def __iter__(self) -> Iterator[FlowRecord]:
        with open(self.path, "r", encoding="utf-8", newline="") as fh:
            yield from self._parse(fh)

    def _parse(self, fh: io.TextIOBase) -> Iterator[FlowRecord]:
        version = fh.readline().rstrip("\n")
        if version != VERSION_LINE:
            raise FlowFormatError(f"expected {VERSION_LINE!r}, got {version!r}")
        header = fh.readline().rstrip("\n")
        if header != HEADER:
            raise FlowFormatError("header mismatch")

        live: dict[int, int] = {}  # order id -> remaining qty
        last_ts = None
        for line_no, line in enumerate(fh, start=3):
            line = line.rstrip("\n")
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != len(_COLUMNS):
                raise FlowFormatError(
                    f"line {line_no}: expected {len(_COLUMNS)} cells, got {len(cells)}"
                )
            ts = _parse_int(cells[0], "ts_ns", line_no)
            if ts is None:
                raise FlowFormatError(f"line {line_no}: ts_ns empty")
            if last_ts is not None and ts < last_ts:
                raise FlowFormatError(
                    f"line {line_no}: timestamp regression {ts} < {last_ts}"
                )
            last_ts = ts
            msg = cells[1]
            if msg not in KINDS:
                raise FlowFormatError(f"line {line_no}: unknown msg kind {msg!r}")
            side = None
            if cells[3]:
                try:
                    side = Side(cells[3])
                except ValueError:
                    raise FlowFormatError(f"line {line_no}: bad side {cells[3]!r}")
            rec = FlowRecord(
                ts_ns=ts,
                msg=msg,
                order_id=_parse_int(cells[2], "order_id", line_no),
                side=side,
                price_ticks=_parse_int(cells[4], "price_ticks", line_no),
                qty=_parse_int(cells[5], "qty", line_no),
                ref_order_id=_parse_int(cells[6], "ref_order_id", line_no),
                new_price_ticks=_parse_int(cells[7], "new_price_ticks", line_no),
                new_qty=_parse_int(cells[8], "new_qty", line_no),
            )
            if not self._track(rec, live):
                self.skipped_unresolved += 1
                continue
            self.records_read += 1
            yield rec

    @staticmethod
    def _track(rec: FlowRecord, live: dict[int, int]) -> bool:
        """Maintain the live-order view; False when a ref fails to resolve."""
        if rec.msg == "A":
            if rec.order_id is not None and rec.qty:
                live[rec.order_id] = rec.qty
            return True
        if rec.msg == "M":
            return True
        ref = rec.ref_order_id
        if ref is None or ref not in live:
            return False
        if rec.msg == "E":
            remaining = live[ref] - (rec.qty or 0)
            if remaining <= 0:
                del live[ref]
            else:
                live[ref] = remaining
        elif rec.msg == "C":
            del live[ref]
        elif rec.msg == "R":
            del live[ref]
            if rec.order_id is not None and rec.new_qty:
                live[rec.order_id] = rec.new_qty
        return True


def read_flow(path: str | Path) -> tuple[list[FlowRecord], "FlowReader"]:
    """Read a whole file; returns the records plus the reader for its counters."""
    reader = FlowReader(path)
    return list(reader), reader
