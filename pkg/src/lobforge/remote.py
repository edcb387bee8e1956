"""Line-delimited JSON bridge between the kernel and an external agent.

Two directions share one message framing.  Outbound, RemoteAgent makes
any process that speaks the protocol usable as the world agent: the
simulator opens with a handshake carrying the window length and the
scaler bounds, then issues one request per event and expects one action
vector back.  Inbound, StepServer drives a kernel on behalf of a remote
trainer, which needs the simulator in the loop but owns the actions
itself.  Both directions are strictly synchronous: one outstanding
request, every violation aborts the run.

Messages are single lines of JSON.  Simulator to agent:

    {"type": "hello", "T": 5, "bounds": {...}}      handshake, once
    {"type": "next", "window": [[9 floats] x T], "ts": ns}

Agent to simulator:

    {"type": "ack", ...}                            handshake reply
    {"type": "action", "vector": [7 floats], "dt_ns": 12000000}
    {"type": "error", "msg": "..."}                 aborts the run

Trainer to StepServer, after the same handshake:

    {"type": "reset", "seed": 7}
    {"type": "step", "vector": [7 floats], "dt_ns": 12000000}
    {"type": "close"}

and the server answers each reset/step with

    {"type": "state", "window": [[9 floats] x T], "ts": ns,
     "applied": bool, "done": bool}

Window states ride the wire raw; the bounds from the handshake let the
peer normalize them the same way the dataset exporter does.
"""

from __future__ import annotations

import dataclasses
import json
import os
import select
import time
from typing import Callable

import numpy as np

from lobforge.actions import TimedAction
from lobforge.codec import ScalerBounds, decode, harden, unscale
from lobforge.kernel import SOURCE_WORLD, Kernel, SimConfig
from lobforge.orderbook import Book, Side

DEFAULT_TIMEOUT_S = 10.0


class ProtocolError(RuntimeError):
    """The peer broke the wire protocol; the simulation cannot continue."""


class LineChannel:
    """One line of JSON per message over a pipe pair or a socket.

    The channel owns its read stream: it consumes raw bytes via the file
    descriptor, so nothing else may read from the same source.
    """

    def __init__(
        self,
        read_fd: int,
        write: Callable[[bytes], None],
        read: Callable[[int], bytes] | None = None,
    ):
        self._read_fd = read_fd
        self._write = write
        self._read = read if read is not None else (lambda n: os.read(read_fd, n))
        self._buf = bytearray()

    @classmethod
    def over_pipes(cls, rfile, wfile) -> "LineChannel":
        def write(data: bytes) -> None:
            wfile.write(data)
            wfile.flush()

        return cls(rfile.fileno(), write)

    @classmethod
    def over_socket(cls, sock) -> "LineChannel":
        return cls(sock.fileno(), sock.sendall, lambda n: sock.recv(n))

    def send(self, obj: dict) -> None:
        line = json.dumps(obj, separators=(",", ":")) + "\n"
        try:
            self._write(line.encode("utf-8"))
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"peer went away while sending: {exc}") from exc

    def recv(self, timeout_s: float | None = DEFAULT_TIMEOUT_S) -> dict:
        """Next message; raises ProtocolError on timeout, EOF or bad JSON."""
        deadline = None if timeout_s is None else time.monotonic() + timeout_s
        while True:
            nl = self._buf.find(b"\n")
            if nl >= 0:
                line = bytes(self._buf[:nl])
                del self._buf[: nl + 1]
                if not line.strip():
                    continue
                return self._parse(line)
            if deadline is not None:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise ProtocolError(f"no response within {timeout_s:g}s")
                ready, _, _ = select.select([self._read_fd], [], [], remaining)
                if not ready:
                    raise ProtocolError(f"no response within {timeout_s:g}s")
            chunk = self._read(65536)
            if not chunk:
                raise ProtocolError("peer closed the stream mid-conversation")
            self._buf.extend(chunk)

    @staticmethod
    def _parse(line: bytes) -> dict:
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"line is not valid JSON: {line!r}") from exc
        if not isinstance(msg, dict) or "type" not in msg:
            raise ProtocolError(f"message has no type: {line!r}")
        return msg


def _window_payload(window) -> list[list[float]]:
    return [[float(x) for x in state] for state in window]


def _live_queue_len(book: Book, vector, bounds: ScalerBounds) -> int:
    """Queue length at the level a CANCEL vector points at, right now."""
    side = Side.BID if harden(float(vector[6]), (-1.0, 1.0)) > 0 else Side.ASK
    depth = max(0, unscale(float(vector[1]), *bounds.cancel_depth))
    best = book.best_price(side)
    if best is None:
        return 0
    price = best - depth if side is Side.BID else best + depth
    return len(book.level_queue(side, price))


def _decode_action(msg: dict, bounds: ScalerBounds, book: Book | None,
                   rng: np.random.Generator, queue_bb: tuple[float, float]):
    vector = msg.get("vector")
    if not isinstance(vector, list) or len(vector) != 7:
        raise ProtocolError(f"action vector must be 7 floats, got {vector!r}")
    dt_ns = msg.get("dt_ns")
    if not isinstance(dt_ns, int) or isinstance(dt_ns, bool) or dt_ns < 1:
        raise ProtocolError(f"dt_ns must be a positive integer, got {dt_ns!r}")
    queue_len = _live_queue_len(book, vector, bounds) if book is not None else 0
    action = decode(vector, bounds, queue_len, rng, queue_bb)
    return TimedAction(action=action, dt_ns=dt_ns)


class RemoteAgent:
    """WorldAgent that forwards every decision to a protocol peer."""

    def __init__(
        self,
        channel: LineChannel,
        bounds: ScalerBounds,
        window_length: int,
        book: Book | None = None,
        clock_fn: Callable[[], int] | None = None,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        queue_bb: tuple[float, float] = (1.0, 1.0),
    ):
        self.channel = channel
        self.bounds = bounds
        self.book = book
        self.clock_fn = clock_fn
        self.timeout_s = timeout_s
        self.queue_bb = queue_bb
        self.requests = 0
        channel.send({"type": "hello", "T": window_length, "bounds": bounds.to_dict()})
        reply = channel.recv(timeout_s)
        if reply.get("type") != "ack":
            raise ProtocolError(f"expected ack to hello, got {reply!r}")

    def next(self, window, rng: np.random.Generator) -> TimedAction:
        ts = self.clock_fn() if self.clock_fn is not None else 0
        self.channel.send(
            {"type": "next", "window": _window_payload(window), "ts": ts}
        )
        msg = self.channel.recv(self.timeout_s)
        self.requests += 1
        if msg.get("type") == "error":
            raise ProtocolError(f"agent reported an error: {msg.get('msg')!r}")
        if msg.get("type") != "action":
            raise ProtocolError(f"expected an action, got {msg!r}")
        return _decode_action(msg, self.bounds, self.book, rng, self.queue_bb)


def connect_world(kernel: Kernel, channel: LineChannel, bounds: ScalerBounds,
                  timeout_s: float = DEFAULT_TIMEOUT_S,
                  queue_bb: tuple[float, float] = (1.0, 1.0)) -> RemoteAgent:
    """Handshake over the channel and install the peer as the world agent."""
    agent = RemoteAgent(
        channel,
        bounds,
        window_length=kernel.config.window_length,
        book=kernel.book,
        clock_fn=lambda: kernel.clock,
        timeout_s=timeout_s,
        queue_bb=queue_bb,
    )
    kernel.agent = agent
    return agent


# ----------------------------------------------------------------------
# serving the kernel to a remote trainer


class _QueuedAgent:
    """World agent fed one action at a time by the step server."""

    def __init__(self):
        self.pending: TimedAction | None = None

    def next(self, window, rng) -> TimedAction:
        if self.pending is None:
            raise ProtocolError("kernel stepped without a queued action")
        timed, self.pending = self.pending, None
        return timed


class StepServer:
    """Answers reset/step requests by advancing a kernel one event at a time.

    Each reset builds a fresh kernel from the configured template with the
    requested seed, replays the warm-up, and hands back the opening window.
    Each step decodes the client's vector against the live book and applies
    it as the next world action; `applied` reports whether the book accepted
    it, `done` whether the session clock ran out.
    """

    def __init__(self, channel: LineChannel, config: SimConfig,
                 bounds: ScalerBounds, timeout_s: float | None = None):
        self.channel = channel
        self.config = config
        self.bounds = bounds
        self.timeout_s = timeout_s
        self.kernel: Kernel | None = None
        self._agent = _QueuedAgent()

    def _state_reply(self, applied: bool) -> dict:
        k = self.kernel
        return {
            "type": "state",
            "window": _window_payload(k.window()),
            "ts": k.clock,
            "applied": applied,
            "done": k.clock >= k.config.session_end,
        }

    def _reset(self, msg: dict) -> dict:
        seed = msg.get("seed")
        if not isinstance(seed, int):
            raise ProtocolError(f"reset needs an integer seed, got {seed!r}")
        config = dataclasses.replace(self.config, seed=seed)
        self.kernel = Kernel(config, world_agent_factory=lambda book: self._agent)
        self.kernel.warmup()
        return self._state_reply(applied=False)

    def _step(self, msg: dict) -> dict:
        if self.kernel is None:
            raise ProtocolError("step before reset")
        k = self.kernel
        self._agent.pending = _decode_action(
            msg, self.bounds, k.book, k.codec_rng, (1.0, 1.0)
        )
        before = k.counts[SOURCE_WORLD]
        k.step()
        return self._state_reply(applied=k.counts[SOURCE_WORLD] > before)

    def serve(self) -> int:
        """Handle requests until a close message or EOF; returns the count."""
        self.channel.send(
            {
                "type": "hello",
                "T": self.config.window_length,
                "bounds": self.bounds.to_dict(),
            }
        )
        reply = self.channel.recv(self.timeout_s)
        if reply.get("type") != "ack":
            raise ProtocolError(f"expected ack to hello, got {reply!r}")
        handled = 0
        while True:
            try:
                msg = self.channel.recv(self.timeout_s)
            except ProtocolError as exc:
                if "closed the stream" in str(exc):
                    return handled
                raise
            handled += 1
            if msg["type"] == "close":
                return handled
            if msg["type"] == "reset":
                self.channel.send(self._reset(msg))
            elif msg["type"] == "step":
                self.channel.send(self._step(msg))
            else:
                self.channel.send(
                    {"type": "error", "msg": f"unknown request type {msg['type']!r}"}
                )
                raise ProtocolError(f"unknown request type {msg['type']!r}")
