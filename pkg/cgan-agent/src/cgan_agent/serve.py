"""Serving: answer the simulator's next-action requests from a checkpoint.

The simulator opens with hello naming its window length and bounds;
both must match what the checkpoint was trained with, otherwise the
conditioning would be scaled differently than in training.  Every
request samples fresh noise, evaluates the generator hard (categorical
slots snap to legal values), and draws the wait from the gamma fitted
alongside the training data.  A fixed seed reproduces the whole
response stream.  Protocol violations get one error reply, then exit.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import torch

from cgan_agent.data import normalize_window
from cgan_agent.gan import load_checkpoint
from cgan_agent.protocol import ProtocolError, recv, send

log = logging.getLogger(__name__)


class AgentSession:
    def __init__(self, checkpoint_dir: str | Path, seed: int = 0):
        self.generator, _, _, self.meta, self.gamma = load_checkpoint(checkpoint_dir)
        self.torch_gen = torch.Generator().manual_seed(seed)
        self.rng = np.random.default_rng(seed)
        self.served = 0

    def check_hello(self, msg: dict) -> dict:
        if msg.get("T") != self.meta.T:
            raise ProtocolError(
                f"simulator window length {msg.get('T')} != checkpoint {self.meta.T}"
            )
        if msg.get("bounds") != {k: list(v) for k, v in self.meta.bounds.items()}:
            raise ProtocolError("simulator bounds differ from checkpoint bounds")
        return {
            "type": "ack",
            "T": self.meta.T,
            "bounds": {k: list(v) for k, v in self.meta.bounds.items()},
        }

    def respond(self, window: list[list[float]]) -> tuple[list[float], int]:
        cond = torch.from_numpy(normalize_window(window, self.meta)).unsqueeze(0)
        vector = self.generator.sample(cond, generator=self.torch_gen)[0]
        dt_ns = max(1, int(self.rng.gamma(*self.gamma)))
        self.served += 1
        return [float(x) for x in vector], dt_ns


def serve(checkpoint_dir: str | Path, seed: int, rfile, wfile) -> int:
    """Blocking request loop over a stream pair; 0 on clean shutdown."""
    session = AgentSession(checkpoint_dir, seed)

    def fail(message: str) -> int:
        log.error("%s", message)
        try:
            send(wfile, {"type": "error", "msg": message})
        except ProtocolError:
            pass
        return 1

    try:
        hello = recv(rfile)
    except ProtocolError as exc:
        return fail(str(exc))
    if hello.get("type") != "hello":
        return fail(f"expected hello, got {hello.get('type')!r}")
    try:
        send(wfile, session.check_hello(hello))
    except ProtocolError as exc:
        return fail(str(exc))

    while True:
        try:
            msg = recv(rfile)
        except ProtocolError as exc:
            if "closed the stream" in str(exc):
                log.info("simulator closed after %d actions", session.served)
                return 0
            return fail(str(exc))
        if msg.get("type") != "next":
            return fail(f"unexpected request type {msg.get('type')!r}")
        try:
            vector, dt_ns = session.respond(msg["window"])
        except (KeyError, ValueError, TypeError) as exc:
            return fail(f"bad next request: {exc}")
        send(wfile, {"type": "action", "vector": vector, "dt_ns": dt_ns})
