"""Line-delimited JSON framing shared by both simulator conversations.

The agent side answers hello/next requests on its standard streams; the
step client spawns a `lobforge step-server` and drives it with
reset/step requests during unrolled training.  One message per line,
blocking reads, and any undecodable line kills the conversation.
"""

from __future__ import annotations

import json
import shlex
import subprocess


class ProtocolError(RuntimeError):
    pass


def send(fh, message: dict) -> None:
    try:
        fh.write((json.dumps(message) + "\n").encode("utf-8"))
        fh.flush()
    except (BrokenPipeError, ValueError) as exc:
        raise ProtocolError(f"peer is gone: {exc}") from exc


def recv(fh) -> dict:
    line = fh.readline()
    if not line:
        raise ProtocolError("peer closed the stream mid-conversation")
    text = line.decode("utf-8", errors="replace").strip()
    if not text:
        return recv(fh)
    try:
        message = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"line is not valid JSON: {text!r}") from exc
    if not isinstance(message, dict) or "type" not in message:
        raise ProtocolError(f"message has no type: {text!r}")
    return message


class StepClient:
    """Drives a step server: reset to a seed, then apply one action at a time.

    The server opens with a hello naming its window length and bounds;
    both are checked against what the training data was exported with,
    since a mismatch would silently desynchronise conditioning.
    """

    def __init__(self, command: str, expect_T: int, expect_bounds: dict):
        self.proc = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            bufsize=0,
        )
        self._r = self.proc.stdout
        self._w = self.proc.stdin
        try:
            hello = recv(self._r)
            if hello.get("type") != "hello":
                raise ProtocolError(f"expected hello, got {hello.get('type')!r}")
            if hello.get("T") != expect_T:
                raise ProtocolError(
                    f"simulator window length {hello.get('T')} != dataset {expect_T}"
                )
            if hello.get("bounds") != expect_bounds:
                raise ProtocolError("simulator bounds differ from dataset bounds")
            send(self._w, {"type": "ack"})
        except ProtocolError:
            self.proc.kill()
            self.proc.wait()
            raise

    def _state(self) -> dict:
        reply = recv(self._r)
        if reply.get("type") == "error":
            raise ProtocolError(f"simulator error: {reply.get('msg')}")
        if reply.get("type") != "state":
            raise ProtocolError(f"expected state, got {reply.get('type')!r}")
        return reply

    def reset(self, seed: int) -> list[list[float]]:
        send(self._w, {"type": "reset", "seed": seed})
        return self._state()["window"]

    def step(self, vector: list[float], dt_ns: int) -> tuple[list[list[float]], bool]:
        send(self._w, {"type": "step", "vector": vector, "dt_ns": dt_ns})
        reply = self._state()
        return reply["window"], bool(reply.get("done"))

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                send(self._w, {"type": "close"})
            except ProtocolError:
                pass
            try:
                self.proc.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
