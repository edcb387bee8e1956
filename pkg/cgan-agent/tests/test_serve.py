import json
import os
import threading

import pytest

from cgan_agent.protocol import ProtocolError, recv, send
from cgan_agent.serve import AgentSession, serve

RAW_STATE = [0.2, -0.1, 0.05, 0.0, 420.0, 1800.0, 2.0, 0.0005, -0.001]
WINDOW = [list(RAW_STATE) for _ in range(5)]


def _hello(checkpoint_dir):
    doc = json.loads((checkpoint_dir / "config.json").read_text())
    bounds = json.loads((checkpoint_dir / "bounds.json").read_text())
    return {"type": "hello", "T": doc["T"], "bounds": bounds}


def test_responses_are_legal_actions(checkpoint):
    out_dir, _ = checkpoint
    session = AgentSession(out_dir, seed=5)
    for _ in range(200):
        vector, dt_ns = session.respond(WINDOW)
        assert len(vector) == 7
        assert all(-1.0 <= v <= 1.0 for v in vector[:4])
        assert vector[4] in (-1.0, 0.0, 1.0)
        assert vector[5] in (-1.0, 0.0, 1.0)
        assert vector[6] in (-1.0, 1.0)
        if vector[5] == 1.0:  # cancels size nothing and add nowhere
            assert vector[0] == 0.0 and vector[2:5] == [0.0, 0.0, 0.0]
        else:
            assert vector[1] == 0.0
            if vector[5] == -1.0:
                assert vector[0] == 0.0
        assert isinstance(dt_ns, int) and dt_ns >= 1
    assert session.served == 200


def test_hello_must_match_the_checkpoint(checkpoint):
    out_dir, _ = checkpoint
    session = AgentSession(out_dir)
    good = _hello(out_dir)

    ack = session.check_hello(good)
    assert ack["type"] == "ack"
    assert ack["T"] == good["T"]
    assert ack["bounds"] == good["bounds"]

    with pytest.raises(ProtocolError, match="window length"):
        session.check_hello({**good, "T": 9})
    skewed = {**good["bounds"], "depth": [-50.0, 50.0]}
    with pytest.raises(ProtocolError, match="bounds"):
        session.check_hello({**good, "bounds": skewed})


class _Wire:
    """Bidirectional pipe pair with serve() running on the far side."""

    def __init__(self, checkpoint_dir, seed=0):
        c2s_r, c2s_w = os.pipe()
        s2c_r, s2c_w = os.pipe()
        self.to_server = os.fdopen(c2s_w, "wb")
        self.from_server = os.fdopen(s2c_r, "rb")
        self.rc = []
        self.thread = threading.Thread(
            target=lambda: self.rc.append(
                serve(checkpoint_dir, seed,
                      os.fdopen(c2s_r, "rb"), os.fdopen(s2c_w, "wb"))
            )
        )
        self.thread.start()

    def finish(self) -> int:
        if not self.to_server.closed:
            self.to_server.close()
        self.thread.join(timeout=30)
        self.from_server.close()
        return self.rc[0]


def test_serve_answers_until_the_simulator_hangs_up(checkpoint):
    out_dir, _ = checkpoint
    wire = _Wire(out_dir, seed=0)
    send(wire.to_server, _hello(out_dir))
    assert recv(wire.from_server)["type"] == "ack"
    for _ in range(10):
        send(wire.to_server, {"type": "next", "window": WINDOW, "ts": 0})
        reply = recv(wire.from_server)
        assert reply["type"] == "action"
        assert len(reply["vector"]) == 7
        assert reply["dt_ns"] >= 1
    assert wire.finish() == 0


def test_serve_reports_garbage_then_exits(checkpoint):
    out_dir, _ = checkpoint
    wire = _Wire(out_dir)
    send(wire.to_server, _hello(out_dir))
    assert recv(wire.from_server)["type"] == "ack"
    wire.to_server.write(b"BOOM\n")
    wire.to_server.flush()
    reply = recv(wire.from_server)
    assert reply["type"] == "error"
    assert "JSON" in reply["msg"]
    assert wire.finish() == 1


def test_serve_rejects_unknown_request_types(checkpoint):
    out_dir, _ = checkpoint
    wire = _Wire(out_dir)
    send(wire.to_server, _hello(out_dir))
    assert recv(wire.from_server)["type"] == "ack"
    send(wire.to_server, {"type": "bogus"})
    reply = recv(wire.from_server)
    assert reply["type"] == "error"
    assert "bogus" in reply["msg"]
    assert wire.finish() == 1


def test_serve_demands_hello_first(checkpoint):
    out_dir, _ = checkpoint
    wire = _Wire(out_dir)
    send(wire.to_server, {"type": "next", "window": WINDOW, "ts": 0})
    reply = recv(wire.from_server)
    assert reply["type"] == "error"
    assert "hello" in reply["msg"]
    assert wire.finish() == 1


def test_fixed_seed_reproduces_the_stream(checkpoint):
    out_dir, _ = checkpoint
    streams = []
    for _ in range(2):
        session = AgentSession(out_dir, seed=9)
        streams.append([session.respond(WINDOW) for _ in range(50)])
    assert streams[0] == streams[1]
