"""Command-line entry point.

One executable, one subcommand per workflow stage: fit a model from a
flow log, simulate with it (or with a remote agent over the wire
protocol), replay a log through the matching engine, run the
participation-rate impact experiment, compute stylized-facts reports,
export training datasets, generate synthetic seed data, and serve
kernel steps to a remote trainer.

Exit codes: 0 success, 1 argument validation, 2 runtime failure.  Every
failure prints a single `error: ...` line to stderr; every successful
run starts by printing the resolved configuration and seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shlex
import socket
import subprocess
import sys
from pathlib import Path

from lobforge.dataset import extract_dataset, write_codec_dataset, write_dataset
from lobforge.explicit import ExplicitAgent, fit, load_model, save_model
from lobforge.flowio import FlowReader
from lobforge.impact import PovSpec, reference_volume, run_impact
from lobforge.kernel import Kernel, SimConfig, clock_ns
from lobforge.orderbook import Book, Side
from lobforge.remote import LineChannel, StepServer, connect_world
from lobforge.replay import Replayer
from lobforge.stylized import build_report
from lobforge.synth import SynthProfile, synthesize

log = logging.getLogger("lobforge")

NS_PER_S = 1_000_000_000

LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


class _Parser(argparse.ArgumentParser):
    """argparse, but validation failures exit 1 with an error: line."""

    def error(self, message):
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _clock(text: str) -> int:
    """HH:MM or HH:MM:SS wall-clock time to session nanoseconds."""
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise argparse.ArgumentTypeError(f"expected HH:MM, got {text!r}")
    try:
        h, m = int(parts[0]), int(parts[1])
        s = int(parts[2]) if len(parts) == 3 else 0
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HH:MM, got {text!r}")
    return clock_ns(h, m) + s * NS_PER_S


def _window(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition("-")
    if not sep:
        raise argparse.ArgumentTypeError(
            f"expected HH:MM-HH:MM window, got {text!r}"
        )
    return _clock(lo), _clock(hi)


def _announce(seed, **extra) -> None:
    print("config:", json.dumps({"seed": seed, **extra}, sort_keys=True))


def _announce_sim(config: SimConfig, **extra) -> None:
    print("config:", json.dumps({**config.describe(), **extra}, sort_keys=True))


# ----------------------------------------------------------------------
# subcommands


def _cmd_fit(args) -> int:
    _announce(None, command="fit", data=args.data, out=args.out, T=args.T)
    pairs = extract_dataset(args.data, args.T)
    params = fit(pairs)
    save_model(params, args.out)
    print(f"pairs: {len(pairs)}")
    print("type_probs:", json.dumps([round(p, 6) for p in params.type_probs]))
    for warning in params.meta.get("warnings", []):
        log.warning("%s", warning)
    print(f"model: {args.out}")
    return 0


def _build_world(args, config: SimConfig, params):
    """Kernel plus cleanup callback; wires a remote agent when asked for."""
    if args.agent_exec:
        proc = subprocess.Popen(
            shlex.split(args.agent_exec),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            bufsize=0,
        )
        kernel = Kernel(config)
        connect_world(
            kernel, LineChannel.over_pipes(proc.stdout, proc.stdin),
            params.bounds, timeout_s=args.agent_timeout,
        )

        def cleanup():
            proc.stdin.close()
            proc.terminate()
            proc.wait(5.0)

        return kernel, cleanup
    if args.agent_tcp:
        host, _, port = args.agent_tcp.rpartition(":")
        sock = socket.create_connection((host, int(port)))
        kernel = Kernel(config)
        connect_world(
            kernel, LineChannel.over_socket(sock),
            params.bounds, timeout_s=args.agent_timeout,
        )
        return kernel, sock.close
    kernel = Kernel(config, lambda book: ExplicitAgent(params, book))
    return kernel, lambda: None


def _cmd_simulate(args) -> int:
    config = SimConfig(
        seed=args.seed,
        data_path=args.data,
        warmup_until=args.warmup_until,
        session_end=args.until,
        window_length=args.T,
        max_world_actions=args.max_actions,
    )
    _announce_sim(config, command="simulate", model=args.model, out=args.out)
    params = load_model(args.model)
    kernel, cleanup = _build_world(args, config, params)
    try:
        result = kernel.run()
    finally:
        cleanup()
    rows = result.write_log(args.out)
    print("summary:", json.dumps(result.summary, sort_keys=True))
    print(f"log: {args.out} ({rows} rows)")
    return 0


def _cmd_replay(args) -> int:
    _announce(None, command="replay", data=args.data)
    book = Book()
    replayer = Replayer(book)
    rows = applied = 0
    for rec in FlowReader(args.data):
        if args.until is not None and rec.ts_ns >= args.until:
            break
        rows += 1
        applied += bool(replayer.step(rec).applied)
    bb, ba = book.best_price(Side.BID), book.best_price(Side.ASK)
    print(f"rows: {rows} applied: {applied} "
          f"exec_mismatches: {replayer.exec_mismatches}")
    print(f"final book: bid {bb} ask {ba}")
    return 0


def _cmd_impact(args) -> int:
    w0, w1 = args.window
    until = args.until if args.until is not None else w1 + 15 * 60 * NS_PER_S
    config = SimConfig(
        seed=args.base_seed,
        data_path=args.data,
        warmup_until=args.warmup_until,
        session_end=until,
    )
    _announce_sim(
        config,
        command="impact",
        model=args.model,
        participation=args.participation,
        direction=args.direction,
        runs=args.runs,
        window_ns=[w0, w1],
    )
    params = load_model(args.model)
    records = list(FlowReader(args.data))
    ref = reference_volume(records, w0, w1)
    spec = PovSpec(
        args.participation,
        Side.BID if args.direction == "buy" else Side.ASK,
        ref,
        window_start=w0,
        window_end=w1,
        slice_interval_ns=args.slice_s * NS_PER_S,
    )
    report = run_impact(
        config,
        lambda book: ExplicitAgent(params, book),
        spec,
        runs=args.runs,
        bucket_ns=args.bucket_s * NS_PER_S,
        warmup_records=records,
    )
    files = list(report.write(args.out))
    from lobforge.plotting import plot_impact

    files.append(plot_impact(report, args.out))
    in_window = [
        m for ts, m in zip(report.bucket_ts_ns, report.mean) if w0 < ts <= w1
    ]
    print(f"reference_volume: {ref}")
    print(f"window_mean_bp: {sum(in_window) / len(in_window) * 1e4:+.2f}")
    print(f"peak_mean_bp: {max(report.mean) * 1e4:+.2f}")
    print("wrote:", " ".join(str(f) for f in files))
    return 0


def _cmd_stats(args) -> int:
    _announce(None, command="stats", log=args.log, out=args.out,
              bucket_minutes=args.bucket_minutes, max_lag=args.max_lag)
    records = list(FlowReader(args.log))
    report = build_report(
        records,
        bucket_minutes=args.bucket_minutes,
        max_lag=args.max_lag,
        meta={"log": str(args.log)},
    )
    files = report.write(args.out)
    if args.plot:
        from lobforge.plotting import plot_stats

        files += plot_stats(report, args.out)
    print(f"returns: {len(report.returns)}")
    if report.fills.seconds:
        print(f"median_first_fill_s: {report.fills.percentile(50.0):.2f}")
    print("proportions:", json.dumps(
        {k: round(v, 4) for k, v in report.profile.type_proportions.items()}
    ))
    print("wrote:", " ".join(str(f) for f in files))
    return 0


def _cmd_export_dataset(args) -> int:
    _announce(None, command="export-dataset", data=args.data, out=args.out,
              T=args.T, form=args.form)
    pairs = extract_dataset(args.data, args.T)
    if args.form == "codec":
        if args.model is None:
            print("error: --form codec needs --model for scaler bounds",
                  file=sys.stderr)
            return 1
        bounds = load_model(args.model).bounds
        rows = write_codec_dataset(pairs, args.out, args.T, bounds)
    else:
        rows = write_dataset(pairs, args.out, args.T)
    print(f"dataset: {args.out} ({rows} rows)")
    return 0


def _cmd_synth_seed(args) -> int:
    if args.profile == "default":
        profile = SynthProfile()
    else:
        profile = SynthProfile(**json.loads(Path(args.profile).read_text()))
    params_out = args.params_out or f"{args.out}.params.json"
    _announce(args.seed, command="synth-seed", out=args.out, n=args.n,
              profile=vars(profile), params_out=params_out)
    synthesize(args.seed, args.n, args.out, params_path=params_out,
               profile=profile)
    print(f"flow: {args.out}")
    print(f"params: {params_out}")
    return 0


def _cmd_step_server(args) -> int:
    config = SimConfig(
        seed=0,
        data_path=args.data,
        warmup_until=args.warmup_until,
        session_end=args.until,
        window_length=args.T,
    )
    # stdout may carry the protocol, so the banner goes to stderr
    print("config:", json.dumps({**config.describe(), "command": "step-server"},
                                sort_keys=True), file=sys.stderr)
    bounds = load_model(args.model).bounds
    if args.tcp:
        host, _, port = args.tcp.rpartition(":")
        with socket.socket() as listener:
            listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            listener.bind((host or "127.0.0.1", int(port)))
            listener.listen(1)
            print(f"listening on {listener.getsockname()}", file=sys.stderr)
            conn, peer = listener.accept()
            with conn:
                channel = LineChannel.over_socket(conn)
                handled = StepServer(channel, config, bounds).serve()
    else:
        channel = LineChannel.over_pipes(sys.stdin.buffer, sys.stdout.buffer)
        handled = StepServer(channel, config, bounds).serve()
    print(f"handled {handled} requests", file=sys.stderr)
    return 0


# ----------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lobforge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("fit", help="fit the explicit model from a flow log")
    p.add_argument("--data", required=True, help="input flow log")
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--T", type=int, default=5, help="window length")
    p.set_defaults(fn=_cmd_fit)

    p = sub.add_parser("simulate", help="run the kernel with a world agent")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="warm-up flow log")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output flow log")
    p.add_argument("--warmup-until", type=_clock, default=clock_ns(10, 0),
                   metavar="HH:MM")
    p.add_argument("--until", type=_clock, default=clock_ns(16, 0),
                   metavar="HH:MM", help="session end")
    p.add_argument("--max-actions", type=int, default=None)
    p.add_argument("--T", type=int, default=5)
    agent = p.add_mutually_exclusive_group()
    agent.add_argument("--agent-exec", metavar="CMD",
                       help="spawn CMD and use it as the world agent")
    agent.add_argument("--agent-tcp", metavar="HOST:PORT",
                       help="connect to a listening world agent")
    p.add_argument("--agent-timeout", type=float, default=10.0)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("replay", help="replay a flow log through the book")
    p.add_argument("--data", required=True)
    p.add_argument("--until", type=_clock, default=None, metavar="HH:MM")
    p.set_defaults(fn=_cmd_replay)

    p = sub.add_parser("impact", help="participation-rate impact experiment")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--lambda", dest="participation", type=float, required=True)
    p.add_argument("--direction", choices=("buy", "sell"), required=True)
    p.add_argument("--runs", type=int, default=25)
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--window", type=_window, default=(clock_ns(10, 30),
                                                      clock_ns(11, 0)),
                   metavar="HH:MM-HH:MM")
    p.add_argument("--warmup-until", type=_clock, default=clock_ns(10, 0),
                   metavar="HH:MM")
    p.add_argument("--until", type=_clock, default=None, metavar="HH:MM",
                   help="session end (default: window end + 15 min)")
    p.add_argument("--slice-s", type=int, default=60)
    p.add_argument("--bucket-s", type=int, default=60)
    p.add_argument("--base-seed", type=int, default=0)
    p.set_defaults(fn=_cmd_impact)

    p = sub.add_parser("stats", help="stylized-facts report from a log")
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--plot", action="store_true", help="also render figures")
    p.add_argument("--bucket-minutes", type=int, default=1)
    p.add_argument("--max-lag", type=int, default=20)
    p.set_defaults(fn=_cmd_stats)

    p = sub.add_parser("export-dataset", help="state-action pairs for training")
    p.add_argument("--data", required=True)
    p.add_argument("--T", type=int, default=5)
    p.add_argument("--out", required=True)
    p.add_argument("--form", choices=("raw", "codec"), default="raw")
    p.add_argument("--model", default=None,
                   help="model supplying scaler bounds (codec form)")
    p.set_defaults(fn=_cmd_export_dataset)

    p = sub.add_parser("synth-seed", help="generate synthetic seed flow")
    p.add_argument("--profile", default="default",
                   help='"default" or a JSON file of profile fields')
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n", type=int, default=10_000, help="world actions")
    p.add_argument("--params-out", default=None,
                   help="where to save ground-truth params")
    p.set_defaults(fn=_cmd_synth_seed)

    p = sub.add_parser("step-server",
                       help="serve kernel steps to a remote trainer")
    p.add_argument("--model", required=True, help="model supplying bounds")
    p.add_argument("--data", required=True, help="warm-up flow log")
    p.add_argument("--warmup-until", type=_clock, default=clock_ns(10, 0),
                   metavar="HH:MM")
    p.add_argument("--until", type=_clock, default=clock_ns(16, 0),
                   metavar="HH:MM")
    p.add_argument("--T", type=int, default=5)
    p.add_argument("--tcp", metavar="HOST:PORT", default=None,
                   help="listen on a socket instead of stdio")
    p.set_defaults(fn=_cmd_step_server)

    return parser


def main(argv=None) -> int:
    level = os.environ.get("LOBFORGE_LOG_LEVEL", "warn").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except KeyboardInterrupt:
        print("error: interrupted", file=sys.stderr)
        return 2
    except Exception as exc:
        log.debug("unhandled failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
