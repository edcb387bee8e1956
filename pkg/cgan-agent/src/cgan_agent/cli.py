"""Command line: train a checkpoint, or serve one to a simulator.

Exit codes match the simulator's convention: 0 success, 1 bad
arguments, 2 runtime failure.  Serving talks the wire protocol on
stdout, so all banners go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from cgan_agent.gan import GanConfig
from cgan_agent.serve import serve
from cgan_agent.train import train

log = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _schedule(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(k) for k in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad unroll schedule {text!r}")


def _cmd_train(args) -> int:
    config = GanConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        critic_steps=args.critic_steps,
        unroll=args.unroll,
        rollouts_per_epoch=args.rollouts,
        seed=args.seed,
    )
    history = train(args.data, args.model, args.out, config, sim_command=args.sim)
    last = history[-1]
    print(json.dumps({
        "epochs": len(history),
        "critic_loss": round(last["critic_loss"], 4),
        "gen_loss": round(last["gen_loss"], 4),
        "grad_norm": round(last["grad_norm"], 3),
        "checkpoint": args.out,
    }))
    return 0


def _cmd_serve(args) -> int:
    print(f"serving checkpoint {args.checkpoint} seed {args.seed}", file=sys.stderr)
    return serve(args.checkpoint, args.seed, sys.stdin.buffer, sys.stdout.buffer)


def build_parser() -> _Parser:
    parser = _Parser(prog="cgan-agent", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit generator and critic from a dataset")
    p.add_argument("--data", required=True, help="vector-form dataset CSV")
    p.add_argument("--model", required=True, help="fitted model JSON (gamma source)")
    p.add_argument("--sim", required=True, help="step-server command for rollouts")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--epochs", type=int, default=GanConfig.epochs)
    p.add_argument("--batch-size", type=int, default=GanConfig.batch_size)
    p.add_argument("--critic-steps", type=int, default=GanConfig.critic_steps)
    p.add_argument("--unroll", type=_schedule, default=GanConfig.unroll,
                   help="comma-separated k per epoch, last repeats")
    p.add_argument("--rollouts", type=int, default=GanConfig.rollouts_per_epoch,
                   help="rollouts per epoch")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("serve", help="answer a simulator over stdio")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_serve)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("CGAN_AGENT_LOG_LEVEL", "warn").lower()
    logging.basicConfig(
        level={"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}.get(level, logging.WARNING),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except KeyboardInterrupt:
        return 2
    except Exception as exc:
        log.debug("unhandled failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
