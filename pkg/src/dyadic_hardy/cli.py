"""Command-line entry point: ``dyadic-hardy COMMAND [flags]``.

Exit codes: 0 all asserted inequalities hold, 1 an assertion failed,
2 usage or parse error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .commands import COMMANDS, UsageError, run_command
from .instance_io import InstanceFileError
from .tree import InstanceError

HELP = {
    "check": "testing margins v_I - A_I and pass/fail",
    "ratio": "both sides of the Hardy inequality, the ratio and dual values",
    "certificate": "telescoping Bellman replay: per-node margins and the final chain",
    "probe": "best-ratio sweep over p and depth (CSV)",
    "simulate": "Monte Carlo value of a control policy vs the closed form",
    "hjb": "HJB residual sweep over random states and controls",
    "report": "all of the above",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _p_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dyadic-hardy", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS, help="; ".join(f"{k}: {v}" for k, v in HELP.items()))
    parser.add_argument("--instance", metavar="PATH", help="instance file (JSON)")
    parser.add_argument("--p", type=float, help="exponent p > 1 (overrides the instance file)")
    parser.add_argument("--p-grid", type=_p_list, metavar="P1,P2,...", help="exponents for probe")
    parser.add_argument("--depth", type=int, help="maximum depth for probe")
    parser.add_argument("--family", choices=("uniform", "geometric", "random"), help="measure family for probe")
    parser.add_argument("--iters", type=int, help="ascent iterations for probe (default 5000)")
    parser.add_argument("--seed", type=int, help="seed for every randomized step (required where randomness is used)")
    parser.add_argument("--h", type=float, help="Euler step (default 1e-3)")
    parser.add_argument("--horizon", type=float, help="truncation time T (default 10)")
    parser.add_argument("--paths", type=int, help="Monte Carlo paths")
    parser.add_argument("--samples", type=int, help="state and control samples for hjb (default 1000)")
    parser.add_argument("--policy", help="drift-only | zero | diffuse-then-drift(s)")
    parser.add_argument("--x0", metavar="F,f,A,v", help="start point (default 1,1,1,1)")
    parser.add_argument("--out", metavar="PATH", help="CSV output path for probe")
    parser.add_argument("--tol", type=float, default=1e-9, help="relative tolerance for asserted margins")
    parser.add_argument("--json", action="store_true", help="print the report as JSON")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    opts = vars(args)
    command = opts.pop("command")
    as_json = opts.pop("json")
    try:
        report = run_command(command, opts)
    except (UsageError, InstanceFileError, InstanceError) as exc:
        print(f"dyadic-hardy: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"dyadic-hardy: error: {exc}", file=sys.stderr)
        return 2
    if as_json:
        print(json.dumps(report.as_dict(), indent=1))
    else:
        print(report.render())
    return report.exit_status


if __name__ == "__main__":
    sys.exit(main())
