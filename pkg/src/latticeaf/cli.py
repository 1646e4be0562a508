"""Command line entry point: ``python -m latticeaf <command> ...``."""
from __future__ import annotations

import argparse
import json
import sys

from .harness import ConfigError, ExperimentConfig, ParseError, run_experiment
from .isi import IsiError
from .lattice import LatticeError
from .nested import CodecError
from .network import NetworkError


def _scales(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad scale list {text!r}")


class _Parser(argparse.ArgumentParser):
    """Usage errors are reported as one JSON line, like runtime errors."""

    def error(self, message):
        print(json.dumps({"error": "UsageError", "message": message}), file=sys.stderr)
        sys.exit(2)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="latticeaf",
        description="Lattice-coded amplify-and-forward relay network experiments.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", help="write CSV here instead of stdout")
        sp.add_argument("--seed", type=int, default=0)

    a = sub.add_parser("analyze", help="analytic quantities of a network file")
    a.add_argument("network_file")
    a.add_argument("--ff-len", type=int, default=64)
    common(a)

    for name in ("simulate-layered", "simulate-isi"):
        s = sub.add_parser(name, help="Monte Carlo link simulation")
        s.add_argument("network_file")
        s.add_argument("--lattice", choices=("zn", "dn", "e8"), default="zn")
        s.add_argument("--dim", type=int, default=4)
        s.add_argument("--ratio", type=int, default=2)
        s.add_argument("--trials", type=int, default=10_000)
        s.add_argument("--alpha", choices=("paper", "mmse"), default="mmse")
        s.add_argument("--power-scales", type=_scales, default=(1.0,),
                       help="comma separated multipliers applied to every power budget")
        s.add_argument("--workers", type=int, default=1)
        if name == "simulate-isi":
            s.add_argument("--ff-len", type=int, default=64)
        common(s)

    li = sub.add_parser("lattice-info", help="second-moment figures of a lattice")
    li.add_argument("--lattice", choices=("zn", "dn", "e8", "a2"), default="zn")
    li.add_argument("--dim", type=int, default=4)
    li.add_argument("--samples", type=int, default=100_000)
    common(li)
    return p


def config_from_args(ns) -> ExperimentConfig:
    kw = {k.replace("-", "_"): v for k, v in vars(ns).items() if v is not None}
    return ExperimentConfig(**kw)


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(ns)
        text = run_experiment(cfg)
    except (ConfigError, ParseError, NetworkError, LatticeError, CodecError, IsiError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(err), file=sys.stderr)
        return 2
    if not cfg.out:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
