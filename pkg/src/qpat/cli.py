"""Command-line front end.

Three subcommands sharing one option set: ``generate`` simulates detector
data into ``<out>/data``, ``reconstruct`` inverts a stored bundle into
``<out>/recon_<method>``, ``run`` does both.  Exit codes: 0 on success, 2 for
configuration problems, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .errors import ConfigError, NumericalError
from .harness import generate_data, reconstruct, run_experiment

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qpat",
        description="Quantitative photoacoustic inversion test bench.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("generate", "simulate detector data into <out>/data"),
        ("reconstruct", "invert a stored data bundle"),
        ("run", "generate data, then reconstruct with every configured method"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="experiment JSON file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed-phantom", type=int, default=None)
        p.add_argument("--seed-medium", type=int, default=None)
        p.add_argument("--seed-data", type=int, default=None)
        p.add_argument("--method", choices=("admm", "ld", "pdipm"), default=None,
                       help="restrict to one reconstruction method")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--allow-inverse-crime", action="store_true",
                       help="permit matching generation/reconstruction lattices")
        if name == "reconstruct":
            p.add_argument("--data", default=None,
                           help="data bundle directory (default: <out>/data)")
    return parser


def _apply_overrides(cfg, args) -> None:
    if args.seed_phantom is not None:
        cfg.seed_phantom = args.seed_phantom
    if args.seed_medium is not None:
        cfg.seed_medium = args.seed_medium
    if args.seed_data is not None:
        cfg.seed_data = args.seed_data
    if args.threads is not None:
        cfg.threads = args.threads
    if args.method is not None:
        cfg.methods = (args.method,)
    if args.allow_inverse_crime:
        cfg.allow_inverse_crime = True


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        _apply_overrides(cfg, args)
        cfg.validate()
        if args.command == "generate":
            data_dir = generate_data(cfg, args.out)
            print(f"wrote data bundle to {data_dir}")
        elif args.command == "reconstruct":
            data_dir = args.data if args.data is not None else f"{args.out}/data"
            for method in cfg.methods:
                summary = reconstruct(cfg, data_dir, args.out, method)
                print(f"{method}: RE(mu) = {summary['re_mu']:.2f}%  "
                      f"RE(kappa) = {summary['re_kappa']:.2f}%")
        else:
            summaries = run_experiment(cfg, args.out)
            for method, summary in summaries.items():
                print(f"{method}: RE(mu) = {summary['re_mu']:.2f}%  "
                      f"RE(kappa) = {summary['re_kappa']:.2f}%")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
