"""Command-line driver: ``qlrb {truth,offline,study,bench,certify}``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .config import ExperimentConfig
from .truth import NewtonConvergenceError

EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML experiment config")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--workers", type=int, metavar="INT", help="worker processes")
    common.add_argument("--seed", type=int, metavar="INT", help="test-set seed")
    jac = common.add_mutually_exclusive_group()
    jac.add_argument("--exact-jacobian", dest="jacobian", action="store_const", const="exact",
                     help="reduced Newton with the full chain-rule Jacobian (default)")
    jac.add_argument("--inexact-jacobian", dest="jacobian", action="store_const",
                     const="inexact", help="reduced Newton with EIM coefficients frozen")
    common.add_argument("--m-a-mode", choices=("analytic", "empirical"),
                        help="monotonicity constant used in the certificate")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="qlrb", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("truth", parents=[common], help="truth trajectory at one parameter")
    p.add_argument("--mu", type=float, required=True, metavar="FLOAT")
    sub.add_parser("offline", parents=[common], help="build EIM and reduced-basis models")
    sub.add_parser("study", parents=[common], help="N-M convergence study on the test set")
    p = sub.add_parser("bench", parents=[common], help="online timing against the truth solver")
    p.add_argument("--N", type=int, help="basis size (default: full model)")
    p.add_argument("--M", type=int, help="EIM size (default: full model)")
    p = sub.add_parser("certify", parents=[common], help="reduced solve and certificate")
    p.add_argument("--mu", type=float, required=True, metavar="FLOAT")
    p.add_argument("--with-truth", action="store_true", help="also report the true error")
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    overrides = {"out_dir": args.out, "workers": args.workers, "seed": args.seed,
                 "jacobian": args.jacobian, "m_a_mode": args.m_a_mode}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return dataclasses.replace(cfg, **overrides)


def _check_mu(cfg: ExperimentConfig, mu: float):
    if not cfg.param_min <= mu <= cfg.param_max:
        raise ValueError(f"mu={mu} outside the parameter domain "
                         f"[{cfg.param_min}, {cfg.param_max}]")


def run(args) -> int:
    from . import experiments as ex

    try:
        cfg = resolve_config(args)
        if getattr(args, "mu", None) is not None:
            _check_mu(cfg, args.mu)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE

    if args.command == "truth":
        print(ex.run_truth(cfg, args.mu))
    elif args.command == "offline":
        eim, model = ex.run_offline(cfg)
        print(f"EIM M={eim.M}, RB N={model.N}; models in {cfg.out_path}")
    else:
        _, model = ex.load_models(cfg)
        if args.command == "study":
            result = ex.run_study(cfg, model)
            for row in result.rows:
                print("N={N} M={M} max_delta={max_delta:.3e} max_err={max_true_error:.3e} "
                      "mean_eta={mean_effectivity:.2f} violations={violations}".format(**row))
        elif args.command == "bench":
            row = ex.run_bench(cfg, model, args.N, args.M)
            print("truth {truth_time:.4f}s  rb {rb_time:.4f}s  rb+cert {rb_certified_time:.4f}s"
                  "  speed-up {speedup:.2f}/{speedup_certified:.2f}".format(**row))
        elif args.command == "certify":
            cert, path = ex.run_certify(cfg, model, args.mu, args.with_truth)
            msg = f"delta={cert.delta_total:.6e} (rb {cert.delta_rb:.3e}, ei {cert.delta_ei:.3e})"
            if cert.true_error is not None:
                msg += f" true_error={cert.true_error:.6e} effectivity={cert.effectivity:.3f}"
            print(msg)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (FileNotFoundError, NewtonConvergenceError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
