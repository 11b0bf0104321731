"""Offline build, study and timing on the 1-D benchmark; prints the error table.

    python scripts/reproduce_table.py [--out DIR] [--workers N]
"""
import argparse
import logging

from qlrb.config import ExperimentConfig
from qlrb.experiments import load_models, run_bench, run_offline, run_study


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--reuse", action="store_true", help="load models instead of rebuilding")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = ExperimentConfig(out_dir=args.out, workers=args.workers)
    if args.reuse:
        _, model = load_models(cfg)
    else:
        _, model = run_offline(cfg)
    result = run_study(cfg, model)
    print(f"{'N':>3} {'M':>3} {'max delta':>11} {'max error':>11} {'mean eta':>9} {'viol':>5}")
    for r in result.rows:
        print(f"{r['N']:>3} {r['M']:>3} {r['max_delta']:11.3e} {r['max_true_error']:11.3e} "
              f"{r['mean_effectivity']:9.2f} {r['violations']:>5}")
    b = run_bench(cfg, model, 5, 8)
    print(f"speed-up {b['speedup']:.2f} without certificate, {b['speedup_certified']:.2f} with")


if __name__ == "__main__":
    main()
