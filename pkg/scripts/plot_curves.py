"""Render the study CSVs (convergence curves, reluctivity profile) to PNG.

    python scripts/plot_curves.py OUT_DIR

Needs matplotlib (pip install qlrb[plots]).
"""
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from qlrb.storage import read_rows  # noqa: E402


def column(rows, name):
    return [float(r[name]) for r in rows]


def main(out):
    out = Path(out)
    fig, ax = plt.subplots()
    for path in sorted(out.glob("curves_M*.csv")):
        rows = read_rows(path)
        M = path.stem.split("_M")[1]
        N = column(rows, "N")
        ax.semilogy(N, column(rows, "max_delta"), "o-", label=f"max bound, M={M}")
        ax.semilogy(N, column(rows, "max_true_error"), "s--", label=f"max error, M={M}")
    ax.set_xlabel("N")
    ax.legend()
    fig.savefig(out / "curves.png", dpi=150)

    rows = read_rows(out / "reluctivity_profile.csv")
    fig, ax = plt.subplots()
    ax.plot(column(rows, "x"), column(rows, "nu"), label="nu")
    ax.plot(column(rows, "x"), column(rows, "nu_M"), "--", label="EIM surrogate")
    ax.set_xlabel("x")
    ax.legend()
    fig.savefig(out / "reluctivity.png", dpi=150)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "out")
