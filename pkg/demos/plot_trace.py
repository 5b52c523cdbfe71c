"""Plot measured policy error against its bound from a trace CSV.

Usage: python demos/plot_trace.py demos/sweep_out/cell_0003_trace.csv [out.png]
Needs matplotlib, which the library itself does not depend on.
"""
import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def column(rows, name):
    return [float(r[name]) if r[name] not in ("", "nan", "inf") else float("nan") for r in rows]


def main(path, out):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    k = column(rows, "k")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(k, column(rows, "err_policy"), label="||J^mu_k - J*||")
    ax.semilogy(k, column(rows, "err_iterate"), label="||J_k - J*||", alpha=0.7)
    ax.semilogy(k, column(rows, "bound_total_k"), "--", label="bound")
    ax.set_xlabel("iteration k")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    print("wrote", out)


if __name__ == "__main__":
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2] if len(sys.argv) > 2 else "trace.png")
