"""Plot whatever figure CSVs exist in a results directory.

    python3 scripts/plot_figures.py out/ [--dest out/plots]

Needs matplotlib (``pip install .[plot]``); the ccav package itself does not.
"""
import argparse
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _series(rows, key, x, y):
    out = defaultdict(lambda: ([], []))
    for r in rows:
        xs, ys = out[r[key]]
        xs.append(float(r[x]))
        ys.append(float(r[y]))
    return out


def _cdf(rows, xlabel, ax):
    for scheme, (x, f) in _series(rows, "scheme", "value", "cdf").items():
        ax.step(x, f, where="post", label=scheme)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("CDF")


def _lines(rows, key, y, xlabel, ylabel, ax, group=None):
    if group:
        for r in rows:
            r["_k"] = f"{r[key]} ({group}={float(r[group]):g})"
        key = "_k"
    for name, (x, v) in _series(rows, key, "value", y).items():
        ax.plot(x, v, marker="o", label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)


FIGS = {
    "fig4_duration_cdf.csv": lambda r, ax: _cdf(r, "trip duration (s)", ax),
    "fig5_pc_cdf.csv": lambda r, ax: _cdf(r, "P_c", ax),
    "fig6_success_vs_gamma.csv": lambda r, ax: _lines(r, "scheme", "success_pct", "gamma (Mbps)", "successful trips (%)", ax),
    "fig7_pc_vs_bs.csv": lambda r, ax: _lines(r, "scheme", "mean_P_c", "number of BSs", "mean P_c", ax),
    "fig8_success_vs_bs.csv": lambda r, ax: _lines(r, "scheme", "success_pct", "number of BSs", "successful trips (%)", ax),
    "fig9_throughput_vs_fc.csv": lambda r, ax: _lines(r, "policy", "throughput_av_min", "f_c (Hz)", "throughput (AV/min)", ax, "alpha"),
    "fig10_throughput_vs_lmtm.csv": lambda r, ax: _lines(r, "policy", "throughput_av_min", "lambda_m T_m", "throughput (AV/min)", ax, "alpha"),
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("results", type=Path)
    ap.add_argument("--dest", type=Path)
    a = ap.parse_args(argv)
    dest = a.dest or a.results / "plots"
    dest.mkdir(parents=True, exist_ok=True)
    made = 0
    for name, draw in FIGS.items():
        src = a.results / name
        if not src.exists():
            continue
        fig, ax = plt.subplots(figsize=(5.5, 4))
        draw(_read(src), ax)
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(dest / (src.stem + ".png"), dpi=120)
        plt.close(fig)
        made += 1
    print(f"{made} plot(s) written to {dest}")


if __name__ == "__main__":
    main()
