"""Overlay theory (``kl-curve``) and simulated (``simulate --mode empirical-kl``) KL curves.

    python3 scripts/plot_kl.py THEORY/kl_curve.csv [SIM/empirical_kl.csv] kl.png
"""

import sys
from collections import defaultdict

import matplotlib.pyplot as plt

from hdkde.io import read_csv


def by_gamma(rows, *cols):
    out = defaultdict(lambda: [[] for _ in cols])
    for r in rows:
        for i, c in enumerate(cols):
            out[float(r["gamma"])][i].append(float(r[c]))
    return out


def main(theory, *rest):
    sim_path, dst = (rest[0], rest[1]) if len(rest) == 2 else (None, rest[0])
    fig, ax = plt.subplots(figsize=(5, 4))
    for g, (h, v) in sorted(by_gamma(read_csv(theory)[1], "h", "dkl_per_d").items()):
        ax.plot(h, v, label=f"theory gamma={g:g}")
    if sim_path:
        for g, (h, v, se) in sorted(by_gamma(read_csv(sim_path)[1], "h", "dkl_per_d",
                                             "standard_error").items()):
            ax.errorbar(h, v, yerr=se, fmt="o", ms=3, label=f"simulation gamma={g:g}")
    ax.set_xlabel("h")
    ax.set_ylabel("KL / d")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(dst, dpi=150)


if __name__ == "__main__":
    main(*sys.argv[1:])
