"""Plot the transition lines from ``hdkde phase --out DIR``.

    python3 scripts/plot_phase.py DIR/phase.csv phase.png

Needs matplotlib (not a dependency of the package).
"""

import sys

import matplotlib.pyplot as plt

from hdkde.io import read_csv


def main(src, dst):
    _, rows = read_csv(src)
    a = [float(r["alpha"]) for r in rows]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(a, [float(r["h_clt_sq"]) for r in rows], label="$h_{CLT}^2$")
    ax.plot(a, [float(r["h_g_sq"]) for r in rows], label="$h_G^2$")
    if "h_opt_sq" in rows[0]:
        ax.plot(a, [float(r["h_opt_sq"]) for r in rows], "--", label="$h_{opt}^2$")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(r"$\alpha = \log n / d$")
    ax.legend()
    fig.tight_layout()
    fig.savefig(dst, dpi=150)


if __name__ == "__main__":
    main(*sys.argv[1:3])
