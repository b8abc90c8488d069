"""Histogram of (1/d) log rho_hat and the log-log tail of z from ``simulate --mode fluctuations``.

    python3 scripts/plot_fluctuations.py RUN_DIR fluctuations.png
"""

import sys
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

from hdkde.io import read_csv


def main(run_dir, dst):
    run = Path(run_dir)
    _, hist = read_csv(run / "histogram.csv")
    _, samples = read_csv(run / "samples.csv")
    _, summary = read_csv(run / "summary.csv")
    s = {r["key"]: r["value"] for r in summary}

    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 3.5))
    lo = np.array([float(r["bin_left"]) for r in hist])
    hi = np.array([float(r["bin_right"]) for r in hist])
    left.bar(lo, [int(r["count"]) for r in hist], width=hi - lo, align="edge")
    left.axvline(float(s["phi_1"]), color="k", ls="--", label="annealed")
    left.axvline(float(s["typical_log_over_d"]), color="r", label="sample mean")
    left.set_xlabel(r"$(1/d)\log\hat\rho$")
    left.legend(fontsize=8)

    z = np.sort([float(r["z"]) for r in samples])[::-1]
    right.loglog(z, np.arange(1, z.size + 1) / z.size, ".", ms=2)
    if s.get("tail_exponent"):
        m, thr = float(s["tail_exponent"]), float(s["tail_threshold"])
        zz = np.geomspace(thr, z[0], 20)
        right.loglog(zz, 0.05 * (zz / thr) ** -m, "r-", label=f"slope -{m:.3f}")
        right.legend(fontsize=8)
    right.set_xlabel("z")
    right.set_ylabel("P(Z > z)")
    fig.tight_layout()
    fig.savefig(dst, dpi=150)


if __name__ == "__main__":
    main(*sys.argv[1:3])
