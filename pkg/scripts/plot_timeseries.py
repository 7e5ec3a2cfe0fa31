#!/usr/bin/env python3
"""Plot timeseries.csv (and oracle.csv when present) from a run or validate output directory.

Needs matplotlib (``pip install .[plot]``).
"""

import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from collective_twa.cli import read_csv  # noqa: E402


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("outdir", type=Path)
    p.add_argument("--png", type=Path, help="default: OUTDIR/timeseries.png")
    args = p.parse_args()
    twa = read_csv(args.outdir / "timeseries.csv")
    oracle = read_csv(args.outdir / "oracle.csv") if (args.outdir / "oracle.csv").exists() else None
    panels = [c for c in ("excitations", "total_rate", "squeezing_xi2", "kuramoto_r") if c in twa]
    panels += [c for c in twa if c.startswith("gamma_dir_")]
    fig, axes = plt.subplots(len(panels), 1, figsize=(6, 2.2 * len(panels)), sharex=True, squeeze=False)
    axes = axes[:, 0]
    for ax, col in zip(axes, panels):
        ax.plot(twa["t"], twa[col], label="TWA")
        se = twa.get(f"{col}_se")
        if se is not None:
            ax.fill_between(twa["t"], twa[col] - se, twa[col] + se, alpha=0.3)
        if oracle is not None and col in oracle:
            ax.plot(oracle["t"], oracle[col], "k--", label="exact")
        ax.set_ylabel(col)
    axes[0].legend()
    axes[-1].set_xlabel("t (1/Gamma0)")
    fig.tight_layout()
    fig.savefig(args.png or args.outdir / "timeseries.png", dpi=120)


if __name__ == "__main__":
    main()
