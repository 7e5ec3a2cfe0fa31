#!/usr/bin/env python3
"""Dense 4x4 array (a = 0.2 wavelengths) from full inversion and from the ground state."""

import argparse

import numpy as np

from collective_twa.experiments import inverted_array


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--traj", type=int, default=4096)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--t-final", type=float, default=5.0)
    args = p.parse_args()
    for start in ("excited", "ground"):
        t, exc, se = inverted_array(start, n_traj=args.traj, seed=args.seed, t_final=args.t_final)
        print(f"{start} start")
        for tt in np.arange(0.0, args.t_final + 1e-9, 0.5):
            i = int(np.argmin(np.abs(t - tt)))
            print(f"  t={t[i]:4.1f}  excitations {exc[i]:7.3f} +- {se[i]:.3f}")


if __name__ == "__main__":
    main()
