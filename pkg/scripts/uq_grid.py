"""Attitude-error quantiles for the equal-concentration matrix Fisher law.

Prints the angle (degrees) bounding the attitude error with probability p for
several singular values d of the fused first moment.

    python scripts/uq_grid.py --d 0.9 0.99 0.999 --p 0.5 0.9 0.95 0.99
"""
from __future__ import annotations

import argparse

from posefuse.experiments import UQ_D, UQ_P, uq_grid
from posefuse.fusion import s_from_d


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d", type=float, nargs="+", default=list(UQ_D))
    ap.add_argument("--p", type=float, nargs="+", default=list(UQ_P))
    args = ap.parse_args()
    grid = uq_grid(args.d, args.p)
    print("d        s          " + "".join(f"p={p:<8}" for p in args.p))
    for d, row in zip(args.d, grid):
        print(f"{d:<8} {s_from_d(d):<10.3f} " + "".join(f"{v:<10.3f}" for v in row))


if __name__ == "__main__":
    main()
