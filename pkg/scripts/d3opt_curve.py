"""Tabulate the optimal third-moment bound against the D3 line and the p3-PPT parabola."""
import argparse

import numpy as np

from ptmoments.cli import write_csv
from ptmoments.conditions import d3opt_threshold


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=200)
    ap.add_argument("--out", default="-")
    args = ap.parse_args()
    rows = []
    for p2 in np.linspace(0.05, 1.0, args.points):
        # all bounds on p3 at p1 = 1
        rows.append((p2, d3opt_threshold(p2), (3 * p2 - 1) / 2, p2**2))
    write_csv(args.out, ("p2", "d3opt", "d3", "p3ppt"), rows)


if __name__ == "__main__":
    main()
