"""Condition margins and negativity of XXZ ground-state subsystems across Jz."""
import argparse

import numpy as np

from ptmoments.cli import write_csv
from ptmoments.models import xxz


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--l-sites", type=int, default=10)
    ap.add_argument("--ell", type=int, default=6)
    ap.add_argument("--geometry", choices=("connected", "disjoint"), default="connected")
    ap.add_argument("--jz-min", type=float, default=-4.0)
    ap.add_argument("--jz-max", type=float, default=0.5)
    ap.add_argument("--points", type=int, default=46)
    ap.add_argument("--sector", type=int, default=1)
    ap.add_argument("--out", default="-")
    args = ap.parse_args()
    params = getattr(xxz.XXZParams, args.geometry)(args.l_sites, args.ell)
    grid = np.linspace(args.jz_min, args.jz_max, args.points)
    rows = [(jz, *rep.csv_row(), neg) for jz, rep, neg in xxz.xxz_condition_sweep(params, grid, args.sector)]
    write_csv(args.out, xxz.CSV_HEADER, rows)


if __name__ == "__main__":
    main()
