"""Short-time quench ratios for several loss rates, next to the leading-order prediction."""
import argparse

import numpy as np

from ptmoments.cli import write_csv
from ptmoments.models import quench


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-sites", type=int, default=8)
    ap.add_argument("--gammas", default="0.05,0.1,0.2")
    ap.add_argument("--t-max", type=float, default=0.5)
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--sector", type=int, default=-1)
    ap.add_argument("--out", default="-")
    args = ap.parse_args()
    t_grid = tuple(np.linspace(0.0, args.t_max, args.steps + 1))
    rows = []
    for g in (float(x) for x in args.gammas.split(",")):
        p = quench.QuenchParams(args.n_sites, 1.0, g, t_grid)
        pred = quench.perturbative_ratios(g, p.j_hop, p.bipartition.n_a)
        for row in quench.quench_table(p, args.sector):
            rows.append(row + pred)
    write_csv(args.out, quench.CSV_HEADER + ("d2_ratio_pt", "p3ppt_ratio_pt"), rows)


if __name__ == "__main__":
    main()
