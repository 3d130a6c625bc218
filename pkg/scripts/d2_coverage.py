"""Empirical coverage of the sector D2 estimate at the rigorous budget."""
import argparse

import numpy as np

from ptmoments import shadows as sh
from ptmoments.linalg import Bipartition, DensityOperator
from ptmoments.symmetry import build_projector


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epsilon", type=float, default=0.1)
    ap.add_argument("--delta", type=float, default=0.05)
    ap.add_argument("--replicas", type=int, default=200)
    ap.add_argument("--scale", type=float, default=1.0, help="fraction of the budget to spend")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    psi = np.array([0, 1, 1, 0]) / np.sqrt(2)
    bell = DensityOperator(np.outer(psi, psi), Bipartition(1, 1))
    proj = build_projector("P", 0, bell.bipartition)
    params = sh.BudgetParams(args.epsilon, args.delta, proj, c1=sh.c1_worst_case(proj.size), c2=2.0)
    N = max(2, int(sh.measurement_budget(params, bell.bipartition) * args.scale))
    est = np.array([sh.estimate_D2_sector(sh.simulate_shadow(bell, N, seed=args.seed + r), 0)
                    for r in range(args.replicas)])
    err = np.abs(est + 0.5)
    print(f"N={N} replicas={args.replicas}")
    print(f"within eps: {np.mean(err <= args.epsilon):.3f} (target >= {1 - args.delta})")
    print(f"empirical {1 - args.delta:.0%} error quantile: {np.quantile(err, 1 - args.delta):.4f}")
    print(f"radius at N: {sh.confidence_radius(N, args.delta, proj, bell.bipartition):.4f}")


if __name__ == "__main__":
    main()
