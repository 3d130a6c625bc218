"""XY chain with spontaneous emission, integrated from the Neel state."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..linalg import Bipartition, DensityOperator
from ..symmetry import _popcounts, sr_moments, symmetrize

MAX_SITES = 8
STEP_TOL = 1e-8


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuenchParams:
    n_sites: int = 8
    j_hop: float = 1.0
    gamma: float = 0.1
    t_grid: tuple = (0.0, 0.01, 0.02, 0.05)
    n_a: int | None = None  # A = first n_a sites, default half chain

    def __post_init__(self):
        if self.n_sites % 2 or self.n_sites < 2:
            raise ValueError("n_sites must be even and >= 2")
        if self.n_sites > MAX_SITES:
            raise ValueError(f"dense integration capped at {MAX_SITES} sites")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        t = np.asarray(self.t_grid, dtype=float)
        if t.size == 0 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("t_grid must start at 0 and increase")
        object.__setattr__(self, "t_grid", tuple(float(x) for x in t))

    @property
    def bipartition(self) -> Bipartition:
        n_a = self.n_sites // 2 if self.n_a is None else self.n_a
        return Bipartition(n_a, self.n_sites - n_a)


def neel_state(n_sites: int) -> np.ndarray:
    """|0101...>: odd sites (1-based) empty, even sites excited."""
    idx = sum(1 << (n_sites - 1 - j) for j in range(1, n_sites, 2))
    psi = np.zeros(2**n_sites, dtype=complex)
    psi[idx] = 1.0
    return psi


def hopping_hamiltonian(n_sites: int, j_hop: float) -> np.ndarray:
    """J sum_i (s+_i s-_{i+1} + h.c.), open chain."""
    d = 2**n_sites
    h = np.zeros((d, d))
    idx = np.arange(d)
    for i in range(n_sites - 1):
        m = (1 << (n_sites - 1 - i)) | (1 << (n_sites - 2 - i))
        bits = idx & m
        # exactly one excitation on the bond: swap it
        movable = (bits != 0) & (bits != m)
        src = idx[movable]
        h[src ^ m, src] += j_hop
    return h


class _Generator:
    def __init__(self, p: QuenchParams):
        n = p.n_sites
        d = 2**n
        occ = _popcounts(np.arange(d)).astype(float)
        self.h_eff = hopping_hamiltonian(n, p.j_hop) - 0.5j * p.gamma * np.diag(occ)
        self.h_eff_dag = self.h_eff.conj().T
        self.gamma = p.gamma
        self.pairs = []
        idx = np.arange(d)
        for j in range(n):
            mask = 1 << (n - 1 - j)
            lo = idx[(idx & mask) == 0]
            self.pairs.append((lo, lo | mask))

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        out = -1j * (self.h_eff @ rho - rho @ self.h_eff_dag)
        if self.gamma:
            for lo, hi in self.pairs:
                out[np.ix_(lo, lo)] += self.gamma * rho[np.ix_(hi, hi)]
        return out


def _rk4(f, rho, dt, steps):
    for _ in range(steps):
        k1 = f(rho)
        k2 = f(rho + 0.5 * dt * k1)
        k3 = f(rho + 0.5 * dt * k2)
        k4 = f(rho + dt * k3)
        rho = rho + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return rho


def lindblad_evolve(params: QuenchParams, initial: np.ndarray | None = None,
                    max_halvings: int = 14) -> list[DensityOperator]:
    """States at every time of ``params.t_grid``.

    Each interval is integrated with RK4, halving the step until two
    successive refinements differ by at most STEP_TOL in Frobenius norm.
    """
    bp = params.bipartition
    f = _Generator(params)
    if initial is None:
        psi = neel_state(params.n_sites)
        rho = np.outer(psi, psi.conj())
    else:
        rho = np.array(initial, dtype=complex)
    rate = max(abs(params.j_hop) * 2, params.gamma * params.n_sites, 1e-12)
    out = [DensityOperator(rho, bp)]
    t = params.t_grid
    for t0, t1 in zip(t[:-1], t[1:]):
        span = t1 - t0
        steps = max(1, int(np.ceil(span * rate / 0.1)))
        prev = _rk4(f, rho, span / steps, steps)
        for _ in range(max_halvings):
            steps *= 2
            cur = _rk4(f, rho, span / steps, steps)
            if np.linalg.norm(cur - prev) <= STEP_TOL:
                break
            prev = cur
        else:
            raise ConvergenceError(f"RK4 did not converge on [{t0}, {t1}]")
        cur = 0.5 * (cur + cur.conj().T)
        cur /= np.trace(cur).real
        state = symmetrize(DensityOperator(cur, bp))
        out.append(state)
        rho = state.matrix.copy()
    return out


def quench_ratios(states, q: int = -1) -> np.ndarray:
    """(d2_ratio, p3ppt_ratio) of the sector-q block per state.

    d2_ratio = p1^2/p2 and p3ppt_ratio = p3 p1/p2^2; values below 1 flag
    entanglement. Rows where p2 vanishes are NaN.
    """
    out = np.full((len(states), 2), np.nan)
    for i, rho in enumerate(states):
        p = sr_moments(rho, q, 3)
        if p[2] <= 1e-300:
            continue
        out[i] = (p[1] ** 2 / p[2], p[3] * p[1] / p[2] ** 2)
    return out


def perturbative_ratios(gamma: float, j_hop: float, n_a: int) -> tuple[float, float]:
    """Leading-order t -> 0+ values (d2_ratio, p3ppt_ratio)."""
    return gamma**2 * n_a**2 / (8 * j_hop**2), 3 * gamma**2 * n_a / (8 * j_hop**2)


def perturbative_moments(gamma: float, j_hop: float, n_a: int, t: float) -> tuple[float, float, float]:
    return gamma * n_a * t / 2, 2 * j_hop**2 * t**2, 3 * gamma * j_hop**2 * t**3


CSV_HEADER = ("gamma", "t", "sector", "p1", "p2", "p3", "d2_ratio", "p3ppt_ratio")


def quench_table(params: QuenchParams, q: int = -1, states=None) -> list[tuple]:
    if states is None:
        states = lindblad_evolve(params)
    rows = []
    ratios = quench_ratios(states, q)
    for t, rho, (r2, r3) in zip(params.t_grid, states, ratios):
        p = sr_moments(rho, q, 3)
        rows.append((params.gamma, t, q, p[1], p[2], p[3], r2, r3))
    return rows
