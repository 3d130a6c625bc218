"""Blockade-constrained PXP chain quenched from |1010...>."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .. import conditions as cond
from .. import shadows as sh
from ..linalg import Bipartition, DensityOperator, matrix_moments, partial_transpose, reduced_density_pure
from .common import condition_report

MAX_SITES = 14
log = logging.getLogger(__name__)
SCAN_CONDITIONS = ("D3", "D4", "p3PPT")


@dataclass(frozen=True)
class PXPParams:
    n_sites: int = 12
    omega: float = 1.0
    t_grid: tuple = tuple(np.linspace(0.0, 20.0, 201))
    subsystem: tuple = (4, 5, 6, 7)
    split: int | None = None  # default half of the subsystem

    def __post_init__(self):
        if not 2 <= self.n_sites <= MAX_SITES:
            raise ValueError(f"n_sites must lie in [2, {MAX_SITES}]")
        sub = tuple(sorted(int(s) for s in self.subsystem))
        if len(set(sub)) != len(sub) or sub[0] < 0 or sub[-1] >= self.n_sites:
            raise ValueError("subsystem sites must be distinct and inside the chain")
        if len(sub) < 2:
            raise ValueError("subsystem needs two halves")
        object.__setattr__(self, "subsystem", sub)
        object.__setattr__(self, "t_grid", tuple(float(t) for t in self.t_grid))

    @property
    def sub_bipartition(self) -> Bipartition:
        k = len(self.subsystem) // 2 if self.split is None else self.split
        return Bipartition(k, len(self.subsystem) - k)


def constrained_basis(n_sites: int) -> np.ndarray:
    """Indices of bitstrings with no two adjacent 1s (open chain)."""
    idx = np.arange(2**n_sites)
    return idx[(idx & (idx >> 1)) == 0]


def constrained_dimension(n_sites: int) -> int:
    """Fibonacci number F(n+2) by the two-state transfer matrix."""
    end0, end1 = 1, 1  # admissible chains of length 1 ending in 0 / in 1
    for _ in range(n_sites - 1):
        end0, end1 = end0 + end1, end0
    return end0 + end1


def pxp_hamiltonian(n_sites: int, omega: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """(basis, H) with H = omega sum_i P_{i-1} X_i P_{i+1} on the constrained space."""
    basis = constrained_basis(n_sites)
    pos = {int(b): i for i, b in enumerate(basis)}
    h = np.zeros((basis.size, basis.size))
    for col, b in enumerate(basis):
        for i in range(n_sites):
            flipped = int(b) ^ (1 << (n_sites - 1 - i))
            j = pos.get(flipped)
            if j is not None:
                h[j, col] = omega
    return basis, h


def staggered_state(n_sites: int) -> int:
    """Basis index of |1010...>."""
    return sum(1 << (n_sites - 1 - j) for j in range(0, n_sites, 2))


@dataclass
class PXPEvolution:
    params: PXPParams
    basis: np.ndarray
    amplitudes: np.ndarray  # (T, dim_constrained)
    energy: np.ndarray

    def full_state(self, i: int) -> np.ndarray:
        psi = np.zeros(2**self.params.n_sites, dtype=complex)
        psi[self.basis] = self.amplitudes[i]
        return psi

    def z_expectations(self) -> np.ndarray:
        """<Z_i>(t) with Z|0> = |0>, shape (T, n_sites)."""
        n = self.params.n_sites
        bits = (self.basis[:, None] >> np.arange(n - 1, -1, -1)) & 1
        prob = np.abs(self.amplitudes) ** 2
        return prob @ (1 - 2 * bits)

    def staggered_magnetization(self) -> np.ndarray:
        n = self.params.n_sites
        sign = np.where(np.arange(n) % 2 == 0, -1.0, 1.0)  # +1 on the initial pattern
        return self.z_expectations() @ sign / n

    def subsystem_state(self, i: int) -> DensityOperator:
        p = self.params
        m = reduced_density_pure(self.full_state(i), p.n_sites, p.subsystem)
        return DensityOperator(m, p.sub_bipartition)


def pxp_evolve(params: PXPParams) -> PXPEvolution:
    """Exact propagation by diagonalizing H on the constrained space."""
    basis, h = pxp_hamiltonian(params.n_sites, params.omega)
    ev, vec = np.linalg.eigh(h)
    psi0 = np.zeros(basis.size)
    psi0[np.searchsorted(basis, staggered_state(params.n_sites))] = 1.0
    c = vec.T @ psi0
    t = np.asarray(params.t_grid)
    amps = (np.exp(-1j * np.outer(t, ev)) * c) @ vec.T
    energy = np.real(np.einsum("ti,ij,tj->t", amps.conj(), h, amps))
    return PXPEvolution(params, basis, amps, energy)


def first_revival(t: np.ndarray, signal: np.ndarray) -> int:
    """Index of the first local maximum after the signal has crossed below zero."""
    below = np.flatnonzero(signal < 0)
    if below.size == 0:
        return -1
    for i in range(below[0] + 1, len(signal) - 1):
        if signal[i] >= signal[i - 1] and signal[i] >= signal[i + 1] and signal[i] > 0:
            return i
    return -1


CSV_HEADER = ("t", "negativity", "D3", "D4", "p3PPT", "D3_err", "D4_err", "p3PPT_err")


@dataclass(frozen=True)
class ScanRow:
    t: float
    negativity: float
    margins: dict
    errors: dict | None = None

    def detected(self, name: str) -> bool:
        return self.margins[name] > cond.DETECTION_TOL


def exact_margins(rho: DensityOperator) -> tuple[float, dict]:
    pt = partial_transpose(rho)
    p = matrix_moments(pt, 4)
    return cond.negativity(pt), {c: condition_report(c, p).margin for c in SCAN_CONDITIONS}


def _shadow_margins(shadow: sh.Shadow) -> dict:
    p = cond.MomentVector(sh.estimate_pt_moments(shadow, 4))
    return {c: condition_report(c, p, tol=np.inf).margin for c in SCAN_CONDITIONS}


def pxp_entanglement_scan(evo: PXPEvolution, shadow_n: int | None = None, seed: int = 0,
                          jackknife_blocks: int = 20) -> list[ScanRow]:
    """Negativity and D3, D4, p3-PPT margins of the subsystem over time.

    With ``shadow_n`` the margins are re-estimated from that many global
    random-unitary snapshots per time (seed offset by time index), with
    grouped jackknife error bars.
    """
    rows = []
    for i, t in enumerate(evo.params.t_grid):
        rho = evo.subsystem_state(i)
        neg, margins = exact_margins(rho)
        errors = None
        if shadow_n:
            shadow = sh.simulate_shadow(rho, shadow_n, seed=seed + i, ensemble=sh.GLOBAL)
            margins = _shadow_margins(shadow)
            err = sh.jackknife_error(
                shadow, lambda s: [_shadow_margins(s)[c] for c in SCAN_CONDITIONS],
                n_blocks=jackknife_blocks)
            errors = dict(zip(SCAN_CONDITIONS, err))
        rows.append(ScanRow(float(t), neg, margins, errors))
    return rows


def detection_window(rows: list[ScanRow], stronger: str, weaker: str) -> list[float]:
    """Times where ``stronger`` detects and ``weaker`` does not."""
    return [r.t for r in rows if r.detected(stronger) and not r.detected(weaker)]


def d4_window_search(params: PXPParams, fallback_sites: int = 14) -> tuple[int, list[float]]:
    """Times where D4 detects beyond D3, retrying on a longer chain if there are none.

    The subsystem is shifted to keep its position relative to the chain
    centre. Returns (chain length used, window times).
    """
    times = detection_window(pxp_entanglement_scan(pxp_evolve(params)), "D4", "D3")
    if times or params.n_sites >= fallback_sites:
        return params.n_sites, times
    shift = (fallback_sites - params.n_sites) // 2
    bigger = replace(params, n_sites=fallback_sites,
                     subsystem=tuple(s + shift for s in params.subsystem))
    log.warning("no D4-beyond-D3 window at N=%d; retrying at N=%d", params.n_sites, fallback_sites)
    times = detection_window(pxp_entanglement_scan(pxp_evolve(bigger)), "D4", "D3")
    return fallback_sites, times
