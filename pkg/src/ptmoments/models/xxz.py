"""Ground states of the open XXZ chain and their entanglement conditions."""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .. import conditions as cond
from ..linalg import Bipartition, DensityOperator, PureState, partial_transpose, reduced_density_pure
from ..symmetry import _popcounts, block_extract, build_projector
from .common import condition_report

MAX_SITES = 12
DEGENERACY_TOL = 1e-9
FULL_CONDITIONS = ("p3PPT", "D3", "D3opt", "Stieltjes5")


@dataclass(frozen=True)
class XXZParams:
    l_sites: int = 10
    jz: float = -1.0
    subsystem: tuple = (2, 3, 4, 5, 6, 7)  # 0-based sites
    split: int = 3  # first `split` subsystem sites form A1

    def __post_init__(self):
        if self.l_sites < 2 or self.l_sites > MAX_SITES:
            raise ValueError(f"l_sites must lie in [2, {MAX_SITES}]")
        sub = tuple(sorted(int(s) for s in self.subsystem))
        if len(set(sub)) != len(sub) or sub[0] < 0 or sub[-1] >= self.l_sites:
            raise ValueError("subsystem sites must be distinct and inside the chain")
        if not 1 <= self.split < len(sub):
            raise ValueError("split must leave both halves non-empty")
        object.__setattr__(self, "subsystem", sub)

    @property
    def sub_bipartition(self) -> Bipartition:
        return Bipartition(self.split, len(self.subsystem) - self.split)

    @classmethod
    def connected(cls, l_sites: int, ell: int, jz: float = -1.0) -> "XXZParams":
        start = (l_sites - ell) // 2
        return cls(l_sites, jz, tuple(range(start, start + ell)), ell // 2)

    @classmethod
    def disjoint(cls, l_sites: int, ell: int, jz: float = -1.0) -> "XXZParams":
        half = ell // 2
        sites = tuple(range(half)) + tuple(range(l_sites - (ell - half), l_sites))
        return cls(l_sites, jz, sites, half)


def xxz_hamiltonian(l_sites: int, jz: float, basis: np.ndarray | None = None) -> np.ndarray:
    """-(XX + YY + jz ZZ) on nearest neighbours, restricted to ``basis`` (all states if None)."""
    if basis is None:
        basis = np.arange(2**l_sites)
    pos = {int(b): i for i, b in enumerate(basis)}
    h = np.zeros((basis.size, basis.size))
    for i in range(l_sites - 1):
        m = (1 << (l_sites - 1 - i)) | (1 << (l_sites - 2 - i))
        bits = basis & m
        aligned = (bits == 0) | (bits == m)
        h[np.arange(basis.size), np.arange(basis.size)] -= jz * np.where(aligned, 1.0, -1.0)
        # XX + YY = 2 (s+ s- + s- s+) flips an antiparallel pair
        for col in np.flatnonzero(~aligned):
            h[pos[int(basis[col] ^ m)], col] -= 2.0
    return h


def zero_magnetization_basis(l_sites: int) -> np.ndarray:
    idx = np.arange(2**l_sites)
    basis = idx[_popcounts(idx) == l_sites // 2]
    assert basis.size == comb(l_sites, l_sites // 2)
    return basis


@dataclass(frozen=True)
class GroundState:
    state: PureState
    energy: float
    multiplicity: int


def xxz_ground_state(params: XXZParams, full_space: bool = False) -> GroundState:
    """Lowest state of the zero-magnetization sector (or of the full space).

    The sector holds a ground state for jz <= 1 only; larger jz is rejected.

    A degenerate ground space is represented by the normalized projection
    of the uniform superposition onto it; the overall phase makes the
    largest-magnitude amplitude real and positive.
    """
    L = params.l_sites
    if not full_space and params.jz > 1.0 + 1e-12:
        raise ValueError("for jz > 1 the ground state leaves the zero-magnetization sector")
    basis = np.arange(2**L) if full_space else zero_magnetization_basis(L)
    h = xxz_hamiltonian(L, params.jz, basis)
    ev, vec = np.linalg.eigh(h)
    scale = max(1.0, float(np.max(np.abs(ev))))
    mult = int(np.sum(ev - ev[0] <= DEGENERACY_TOL * scale))
    if mult == 1:
        v = vec[:, 0]
    else:
        g = vec[:, :mult]
        v = g @ (g.T @ np.ones(basis.size))
        if np.linalg.norm(v) < 1e-8:
            v = g[:, 0]
    v = v / np.linalg.norm(v)
    v = v * np.sign(v[np.argmax(np.abs(v))])
    psi = np.zeros(2**L, dtype=complex)
    psi[basis] = v
    energy = float(v @ h @ v)
    bp = Bipartition(L // 2, L - L // 2)
    return GroundState(PureState(bp, psi), energy, mult)


def subsystem_state(gs: GroundState, params: XXZParams) -> DensityOperator:
    m = reduced_density_pure(gs.state.amplitudes, params.l_sites, params.subsystem)
    return DensityOperator(m, params.sub_bipartition)


CSV_HEADER = ("jz", "condition", "sector", "lhs", "rhs", "margin", "verdict", "negativity")


def analyze_subsystem(rho: DensityOperator, sector: int = 1, conditions=FULL_CONDITIONS):
    """Condition reports on rho^Gamma and on its sector block, each with its negativity."""
    pt = partial_transpose(rho)
    p = cond.MomentVector(np.real([np.trace(np.linalg.matrix_power(pt.matrix, k)) for k in range(1, 6)]))
    neg = cond.negativity(pt)
    out = [(condition_report(c, p), neg) for c in conditions]
    block = block_extract(pt, build_projector("P", sector, rho.bipartition))
    pb = block.moments(5)
    neg_b = cond.negativity(block.matrix)
    out += [(condition_report(c, pb, sector_resolved=True).with_sector(sector), neg_b) for c in conditions]
    return out


def xxz_condition_sweep(params: XXZParams, jz_grid, sector: int = 1) -> list[tuple]:
    rows = []
    for jz in jz_grid:
        p = XXZParams(params.l_sites, float(jz), params.subsystem, params.split)
        rho = subsystem_state(xxz_ground_state(p), p)
        for rep, neg in analyze_subsystem(rho, sector):
            rows.append((float(jz), rep, neg))
    return rows
