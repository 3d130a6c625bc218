"""U(1) charge sectors of a state and of its partial transpose.

A state commuting with the total excitation number is block diagonal in
the sectors of N_A + N_B (kind "Q"); its partial transpose is then block
diagonal in the sectors of N_A - N_B (kind "P").
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb, floor, log2

import numpy as np

from . import conditions as cond
from .linalg import Bipartition, DensityOperator, partial_transpose, power_traces

BLOCK_TOL = 1e-10


class AsymmetricStateError(ValueError):
    pass


def _popcounts(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.int64)
    out = np.zeros_like(values)
    while np.any(values):
        out += values & 1
        values = values >> 1
    return out


def charges(bp: Bipartition) -> tuple[np.ndarray, np.ndarray]:
    """(N_A, N_B) for every computational basis index."""
    idx = np.arange(bp.dim)
    return _popcounts(idx >> bp.n_b), _popcounts(idx & (bp.dim_b - 1))


def charge_labels(bp: Bipartition, kind: str) -> np.ndarray:
    na, nb = charges(bp)
    if kind == "Q":
        return na + nb
    if kind == "P":
        return na - nb
    raise ValueError(f"unknown projector kind {kind!r}")


def charge_range(bp: Bipartition, kind: str) -> range:
    if kind == "Q":
        return range(0, bp.n + 1)
    if kind == "P":
        return range(-bp.n_b, bp.n_a + 1)
    raise ValueError(f"unknown projector kind {kind!r}")


@dataclass(frozen=True)
class SectorProjector:
    kind: str
    charge: int
    basis_indices: np.ndarray
    bipartition: Bipartition

    @property
    def size(self) -> int:
        return int(self.basis_indices.size)

    def expected_size(self) -> int:
        n = self.bipartition.n
        if self.kind == "Q":
            return comb(n, self.charge)
        return comb(n, self.charge + self.bipartition.n_b)

    def dense(self) -> np.ndarray:
        p = np.zeros(self.bipartition.dim)
        p[self.basis_indices] = 1.0
        return np.diag(p)


def build_projector(kind: str, q: int, bp: Bipartition) -> SectorProjector:
    if q not in charge_range(bp, kind):
        raise ValueError(f"charge {q} out of range for kind {kind} on {bp}")
    idx = np.flatnonzero(charge_labels(bp, kind) == q)
    proj = SectorProjector(kind, int(q), idx, bp)
    assert proj.size == proj.expected_size()
    return proj


@dataclass(frozen=True)
class SectorBlock:
    charge: int
    matrix: np.ndarray
    parent_dimension: int

    def moments(self, kmax: int) -> cond.MomentVector:
        return cond.MomentVector(power_traces(self.matrix, kmax))


def block_extract(m: DensityOperator, proj: SectorProjector) -> SectorBlock:
    if m.bipartition != proj.bipartition:
        raise ValueError("projector was built for a different bipartition")
    ix = proj.basis_indices
    return SectorBlock(proj.charge, m.matrix[np.ix_(ix, ix)].copy(), m.dim)


def embed_block(block: SectorBlock, proj: SectorProjector) -> np.ndarray:
    out = np.zeros((block.parent_dimension,) * 2, dtype=complex)
    ix = proj.basis_indices
    out[np.ix_(ix, ix)] = block.matrix
    return out


def off_block_residual(m: DensityOperator | np.ndarray, bp: Bipartition, kind: str) -> float:
    a = m.matrix if isinstance(m, DensityOperator) else np.asarray(m)
    lab = charge_labels(bp, kind)
    mask = lab[:, None] != lab[None, :]
    return float(np.linalg.norm(a[mask]))


def is_block_diagonal(m: DensityOperator, kind: str, tol: float = BLOCK_TOL) -> tuple[bool, float]:
    res = off_block_residual(m, m.bipartition, kind)
    norm = np.linalg.norm(m.matrix)
    return bool(res <= tol * max(norm, 1e-300)), res


def symmetrize(rho: DensityOperator) -> DensityOperator:
    """sum_q Q_q rho Q_q: drop coherences between different total charges."""
    bp = rho.bipartition
    lab = charge_labels(bp, "Q")
    keep = lab[:, None] == lab[None, :]
    return DensityOperator(np.where(keep, rho.matrix, 0.0), bp, check=False)


def symmetrize_unitary_average(rho: DensityOperator) -> DensityOperator:
    """Same channel as :func:`symmetrize`, as an average of 2^k collective phase rotations.

    Each rotation applies diag(1, exp(2 pi i j / 2^k)) to every qubit, with
    2^k > n so that only equal-charge coherences survive the average.
    Reference implementation for tests.
    """
    bp = rho.bipartition
    n = bp.n
    k = floor(log2(n)) + 1
    lab = charge_labels(bp, "Q")
    acc = np.zeros_like(rho.matrix)
    for j in range(2**k):
        phase = np.exp(2j * np.pi * j * lab / 2**k)
        acc += phase[:, None] * rho.matrix * phase.conj()[None, :]
    return DensityOperator(acc / 2**k, bp)


def require_symmetric(rho: DensityOperator, tol: float = BLOCK_TOL) -> None:
    ok, res = is_block_diagonal(rho, "Q", tol)
    if not ok:
        raise AsymmetricStateError(
            f"state has off-sector weight {res:.3g}; symmetrize explicitly first"
        )


def pt_sector_blocks(rho: DensityOperator) -> dict[int, SectorBlock]:
    """All non-empty P-kind blocks of rho^Gamma."""
    bp = rho.bipartition
    pt = partial_transpose(rho)
    return {q: block_extract(pt, build_projector("P", q, bp)) for q in charge_range(bp, "P")}


def sr_moments(rho: DensityOperator, q: int, kmax: int, check: bool = True) -> cond.MomentVector:
    if check:
        require_symmetric(rho)
    proj = build_projector("P", q, rho.bipartition)
    if proj.size == 0:
        raise ValueError(f"sector {q} is empty")
    return block_extract(partial_transpose(rho), proj).moments(kmax)


def sr_evaluate(rho: DensityOperator, q: int, condition: str, tol: float = cond.DETECTION_TOL) -> cond.ConditionReport:
    """Evaluate ``condition`` on the raw moments of the sector-q block of rho^Gamma."""
    p = sr_moments(rho, q, cond.required_order(condition))
    return cond.evaluate(condition, p, tol, sector_resolved=True).with_sector(q)


# --- multi-copy identity for sector moments --------------------------------

def multicopy_sector_moment(rho: DensityOperator, q: int, k: int) -> tuple[float, float]:
    """(tr (P_q rho^G P_q)^k, tr(L_q^(k) rho^{(x)k})).

    The second value contracts rho^{(x)k} with a cyclic permutation of the
    k copies (forward on A, backward on B) followed by the sector projector
    acting on A of the first copy and B of the last copy. Only index
    arithmetic is used; the 2^(kn)-dimensional operator is never formed.
    """
    bp = rho.bipartition
    if k < 1 or k > 3:
        raise ValueError("k must be 1, 2 or 3")
    if k * bp.n > 12:
        raise ValueError("k copies exceed the 12-qubit cap")
    require_symmetric(rho)
    direct = float(np.real(np.trace(np.linalg.matrix_power(
        block_extract(partial_transpose(rho), build_projector("P", q, bp)).matrix, k))))

    da, db = bp.dim_a, bp.dim_b
    r = rho.matrix.reshape(da, db, da, db)
    ca = _popcounts(np.arange(da))
    cb = _popcounts(np.arange(db))
    # output multi-index x = (a_1..a_k, b_1..b_k); permutation input y:
    # tilde-S puts a_k in slot 1 and a_{c-1} in slot c, S puts b_{c+1} in slot c.
    # tr(D Perm R) = sum_x D[x] R[y(x), x] with y = Perm^{-1} x.
    grids = np.meshgrid(*([np.arange(da)] * k + [np.arange(db)] * k), indexing="ij")
    a_out = [g.ravel() for g in grids[:k]]
    b_out = [g.ravel() for g in grids[k:]]
    a_in = a_out[1:] + a_out[:1]   # input slot c carries what output slot c+1 shows
    b_in = b_out[-1:] + b_out[:-1]  # input slot c carries what output slot c-1 shows
    weight = (ca[a_out[0]] - cb[b_out[-1]] == q).astype(float)
    val = weight.astype(complex)
    for c in range(k):
        val = val * r[a_in[c], b_in[c], a_out[c], b_out[c]]
    return direct, float(np.real(val.sum()))
