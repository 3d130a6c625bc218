"""Classical shadows from randomized measurements, with U-statistics estimators.

Random stream contract
----------------------
Snapshot ``i`` of a run with master seed ``s`` draws its randomness from
chunk ``c = i // CHUNK`` (row ``i % CHUNK``). Chunk ``c`` uses
``numpy.random.Generator(Philox(SeedSequence(s, spawn_key=(c,))))`` and
always draws a full chunk, in this order:

* Pauli ensemble: ``integers(0, 3, (CHUNK, n))`` basis labels (0=X, 1=Y,
  2=Z), then ``random((CHUNK, n))`` uniforms for the outcome bits.
* global ensemble: ``standard_normal((CHUNK, d, d, 2))`` for the unitaries
  (QR with phase fix), then ``random((CHUNK, n))`` uniforms.

Outcome bits are sampled qubit by qubit (qubit 0 first): bit k is 1 iff
its uniform is >= the conditional probability of 0 given earlier bits.
A snapshot therefore depends only on (seed, index, ensemble, state).
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .linalg import Bipartition, DensityOperator, partial_transpose
from .symmetry import SectorProjector, build_projector

CHUNK = 1024
PAULI, GLOBAL = 0, 1

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_SDAG = np.diag([1, -1j])
# rotation applied before a Z measurement, indexed by basis label
BASIS_ROTATIONS = np.stack([_H, _H @ _SDAG, np.eye(2, dtype=complex)])
_PAULIS = np.stack([
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]]),
    np.array([[1, 0], [0, -1]], dtype=complex),
])
# inverted-channel factor 3 U^dag|b><b|U - I = (I + 3 (-1)^b sigma)/2, index 2*basis + bit
SNAPSHOT_FACTORS = np.stack([
    (np.eye(2) + 3 * s * _PAULIS[b]) / 2 for b in range(3) for s in (1, -1)
])


@dataclass(frozen=True)
class Snapshot:
    bases: np.ndarray
    outcomes: np.ndarray
    source_index: int = 0
    unitary: np.ndarray | None = None

    def __post_init__(self):
        if len(self.bases) != len(self.outcomes):
            raise ValueError("bases and outcomes must cover the same qubits")

    def factors(self) -> np.ndarray:
        """Per-qubit 2x2 factors of the inverted snapshot (Pauli ensemble)."""
        return SNAPSHOT_FACTORS[2 * np.asarray(self.bases) + np.asarray(self.outcomes)]

    def dense(self) -> np.ndarray:
        n = len(self.outcomes)
        if self.unitary is not None:
            d = 2**n
            b = _bits_to_index(np.asarray(self.outcomes)[None, :])[0]
            v = self.unitary.conj()[b]  # U^dag |b>
            return (d + 1) * np.outer(v, v.conj()) - np.eye(d)
        out = np.ones((1, 1), dtype=complex)
        for f in self.factors():
            out = np.kron(out, f)
        return out


@dataclass
class Shadow:
    """A collection of N snapshots stored column-wise."""

    bipartition: Bipartition
    bases: np.ndarray          # (N, n) uint8
    outcomes: np.ndarray       # (N, n) uint8
    source_index: np.ndarray   # (N,) uint32
    ensemble: int = PAULI
    unitaries: np.ndarray | None = None  # (N, d, d) for the global ensemble
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self):
        return self.outcomes.shape[0]

    @property
    def n_qubits(self) -> int:
        return self.bipartition.n

    def __getitem__(self, i: int) -> Snapshot:
        u = None if self.unitaries is None else self.unitaries[i]
        return Snapshot(self.bases[i], self.outcomes[i], int(self.source_index[i]), u)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def subset(self, idx) -> "Shadow":
        idx = np.asarray(idx)
        return Shadow(
            self.bipartition,
            self.bases[idx],
            self.outcomes[idx],
            self.source_index[idx],
            self.ensemble,
            None if self.unitaries is None else self.unitaries[idx],
        )

    def group_keys(self) -> np.ndarray:
        """Integer key per snapshot; equal keys mean identical measurement data.

        Pauli snapshots have 6^n possible values. Global-ensemble snapshots
        are all treated as distinct.
        """
        if self.ensemble == GLOBAL:
            return np.arange(len(self))
        codes = (2 * self.bases.astype(np.int64) + self.outcomes).astype(np.int64)
        w = 6 ** np.arange(self.n_qubits - 1, -1, -1, dtype=np.int64)
        return codes @ w

    @classmethod
    def from_snapshots(cls, snaps: Sequence[Snapshot], bp: Bipartition) -> "Shadow":
        snaps = list(snaps)
        us = [s.unitary for s in snaps]
        glob = any(u is not None for u in us)
        return cls(
            bp,
            np.array([s.bases for s in snaps], dtype=np.uint8).reshape(len(snaps), bp.n),
            np.array([s.outcomes for s in snaps], dtype=np.uint8).reshape(len(snaps), bp.n),
            np.array([s.source_index for s in snaps], dtype=np.uint32),
            GLOBAL if glob else PAULI,
            np.array(us) if glob else None,
        )


# --- sources ----------------------------------------------------------------

@dataclass(frozen=True)
class SourceSequence:
    """States rho_1..rho_N given as a palette of states plus an assignment."""

    states: tuple
    assignment: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64)
        if a.ndim != 1 or a.size == 0:
            raise ValueError("assignment must be a non-empty 1d array")
        if a.min() < 0 or a.max() >= len(self.states):
            raise ValueError("assignment refers to a missing state")
        object.__setattr__(self, "assignment", a)
        object.__setattr__(self, "states", tuple(self.states))
        for rho in self.states:
            _check_state(rho)

    @property
    def N(self) -> int:
        return self.assignment.size

    @classmethod
    def constant(cls, rho: DensityOperator, N: int) -> "SourceSequence":
        return cls((rho,), np.zeros(N, dtype=np.int64))

    @classmethod
    def alternating(cls, states, N: int) -> "SourceSequence":
        return cls(tuple(states), np.arange(N) % len(states))

    @classmethod
    def schedule(cls, fn: Callable[[float], DensityOperator], N: int, n_steps: int) -> "SourceSequence":
        """Drift along a parameter s in [0, 1], discretized to ``n_steps`` states."""
        grid = np.linspace(0.0, 1.0, n_steps)
        states = tuple(fn(s) for s in grid)
        assign = np.minimum((np.arange(N) * n_steps) // N, n_steps - 1)
        return cls(states, assign)

    def average(self) -> DensityOperator:
        w = np.bincount(self.assignment, minlength=len(self.states)) / self.N
        m = sum(wi * s.matrix for wi, s in zip(w, self.states))
        return DensityOperator(m, self.states[0].bipartition)

    def __getitem__(self, i: int) -> DensityOperator:
        return self.states[self.assignment[i]]


def _check_state(rho: DensityOperator) -> None:
    if not rho.is_normalized():
        raise ValueError("source state must have unit trace")
    if np.linalg.eigvalsh(rho.matrix)[0] < -1e-9:
        raise ValueError("source state must be PSD")


# --- sampling ---------------------------------------------------------------

def chunk_generator(seed: int, chunk: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(chunk),))
    return np.random.Generator(np.random.Philox(ss))


def _bits_to_index(bits: np.ndarray) -> np.ndarray:
    n = bits.shape[-1]
    w = 1 << np.arange(n - 1, -1, -1, dtype=np.int64)
    return bits.astype(np.int64) @ w


def pauli_probabilities(rho: np.ndarray, bases: Sequence[int]) -> np.ndarray:
    """Born distribution <b|U rho U^dag|b> for per-qubit basis labels."""
    n = len(bases)
    t = np.asarray(rho).reshape((2,) * (2 * n))
    for k, b in enumerate(bases):
        if b == 2:
            continue
        u = BASIS_ROTATIONS[b]
        t = np.moveaxis(np.tensordot(u, t, axes=([1], [k])), 0, k)
        t = np.moveaxis(np.tensordot(u.conj(), t, axes=([1], [n + k])), 0, n + k)
    d = 2**n
    p = np.real(np.diagonal(t.reshape(d, d))).copy()
    p[p < 0] = 0.0
    return p / p.sum()


def sample_sequential(probs: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Draw bitstrings qubit by qubit from rows of ``probs`` (M, 2^n)."""
    m, d = probs.shape
    n = uniforms.shape[1]
    prefix = np.zeros(m, dtype=np.int64)
    bits = np.zeros((m, n), dtype=np.uint8)
    rows = np.arange(m)
    for k in range(n):
        sel = probs.reshape(m, 2**k, 2, d >> (k + 1))[rows, prefix]
        marg = sel.sum(axis=-1)
        tot = marg.sum(axis=1)
        p0 = np.divide(marg[:, 0], tot, out=np.full(m, 0.5), where=tot > 0)
        b = (uniforms[:, k] >= p0).astype(np.int64)
        bits[:, k] = b
        prefix = 2 * prefix + b
    return bits


def sample_snapshot(rho: DensityOperator, rng: np.random.Generator, source_index: int = 0) -> Snapshot:
    """One Pauli-basis snapshot drawn with an explicit generator."""
    n = rho.bipartition.n
    bases = rng.integers(0, 3, size=n)
    u = rng.random((1, n))
    probs = pauli_probabilities(rho.matrix, bases)[None, :]
    bits = sample_sequential(probs, u)[0]
    return Snapshot(bases.astype(np.uint8), bits, source_index)


def simulate_shadow(source: SourceSequence | DensityOperator, N: int | None = None,
                    seed: int = 0, ensemble: int = PAULI) -> Shadow:
    """Measure every state of ``source`` once under the documented stream."""
    if isinstance(source, DensityOperator):
        if N is None:
            raise ValueError("N is required for a constant source")
        source = SourceSequence.constant(source, N)
    N = source.N
    bp = source.states[0].bipartition
    n, d = bp.n, bp.dim
    bases = np.zeros((N, n), dtype=np.uint8)
    outcomes = np.zeros((N, n), dtype=np.uint8)
    unitaries = np.zeros((N, d, d), dtype=complex) if ensemble == GLOBAL else None
    prob_cache: dict = {}
    for c in range(math.ceil(N / CHUNK)):
        lo, hi = c * CHUNK, min(N, (c + 1) * CHUNK)
        m = hi - lo
        rng = chunk_generator(seed, c)
        src = source.assignment[lo:hi]
        if ensemble == PAULI:
            b = rng.integers(0, 3, size=(CHUNK, n))[:m]
            u = rng.random((CHUNK, n))[:m]
            settings = b @ (3 ** np.arange(n - 1, -1, -1))
            probs = np.empty((m, d))
            keys = src * 3**n + settings
            for key in np.unique(keys):
                if key not in prob_cache:
                    s_idx, setting = divmod(int(key), 3**n)
                    labels = [(setting // 3 ** (n - 1 - k)) % 3 for k in range(n)]
                    prob_cache[key] = pauli_probabilities(source.states[s_idx].matrix, labels)
                probs[keys == key] = prob_cache[key]
            bases[lo:hi] = b
        elif ensemble == GLOBAL:
            z = rng.standard_normal((CHUNK, d, d, 2))[:m]
            u = rng.random((CHUNK, n))[:m]
            us = _haar_from_normals(z)
            unitaries[lo:hi] = us
            probs = np.empty((m, d))
            for s_idx in np.unique(src):
                sel = src == s_idx
                rho = source.states[s_idx].matrix
                # diag(U rho U^dag) for each unitary
                probs[sel] = np.real(np.einsum("mij,jk,mik->mi", us[sel], rho, us[sel].conj()))
            probs[probs < 0] = 0.0
            probs /= probs.sum(axis=1, keepdims=True)
        else:
            raise ValueError(f"unknown ensemble {ensemble}")
        outcomes[lo:hi] = sample_sequential(probs, u)
    return Shadow(bp, bases, outcomes, source.assignment.astype(np.uint32), ensemble, unitaries)


def global_unitaries(seed: int, N: int, n: int) -> np.ndarray:
    """Regenerate the global-ensemble unitaries of a run from its seed."""
    d = 2**n
    out = np.zeros((N, d, d), dtype=complex)
    for c in range(math.ceil(N / CHUNK)):
        lo, hi = c * CHUNK, min(N, (c + 1) * CHUNK)
        z = chunk_generator(seed, c).standard_normal((CHUNK, d, d, 2))[: hi - lo]
        out[lo:hi] = _haar_from_normals(z)
    return out


def _haar_from_normals(z: np.ndarray) -> np.ndarray:
    g = (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2)
    q, r = np.linalg.qr(g)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (diag / np.abs(diag))[..., None, :]


# --- snapshot operators -----------------------------------------------------

def snapshot_operator(s: Snapshot) -> np.ndarray:
    """Dense inverted snapshot; use ``s.factors()`` for the lazy form."""
    return s.dense()


def dense_snapshots(shadow: Shadow, idx=None) -> np.ndarray:
    """(M, d, d) dense snapshots; meant for small registers and chunks."""
    idx = np.arange(len(shadow)) if idx is None else np.asarray(idx)
    d = shadow.bipartition.dim
    if shadow.ensemble == GLOBAL:
        b = _bits_to_index(shadow.outcomes[idx])
        v = shadow.unitaries[idx, b, :].conj()  # rows are U^dag|b>
        return (d + 1) * np.einsum("mi,mj->mij", v, v.conj()) - np.eye(d)
    f = SNAPSHOT_FACTORS[2 * shadow.bases[idx].astype(np.int64) + shadow.outcomes[idx]]
    out = f[:, 0]
    for k in range(1, f.shape[1]):
        out = np.einsum("mij,mkl->mikjl", out, f[:, k]).reshape(len(idx), out.shape[1] * 2, -1)
    return out


def _sector_bits(shadow: Shadow, proj: SectorProjector | None) -> np.ndarray:
    bp = shadow.bipartition
    idx = np.arange(bp.dim) if proj is None else proj.basis_indices
    return ((idx[:, None] >> np.arange(bp.n - 1, -1, -1)) & 1).astype(np.int64)


def pt_blocks(shadow: Shadow, proj: SectorProjector | None = None, idx=None) -> np.ndarray:
    """(M, s, s) blocks P rho_hat^Gamma P of each snapshot (full PT if ``proj`` is None)."""
    bp = shadow.bipartition
    if proj is not None and proj.bipartition != bp:
        raise ValueError("projector built for a different bipartition")
    idx = np.arange(len(shadow)) if idx is None else np.asarray(idx)
    if shadow.ensemble == GLOBAL:
        dense = dense_snapshots(shadow, idx)
        da, db = bp.dim_a, bp.dim_b
        pt = dense.reshape(-1, da, db, da, db).transpose(0, 1, 4, 3, 2).reshape(-1, bp.dim, bp.dim)
        if proj is None:
            return pt
        ix = proj.basis_indices
        return pt[:, ix[:, None], ix[None, :]]
    bits = _sector_bits(shadow, proj)
    f = SNAPSHOT_FACTORS[2 * shadow.bases[idx].astype(np.int64) + shadow.outcomes[idx]]
    s = bits.shape[0]
    out = np.ones((len(idx), s, s), dtype=complex)
    for k in range(bp.n):
        fk = f[:, k]
        if k >= bp.n_a:
            fk = fk.transpose(0, 2, 1)
        out *= fk[:, bits[:, k][:, None], bits[:, k][None, :]]
    return out


@dataclass
class _Reduced:
    """Distinct snapshot blocks with multiplicities, in canonical order."""

    blocks: np.ndarray
    counts: np.ndarray

    @property
    def N(self) -> int:
        return int(self.counts.sum())


def _reduce(shadow: Shadow, proj: SectorProjector | None) -> _Reduced:
    key = ("reduce", None if proj is None else (proj.kind, proj.charge))
    if key in shadow._cache:
        return shadow._cache[key]
    if shadow.ensemble == GLOBAL:
        b = _bits_to_index(shadow.outcomes)
        u = shadow.unitaries
        order = np.lexsort((u[:, 0, 0].imag, u[:, 0, 0].real, u[:, -1, -1].real, b))
        red = _Reduced(pt_blocks(shadow, proj, order), np.ones(len(shadow), dtype=np.int64))
    else:
        uniq, first, counts = np.unique(shadow.group_keys(), return_index=True, return_counts=True)
        red = _Reduced(pt_blocks(shadow, proj, first), counts.astype(np.int64))
    shadow._cache[key] = red
    return red


# --- estimators -------------------------------------------------------------

def estimate_linear(shadow: Shadow, observable) -> float:
    """(1/N) sum_i tr(O rho_hat_i)."""
    if len(shadow) == 0:
        raise ValueError("empty shadow")
    o = observable.matrix if isinstance(observable, DensityOperator) else np.asarray(observable)
    d = shadow.bipartition.dim
    if o.shape != (d, d):
        raise ValueError("observable dimension does not match the shadow register")
    keys = shadow.group_keys()
    uniq, first, counts = np.unique(keys, return_index=True, return_counts=True)
    total = 0.0
    for lo in range(0, first.size, CHUNK):
        sl = slice(lo, lo + CHUNK)
        snaps = dense_snapshots(shadow, first[sl])
        vals = np.real(np.einsum("ij,mji->m", o, snaps))
        total += float(np.dot(counts[sl], vals))
    return total / len(shadow)


def _sector(shadow: Shadow, q) -> SectorProjector | None:
    if q is None:
        return None
    if isinstance(q, SectorProjector):
        return q
    return build_projector("P", int(q), shadow.bipartition)


def u_moment(blocks: np.ndarray, counts: np.ndarray, k: int) -> float:
    """Mean of Re tr(B_i1 ... B_ik) over ordered k-tuples of distinct snapshots.

    ``blocks`` holds distinct snapshot blocks and ``counts`` their
    multiplicities. Coincident indices are removed by inclusion-exclusion
    over set partitions of the k trace positions, so the cost is linear in
    the number of snapshots.
    """
    c = counts.astype(float)
    N = c.sum()
    if k < 1 or k > 4:
        raise ValueError("orders 1..4 are supported")
    if N < k:
        raise ValueError(f"need at least {k} snapshots")
    S = np.einsum("m,mij->ij", c, blocks)
    if k == 1:
        total = np.trace(S)
    else:
        B2 = blocks @ blocks
        S2 = np.einsum("m,mij->ij", c, B2)
        if k == 2:
            total = np.trace(S @ S) - np.trace(S2)
        elif k == 3:
            tr_b3 = np.einsum("m,mij,mji->", c, B2, blocks)
            total = np.trace(S @ S @ S) - 3 * np.trace(S2 @ S) + 2 * tr_b3
        else:
            B3 = B2 @ blocks
            S3 = np.einsum("m,mij->ij", c, B3)
            tr_b4 = np.einsum("m,mij,mji->", c, B2, B2)
            BS = blocks @ S
            t_x = np.einsum("m,mij,mji->", c, BS, BS)  # sum_i tr(B_i S B_i S)
            n_s = blocks.shape[1]
            x = blocks.reshape(len(c), n_s * n_s)
            # K[a,b,c,d] = sum_i c_i (B_i)_ab (B_i)_cd, then sum_ij tr(B_i B_j B_i B_j)
            K = (x.T @ (c[:, None] * x)).reshape(n_s, n_s, n_s, n_s)
            t_y = np.einsum("abcd,bcda->", K, K, optimize=True)
            S_2 = S @ S
            total = (np.trace(S_2 @ S_2) - 4 * np.trace(S2 @ S_2) - 2 * t_x
                     + 2 * np.trace(S2 @ S2) + t_y + 8 * np.trace(S3 @ S) - 6 * tr_b4)
    falling = np.prod([N - j for j in range(k)])
    return float(np.real(total) / falling)


def estimate_pt_moments(shadow: Shadow, kmax: int, q=None) -> np.ndarray:
    """U-statistics estimates of p_1..p_kmax of P_q rho^Gamma P_q (full PT if q is None)."""
    red = _reduce(shadow, _sector(shadow, q))
    return np.array([u_moment(red.blocks, red.counts, k) for k in range(1, kmax + 1)])


def estimate_D2_sector(shadow: Shadow, q) -> float:
    """U-statistics estimate of p_1^2 - p_2 of the sector-q block of rho_avg^Gamma.

    Pair term: tr(P rho_i) tr(P rho_j) - tr(P rho_i^G P rho_j^G).
    """
    if len(shadow) < 2:
        raise ValueError("need at least 2 snapshots")
    red = _reduce(shadow, _sector(shadow, q))
    return _d2_reduced(red.blocks, red.counts)


def estimate_p3_sector(shadow: Shadow, q) -> float:
    if len(shadow) < 3:
        raise ValueError("need at least 3 snapshots")
    red = _reduce(shadow, _sector(shadow, q))
    return u_moment(red.blocks, red.counts, 3)


# --- error bars -------------------------------------------------------------

def jackknife_error(samples, estimator: Callable, n_blocks: int | None = None):
    """Leave-one-out jackknife standard error of ``estimator(samples)``.

    ``samples`` is a numpy array or a :class:`Shadow`. Identical samples
    (same ``group_keys``) share one leave-one-out value. With ``n_blocks``
    contiguous groups are deleted instead of single samples. A vector-valued
    estimator gives a vector of errors.
    """
    N = len(samples)
    if N < 10:
        raise ValueError("jackknife needs at least 10 samples")
    take = samples.subset if isinstance(samples, Shadow) else (lambda ix: samples[ix])
    everything = np.arange(N)
    if n_blocks is not None:
        edges = np.array_split(everything, n_blocks)
        vals = np.array([estimator(take(np.setdiff1d(everything, e))) for e in edges], dtype=float)
        g = len(edges)
        return _as_float(np.sqrt((g - 1) / g * np.sum((vals - vals.mean(axis=0)) ** 2, axis=0)))
    if isinstance(samples, Shadow):
        keys = samples.group_keys()
    else:
        arr = np.asarray(samples)
        keys = np.unique(arr.reshape(N, -1), axis=0, return_inverse=True)[1].ravel()
    _, first, counts = np.unique(keys, return_index=True, return_counts=True)
    vals = np.array([estimator(take(np.delete(everything, i))) for i in first], dtype=float)
    return _weighted_jackknife(vals, counts)


def _weighted_jackknife(vals: np.ndarray, counts: np.ndarray):
    N = counts.sum()
    mean = np.tensordot(counts, vals, axes=1) / N
    dev2 = np.tensordot(counts, (vals - mean) ** 2, axes=1)
    return _as_float(np.sqrt((N - 1) / N * dev2))


def _as_float(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def _d2_reduced(blocks: np.ndarray, counts: np.ndarray) -> float:
    c = counts.astype(float)
    N = c.sum()
    a = np.real(np.einsum("mii->m", blocks))
    A = c @ a
    lin = A * A - c @ (a * a)
    S = np.einsum("m,mij->ij", c, blocks)
    fro = np.einsum("mij,mij->m", blocks, blocks.conj()).real
    quad = np.vdot(S, S).real - c @ fro
    return float((lin - quad) / (N * (N - 1)))


SECTOR_QUANTITIES = {
    "p1": lambda b, c: u_moment(b, c, 1),
    "D2": _d2_reduced,
    "p2": lambda b, c: u_moment(b, c, 2),
    "p3": lambda b, c: u_moment(b, c, 3),
}


def sector_estimate(shadow: Shadow, q, quantity: str) -> float:
    """One of p1, p2, p3 or D2 for the sector-q block, by name."""
    red = _reduce(shadow, _sector(shadow, q))
    return SECTOR_QUANTITIES[quantity](red.blocks, red.counts)


def sector_jackknife(shadow: Shadow, q, quantity: str) -> float:
    """Leave-one-out jackknife of a sector estimator, one evaluation per distinct snapshot."""
    if len(shadow) < 10:
        raise ValueError("jackknife needs at least 10 samples")
    fn = SECTOR_QUANTITIES[quantity]
    red = _reduce(shadow, _sector(shadow, q))
    vals = np.empty(red.counts.size)
    for u in range(red.counts.size):
        c = red.counts.copy()
        c[u] -= 1
        keep = c > 0
        vals[u] = fn(red.blocks[keep], c[keep])
    return _weighted_jackknife(vals, red.counts)


def batch_median_estimate(shadow, estimator: Callable, batches: int) -> float:
    """Median over contiguous batches; an even count averages the two central values."""
    if batches < 1:
        raise ValueError("batches must be >= 1")
    N = len(shadow)
    if batches == 1:
        return float(estimator(shadow))
    take = shadow.subset if isinstance(shadow, Shadow) else (lambda ix: shadow[ix])
    parts = np.array_split(np.arange(N), batches)
    return float(np.median([estimator(take(p)) for p in parts]))


# --- rigorous budgets ---------------------------------------------------------

@dataclass(frozen=True)
class BudgetParams:
    epsilon: float
    delta: float
    sector: SectorProjector
    c1: float | None = None  # None: simplified constants C1 = 4, C2 = 2
    c2: float | None = None

    def __post_init__(self):
        if not (0 < self.epsilon < 1 and 0 < self.delta < 1):
            raise ValueError("epsilon and delta must lie in (0, 1)")
        if self.sector.size < 2:
            raise ValueError("bounds need a non-trivial sector (tr P >= 2)")
        for c in (self.c1, self.c2):
            if c is not None and c <= 0:
                raise ValueError("constants must be positive")


def c1_worst_case(trace_p: int) -> float:
    return 4.0 * (1.0 - 1.0 / trace_p)


def c2_exact(trace_p: int, n_qubits: int) -> float:
    d = 2.0**n_qubits
    return 1.0 + (3 * trace_p - 4 + 8.0 / (trace_p * d * d)) / d


def c1_for_states(states, proj: SectorProjector) -> float:
    """State-dependent C1: max over sources of 4 (x^2 + (y - 2 x^2)/tr P)."""
    t = proj.size
    ix = proj.basis_indices
    best = -np.inf
    for rho in states:
        x = float(np.real(np.trace(rho.matrix[np.ix_(ix, ix)])))
        pt = partial_transpose(rho).matrix
        y = float(np.real(np.einsum("ij,ji->", pt[:, ix], pt[ix, :])))
        best = max(best, 4.0 * (x * x + (y - 2 * x * x) / t))
    return best


def measurement_budget(params: BudgetParams, bp: Bipartition) -> int:
    """Number of snapshots guaranteeing |D2_hat - D2| <= eps with prob. 1 - delta."""
    t = params.sector.size
    n = bp.n
    if params.sector.bipartition != bp:
        raise ValueError("sector was built for a different bipartition")
    c1, c2 = params.c1, params.c2
    if c1 is None or c2 is None:
        if n < 4:
            raise ValueError("simplified constants need at least 4 qubits; pass c1 and c2")
        c1 = 4.0 if c1 is None else c1
        c2 = 2.0 if c2 is None else c2
    eps2d = params.epsilon**2 * params.delta
    lead = 2.0**n * t / eps2d
    val = lead * 0.5 * (c1 + math.sqrt(c1 * c1 + c2 * eps2d * 2.0**n / t)) + 1.0
    return int(math.ceil(val))


def confidence_radius(N: int, delta: float, sector: SectorProjector, bp: Bipartition,
                      c1: float | None = None, c2: float = 2.0) -> float:
    """Half-width of the (1 - delta) interval around a D2 estimate from N snapshots."""
    if N < 2:
        raise ValueError("need at least 2 snapshots")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    t = sector.size
    if t < 2:
        raise ValueError("bounds need a non-trivial sector (tr P >= 2)")
    if c1 is None:
        c1 = c1_worst_case(t)
    n = bp.n
    return math.sqrt(2.0**n * t / (delta * (N - 1)) * (c1 + c2 * 4.0**n / (N - 1)))


# --- QSH1 archive -------------------------------------------------------------

_QSH_MAGIC = b"QSH1"


def write_qsh(path, shadow: Shadow) -> None:
    n = shadow.n_qubits
    N = len(shadow)
    nbytes = (n + 7) // 8
    rec = np.zeros((N, 4 + n + nbytes), dtype=np.uint8)
    rec[:, :4] = shadow.source_index.astype("<u4").view(np.uint8).reshape(N, 4)
    if shadow.ensemble == PAULI:
        rec[:, 4 : 4 + n] = shadow.bases
    packed = np.packbits(shadow.outcomes, axis=1, bitorder="little")
    rec[:, 4 + n :] = packed
    header = _QSH_MAGIC + struct.pack("<IIQ", n, shadow.ensemble, N)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(header + rec.tobytes())
    tmp.replace(path)


def read_qsh(path, n_a: int | None = None, seed: int | None = None) -> Shadow:
    """Load an archive; global-ensemble archives need the run seed to rebuild unitaries."""
    raw = Path(path).read_bytes()
    if len(raw) < 20 or raw[:4] != _QSH_MAGIC:
        raise ValueError(f"{path}: not a QSH1 archive")
    n, ens, N = struct.unpack("<IIQ", raw[4:20])
    if ens not in (PAULI, GLOBAL):
        raise ValueError(f"{path}: unknown ensemble tag {ens}")
    nbytes = (n + 7) // 8
    width = 4 + n + nbytes
    if len(raw) != 20 + N * width:
        raise ValueError(f"{path}: truncated archive")
    rec = np.frombuffer(raw, dtype=np.uint8, offset=20).reshape(N, width)
    src = rec[:, :4].copy().view("<u4").ravel().astype(np.uint32)
    bases = rec[:, 4 : 4 + n].copy()
    outcomes = np.unpackbits(rec[:, 4 + n :], axis=1, count=n, bitorder="little")
    if n_a is None:
        n_a = n // 2
    bp = Bipartition(n_a, n - n_a)
    unitaries = None
    if ens == GLOBAL:
        if seed is None:
            raise ValueError("global-ensemble archives need the run seed")
        unitaries = global_unitaries(seed, N, n)
    return Shadow(bp, bases, outcomes.astype(np.uint8), src, ens, unitaries)
