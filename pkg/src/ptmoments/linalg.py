"""Dense operator algebra on qubit registers split into A|B.

Basis convention: computational index ``i = a * 2**n_b + b`` with the A bits
most significant, and within each subsystem qubit 0 is the most significant
bit. Bit value 1 counts as one excitation everywhere in the package.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAX_QUBITS = 14
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10


class NonHermitianError(ValueError):
    pass


@dataclass(frozen=True)
class Bipartition:
    n_a: int
    n_b: int

    def __post_init__(self):
        if self.n_a < 1 or self.n_b < 1:
            raise ValueError("both subsystems need at least one qubit")
        if self.n_a + self.n_b > MAX_QUBITS:
            raise ValueError(f"at most {MAX_QUBITS} qubits supported")

    @property
    def n(self) -> int:
        return self.n_a + self.n_b

    @property
    def dim(self) -> int:
        return 2**self.n

    @property
    def dim_a(self) -> int:
        return 2**self.n_a

    @property
    def dim_b(self) -> int:
        return 2**self.n_b


class DensityOperator:
    """Immutable Hermitian matrix over a bipartite qubit register.

    The matrix need not be normalized or PSD (sector blocks, partial
    transposes and snapshots all live here). Inputs within
    ``HERMITIAN_TOL`` of Hermitian are symmetrized on construction.
    """

    __slots__ = ("bipartition", "_m")

    def __init__(self, matrix, bipartition: Bipartition, check: bool = True):
        m = np.array(matrix, dtype=complex)
        if m.shape != (bipartition.dim, bipartition.dim):
            raise ValueError(
                f"matrix shape {m.shape} does not match {bipartition.n} qubits"
            )
        if check:
            dev = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
            if dev > HERMITIAN_TOL * max(1.0, np.max(np.abs(m))):
                raise NonHermitianError(f"not Hermitian (deviation {dev:.3g})")
            m = 0.5 * (m + m.conj().T)
        m.setflags(write=False)
        self.bipartition = bipartition
        self._m = m

    @property
    def matrix(self) -> np.ndarray:
        return self._m

    @property
    def dim(self) -> int:
        return self._m.shape[0]

    def trace(self) -> float:
        return float(np.real(np.trace(self._m)))

    def is_normalized(self, tol: float = TRACE_TOL) -> bool:
        return abs(self.trace() - 1.0) <= tol

    def __repr__(self):
        bp = self.bipartition
        return f"DensityOperator(n_a={bp.n_a}, n_b={bp.n_b}, tr={self.trace():.6g})"


@dataclass(frozen=True)
class PureState:
    bipartition: Bipartition
    amplitudes: np.ndarray

    def __post_init__(self):
        psi = np.asarray(self.amplitudes, dtype=complex)
        if psi.shape != (self.bipartition.dim,):
            raise ValueError("amplitude vector has the wrong dimension")
        if abs(np.vdot(psi, psi).real - 1.0) > 1e-10:
            raise ValueError("state is not normalized")
        object.__setattr__(self, "amplitudes", psi)

    def density(self) -> DensityOperator:
        psi = self.amplitudes
        return DensityOperator(np.outer(psi, psi.conj()), self.bipartition)


def partial_transpose(rho: DensityOperator) -> DensityOperator:
    """Transpose the B indices: (a b, a' b') -> (a b', a' b)."""
    bp = rho.bipartition
    t = rho.matrix.reshape(bp.dim_a, bp.dim_b, bp.dim_a, bp.dim_b)
    t = t.transpose(0, 3, 2, 1).reshape(bp.dim, bp.dim)
    return DensityOperator(t, bp, check=False)


def partial_trace_matrix(m: np.ndarray, n_qubits: int, keep) -> np.ndarray:
    """Reduced matrix on the qubits listed in ``keep`` (order preserved)."""
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValueError("keep set is empty")
    if keep[0] < 0 or keep[-1] >= n_qubits:
        raise ValueError("qubit index out of range")
    drop = [q for q in range(n_qubits) if q not in keep]
    t = np.asarray(m).reshape((2,) * (2 * n_qubits))
    # contract ket/bra pairs of dropped qubits, highest first so axes stay valid
    nq = n_qubits
    for q in sorted(drop, reverse=True):
        t = np.trace(t, axis1=q, axis2=q + nq)
        nq -= 1
    d = 2 ** len(keep)
    return t.reshape(d, d)


def partial_trace(rho: DensityOperator, keep, split: int | None = None) -> DensityOperator:
    """Trace out every qubit not in ``keep``.

    The kept register needs at least two qubits to form a bipartition; the
    first ``split`` kept qubits become subsystem A (default: half).
    For a single kept qubit use :func:`partial_trace_matrix`.
    """
    keep = sorted(set(keep))
    if len(keep) < 2:
        if not keep:
            raise ValueError("keep set is empty")
        raise ValueError("a single kept qubit has no bipartition; use partial_trace_matrix")
    red = partial_trace_matrix(rho.matrix, rho.bipartition.n, keep)
    if split is None:
        split = len(keep) // 2
    return DensityOperator(red, Bipartition(split, len(keep) - split))


def reduced_density_pure(psi: np.ndarray, n_qubits: int, keep) -> np.ndarray:
    """Reduced matrix of |psi><psi| on ``keep`` (kept qubits in ascending order)."""
    keep = sorted(set(int(k) for k in keep))
    drop = [q for q in range(n_qubits) if q not in keep]
    t = np.asarray(psi).reshape((2,) * n_qubits).transpose(keep + drop)
    m = t.reshape(2 ** len(keep), -1)
    return m @ m.conj().T


def hermitian_spectrum(m: DensityOperator | np.ndarray) -> np.ndarray:
    """All eigenvalues, descending."""
    a = m.matrix if isinstance(m, DensityOperator) else np.asarray(m, dtype=complex)
    dev = np.max(np.abs(a - a.conj().T)) if a.size else 0.0
    if dev > HERMITIAN_TOL * max(1.0, np.max(np.abs(a)) if a.size else 1.0):
        raise NonHermitianError(f"not Hermitian (deviation {dev:.3g})")
    return np.linalg.eigvalsh(0.5 * (a + a.conj().T))[::-1]


def power_traces(a: np.ndarray, kmax: int) -> np.ndarray:
    """tr(A^k), k = 1..kmax, by repeated multiplication."""
    if kmax < 1:
        raise ValueError("kmax must be >= 1")
    a = np.asarray(a, dtype=complex)
    out = np.empty(kmax)
    if a.shape[0] == 0:
        out[:] = 0.0
        return out
    scale = max(1.0, float(np.max(np.abs(a))))
    p = a
    for k in range(kmax):
        tr = np.trace(p)
        if abs(tr.imag) > 1e-10 * scale ** (k + 1) * a.shape[0]:
            raise ArithmeticError(f"tr(A^{k + 1}) has imaginary part {tr.imag:.3g}")
        out[k] = tr.real
        if k + 1 < kmax:
            p = p @ a
    return out


def matrix_moments(m: DensityOperator | np.ndarray, kmax: int):
    from .conditions import MomentVector

    a = m.matrix if isinstance(m, DensityOperator) else m
    return MomentVector(power_traces(a, kmax))


def kron_all(mats) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def random_state(bp: Bipartition, rng: np.random.Generator, rank: int | None = None) -> DensityOperator:
    """Random mixed state from a Ginibre matrix (Hilbert-Schmidt measure for full rank)."""
    d = bp.dim
    r = d if rank is None else rank
    g = rng.normal(size=(d, r)) + 1j * rng.normal(size=(d, r))
    rho = g @ g.conj().T
    return DensityOperator(rho / np.trace(rho).real, bp)


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar unitary via QR of a complex Gaussian matrix with phase fix."""
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


# --- QDM1 binary format -----------------------------------------------------

_QDM_MAGIC = b"QDM1"


def write_qdm(path, rho: DensityOperator) -> None:
    bp = rho.bipartition
    buf = bytearray(_QDM_MAGIC)
    buf += struct.pack("<II", bp.n_a, bp.n_b)
    data = np.empty((bp.dim, bp.dim, 2), dtype="<f8")
    data[..., 0] = rho.matrix.real
    data[..., 1] = rho.matrix.imag
    buf += data.tobytes()
    _atomic_write(path, bytes(buf))


def read_qdm(path, check: bool = True) -> DensityOperator:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != _QDM_MAGIC:
        raise ValueError(f"{path}: not a QDM1 file")
    n_a, n_b = struct.unpack("<II", raw[4:12])
    bp = Bipartition(n_a, n_b)
    expected = 12 + 16 * bp.dim * bp.dim
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", offset=12).reshape(bp.dim, bp.dim, 2)
    m = data[..., 0] + 1j * data[..., 1]
    return DensityOperator(m, bp, check=check)


def _atomic_write(path, payload: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    tmp.replace(path)
