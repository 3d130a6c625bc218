"""Moment inequalities that every PSD matrix satisfies.

Each check returns a :class:`ConditionReport` whose ``margin`` is signed so
that a positive value means the inequality is violated, i.e. the matrix
cannot be PSD and (for a partial transpose) the state is entangled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import DensityOperator, hermitian_spectrum

DETECTION_TOL = 1e-10


@dataclass(frozen=True)
class MomentVector:
    """Power traces (p_1, ..., p_k)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size < 1:
            raise ValueError("need at least p_1")
        if not np.all(np.isfinite(v)):
            raise ValueError("moments must be finite")
        object.__setattr__(self, "values", v)

    @property
    def order(self) -> int:
        return self.values.size

    def __getitem__(self, k: int) -> float:
        """1-based access: ``p[3]`` is p_3."""
        if k < 1 or k > self.order:
            raise IndexError(f"p_{k} not available (order {self.order})")
        return float(self.values[k - 1])

    def normalized(self) -> "MomentVector":
        """Moments of A / tr(A)."""
        p1 = self.values[0]
        if p1 <= 0:
            raise ValueError("cannot normalize a matrix with non-positive trace")
        k = np.arange(1, self.order + 1)
        return MomentVector(self.values / p1**k)


@dataclass(frozen=True)
class ElementarySymmetric:
    values: np.ndarray  # (e_0 = 1, e_1, ..., e_k)

    def __getitem__(self, i: int) -> float:
        return float(self.values[i])


@dataclass(frozen=True)
class ConditionReport:
    condition: str
    lhs: float
    rhs: float
    margin: float
    sector: int | None = None
    tol: float = DETECTION_TOL

    @property
    def detected(self) -> bool:
        return self.margin > self.tol

    @property
    def verdict(self) -> str:
        return "detected" if self.detected else "not_detected"

    CSV_HEADER = ("condition", "sector", "lhs", "rhs", "margin", "verdict")

    def csv_row(self) -> list[str]:
        return [
            self.condition,
            "" if self.sector is None else str(self.sector),
            fmt_float(self.lhs),
            fmt_float(self.rhs),
            fmt_float(self.margin),
            self.verdict,
        ]

    def with_sector(self, sector: int, prefix: str = "SR-") -> "ConditionReport":
        return ConditionReport(
            prefix + self.condition, self.lhs, self.rhs, self.margin, sector, self.tol
        )


def fmt_float(x: float) -> str:
    return format(float(x) + 0.0, ".17g")  # + 0.0 folds -0 into 0


def _as_moments(p) -> MomentVector:
    return p if isinstance(p, MomentVector) else MomentVector(p)


def newton_elementary(p) -> ElementarySymmetric:
    """e_0..e_k from p_1..p_k via k e_k = sum_i (-1)^(i-1) e_{k-i} p_i."""
    p = _as_moments(p)
    e = np.zeros(p.order + 1)
    e[0] = 1.0
    for k in range(1, p.order + 1):
        acc = 0.0
        for i in range(1, k + 1):
            acc += (-1) ** (i - 1) * e[k - i] * p[i]
        e[k] = acc / k
    return ElementarySymmetric(e)


def dn_closed_form(p, n: int) -> tuple[float, float]:
    """(lhs, rhs) of D_1..D_4 exactly as the inequalities are usually written.

    D_1: p1 >= 0, D_2: p2 <= p1^2, D_3: p3 >= -p1^3/2 + 3 p1 p2/2,
    D_4: p4 <= (p1^2 - p2)^2/2 - p1^4/3 + 4 p1 p3/3.
    """
    p = _as_moments(p)
    p1 = p[1]
    if n == 1:
        return p1, 0.0
    if n == 2:
        return p[2], p1**2
    if n == 3:
        return p[3], -0.5 * p1**3 + 1.5 * p1 * p[2]
    if n == 4:
        return p[4], 0.5 * (p1**2 - p[2]) ** 2 - p1**4 / 3.0 + 4.0 / 3.0 * p1 * p[3]
    raise ValueError("closed forms exist for n <= 4 only")


def dn_violation_closed_form(p, n: int) -> float:
    """Closed-form violation, equal to -n * e_n."""
    lhs, rhs = dn_closed_form(p, n)
    # odd n: lhs >= rhs required; even n: lhs <= rhs required
    return rhs - lhs if n % 2 == 1 else lhs - rhs


def check_Dn(p, n: int, tol: float = DETECTION_TOL) -> ConditionReport:
    p = _as_moments(p)
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > p.order:
        raise ValueError(f"D_{n} needs moments up to order {n}, have {p.order}")
    e_n = newton_elementary(p.values[:n])[n]
    if n <= 4:
        lhs, rhs = dn_closed_form(p, n)
        closed = dn_violation_closed_form(p, n)
        scale = max(1.0, *(abs(x) ** (n / (i + 1)) for i, x in enumerate(p.values[:n])))
        if abs(closed + n * e_n) > 1e-9 * scale:
            raise ArithmeticError(f"closed form for D_{n} disagrees with Newton recursion")
    else:
        lhs, rhs = e_n, 0.0
    return ConditionReport(f"D{n}", lhs, rhs, -e_n, tol=tol)


def check_p3ppt(p, tol: float = DETECTION_TOL) -> ConditionReport:
    """p_3 p_1 >= p_2^2."""
    p = _as_moments(p)
    if p.order < 3:
        raise ValueError("p3-PPT needs moments up to order 3")
    lhs = p[3] * p[1]
    rhs = p[2] ** 2
    return ConditionReport("p3PPT", lhs, rhs, rhs - lhs, tol=tol)


def stieltjes_hankel(p, m0: float, n: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Hankel matrices A(n)[i,j] = m_{i+j} and B(n)[i,j] = m_{i+j+1}.

    ``m0`` is the zeroth moment of the atomic eigenvalue measure (the number
    of atoms); m_k = p_k otherwise. Default ``n`` is the largest order for
    which B(n) can be filled.
    """
    p = _as_moments(p)
    m = np.concatenate([[m0], p.values])
    if n is None:
        n = (p.order - 1) // 2
    if n < 0 or 2 * n + 1 > p.order:
        raise ValueError(f"Hankel order {n} needs moments up to {2 * n + 1}")
    idx = np.add.outer(np.arange(n + 1), np.arange(n + 1))
    return m[idx], m[idx + 1]


def stieltjes_range_residual(p, m0: float) -> float:
    """Residual of the range-membership condition of the truncated problem.

    For d = 2k+1 moments beyond m_0 the vector (m_{k+1}, ..., m_{2k+1}) must
    lie in the range of A(k); for d = 2k the vector (m_{k+1}, ..., m_{2k})
    must lie in the range of B(k-1). Only meaningful for exact moments.
    """
    p = _as_moments(p)
    m = np.concatenate([[m0], p.values])
    d = p.order
    k = d // 2
    idx_k = np.add.outer(np.arange(k + 1), np.arange(k + 1))
    if d % 2 == 1:
        mat = m[idx_k]
        vec = m[k + 1 : 2 * k + 2]
    else:
        idx = np.add.outer(np.arange(k), np.arange(k)) + 1
        mat = m[idx]
        vec = m[k + 1 : 2 * k + 1]
    if vec.size == 0:
        return 0.0
    sol, *_ = np.linalg.lstsq(mat, vec, rcond=None)
    return float(np.linalg.norm(mat @ sol - vec))


def check_stieltjes5(p, tol: float = DETECTION_TOL) -> ConditionReport:
    """det [[p1,p2,p3],[p2,p3,p4],[p3,p4,p5]] >= 0."""
    p = _as_moments(p)
    if p.order < 5:
        raise ValueError("Stieltjes_5 needs moments up to order 5")
    _, b = stieltjes_hankel(p.values[:5], m0=0.0, n=2)
    det = _det3(b)
    return ConditionReport("Stieltjes5", det, 0.0, -det, tol=tol)


def _det3(m: np.ndarray) -> float:
    # cofactor expansion: exact sign behaviour for singular Hankels beats LU pivoting
    return float(
        m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
        - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
        + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
    )


def d3opt_threshold(p2: float) -> float:
    """Smallest p_3 of a PSD matrix with p_1 = 1 and the given p_2.

    For p2 in [1/r, 1/(r-1)] the minimizer has r-1 equal eigenvalues a and a
    single smaller one b; on [1/2, 1] this is (3 p2 - 1)/2.
    """
    if not (0.0 < p2 <= 1.0 + 1e-12):
        raise ValueError("p2 must lie in (0, 1] for a normalized PSD matrix")
    if p2 >= 1.0:
        return 1.0
    r = math.ceil(1.0 / p2)
    if r < 2:
        r = 2
    disc = 1.0 - r * (1.0 - p2) / (r - 1)
    a = (1.0 + math.sqrt(max(disc, 0.0))) / r
    b = 1.0 - (r - 1) * a
    return (r - 1) * a**3 + b**3


def check_d3opt(p, tol: float = DETECTION_TOL) -> ConditionReport:
    """p_3 >= d3opt_threshold(p_2) after normalizing to p_1 = 1."""
    p = _as_moments(p)
    if p.order < 3:
        raise ValueError("D3opt needs moments up to order 3")
    q = p if abs(p[1] - 1.0) <= 1e-9 else p.normalized()
    if q[2] > 1.0 + 1e-9:
        raise ValueError("p2 > p1^2: already violates D_2, use check_Dn(p, 2)")
    thr = d3opt_threshold(min(q[2], 1.0))
    return ConditionReport("D3opt", q[3], thr, thr - q[3], tol=tol)


def negativity(rho_gamma: DensityOperator | np.ndarray) -> float:
    """Sum of |lambda| over negative eigenvalues."""
    ev = hermitian_spectrum(rho_gamma)
    return float(np.sum(np.abs(ev) - ev) / 2.0)


CONDITIONS = {
    "p3PPT": (3, check_p3ppt),
    "D2": (2, lambda p, tol=DETECTION_TOL: check_Dn(p, 2, tol)),
    "D3": (3, lambda p, tol=DETECTION_TOL: check_Dn(p, 3, tol)),
    "D4": (4, lambda p, tol=DETECTION_TOL: check_Dn(p, 4, tol)),
    "D5": (5, lambda p, tol=DETECTION_TOL: check_Dn(p, 5, tol)),
    "D3opt": (3, check_d3opt),
    "Stieltjes5": (5, check_stieltjes5),
}


def _dn_order(name: str) -> int | None:
    if name.startswith("D") and name[1:].isdigit():
        return int(name[1:])
    return None


def evaluate(name: str, p, tol: float = DETECTION_TOL, sector_resolved: bool = False) -> ConditionReport:
    """Dispatch by name; ``Dn`` for any n is accepted.

    With ``sector_resolved`` the D_n margin is the closed-form violation
    -n e_n (p2 - p1^2 for D2) on raw block moments instead of -e_n.
    """
    n = _dn_order(name)
    if n is not None:
        rep = check_Dn(p, n, tol)
        if sector_resolved:
            return ConditionReport(rep.condition, rep.lhs, rep.rhs, n * rep.margin, tol=tol)
        return rep
    if name in CONDITIONS:
        return CONDITIONS[name][1](p, tol=tol)
    raise KeyError(f"unknown condition {name!r}")


def required_order(name: str) -> int:
    if name in CONDITIONS:
        return CONDITIONS[name][0]
    if name.startswith("D") and name[1:].isdigit():
        return int(name[1:])
    raise KeyError(f"unknown condition {name!r}")
