from __future__ import annotations

from .. import conditions as cond


def condition_report(name: str, p, tol: float = cond.DETECTION_TOL,
                     sector_resolved: bool = False) -> cond.ConditionReport:
    """Like ``conditions.evaluate`` but never raises for D3opt.

    When p2 > p1^2 the D3opt threshold is undefined and the matrix already
    fails D2; the report then carries the D2 violation p2 - p1^2 under the
    D3opt name.
    """
    if name == "D3opt":
        p = p if isinstance(p, cond.MomentVector) else cond.MomentVector(p)
        if p[2] > p[1] ** 2 * (1.0 + 1e-9) or p[1] <= 0:
            return cond.ConditionReport("D3opt", p[2], p[1] ** 2, p[2] - p[1] ** 2, tol=tol)
    return cond.evaluate(name, p, tol, sector_resolved)
