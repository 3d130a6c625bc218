"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import time

import numpy as np
import pytest
from scipy.optimize import minimize

from ptmoments import cli
from ptmoments import conditions as cond
from ptmoments import shadows as sh
from ptmoments.linalg import (Bipartition, DensityOperator, kron_all, matrix_moments, partial_transpose,
                              random_state, random_unitary, write_qdm)
from ptmoments.models import pxp, quench, xxz
from ptmoments.symmetry import (build_projector, charge_range, multicopy_sector_moment, sr_evaluate,
                                symmetrize, symmetrize_unitary_average)

from conftest import ACCEPTANCE_LINES, bell_state, random_symmetric_state


def record(number, ok, detail, elapsed=None, limit=None):
    if limit is not None and elapsed is not None:
        ok = ok and elapsed < limit
        detail += f"; {elapsed:.2f}s (limit {limit}s)"
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_01_psd_iff_elementary_nonnegative():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    agree = checked = 0
    for _ in range(1000):
        d = int(rng.integers(1, 7))
        # spectra straddling zero so both PSD and indefinite cases occur
        ev = rng.uniform(-0.3, 1.0, size=d)
        if rng.random() < 0.3:
            ev = np.abs(ev)
        u = random_unitary(d, rng)
        h = u @ np.diag(ev) @ u.conj().T
        h = 0.5 * (h + h.conj().T)
        lam = np.linalg.eigvalsh(h)[0]
        if abs(lam) <= 1e-7:
            continue
        p = matrix_moments(h, d)
        all_nonneg = all(not cond.check_Dn(p, n, tol=0.0).detected for n in range(1, d + 1))
        checked += 1
        agree += all_nonneg == (lam > 0)
    elapsed = time.perf_counter() - t0
    record(1, agree == checked, f"PSD <=> all e_n >= 0 agreed on {agree}/{checked} matrices", elapsed, 5)


def test_02_closed_forms_match_newton():
    t0 = time.perf_counter()
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(1000):
        p = cond.MomentVector(rng.uniform(-1, 1, size=4))
        e = cond.newton_elementary(p)
        for n in range(1, 5):
            worst = max(worst, abs(cond.dn_violation_closed_form(p, n) + n * e[n]))
    elapsed = time.perf_counter() - t0
    record(2, worst <= 1e-10, f"max |closed form + n e_n| = {worst:.2e}", elapsed, 1)


def _brute_min_p3(p2, atoms=6, starts=30, rng=None):
    """Smallest sum x^3 with sum x = 1, sum x^2 = p2, x >= 0, by multi-start SLSQP."""
    cons = [{"type": "eq", "fun": lambda x: x.sum() - 1, "jac": lambda x: np.ones_like(x)},
            {"type": "eq", "fun": lambda x: (x**2).sum() - p2, "jac": lambda x: 2 * x}]
    best = np.inf
    for _ in range(starts):
        x0 = rng.dirichlet(np.full(atoms, 0.5))
        res = minimize(lambda x: (x**3).sum(), x0, jac=lambda x: 3 * x**2, method="SLSQP",
                       bounds=[(0, 1)] * atoms, constraints=cons,
                       options={"ftol": 1e-15, "maxiter": 500})
        x = res.x
        if abs(x.sum() - 1) < 1e-9 and abs((x**2).sum() - p2) < 1e-9 and x.min() > -1e-12:
            best = min(best, (x**3).sum())
    return best


def test_03_d3opt_matches_brute_force():
    t0 = time.perf_counter()
    rng = np.random.default_rng(103)
    # six atoms reach every p2 in [1/6, 1]; the endpoints are single points of the feasible set
    grid = np.linspace(1 / 6, 1.0, 50)[1:-1]
    worst = max(abs(_brute_min_p3(p2, rng=rng) - cond.d3opt_threshold(p2)) for p2 in grid)
    upper = np.linspace(0.5, 1.0, 101)
    linear = max(abs(cond.d3opt_threshold(p2) - (3 * p2 - 1) / 2) for p2 in upper)
    gap = (3 * upper - 1) / 2 - upper**2
    dominance = bool(np.all(gap >= -1e-15)) and bool(np.all(gap[1:-1] > 0)) \
        and abs(gap[0]) < 1e-15 and abs(gap[-1]) < 1e-15
    elapsed = time.perf_counter() - t0
    record(3, worst <= 1e-6 and linear <= 1e-12 and dominance,
           f"brute-force gap {worst:.1e}, linear-piece gap {linear:.1e}, dominance {dominance}",
           elapsed, 30)


def test_04_bell_pair():
    rho = bell_state()
    pt = partial_transpose(rho)
    p3 = cond.check_p3ppt(matrix_moments(pt, 3)).margin
    d2 = sr_evaluate(rho, 0, "D2").margin
    neg = cond.negativity(pt)
    ok = abs(p3 - 0.75) <= 1e-12 and abs(d2 - 0.5) <= 1e-12 and abs(neg - 0.5) <= 1e-12
    record(4, ok, f"p3-PPT margin {p3:.15f}, SR-D2(q=0) margin {d2:.15f}, negativity {neg:.15f}")


def test_05_sector_moments_equal_multicopy_values():
    t0 = time.perf_counter()
    rng = np.random.default_rng(105)
    bp = Bipartition(2, 2)
    worst = 0.0
    for _ in range(50):
        rho = random_symmetric_state(bp, rng)
        for q in charge_range(bp, "P"):
            for k in (1, 2, 3):
                direct, multi = multicopy_sector_moment(rho, q, k)
                worst = max(worst, abs(direct - multi))
    elapsed = time.perf_counter() - t0
    record(5, worst <= 1e-9, f"max |direct - multi-copy| = {worst:.2e}", elapsed, 60)


def test_06_channel_forms_agree():
    rng = np.random.default_rng(106)
    worst = 0.0
    for _ in range(20):
        rho = random_state(Bipartition(2, 2), rng)
        worst = max(worst, np.max(np.abs(symmetrize(rho).matrix - symmetrize_unitary_average(rho).matrix)))
    record(6, worst <= 1e-10, f"max entry difference {worst:.2e}")


def test_07_quench_short_time_ratios():
    t0 = time.perf_counter()
    details, ok = [], True
    for gamma in (0.05, 0.1, 0.2):
        p = quench.QuenchParams(n_sites=8, gamma=gamma, t_grid=(0.0, 0.01))
        r2, r3 = quench.quench_ratios(quench.lindblad_evolve(p))[-1]
        e2, e3 = quench.perturbative_ratios(gamma, 1.0, p.bipartition.n_a)
        d2, d3 = abs(r2 / e2 - 1), abs(r3 / e3 - 1)
        ok &= d2 <= 0.1 and d3 <= 0.1
        details.append(f"g={gamma}: {d2:.1%}/{d3:.1%}")
    elapsed = time.perf_counter() - t0
    record(7, ok, "relative deviation of (p1^2/p2, p3 p1/p2^2) " + ", ".join(details), elapsed, 120)


def test_08_snapshot_unbiasedness_and_variance():
    t0 = time.perf_counter()
    rng = np.random.default_rng(108)
    bp = Bipartition(2, 2)
    rho = random_state(bp, rng)
    N = 200_000
    shadow = sh.simulate_shadow(rho, N, seed=8)
    paulis = [np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1.0, -1.0])]
    labels = rng.integers(0, 4, size=(30, 4))
    labels[labels.sum(axis=1) == 0, 0] = 3
    obs = np.array([kron_all([paulis[l] for l in row]) for row in labels])
    s1 = np.zeros((16, 16), complex)
    s2r = np.zeros((16, 16))
    s2i = np.zeros((16, 16))
    o1 = np.zeros(len(obs))
    o2 = np.zeros(len(obs))
    for lo in range(0, N, 20_000):
        snaps = sh.dense_snapshots(shadow, np.arange(lo, lo + 20_000))
        s1 += snaps.sum(axis=0)
        s2r += (snaps.real**2).sum(axis=0)
        s2i += (snaps.imag**2).sum(axis=0)
        vals = np.einsum("oij,mji->om", obs, snaps).real
        o1 += vals.sum(axis=1)
        o2 += (vals**2).sum(axis=1)
    mean = s1 / N
    se_r = np.sqrt((s2r / N - mean.real**2) / N)
    se_i = np.sqrt(np.maximum(s2i / N - mean.imag**2, 0) / N)
    z_r = np.abs(mean.real - rho.matrix.real) / np.where(se_r > 0, se_r, 1)
    z_i = np.abs(mean.imag - rho.matrix.imag) / np.where(se_i > 0, se_i, 1)
    zmax = max(z_r.max(), z_i.max())
    var = o2 / N - (o1 / N) ** 2
    weight = (labels > 0).sum(axis=1)
    bound = 2.0**weight * np.einsum("oij,oji->o", obs, obs).real
    ratio = np.max(var / bound)
    elapsed = time.perf_counter() - t0
    record(8, zmax <= 5 and ratio <= 1.1,
           f"max entry z-score {zmax:.2f}, max variance/bound {ratio:.3f}", elapsed, 120)


def test_09_d2_coverage():
    t0 = time.perf_counter()
    bell = bell_state()
    bp = bell.bipartition
    proj = build_projector("P", 0, bp)
    eps, delta = 0.1, 0.05
    # two qubits are below the simplified-constant range, so pass the worst-case constants
    N = sh.measurement_budget(sh.BudgetParams(eps, delta, proj, c1=sh.c1_worst_case(proj.size), c2=2.0), bp)
    reps = 200
    hits = sum(abs(sh.estimate_D2_sector(sh.simulate_shadow(bell, N, seed=9000 + r), 0) + 0.5) <= eps
               for r in range(reps))
    need = 0.95 - 3 * np.sqrt(0.05 * 0.95 / reps)
    elapsed = time.perf_counter() - t0
    record(9, hits / reps >= need, f"{hits}/{reps} within eps at N={N} (need >= {need:.1%})", elapsed, 600)


def test_10_budget_radius_round_trip():
    t0 = time.perf_counter()
    bp = Bipartition(2, 2)
    worst = 0.0
    for q in (0, 1):
        proj = build_projector("P", q, bp)
        for eps in (0.05, 0.1, 0.2):
            for delta in (0.01, 0.05, 0.1):
                N = sh.measurement_budget(sh.BudgetParams(eps, delta, proj), bp)
                worst = max(worst, sh.confidence_radius(N, delta, proj, bp) / eps)
    elapsed = time.perf_counter() - t0
    record(10, worst <= 1 + 1e-6, f"max radius/eps = {worst:.6f}", elapsed, 1)


def test_11_xxz_reproduction():
    t0 = time.perf_counter()
    grid = np.linspace(-4.0, 0.5, 46)
    rows = xxz.xxz_condition_sweep(xxz.XXZParams.connected(10, 6), grid)
    unsound = [(jz, rep.condition) for jz, rep, neg in rows if rep.detected and neg <= 0]
    detections = sum(rep.detected for _, rep, _ in rows)
    dis = xxz.xxz_condition_sweep(xxz.XXZParams.disjoint(10, 8), grid)
    by_jz: dict = {}
    for jz, rep, neg in dis:
        if rep.sector is None:
            by_jz.setdefault(jz, {})[rep.condition] = rep.detected
    window = [jz for jz, d in by_jz.items() if d["Stieltjes5"] and not d["p3PPT"] and not d["D3"]]
    elapsed = time.perf_counter() - t0
    span = f"[{min(window):.1f}, {max(window):.1f}]" if window else "none"
    record(11, not unsound and detections > 0 and bool(window),
           f"connected: {detections} detections, {len(unsound)} unsound; "
           f"disjoint Stieltjes5-only Jz points {len(window)} in {span}", elapsed, 300)


def test_12_pxp_reproduction():
    t0 = time.perf_counter()
    params = pxp.PXPParams(n_sites=12)
    evo = pxp.pxp_evolve(params)
    t = np.asarray(params.t_grid)
    m = evo.staggered_magnetization()
    k = pxp.first_revival(t, m)
    recovery = m[k] / m[0] if k >= 0 else 0.0
    z = evo.z_expectations()
    rows = pxp.pxp_entanglement_scan(evo)
    unsound = [r.t for r in rows if any(r.detected(c) for c in pxp.SCAN_CONDITIONS) and r.negativity <= 0]
    d3_only = pxp.detection_window(rows, "D3", "p3PPT")
    n_used, d4_only = pxp.d4_window_search(params)
    elapsed = time.perf_counter() - t0
    ok = recovery >= 0.7 and bool(d3_only) and not unsound and bool(d4_only)
    record(12, ok,
           f"revival t={t[k]:.2f} recovery {recovery:.2f} (<Z_0> {z[0, 0]:+.2f} -> {z[k, 0]:+.2f}); "
           f"D3-not-p3PPT at {len(d3_only)} times; D4-not-D3 at {len(d4_only)} times (N={n_used}); "
           f"unsound {len(unsound)}", elapsed, 600)


def test_13_cli_shadow_determinism(tmp_path):
    state = tmp_path / "state.qdm"
    write_qdm(state, random_symmetric_state(Bipartition(2, 2), np.random.default_rng(113)))
    outputs = []
    for tag in "ab":
        csv, qsh = tmp_path / f"{tag}.csv", tmp_path / f"{tag}.qsh"
        code = cli.main(["shadow", str(state), "-N", "5000", "--seed", "18446744073709551615",
                         "--out", str(csv), "--archive", str(qsh)])
        outputs.append((code, csv.read_bytes(), qsh.read_bytes()))
    (ca, csv_a, qsh_a), (cb, csv_b, qsh_b) = outputs
    ok = ca == cb == 0 and csv_a == csv_b and qsh_a == qsh_b
    record(13, ok, f"CSV identical {csv_a == csv_b}, QSH1 identical {qsh_a == qsh_b} "
                   f"({len(csv_a)} + {len(qsh_a)} bytes)")
