"""Command-line front end: analyze, shadow, model, budget.

Every option can come from a key=value config file (``--config``); flags
given on the command line win. Exit codes: 0 success, 1 internal or
numerical failure, 2 user or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import conditions as cond
from . import shadows as sh
from .linalg import Bipartition, DensityOperator, _atomic_write, partial_transpose, read_qdm, write_qdm
from .symmetry import (AsymmetricStateError, block_extract, build_projector, charge_range,
                       require_symmetric, symmetrize)

EXIT_OK, EXIT_INTERNAL, EXIT_USER = 0, 1, 2
U64_MAX = 2**64 - 1


class UserError(Exception):
    pass


# --- config -----------------------------------------------------------------

def parse_config(path) -> dict:
    """Plain key=value lines; '#' starts a comment; keys use underscores."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise UserError(f"cannot read config {path}: {e}") from e
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UserError(f"{path}:{n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


@dataclass
class Settings:
    """Flag values layered over config values."""

    flags: dict
    config: dict

    def get(self, key, default=None, cast=str):
        v = self.flags.get(key)
        if v is None or v is False:
            v = self.config.get(key)
        if v is None:
            return default
        if cast is bool:
            return v if isinstance(v, bool) else str(v).lower() in ("1", "true", "yes", "on")
        try:
            return cast(v)
        except (TypeError, ValueError) as e:
            raise UserError(f"invalid value for {key}: {v!r}") from e

    def require(self, key, cast=str):
        v = self.get(key, None, cast)
        if v is None:
            raise UserError(f"missing required setting {key!r}")
        return v


def parse_seed(s) -> int:
    try:
        v = int(s, 0) if isinstance(s, str) else int(s)
    except ValueError as e:
        raise UserError(f"seed must be an unsigned 64-bit integer, got {s!r}") from e
    if not 0 <= v <= U64_MAX:
        raise UserError("seed must be an unsigned 64-bit integer")
    return v


def float_list(s) -> list[float]:
    return [float(x) for x in str(s).split(",") if x.strip()]


def int_list(s) -> list[int]:
    return [int(x) for x in str(s).split(",") if x.strip()]


# --- output -----------------------------------------------------------------

def _cell(x):
    if isinstance(x, (float, np.floating)):
        return cond.fmt_float(x)
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    return "" if x is None else str(x)


def write_csv(out, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(x) for x in r])
    text = buf.getvalue()
    if out is None or str(out) == "-":
        sys.stdout.write(text)
    else:
        _atomic_write(out, text.encode())


# --- analyze ----------------------------------------------------------------

_CANON = {c.lower(): c for c in cond.CONDITIONS}


def canonical_condition(name: str) -> tuple[str, bool]:
    """(canonical base name, symmetry-resolved?)."""
    raw = name.strip()
    sr = raw.upper().startswith("SR-")
    base = raw[3:] if sr else raw
    key = base.lower()
    if key in _CANON:
        return _CANON[key], sr
    if key.startswith("d") and key[1:].isdigit():
        return "D" + key[1:], sr
    raise UserError(f"unknown condition {name!r}")


def parse_sectors(spec, bp: Bipartition) -> list[int]:
    if spec is None or str(spec).strip().lower() == "all":
        return list(charge_range(bp, "P"))
    qs = int_list(spec)
    valid = set(charge_range(bp, "P"))
    bad = [q for q in qs if q not in valid]
    if bad:
        raise UserError(f"sectors {bad} out of range for {bp.n_a}|{bp.n_b}")
    return qs


ANALYZE_HEADER = cond.ConditionReport.CSV_HEADER
ORACLE_HEADER = ANALYZE_HEADER + ("negativity", "min_eigenvalue")


def _moments(mat: np.ndarray, k: int) -> cond.MomentVector:
    from .linalg import power_traces
    return cond.MomentVector(power_traces(mat, k))


def cmd_analyze(s: Settings) -> int:
    path = s.require("input")
    try:
        rho = read_qdm(path)
    except (OSError, ValueError) as e:
        raise UserError(str(e)) from e
    names = [canonical_condition(c) for c in s.get("conditions", "p3PPT,D3,SR-D2").split(",") if c.strip()]
    tol = s.get("tol", cond.DETECTION_TOL, float)
    oracle = s.get("oracle", False, bool)
    if any(sr for _, sr in names):
        if s.get("symmetrize", False, bool):
            rho = symmetrize(rho)
        else:
            try:
                require_symmetric(rho)
            except AsymmetricStateError as e:
                raise UserError(f"{e} (pass --symmetrize)") from e
    bp = rho.bipartition
    pt = partial_transpose(rho)
    sectors = parse_sectors(s.get("sectors"), bp)
    rows = []

    def extra(mat):
        if not oracle:
            return []
        ev = np.linalg.eigvalsh(mat) if mat.size else np.zeros(1)
        return [cond.negativity(mat) if mat.size else 0.0, float(ev[0])]

    from .models.common import condition_report
    for name, sr in names:
        k = cond.required_order(name)
        if not sr:
            rep = condition_report(name, _moments(pt.matrix, k), tol)
            rows.append(rep.csv_row() + [_cell(x) for x in extra(pt.matrix)])
            continue
        for q in sectors:
            blk = block_extract(pt, build_projector("P", q, bp)).matrix
            rep = condition_report(name, _moments(blk, k), tol, sector_resolved=True).with_sector(q)
            rows.append(rep.csv_row() + [_cell(x) for x in extra(blk)])
    write_csv(s.get("out"), ORACLE_HEADER if oracle else ANALYZE_HEADER, rows)
    return EXIT_OK


# --- shadow -------------------------------------------------------------------

SHADOW_HEADER = ("sector", "quantity", "N", "estimate", "rigorous_radius", "jackknife_sigma", "jackknife_bar")
GLOBAL_HEADER = ("quantity", "N", "estimate", "jackknife_sigma", "jackknife_bar")


def _budget_params(s: Settings, bp: Bipartition, q: int) -> sh.BudgetParams:
    proj = build_projector("P", q, bp)
    return sh.BudgetParams(
        s.get("epsilon", 0.1, float), s.get("delta", 0.05, float), proj,
        s.get("c1", None, float), s.get("c2", None, float))


def _split(s: Settings, n: int | None = None) -> Bipartition:
    n_a, n_b = s.get("n_a", None, int), s.get("n_b", None, int)
    if n is not None:
        n_a = n // 2 if n_a is None else n_a
        n_b = n - n_a if n_b is None else n_b
        if n_a + n_b != n:
            raise UserError(f"split {n_a}|{n_b} does not match {n} qubits")
    if n_a is None or n_b is None:
        raise UserError("n_a and n_b are required")
    return Bipartition(n_a, n_b)


def cmd_shadow(s: Settings) -> int:
    ensemble = {"pauli": sh.PAULI, "global": sh.GLOBAL}.get(s.get("ensemble", "pauli").lower())
    if ensemble is None:
        raise UserError("ensemble must be pauli or global")
    archive_in = s.get("archive_in")
    if s.get("budget_only", False, bool):
        if s.get("input"):
            bp = _read_state(s).bipartition
        else:
            bp = _split(s)
        rows = []
        for q in parse_sectors(s.get("sectors", "0"), bp):
            params = _budget_params(s, bp, q)
            rows.append((q, params.sector.size, params.epsilon, params.delta,
                         sh.measurement_budget(params, bp)))
        write_csv(s.get("out"), ("sector", "trace_p", "epsilon", "delta", "N"), rows)
        return EXIT_OK

    seed = s.get("seed")
    if archive_in:
        if ensemble == sh.GLOBAL and seed is None:
            raise UserError("global-ensemble archives need --seed to rebuild unitaries")
        try:
            shadow = sh.read_qsh(archive_in, s.get("n_a", None, int),
                                 None if seed is None else parse_seed(seed))
        except (OSError, ValueError) as e:
            raise UserError(str(e)) from e
        ensemble = shadow.ensemble
    else:
        if seed is None:
            raise UserError("--seed is required when simulating")
        N = s.require("N", int)
        rho = _read_state(s)
        try:
            shadow = sh.simulate_shadow(rho, N, seed=parse_seed(seed), ensemble=ensemble)
        except ValueError as e:
            raise UserError(str(e)) from e
    archive = s.get("archive")
    if archive:
        sh.write_qsh(archive, shadow)
    N = len(shadow)
    bp = shadow.bipartition
    if ensemble == sh.GLOBAL:
        if N < 10:
            raise UserError("need at least 10 snapshots")
        est = sh.estimate_pt_moments(shadow, 4)
        err = sh.jackknife_error(shadow, lambda x: sh.estimate_pt_moments(x, 4), n_blocks=20)
        rows = [(f"p{k + 1}", N, est[k], err[k], 1.96 * err[k]) for k in range(4)]
        write_csv(s.get("out"), GLOBAL_HEADER, rows)
        return EXIT_OK
    if N < 10:
        raise UserError("need at least 10 snapshots for estimates with error bars")
    delta = s.get("delta", 0.05, float)
    rows = []
    for q in parse_sectors(s.get("sectors", "all"), bp):
        proj = build_projector("P", q, bp)
        for qty in ("p1", "D2", "p3"):
            est = sh.sector_estimate(shadow, proj, qty)
            sig = sh.sector_jackknife(shadow, q, qty)
            radius = None
            if qty == "D2" and proj.size >= 2:
                radius = sh.confidence_radius(N, delta, proj, bp)
            rows.append((q, qty, N, est, radius, sig, 1.96 * sig))
    write_csv(s.get("out"), SHADOW_HEADER, rows)
    return EXIT_OK


def _read_state(s: Settings) -> DensityOperator:
    path = s.require("input")
    try:
        rho = read_qdm(path)
    except (OSError, ValueError) as e:
        raise UserError(str(e)) from e
    if s.get("symmetrize", False, bool):
        rho = symmetrize(rho)
    return rho


# --- budget -------------------------------------------------------------------

def cmd_budget(s: Settings) -> int:
    bp = _split(s)
    rows = []
    for q in parse_sectors(s.get("sectors", "0"), bp):
        try:
            params = _budget_params(s, bp, q)
            N = sh.measurement_budget(params, bp)
        except ValueError as e:
            raise UserError(str(e)) from e
        radius = sh.confidence_radius(N, params.delta, params.sector, bp)
        rows.append((q, params.sector.size, params.epsilon, params.delta, N, radius))
    write_csv(s.get("out"), ("sector", "trace_p", "epsilon", "delta", "N", "radius_at_N"), rows)
    return EXIT_OK


# --- model --------------------------------------------------------------------

def cmd_model(s: Settings) -> int:
    name = s.require("model").lower()
    emit = s.get("emit_states")
    if emit:
        Path(emit).mkdir(parents=True, exist_ok=True)
    if name == "quench":
        return _model_quench(s, emit)
    if name == "xxz":
        return _model_xxz(s, emit)
    if name == "pxp":
        return _model_pxp(s, emit)
    raise UserError(f"unknown model {name!r} (quench, xxz, pxp)")


def _time_grid(s: Settings, t_max: float, steps: int) -> tuple:
    if s.get("t_grid"):
        return tuple(float_list(s.get("t_grid")))
    return tuple(np.linspace(0.0, s.get("t_max", t_max, float), s.get("t_steps", steps, int) + 1))


def _model_quench(s: Settings, emit) -> int:
    from .models import quench

    rows = []
    q = s.get("sector", -1, int)
    for gamma in float_list(s.get("gamma", "0.1")):
        try:
            p = quench.QuenchParams(s.get("n_sites", 8, int), s.get("j_hop", 1.0, float), gamma,
                                    _time_grid(s, 0.05, 10), s.get("n_a", None, int))
        except ValueError as e:
            raise UserError(str(e)) from e
        states = quench.lindblad_evolve(p)
        rows += quench.quench_table(p, q, states)
        if emit:
            for i, rho in enumerate(states):
                write_qdm(Path(emit) / f"quench_g{gamma:g}_t{i:04d}.qdm", rho)
    write_csv(s.get("out"), quench.CSV_HEADER, rows)
    return EXIT_OK


def _model_xxz(s: Settings, emit) -> int:
    from .models import xxz

    L = s.get("l_sites", 10, int)
    ell = s.get("ell", 6, int)
    geometry = s.get("geometry", "connected").lower()
    if geometry not in ("connected", "disjoint"):
        raise UserError("geometry must be connected or disjoint")
    try:
        params = getattr(xxz.XXZParams, geometry)(L, ell)
    except ValueError as e:
        raise UserError(str(e)) from e
    if s.get("jz_grid"):
        grid = float_list(s.get("jz_grid"))
    else:
        grid = np.linspace(s.get("jz_min", -4.0, float), s.get("jz_max", 0.5, float),
                           s.get("jz_steps", 45, int) + 1)
    q = s.get("sector", 1, int)
    rows = []
    for i, jz in enumerate(grid):
        p = xxz.XXZParams(L, float(jz), params.subsystem, params.split)
        try:
            rho = xxz.subsystem_state(xxz.xxz_ground_state(p), p)
        except ValueError as e:
            raise UserError(str(e)) from e
        if emit:
            write_qdm(Path(emit) / f"xxz_{geometry}_{i:04d}.qdm", rho)
        for rep, neg in xxz.analyze_subsystem(rho, q):
            sound = (not rep.detected) or neg > 0
            rows.append((float(jz), rep.condition, rep.sector, rep.lhs, rep.rhs, rep.margin,
                         rep.verdict, neg, sound))
    write_csv(s.get("out"), xxz.CSV_HEADER + ("sound",), rows)
    if not all(r[-1] for r in rows):
        print("soundness violated: detection without negativity", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


def _model_pxp(s: Settings, emit) -> int:
    from .models import pxp

    sub = tuple(int_list(s.get("subsystem", "4,5,6,7")))
    try:
        p = pxp.PXPParams(s.get("n_sites", 12, int), s.get("omega", 1.0, float),
                          _time_grid(s, 20.0, 200), sub, s.get("split", None, int))
    except ValueError as e:
        raise UserError(str(e)) from e
    shadow_n = s.get("shadow_n", None, int)
    seed = s.get("seed")
    if shadow_n and seed is None:
        raise UserError("--seed is required for shadow re-estimation")
    evo = pxp.pxp_evolve(p)
    scan = pxp.pxp_entanglement_scan(evo, shadow_n, 0 if seed is None else parse_seed(seed))
    rows = []
    for i, r in enumerate(scan):
        e = r.errors or {}
        rows.append((r.t, r.negativity, r.margins["D3"], r.margins["D4"], r.margins["p3PPT"],
                     e.get("D3"), e.get("D4"), e.get("p3PPT")))
        if emit:
            write_qdm(Path(emit) / f"pxp_{i:04d}.qdm", evo.subsystem_state(i))
    write_csv(s.get("out"), pxp.CSV_HEADER, rows)
    m = evo.staggered_magnetization()
    k = pxp.first_revival(np.asarray(p.t_grid), m)
    rec = m[k] / m[0] if k >= 0 else float("nan")
    print(f"revival: t={p.t_grid[k] if k >= 0 else float('nan'):.4g} recovery={rec:.4f} "
          f"{'pass' if rec >= 0.7 else 'fail'}", file=sys.stderr)
    d3_only = any(r.margins["D3"] > cond.DETECTION_TOL >= r.margins["p3PPT"] for r in scan)
    print(f"D3 detects where p3PPT does not: {'pass' if d3_only else 'fail'}", file=sys.stderr)
    return EXIT_OK


# --- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ptmoments", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config")
        p.add_argument("--seed")
        p.add_argument("--out")
        p.add_argument("--sectors")
        p.add_argument("--conditions")
        p.add_argument("--oracle", action="store_true", default=None)
        p.add_argument("--symmetrize", action="store_true", default=None)
        p.add_argument("--emit-states", dest="emit_states")
        p.add_argument("--n-a", dest="n_a")
        p.add_argument("--n-b", dest="n_b")
        p.add_argument("--epsilon")
        p.add_argument("--delta")
        p.add_argument("--c1")
        p.add_argument("--c2")
        p.add_argument("--tol")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="any config key, e.g. --set gamma=0.05,0.1")
        return p

    a = common(sub.add_parser("analyze", help="condition report for a QDM1 state"))
    a.add_argument("input", nargs="?")
    s = common(sub.add_parser("shadow", help="simulate or re-read shadows and estimate"))
    s.add_argument("input", nargs="?")
    s.add_argument("-N", "--N", dest="N")
    s.add_argument("--ensemble")
    s.add_argument("--archive")
    s.add_argument("--archive-in", dest="archive_in")
    s.add_argument("--budget-only", dest="budget_only", action="store_true", default=None)
    m = common(sub.add_parser("model", help="run a physics driver"))
    m.add_argument("model", nargs="?")
    common(sub.add_parser("budget", help="measurement budget for a D2 sector estimate"))
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USER if e.code else EXIT_OK
    flags = {k: v for k, v in vars(args).items() if k not in ("set", "config", "command")}
    try:
        for kv in args.set:
            if "=" not in kv:
                raise UserError(f"--set expects KEY=VALUE, got {kv!r}")
            k, v = kv.split("=", 1)
            flags[k.strip().replace("-", "_")] = v.strip()
        config = parse_config(args.config) if args.config else {}
        settings = Settings(flags, config)
        handler = {"analyze": cmd_analyze, "shadow": cmd_shadow,
                   "model": cmd_model, "budget": cmd_budget}[args.command]
        return handler(settings)
    except UserError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USER
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
