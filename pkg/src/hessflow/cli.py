"""Command-line interface: ``hessflow run`` and ``hessflow check``.

Problem files are JSON::

    {
      "objective": {"type": "linear", "c": [0, -1, 1]},
      "equality": {"A": [[1, 1, 1]], "b": [1]},
      "positivity": true,
      "kernel": {"name": "boltzmann_shannon"},
      "x0": [0.3333333333333333, 0.3333333333333333, 0.3333333333333334]
    }

``"inequalities": {"B": [[...]], "d": [...]}`` declares g_i(x) = <B_i, x> - d_i;
``"positivity": true`` is shorthand for B = I, d = 0 (both may be given).

Exit codes: 0 success, 1 input error, 2 blow-up / non-convergence / failed checks.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import re
import sys
from pathlib import Path

import numpy as np

from .duality import dual_residuals, dual_trajectory
from .errors import HessFlowError, SpecFileError
from .flow import (
    IntegratorOptions,
    Trajectory,
    energy_identity_check,
    inclusion_residual,
    integrate,
    lyapunov_check,
    monotone_values,
    rate_fit,
    value_gap_bound_check,
)
from .geometry import Geometry
from .kernels import LegendreKernel
from .problem import FEAS_TOL, Objective, Problem
from .proximal import ProxSchedule, prox_orbit_check
from .transform import LtcMap, straight_line_check

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_INPUT, EXIT_DIVERGED = 0, 1, 2

ENERGY_TOL = 1e-4
INCLUSION_TOL = 1e-4
STRAIGHT_LINE_TOL = 1e-6
PROX_ORBIT_TOL = 1e-6
VALUE_GAP_TOL = -1e-9
DEFAULT_SCHEDULE = (0.5, 0.5, 1.0)


def _line_of(text: str, key: str) -> int:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else 1


def _matrix(value, name, where):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SpecFileError(f"{where}: {name} is not numeric: {exc}") from exc
    return arr


def parse_problem(path) -> Problem:
    """Read a JSON problem file and build a validated :class:`Problem`."""
    path = Path(path)
    text = path.read_text()
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecFileError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(spec, dict):
        raise SpecFileError(f"{path}:1: top level must be an object")

    def where(key):
        return f"{path}:{_line_of(text, key)}"

    for key in ("objective", "kernel", "x0"):
        if key not in spec:
            raise SpecFileError(f"{path}:1: missing required key {key!r}")

    x0 = _matrix(spec["x0"], "x0", where("x0"))
    if x0.ndim != 1:
        raise SpecFileError(f"{where('x0')}: x0 must be a vector")
    n = x0.size

    obj = spec["objective"]
    kind = obj.get("type")
    c = _matrix(obj.get("c", []), "c", where("c"))
    if c.shape != (n,):
        raise SpecFileError(f"{where('c')}: dimension mismatch: |c| = {c.size}, expected n = {n}")
    try:
        if kind == "linear":
            objective = Objective.linear(c)
        elif kind == "quadratic":
            Q = _matrix(obj.get("Q"), "Q", where("Q"))
            if Q.shape != (n, n):
                raise SpecFileError(f"{where('Q')}: dimension mismatch: Q is {Q.shape}, expected {(n, n)}")
            objective = Objective.quadratic(Q, c)
        else:
            raise SpecFileError(f"{where('objective')}: objective type must be 'linear' or 'quadratic', got {kind!r}")
    except ValueError as exc:
        if isinstance(exc, SpecFileError):
            raise
        raise SpecFileError(f"{where('objective')}: {exc}") from exc

    kspec = spec["kernel"]
    try:
        kernel = LegendreKernel(kspec["name"], kspec.get("gamma"))
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecFileError(f"{where('kernel')}: invalid kernel: {exc}") from exc

    rows, offsets = [], []
    if "inequalities" in spec:
        B = _matrix(spec["inequalities"].get("B"), "B", where("B"))
        d = _matrix(spec["inequalities"].get("d"), "d", where("d"))
        if B.ndim != 2 or B.shape[1] != n:
            raise SpecFileError(f"{where('B')}: dimension mismatch: B is {B.shape}, expected p x {n}")
        if d.shape != (B.shape[0],):
            raise SpecFileError(f"{where('d')}: dimension mismatch: |d| = {d.size}, expected {B.shape[0]}")
        rows.append(B)
        offsets.append(d)
    if spec.get("positivity", False):
        rows.append(np.eye(n))
        offsets.append(np.zeros(n))
    if not rows:
        raise SpecFileError(f"{path}:1: no inequality constraints ('inequalities' or 'positivity')")
    B, d = np.vstack(rows), np.concatenate(offsets)
    g0 = B @ x0 - d
    bad = np.flatnonzero(~(g0 > 0))
    if bad.size:
        i = bad[0]
        raise SpecFileError(f"{where('x0')}: x0 not strictly feasible: g_{i + 1}(x0)={g0[i]:g}")

    A = b = None
    if "equality" in spec:
        A = _matrix(spec["equality"].get("A"), "A", where("A"))
        b = _matrix(spec["equality"].get("b"), "b", where("b"))
        if A.ndim != 2 or A.shape[1] != n:
            raise SpecFileError(f"{where('A')}: dimension mismatch: A is {A.shape}, expected m x {n}")
        if b.shape != (A.shape[0],):
            raise SpecFileError(f"{where('b')}: dimension mismatch: |b| = {b.size}, expected {A.shape[0]}")
    try:
        geometry = Geometry.from_affine(kernel, B, d, x0)
        if not geometry.check_nondegeneracy(x0):
            raise SpecFileError(f"{where('inequalities')}: constraint gradients do not span R^{n}")
        return Problem(objective, geometry, x0, A, b)
    except SpecFileError:
        raise
    except (HessFlowError, ValueError) as exc:
        key = "equality" if "A x0" in str(exc) or "rank" in str(exc) else "x0"
        raise SpecFileError(f"{where(key)}: {exc}") from exc


def _check(name, value, tolerance, passed, note=None):
    entry = {"name": name, "value": value, "tolerance": tolerance,
             "status": "pass" if passed else "fail", "passed": bool(passed)}
    if note:
        entry["note"] = note
    return entry


def _skipped(name, tolerance, note):
    return {"name": name, "value": None, "tolerance": tolerance, "status": "skipped",
            "passed": None, "note": note}


def run_checks(problem: Problem, traj: Trajectory, ref, full: bool = False) -> list[dict]:
    """Invariant battery; ``full`` adds the checks used by ``hessflow check``."""
    checks = []
    linear = problem.objective.is_linear
    if full:
        feas = [problem.feasibility(x) for x in traj.states]
        worst_eq = max(r.equality_residual for r in feas)
        min_slack = min(r.min_slack for r in feas)
        checks.append(_check("feasibility", {"equality_residual": worst_eq, "min_slack": min_slack},
                             FEAS_TOL, all(r.feasible for r in feas)))
        ok, inc = monotone_values(traj)
        checks.append(_check("monotone_objective", inc, 1e-8, ok, "max increase of f between samples"))
    energy = energy_identity_check(problem, traj)
    checks.append(_check("energy_identity", energy, ENERGY_TOL, energy <= ENERGY_TOL))
    ok, inc = lyapunov_check(problem, traj, ref)
    checks.append(_check("lyapunov", inc, 1e-9, ok, "D_h(ref, x(t)) max increase; slack 1e-9 (1 + D_h(ref, x0))"))
    gap = value_gap_bound_check(problem, traj, ref)
    checks.append(_check("value_gap_bound", gap, VALUE_GAP_TOL, gap >= VALUE_GAP_TOL))
    if full:
        incl = inclusion_residual(problem, traj)
        checks.append(_check("differential_inclusion", incl, INCLUSION_TOL, incl <= INCLUSION_TOL))
    if linear:
        ltc = LtcMap.from_problem(problem)
        line = straight_line_check(ltc, traj, problem.objective)
        checks.append(_check("straight_line", line, STRAIGHT_LINE_TOL, line <= STRAIGHT_LINE_TOL))
    else:
        checks.append(_skipped("straight_line", STRAIGHT_LINE_TOL, "skipped (nonlinear objective)"))
    if full:
        if linear and traj.t_final > 0:
            scale = min(1.0, traj.t_final / sum(DEFAULT_SCHEDULE))
            schedule = ProxSchedule(tuple(scale * m for m in DEFAULT_SCHEDULE))
            dev = prox_orbit_check(problem, schedule, traj)
            checks.append(_check("prox_orbit", dev, PROX_ORBIT_TOL, dev <= PROX_ORBIT_TOL,
                                 f"schedule {list(schedule.step_sizes)}"))
        else:
            checks.append(_skipped("prox_orbit", PROX_ORBIT_TOL,
                                   "skipped (nonlinear objective)" if not linear else "skipped (empty horizon)"))
    if problem.geometry.is_positivity:
        dual = dual_trajectory(problem, traj)
        if dual.times.size:
            mn, comp = dual_residuals(problem, dual, traj)
            worst = float(np.max(dual.image_residuals))
            checks.append(_check("dual_image", worst, "1e-6 (1 + |lambda|) + quadrature error", dual.image_ok(),
                                 f"final min_i lambda_i = {mn:.6g}, <lambda, x> = {comp:.6g}"))
    return checks


def build_report(problem: Problem, traj: Trajectory, ref, checks) -> dict:
    x_end = traj.states[-1]
    try:
        opt = problem.optimality_residual(x_end)
    except HessFlowError:
        opt = None
    try:
        est = rate_fit(traj, ref, problem.geometry, "exponential")
        rate = {"model": est.model, "coefficient": est.coefficient,
                "exponent_or_rate": est.exponent_or_rate, "fit_quality": est.fit_quality}
    except (ValueError, HessFlowError):
        rate = None
    return {
        "termination": traj.termination,
        "t_final": traj.t_final,
        "steps": traj.n_steps,
        "rejected_steps": traj.n_rejected,
        "final_point": x_end.tolist(),
        "final_f": float(traj.f_values[-1]),
        "optimality_residual": opt,
        "reference_point": np.asarray(ref, dtype=float).tolist(),
        "rate_estimate": rate,
        "checks": checks,
    }


def write_csv(stream, problem: Problem, traj: Trajectory, ref=None) -> None:
    n = problem.n
    header = ["t"] + [f"x_{i + 1}" for i in range(n)] + ["f", "grad_norm_H"]
    if ref is not None:
        header.append("D_h_to_ref")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    for k, t in enumerate(traj.times):
        row = [t, *traj.states[k], traj.f_values[k], traj.metric_grad_norms[k]]
        if ref is not None:
            row.append(problem.geometry.bregman_h(ref, traj.states[k]))
        writer.writerow([f"{v:.17g}" for v in row])


def _options(args) -> IntegratorOptions:
    return IntegratorOptions(rtol=args.rtol, atol=args.atol, t_max=args.t_max, sample_count=args.samples)


def _reference(args, problem, traj):
    if args.ref_point is None:
        return traj.states[-1]
    ref = np.array(json.loads(args.ref_point), dtype=float)
    if ref.shape != (problem.n,):
        raise SpecFileError(f"--ref-point has {ref.size} entries, expected {problem.n}")
    return ref


def _emit(path, content_writer):
    if path == "-":
        content_writer(sys.stdout)
    else:
        with open(path, "w", newline="") as fh:
            content_writer(fh)


def cmd_run(args) -> int:
    problem = parse_problem(args.spec)
    traj = integrate(problem, _options(args))
    ref = _reference(args, problem, traj)
    _emit(args.out, lambda fh: write_csv(fh, problem, traj, ref if args.ref_point else None))
    report = build_report(problem, traj, ref, run_checks(problem, traj, ref))
    if args.report:
        _emit(args.report, lambda fh: json.dump(report, fh, indent=2, sort_keys=True))
    if traj.termination in ("blow_up_detected", "step_limit"):
        print(f"integration stopped: {traj.termination} at t={traj.t_final:.6g}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_check(args) -> int:
    problem = parse_problem(args.spec)
    traj = integrate(problem, _options(args))
    ref = _reference(args, problem, traj)
    checks = run_checks(problem, traj, ref, full=True)
    all_ok = traj.termination not in ("blow_up_detected", "step_limit")
    print(f"termination: {traj.termination} (t={traj.t_final:.6g})")
    for c in checks:
        value = c["value"]
        shown = json.dumps(value) if isinstance(value, dict) else ("-" if value is None else f"{value:.3e}")
        print(f"{c['status'].upper():7s} {c['name']:24s} value={shown} tol={c['tolerance']}"
              + (f"  ({c['note']})" if c.get("note") else ""))
        if c["passed"] is False:
            all_ok = False
    if args.report:
        _emit(args.report, lambda fh: json.dump(build_report(problem, traj, ref, checks), fh,
                                                indent=2, sort_keys=True))
    return EXIT_OK if all_ok else EXIT_DIVERGED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hessflow", description="Hessian-Riemannian gradient flows")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    defaults = IntegratorOptions()
    for name, func, help_ in (("run", cmd_run, "integrate and write trajectory CSV + report"),
                              ("check", cmd_check, "run the invariant battery")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("spec", help="JSON problem file")
        p.add_argument("--t-max", type=float, default=defaults.t_max)
        p.add_argument("--rtol", type=float, default=defaults.rtol)
        p.add_argument("--atol", type=float, default=defaults.atol)
        p.add_argument("--samples", type=int, default=defaults.sample_count)
        p.add_argument("--ref-point", default=None, help="JSON vector; adds the D_h_to_ref column")
        if name == "run":
            p.add_argument("--out", default="trajectory.csv", help="CSV path ('-' for stdout)")
            p.add_argument("--report", default="report.json", help="JSON report path ('-' for stdout)")
        else:
            p.add_argument("--report", default=None, help="optional JSON report path")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (SpecFileError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except HessFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
