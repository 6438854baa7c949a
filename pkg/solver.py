#!/usr/bin/env python3
"""
Linear-program solve, certification and infeasibility diagnosis.

Pipeline for one solve:
  1. presolve     - singleton equality rows fix their column; rows left empty
                    are checked and dropped; empty columns go to their best bound
  2. scaling      - Ruiz equilibration with power-of-two factors
  3. backend      - HiGHS interior point with crossover (default), HiGHS dual
                    simplex, or the native Mehrotra method in ipm.py
  4. unscale, postsolve (dual recovery for fixed columns), project onto bounds
  5. residuals    - measured on the original program; a failed check falls
                    back to the dual simplex once, then reports "numerical"

Sign convention: y is the Lagrange multiplier of each row, so y >= 0 on ">="
rows, y <= 0 on "<=" rows, and reduced costs are r = c - A^T y.

CLI (for manual testing):
    python solver.py path/to/scenario --method highs-ds
"""
from __future__ import annotations

import argparse
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

import ipm
from lp_assembler import EQ, GE, LE, SparseProgram
from schemas import CertificateReport, FamilyViolation, SolveSettings, SolveStatus

logger = logging.getLogger(__name__)

_HIGHS_STATUS: dict[int, SolveStatus] = {
    0: "optimal", 1: "iteration_limit", 2: "infeasible", 3: "unbounded", 4: "numerical",
}
_IPM_STATUS: dict[int, SolveStatus] = {
    ipm.STATUS_OPTIMAL: "optimal",
    ipm.STATUS_ITERATIONS: "iteration_limit",
    ipm.STATUS_INFEASIBLE: "infeasible",
    ipm.STATUS_UNBOUNDED: "unbounded",
    ipm.STATUS_NUMERICAL: "numerical",
}


@dataclass(eq=False)
class Solution:
    status: SolveStatus
    x: np.ndarray
    y: np.ndarray
    reduced_costs: np.ndarray
    objective: float
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    method: str
    row_labels: list[tuple[str, tuple]] = field(default_factory=list)
    duals_available: bool = True
    message: str = ""
    # Excluded from equality and from every written output.
    wall_time: float = 0.0

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Solution):
            return NotImplemented
        scalars = ("status", "objective", "primal_residual", "dual_residual", "gap",
                   "iterations", "method", "row_labels", "duals_available", "message")
        return (
            all(getattr(self, s) == getattr(other, s) for s in scalars)
            and all(np.array_equal(getattr(self, a), getattr(other, a)) for a in ("x", "y", "reduced_costs"))
        )

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


# ---------------------------------------------------------------------------
# Presolve
# ---------------------------------------------------------------------------

@dataclass
class _Presolved:
    program: SparseProgram
    rows: np.ndarray            # original row of each reduced row
    cols: np.ndarray            # original column of each reduced column
    fixed: dict[int, float]     # original column -> value
    singletons: list[tuple[int, int, float]]  # (row, col, coefficient) removed rows
    status: SolveStatus | None = None
    message: str = ""


def presolve(program: SparseProgram, tol: float) -> _Presolved:
    """Remove singleton equality rows, then empty rows, then empty columns."""
    csr = program.matrix()
    nnz_row = np.diff(csr.indptr)
    fixed: dict[int, float] = {}
    singletons: list[tuple[int, int, float]] = []

    def result(status=None, message=""):
        return _Presolved(program, np.arange(program.n_rows), np.arange(program.n_cols), {}, [], status, message)

    for i in np.flatnonzero((nnz_row == 1) & (program.senses == EQ)).tolist():
        j = int(csr.indices[csr.indptr[i]])
        a = float(csr.data[csr.indptr[i]])
        value = program.rhs[i] / a
        scale = 1.0 + abs(value)
        if value < program.lb[j] - tol * scale or value > program.ub[j] + tol * scale:
            return result("infeasible", f"row {program.row_labels[i]} fixes a column outside its bounds")
        if j in fixed and abs(fixed[j] - value) > tol * scale:
            return result("infeasible", f"column {j} fixed to two different values")
        fixed.setdefault(j, float(np.clip(value, program.lb[j], program.ub[j])))
        singletons.append((i, j, a))

    drop_rows = np.zeros(program.n_rows, dtype=bool)
    drop_rows[[i for i, _, _ in singletons]] = True
    keep_cols = np.ones(program.n_cols, dtype=bool)
    keep_cols[list(fixed)] = False

    x_fixed = np.zeros(program.n_cols)
    for j, v in fixed.items():
        x_fixed[j] = v
    rhs = program.rhs - csr @ x_fixed

    # Rows with no remaining columns.
    remaining = csr[:, np.flatnonzero(keep_cols)]
    empty = (np.diff(remaining.tocsr().indptr) == 0) & ~drop_rows
    for i in np.flatnonzero(empty).tolist():
        r, s = rhs[i], program.senses[i]
        bad = (s == LE and r < -tol * (1 + abs(program.rhs[i]))) or \
              (s == GE and r > tol * (1 + abs(program.rhs[i]))) or \
              (s == EQ and abs(r) > tol * (1 + abs(program.rhs[i])))
        if bad:
            return result("infeasible", f"row {program.row_labels[i]} cannot be satisfied")
    drop_rows |= empty

    # Columns with no remaining rows.
    kept_rows = np.flatnonzero(~drop_rows)
    col_nnz = np.diff(csr[kept_rows, :].tocsc().indptr)
    for j in np.flatnonzero((col_nnz == 0) & keep_cols).tolist():
        cj = program.c[j]
        if cj < 0 and not np.isfinite(program.ub[j]):
            return result("unbounded", f"column {j} has negative cost and no upper bound")
        fixed[j] = float(program.ub[j] if cj < 0 else program.lb[j])
        keep_cols[j] = False
        x_fixed[j] = fixed[j]

    cols = np.flatnonzero(keep_cols)
    sub = csr[kept_rows, :][:, cols].tocoo()
    reduced = SparseProgram(
        c=program.c[cols],
        rows=sub.row.astype(np.int64),
        cols=sub.col.astype(np.int64),
        vals=sub.data.astype(float),
        senses=program.senses[kept_rows],
        rhs=(program.rhs - csr @ x_fixed)[kept_rows],
        lb=program.lb[cols],
        ub=program.ub[cols],
        row_labels=[program.row_labels[i] for i in kept_rows.tolist()],
    )
    logger.debug(
        "Presolve: fixed %d columns, dropped %d rows", len(fixed), int(drop_rows.sum()),
    )
    return _Presolved(reduced, kept_rows, cols, fixed, singletons)


def postsolve(original: SparseProgram, pre: _Presolved, x_red: np.ndarray, y_red: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.zeros(original.n_cols)
    x[pre.cols] = x_red
    for j, v in pre.fixed.items():
        x[j] = v
    y = np.zeros(original.n_rows)
    y[pre.rows] = y_red
    # A fixed column's singleton row takes the multiplier that zeroes its reduced cost.
    csc = original.matrix().tocsc()
    seen: set[int] = set()
    for i, j, a in pre.singletons:
        if j in seen:
            continue
        seen.add(j)
        start, stop = csc.indptr[j], csc.indptr[j + 1]
        others = sum(
            v * y[k] for k, v in zip(csc.indices[start:stop].tolist(), csc.data[start:stop].tolist()) if k != i
        )
        y[i] = (original.c[j] - others) / a
    return x, y


# ---------------------------------------------------------------------------
# Scaling
# ---------------------------------------------------------------------------

def equilibrate(program: SparseProgram, passes: int = 10) -> tuple[SparseProgram, np.ndarray, np.ndarray]:
    """Ruiz scaling A_s = R A C with power-of-two R, C; returns (scaled, R, C)."""
    m, n = program.n_rows, program.n_cols
    R, C = np.ones(m), np.ones(n)
    if not len(program.vals):
        return program, R, C
    vals = np.abs(program.vals)
    for _ in range(passes):
        scaled = vals * R[program.rows] * C[program.cols]
        row_max = np.zeros(m)
        np.maximum.at(row_max, program.rows, scaled)
        col_max = np.zeros(n)
        np.maximum.at(col_max, program.cols, scaled)
        row_max[row_max == 0] = 1.0
        col_max[col_max == 0] = 1.0
        R = R / np.exp2(np.round(np.log2(np.sqrt(row_max))))
        C = C / np.exp2(np.round(np.log2(np.sqrt(col_max))))
    scaled = SparseProgram(
        c=program.c * C,
        rows=program.rows,
        cols=program.cols,
        vals=program.vals * R[program.rows] * C[program.cols],
        senses=program.senses,
        rhs=program.rhs * R,
        lb=program.lb / C,
        ub=program.ub / C,
        row_labels=program.row_labels,
    )
    return scaled, R, C


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------

def _solve_highs(program: SparseProgram, settings: SolveSettings, method: str):
    A = program.matrix()
    le = np.flatnonzero(program.senses == LE)
    ge = np.flatnonzero(program.senses == GE)
    eq = np.flatnonzero(program.senses == EQ)
    ub_rows = np.concatenate([le, ge])
    A_ub = sparse.vstack([A[le], -A[ge]]).tocsr() if len(ub_rows) else None
    b_ub = np.concatenate([program.rhs[le], -program.rhs[ge]]) if len(ub_rows) else None
    A_eq = A[eq] if len(eq) else None
    b_eq = program.rhs[eq] if len(eq) else None
    bounds = np.column_stack([program.lb, program.ub])
    options = {
        "maxiter": settings.max_iterations,
        "primal_feasibility_tolerance": max(settings.feasibility_tol, 1e-10),
        "dual_feasibility_tolerance": max(settings.optimality_tol, 1e-10),
        "presolve": settings.presolve,
    }
    if method == "highs-ipm":
        options["ipm_optimality_tolerance"] = max(settings.optimality_tol, 1e-12)
    res = linprog(program.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method=method, options=options)
    status = _HIGHS_STATUS.get(res.status, "numerical")
    x = np.asarray(res.x, dtype=float) if res.x is not None else np.zeros(program.n_cols)
    y = np.zeros(program.n_rows)
    duals = True
    ineq = getattr(res, "ineqlin", None)
    eqlin = getattr(res, "eqlin", None)
    if len(ub_rows) and (ineq is None or ineq.marginals is None):
        duals = False
    elif len(ub_rows):
        marg = np.asarray(ineq.marginals, dtype=float)
        y[le] = marg[: len(le)]
        y[ge] = -marg[len(le):]
    if len(eq) and (eqlin is None or eqlin.marginals is None):
        duals = False
    elif len(eq):
        y[eq] = np.asarray(eqlin.marginals, dtype=float)
    iterations = int(getattr(res, "nit", 0) or 0)
    return status, x, y, iterations, duals, str(res.message)


def _solve_mehrotra(program: SparseProgram, settings: SolveSettings):
    form = ipm.to_standard_form(program)
    result = ipm.solve_standard_form(form, tol=settings.optimality_tol,
                                     max_iterations=min(settings.max_iterations, 500))
    x, y = ipm.from_standard_form(form, result)
    return _IPM_STATUS[result.status], x, y, result.iterations, True, result.message


# ---------------------------------------------------------------------------
# Residual metrics
# ---------------------------------------------------------------------------

def _dual_violation(program: SparseProgram, y: np.ndarray, r: np.ndarray) -> np.ndarray:
    row = np.where(program.senses == GE, np.maximum(-y, 0.0),
                   np.where(program.senses == LE, np.maximum(y, 0.0), 0.0))
    has_lb, has_ub = np.isfinite(program.lb), np.isfinite(program.ub)
    col = np.where(has_lb & has_ub, 0.0,
                   np.where(has_lb, np.maximum(-r, 0.0),
                            np.where(has_ub, np.maximum(r, 0.0), np.abs(r))))
    return np.concatenate([row, col])


def _dual_objective(program: SparseProgram, y, r):
    lb = np.where(np.isfinite(program.lb), program.lb, 0.0)
    ub = np.where(np.isfinite(program.ub), program.ub, 0.0)
    has_lb, has_ub = np.isfinite(program.lb), np.isfinite(program.ub)
    box = has_lb & has_ub
    bound_term = np.where(box, lb * np.maximum(r, 0) + ub * np.minimum(r, 0),
                          np.where(has_lb, lb * r, np.where(has_ub, ub * r, 0.0)))
    return program.rhs @ y + bound_term.sum()


def _metrics(program: SparseProgram, x: np.ndarray, y: np.ndarray, r: np.ndarray, lhs: np.ndarray):
    res = lhs - program.rhs
    row_viol = np.where(program.senses == LE, np.maximum(res, 0),
                        np.where(program.senses == GE, np.maximum(-res, 0), np.abs(res)))
    bound_viol = np.maximum(np.maximum(program.lb - x, x - program.ub), 0)
    b_norm = float(np.max(np.abs(program.rhs), initial=0.0))
    c_norm = float(np.max(np.abs(program.c), initial=0.0))
    primal = float(max(np.max(row_viol, initial=0.0), np.max(bound_viol, initial=0.0))) / (1.0 + b_norm)
    dual = float(np.max(_dual_violation(program, y, r), initial=0.0)) / (1.0 + c_norm)
    p_obj = float(program.c @ x)
    d_obj = float(_dual_objective(program, y, r))
    gap = abs(p_obj - d_obj) / (1.0 + abs(p_obj) + abs(d_obj))
    return primal, dual, gap, p_obj, d_obj


def _project(program: SparseProgram, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.clip(x, program.lb, program.ub)
    y = np.where(program.senses == GE, np.maximum(y, 0.0),
                 np.where(program.senses == LE, np.minimum(y, 0.0), y))
    return x, y


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------

def _run(program: SparseProgram, settings: SolveSettings, method: str) -> Solution:
    m, n = program.n_rows, program.n_cols
    pre = presolve(program, settings.feasibility_tol) if settings.presolve else _Presolved(
        program, np.arange(m), np.arange(n), {}, [])
    if pre.status is not None:
        logger.info("Presolve decided status %s: %s", pre.status, pre.message)
        x, y = np.zeros(n), np.zeros(m)
        return Solution(pre.status, x, y, program.c.copy(), 0.0, float("inf"), float("inf"),
                        float("inf"), 0, "presolve", program.row_labels, False, pre.message)

    reduced = pre.program
    if reduced.n_cols == 0:
        status, x_red, y_red, iters, duals, message = "optimal", np.zeros(0), np.zeros(reduced.n_rows), 0, True, "solved in presolve"
    else:
        if settings.scaling:
            scaled, R, C = equilibrate(reduced)
        else:
            scaled, R, C = reduced, np.ones(reduced.n_rows), np.ones(reduced.n_cols)
        if method == "mehrotra":
            status, xs, ys, iters, duals, message = _solve_mehrotra(scaled, settings)
        else:
            status, xs, ys, iters, duals, message = _solve_highs(scaled, settings, method)
        x_red, y_red = xs * C, ys * R

    x, y = postsolve(program, pre, x_red, y_red)
    x, y = _project(program, x, y)
    A = program.matrix()
    r = program.c - A.T @ y
    primal, dual, gap, p_obj, _ = _metrics(program, x, y, r, A @ x)
    return Solution(status, x, y, r, p_obj, primal, dual, gap, iters, method,
                    program.row_labels, duals, message)


def _passes(solution: Solution, settings: SolveSettings) -> bool:
    return (solution.primal_residual <= settings.feasibility_tol
            and solution.dual_residual <= settings.optimality_tol
            and solution.gap <= settings.optimality_tol)


def solve(program: SparseProgram, settings: SolveSettings | None = None) -> Solution:
    """Solve *program*; status "optimal" guarantees all three residual metrics meet tolerance."""
    settings = settings or SolveSettings()
    if program.n_cols == 0:
        raise ValueError("program has no columns")
    if settings.warm_start:
        logger.info("Warm start is not supported; solving from scratch")
    t0 = time.perf_counter()
    solution = _run(program, settings, settings.method)
    if solution.optimal and not _passes(solution, settings):
        logger.warning(
            "%s answer failed residual checks (primal %.2e, dual %.2e, gap %.2e)",
            settings.method, solution.primal_residual, solution.dual_residual, solution.gap,
        )
        if settings.fallback and settings.method != "highs-ds":
            logger.warning("Re-solving with highs-ds")
            solution = _run(program, settings, "highs-ds")
        if solution.optimal and not _passes(solution, settings):
            solution.status = "numerical"
            solution.message = "residual checks failed after solve"
    solution.wall_time = time.perf_counter() - t0
    logger.info(
        "Solved %d x %d program with %s: %s, objective %.6f in %.2fs",
        program.n_rows, program.n_cols, solution.method, solution.status,
        solution.objective, solution.wall_time,
    )
    return solution


def certify(program: SparseProgram, solution: Solution, settings: SolveSettings | None = None) -> CertificateReport:
    """Recompute residuals, objectives and gap in extended precision, independent of the solve path."""
    settings = settings or SolveSettings()
    if not solution.optimal:
        return CertificateReport(
            primal_residual=float("inf"), dual_residual=float("inf"), gap=float("inf"),
            primal_objective=float("nan"), dual_objective=float("nan"),
            primal_ok=False, dual_ok=False, gap_ok=False, note=f"status is {solution.status}",
        )
    ld = np.longdouble
    vals = program.vals.astype(ld)
    x = np.asarray(solution.x).astype(ld)
    y = np.asarray(solution.y).astype(ld)
    c = program.c.astype(ld)
    lhs = np.zeros(program.n_rows, dtype=ld)
    np.add.at(lhs, program.rows, vals * x[program.cols])
    aty = np.zeros(program.n_cols, dtype=ld)
    np.add.at(aty, program.cols, vals * y[program.rows])
    r = c - aty
    wide = SparseProgram(c, program.rows, program.cols, vals, program.senses,
                         program.rhs.astype(ld), program.lb.astype(ld), program.ub.astype(ld),
                         program.row_labels)
    primal, dual, gap, p_obj, d_obj = _metrics(wide, x, y, r, lhs)
    note = "" if solution.duals_available else "duals unavailable"
    return CertificateReport(
        primal_residual=primal, dual_residual=dual, gap=gap,
        primal_objective=p_obj, dual_objective=d_obj,
        primal_ok=primal <= settings.feasibility_tol,
        dual_ok=solution.duals_available and dual <= settings.optimality_tol,
        gap_ok=solution.duals_available and gap <= settings.optimality_tol,
        note=note,
    )


def diagnose_infeasibility(program: SparseProgram, tol: float = 1e-7) -> list[FamilyViolation]:
    """Rank row families by weighted violation in an elastic relaxation of *program*."""
    m, n = program.n_rows, program.n_cols
    weight = 1.0 / (1.0 + np.abs(program.rhs))
    up = np.flatnonzero(program.senses != LE)     # slack raising lhs: >= and = rows
    down = np.flatnonzero(program.senses != GE)   # slack lowering lhs: <= and = rows
    A = program.matrix()
    S_up = sparse.csr_matrix((np.ones(len(up)), (up, np.arange(len(up)))), shape=(m, len(up)))
    S_down = sparse.csr_matrix((-np.ones(len(down)), (down, np.arange(len(down)))), shape=(m, len(down)))
    elastic = sparse.hstack([A, S_up, S_down]).tocoo()
    relaxed = SparseProgram(
        c=np.concatenate([np.zeros(n), weight[up], weight[down]]),
        rows=elastic.row.astype(np.int64), cols=elastic.col.astype(np.int64), vals=elastic.data,
        senses=program.senses, rhs=program.rhs,
        lb=np.concatenate([program.lb, np.zeros(len(up) + len(down))]),
        ub=np.concatenate([program.ub, np.full(len(up) + len(down), np.inf)]),
        row_labels=program.row_labels,
    )
    status, x, _, _, _, _ = _solve_highs(relaxed, SolveSettings(method="highs-ds"), "highs-ds")
    if status != "optimal":
        logger.warning("Elastic relaxation ended with status %s", status)
    slack = np.zeros(m)
    slack[up] += x[n:n + len(up)]
    slack[down] += x[n + len(up):]
    scaled = slack * weight
    families: dict[str, list[float]] = {}
    for (family, _), v in zip(program.row_labels, scaled.tolist()):
        if v > tol:
            families.setdefault(family, []).append(v)
    ranked = [FamilyViolation(family=f, violation=max(v), rows=len(v)) for f, v in families.items()]
    ranked.sort(key=lambda fv: (-fv.violation, fv.family))
    for fv in ranked:
        logger.info("Infeasibility: %s violated by %.4g over %d row(s)", fv.family, fv.violation, fv.rows)
    return ranked


def main() -> None:
    from cost_engine import compute_coefficients
    from lp_assembler import build_program
    from scenario_io import load_scenario

    ap = argparse.ArgumentParser(description="Assemble and solve one scenario, then certify the answer.")
    ap.add_argument("scenario", help="Scenario directory")
    ap.add_argument("--method", choices=["highs-ipm", "highs-ds", "mehrotra"], default="highs-ipm")
    args = ap.parse_args()

    spec = load_scenario(args.scenario)
    program, _ = build_program(spec, compute_coefficients(spec))
    settings = SolveSettings(method=args.method)
    solution = solve(program, settings)
    report = certify(program, solution, settings)
    print(json.dumps({
        "status": solution.status,
        "objective": solution.objective,
        "iterations": solution.iterations,
        "certificate": report.model_dump(),
    }, indent=2, default=float))


if __name__ == "__main__":
    main()
