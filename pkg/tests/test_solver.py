"""
Solver tests: hand-sized programs with known primal and dual answers,
presolve and scaling, status reporting, certification and infeasibility
diagnosis.
"""
from __future__ import annotations

import dataclasses

import numpy as np
import pytest

import ipm
from cost_engine import compute_coefficients, fleet_cost_per_vehicle
from lp_assembler import EQ, GE, LE, ProgramBuilder, build_program
from scenario_factory import toy_scenario
from schemas import SolveSettings
from solver import certify, diagnose_infeasibility, equilibrate, presolve, solve
from tests.conftest import solve_spec

# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

METHODS = ["highs-ipm", "highs-ds", "mehrotra"]


def program_of(c, rows, lb=None, ub=None):
    """rows: (family, [(col, coef), ...], sense, rhs)."""
    n = len(c)
    builder = ProgramBuilder(n)
    for k, (family, terms, sense, rhs) in enumerate(rows):
        builder.add_row(family, (k,), terms, sense, rhs)
    return builder.finalize(
        np.asarray(c, dtype=float),
        np.zeros(n) if lb is None else np.asarray(lb, dtype=float),
        np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float),
    )


def settings_for(method: str) -> SolveSettings:
    if method == "mehrotra":
        return SolveSettings(method=method, feasibility_tol=1e-7, optimality_tol=1e-7)
    return SolveSettings(method=method)


FIXED_AND_COVER = [
    ("fix", [(0, 1.0)], EQ, 2.0),
    ("cover", [(0, 1.0), (1, 1.0)], GE, 3.0),
]


# ---------------------------------------------------------------------------
# Hand-sized programs
# ---------------------------------------------------------------------------

class TestHandPrograms:
    @pytest.mark.parametrize("method", METHODS)
    def test_lower_bound_row(self, method):
        program = program_of([1.0], [("floor", [(0, 1.0)], GE, 1.0)])
        solution = solve(program, settings_for(method))
        assert solution.optimal
        assert solution.objective == pytest.approx(1.0, rel=1e-6)
        assert solution.y[0] == pytest.approx(1.0, rel=1e-6)

    @pytest.mark.parametrize("method", METHODS)
    def test_upper_row_has_non_positive_multiplier(self, method):
        program = program_of([-1.0], [("cap", [(0, 1.0)], LE, 3.0)])
        solution = solve(program, settings_for(method))
        assert solution.optimal
        assert solution.x[0] == pytest.approx(3.0, rel=1e-6)
        assert solution.y[0] == pytest.approx(-1.0, rel=1e-6)

    @pytest.mark.parametrize("method", METHODS)
    def test_degenerate_optimum(self, method):
        rows = [
            ("budget", [(0, 1.0), (1, 1.0)], LE, 1.0),
            ("cap0", [(0, 1.0)], LE, 1.0),
            ("cap1", [(1, 1.0)], LE, 1.0),
        ]
        solution = solve(program_of([-1.0, -1.0], rows), settings_for(method))
        assert solution.optimal
        assert solution.objective == pytest.approx(-1.0, rel=1e-6)
        assert solution.x.sum() == pytest.approx(1.0, rel=1e-6)

    @pytest.mark.parametrize("method", METHODS)
    def test_fixed_column_dual_recovered(self, method):
        program = program_of([1.0, 2.0], FIXED_AND_COVER)
        solution = solve(program, settings_for(method))
        assert solution.optimal
        assert solution.objective == pytest.approx(4.0, rel=1e-6)
        assert solution.x == pytest.approx([2.0, 1.0], rel=1e-6)
        assert solution.y == pytest.approx([-1.0, 2.0], rel=1e-6)
        assert np.abs(solution.reduced_costs).max() <= 1e-6

    def test_presolve_off_agrees(self):
        program = program_of([1.0, 2.0], FIXED_AND_COVER)
        on = solve(program, SolveSettings(presolve=True))
        off = solve(program, SolveSettings(presolve=False))
        assert off.optimal
        assert on.objective == pytest.approx(off.objective, rel=1e-9)
        assert on.y == pytest.approx(off.y, rel=1e-6)

    def test_no_columns(self):
        with pytest.raises(ValueError):
            solve(program_of([], []))


# ---------------------------------------------------------------------------
# Presolve and scaling
# ---------------------------------------------------------------------------

class TestPresolve:
    def test_singleton_equality_fixes_column(self):
        pre = presolve(program_of([1.0, 2.0], FIXED_AND_COVER), 1e-9)
        assert pre.status is None
        assert pre.fixed == {0: 2.0}
        assert pre.program.n_cols == 1
        assert pre.program.row_labels == [("cover", (1,))]
        assert pre.program.rhs.tolist() == [1.0]

    def test_fix_outside_bounds_is_infeasible(self):
        program = program_of([1.0], [("fix", [(0, 1.0)], EQ, 5.0)], ub=[3.0])
        solution = solve(program)
        assert solution.status == "infeasible"
        assert solution.method == "presolve"
        assert not solution.duals_available

    def test_conflicting_fixes_are_infeasible(self):
        rows = [("fix", [(0, 1.0)], EQ, 1.0), ("fix_again", [(0, 2.0)], EQ, 4.0)]
        assert presolve(program_of([1.0], rows), 1e-9).status == "infeasible"

    def test_empty_row_checked(self):
        rows = [("nothing", [], GE, 1.0), ("floor", [(0, 1.0)], GE, 0.0)]
        assert presolve(program_of([1.0], rows), 1e-9).status == "infeasible"

    def test_empty_column_goes_to_best_bound(self):
        program = program_of([1.0, -1.0], [("floor", [(0, 1.0)], GE, 1.0)], ub=[np.inf, 5.0])
        solution = solve(program)
        assert solution.optimal
        assert solution.x == pytest.approx([1.0, 5.0])
        assert solution.objective == pytest.approx(-4.0)

    def test_empty_column_without_bound_is_unbounded(self):
        program = program_of([1.0, -1.0], [("floor", [(0, 1.0)], GE, 1.0)])
        solution = solve(program)
        assert solution.status == "unbounded"
        assert solution.method == "presolve"

    def test_everything_solved_in_presolve(self):
        program = program_of([3.0], [("fix", [(0, 1.0)], EQ, 2.0)])
        solution = solve(program)
        assert solution.optimal
        assert solution.objective == pytest.approx(6.0)
        assert solution.y == pytest.approx([3.0])


class TestEquilibrate:
    def test_factors_are_powers_of_two(self, toy):
        solved = solve_spec(toy)
        _, R, C = equilibrate(solved.program)
        for factors in (R, C):
            exponents = np.log2(factors)
            assert np.allclose(exponents, np.round(exponents))

    def test_scaled_entries_near_one(self, desk):
        program, _ = build_program(desk, compute_coefficients(desk))
        scaled, _, _ = equilibrate(program)
        row_max = np.zeros(scaled.n_rows)
        np.maximum.at(row_max, scaled.rows, np.abs(scaled.vals))
        touched = row_max[row_max > 0]
        assert touched.max() <= 8.0
        assert touched.min() >= 0.125

    def test_scaling_does_not_change_answer(self, toy):
        program = solve_spec(toy).program
        a = solve(program, SolveSettings(scaling=True))
        b = solve(program, SolveSettings(scaling=False))
        assert a.objective == pytest.approx(b.objective, rel=1e-8)

    def test_empty_matrix_untouched(self):
        program = program_of([1.0], [])
        scaled, R, C = equilibrate(program)
        assert scaled is program
        assert C.tolist() == [1.0]


# ---------------------------------------------------------------------------
# Status reporting
# ---------------------------------------------------------------------------

class TestStatus:
    @pytest.mark.parametrize("method", ["highs-ipm", "highs-ds"])
    def test_unbounded(self, method):
        program = program_of([-1.0], [("floor", [(0, 1.0)], GE, 0.0)])
        assert solve(program, SolveSettings(method=method)).status == "unbounded"

    @pytest.mark.parametrize("method", ["highs-ipm", "highs-ds"])
    def test_infeasible(self, method):
        rows = [("lower", [(0, 1.0)], GE, 2.0), ("upper", [(0, 1.0)], LE, 1.0)]
        solution = solve(program_of([1.0], rows), SolveSettings(method=method))
        assert solution.status == "infeasible"
        assert not solution.optimal

    def test_toy_has_no_feasible_plan_on_tiny_generator(self):
        spec = toy_scenario(generators={"cheap": ("g1", 0.02, 10.0)})
        solved = solve_spec(spec)
        assert solved.solution.status == "infeasible"

    def test_solution_equality_ignores_wall_time(self, toy):
        program = solve_spec(toy).program
        a, b = solve(program), solve(program)
        a.wall_time, b.wall_time = 1.0, 99.0
        assert a == b

    def test_warm_start_is_a_cold_solve(self, toy):
        program = solve_spec(toy).program
        cold = solve(program)
        warm = solve(program, SolveSettings(warm_start=True))
        assert warm == cold


# ---------------------------------------------------------------------------
# Toy optimum
# ---------------------------------------------------------------------------

class TestToyOptimum:
    def test_closed_form_objective(self, toy):
        solved = solve_spec(toy)
        coeffs, n_days = solved.coeffs, toy.grid.n_days
        fleet = fleet_cost_per_vehicle(coeffs, toy, "hdv", "h300", "r1")
        expected = (
            2 * 7.5                                                   # maintenance on 2 moving trucks
            + n_days * 2 * fleet                                      # two trucks
            + n_days * 100.0 * coeffs.charger[("hdv", "dc100")]       # one 100 kW charger
            + 100.0 * coeffs.demand_charge["r1"] * 4                  # 100 kW billed over 4 hours
            + 200.0 * 0.02                                            # cheap generation
        )
        assert solved.solution.objective == pytest.approx(expected, rel=1e-8)

    @pytest.mark.parametrize("method", METHODS)
    def test_methods_agree(self, toy, method):
        baseline = solve_spec(toy).solution
        other = solve_spec(toy, **settings_for(method).model_dump()).solution
        assert other.optimal
        assert other.objective == pytest.approx(baseline.objective, rel=1e-6)

    def test_generation_price_is_marginal_cost(self, toy):
        solved = solve_spec(toy)
        i = solved.program.row_labels.index(("generation", ("g1", 2)))
        assert solved.solution.y[i] == pytest.approx(0.02, rel=1e-6)

    def test_multiplier_signs(self, toy):
        solved = solve_spec(toy)
        solution, senses = solved.solution, solved.program.senses
        assert np.all(solution.y[senses == GE] >= 0.0)
        assert np.all(solution.y[senses == LE] <= 0.0)


# ---------------------------------------------------------------------------
# Certification and diagnosis
# ---------------------------------------------------------------------------

class TestCertify:
    def test_toy_certifies(self, toy):
        solved = solve_spec(toy)
        report = certify(solved.program, solved.solution)
        assert report.passed
        assert report.primal_objective == pytest.approx(report.dual_objective, rel=1e-7)
        assert report.primal_objective == pytest.approx(solved.solution.objective, rel=1e-12)

    def test_tampered_point_fails(self, toy):
        solved = solve_spec(toy)
        solved.solution.x = solved.solution.x.copy()
        solved.solution.x[solved.index.lookup("DH", ("h300", "regional", 1, "r1"))] += 0.5
        report = certify(solved.program, solved.solution)
        assert not report.primal_ok
        assert not report.passed

    def test_missing_duals_fail_dual_check(self, toy):
        solved = solve_spec(toy)
        solved.solution.duals_available = False
        report = certify(solved.program, solved.solution)
        assert report.primal_ok
        assert not report.dual_ok
        assert report.note == "duals unavailable"

    def test_non_optimal_status(self):
        rows = [("lower", [(0, 1.0)], GE, 2.0), ("upper", [(0, 1.0)], LE, 1.0)]
        program = program_of([1.0], rows)
        report = certify(program, solve(program))
        assert not report.passed
        assert report.note == "status is infeasible"


class TestDiagnose:
    def test_cheapest_relaxation_named_first(self):
        rows = [("lower", [(0, 1.0)], GE, 2.0), ("upper", [(0, 1.0)], LE, 1.0)]
        ranked = diagnose_infeasibility(program_of([1.0], rows))
        assert ranked[0].family == "lower"
        assert ranked[0].violation == pytest.approx(1.0 / 3.0, rel=1e-6)
        assert ranked[0].rows == 1

    def test_infeasible_toy_ranked(self):
        solved = solve_spec(toy_scenario(generators={"cheap": ("g1", 0.02, 10.0)}))
        ranked = diagnose_infeasibility(solved.program)
        assert ranked
        violations = [fv.violation for fv in ranked]
        assert violations == sorted(violations, reverse=True)

    def test_feasible_program_has_nothing_to_report(self, toy):
        assert diagnose_infeasibility(solve_spec(toy).program) == []


class TestStandardForm:
    def test_needs_finite_lower_bounds(self):
        program = program_of([1.0], [("floor", [(0, 1.0)], GE, 1.0)], lb=[-np.inf])
        with pytest.raises(ValueError):
            ipm.to_standard_form(program)


# ---------------------------------------------------------------------------
# Invariants: objective scaling, relaxation, weak duality
# ---------------------------------------------------------------------------

# min x0 + 2 x1  s.t.  x0 + x1 >= 3,  x0 <= 2;  unique optimum (2, 1), value 4.
CAPPED_COVER = [
    ("cover", [(0, 1.0), (1, 1.0)], GE, 3.0),
    ("cap", [(0, 1.0)], LE, 2.0),
]


class TestObjectiveScaling:
    @pytest.mark.parametrize("method", ["highs-ipm", "highs-ds"])
    @pytest.mark.parametrize("k", [1e-3, 1.0, 1e3])
    def test_argmin_unchanged(self, method, k):
        program = program_of([1.0, 2.0], CAPPED_COVER)
        scaled = program.with_objective(k * program.c)
        solution = solve(scaled, settings_for(method))
        assert solution.optimal
        assert solution.x == pytest.approx([2.0, 1.0], abs=1e-7)
        assert solution.objective == pytest.approx(4.0 * k, rel=1e-8)
        assert certify(scaled, solution).passed

    @pytest.mark.parametrize("k", [0.1, 10.0])
    def test_toy_scaled_objective(self, toy, k):
        base = solve_spec(toy)
        scaled = base.program.with_objective(k * base.program.c)
        solution = solve(scaled, SolveSettings())
        assert solution.optimal
        assert solution.objective == pytest.approx(k * base.solution.objective, rel=1e-7)
        assert base.index.values(solution.x, "Pmax") == pytest.approx(base.index.values(base.solution.x, "Pmax"), rel=1e-6)
        assert certify(base.program, base.solution).passed
        assert certify(scaled, solution).passed

    def test_objective_length_is_kept(self, toy):
        program = solve_spec(toy).program
        assert program.with_objective(np.zeros(program.n_cols)).n_cols == program.n_cols


class TestRelaxation:
    def test_dropping_inequality_families_never_raises_objective(self, toy):
        base = solve_spec(toy)
        program = base.program
        assert np.all(program.c >= 0.0) and np.all(np.isfinite(program.lb))
        families = sorted({f for f, _ in program.row_labels})
        inequality = [f for f in families if np.all(program.senses[program.family_rows(f)] != EQ)]
        assert inequality
        for family in inequality:
            mask = np.array([f == family for f, _ in program.row_labels])
            relaxed = solve(program.drop_rows(mask), SolveSettings())
            assert relaxed.optimal, family
            assert relaxed.objective <= base.solution.objective + 1e-7 * (1.0 + abs(base.solution.objective)), family

    def test_dropping_the_binding_row(self):
        program = program_of([1.0, 2.0], CAPPED_COVER)
        relaxed = solve(program.drop_rows(np.array([False, True])))
        assert relaxed.optimal
        assert relaxed.objective == pytest.approx(3.0, rel=1e-8)
        assert relaxed.objective < solve(program).objective


class TestWeakDuality:
    def test_sampled_dual_bounds_stay_below_primal_values(self):
        program = program_of([1.0, 2.0], CAPPED_COVER)
        base = solve(program)
        rng = np.random.default_rng(7)
        for _ in range(50):
            x0 = rng.uniform(0.0, 2.0)
            x = np.array([x0, 3.0 - x0 + rng.uniform(0.0, 2.0)])
            s = rng.uniform(0.0, 1.0)
            # Reduced costs (1 - t + s, 2 - t) stay non-negative.
            y = np.array([rng.uniform(0.0, min(1.0 + s, 2.0)), -s])
            report = certify(program, dataclasses.replace(base, x=x, y=y))
            assert report.primal_ok
            assert report.dual_ok
            assert report.dual_objective <= report.primal_objective + 1e-12

    def test_optimal_dual_bound_on_toy(self, toy):
        solved = solve_spec(toy)
        report = certify(solved.program, solved.solution)
        assert report.dual_objective <= report.primal_objective + 1e-7 * (1.0 + abs(report.primal_objective))
