#!/usr/bin/env python3
"""
Brute-force reference optimum for tiny scenarios.

The oracle walks a grid over the charging energies P of every class with
demand and evaluates each point straight from the fleet relations and the
cost engine: trips are forced by demand, and fleet size, charger counts,
the billed peak and generator output are set to their cheapest feasible
values in closed form.  Only charging energy is discretized, so the
discretization error is bounded by a Lipschitz slack reported with the
result.

It shares no constraint code with lp_assembler; the column layout of the
returned point is the only thing borrowed, so row_residuals can check it.

CLI (for manual testing):
    python oracle.py path/to/tiny_scenario --grid-step 5
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import math
from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np
from pydantic import Field, model_validator

from config import settings
from cost_engine import compute_coefficients, fleet_cost_per_vehicle, maintenance_cost_row
from errors import OracleBudgetError
from fleet_model import charging_vehicles, energy_consumed, moving_vehicles
from lp_assembler import SparseProgram, build_index, fam, row_residuals
from schemas import VEHICLE_CLASSES, ScenarioSpec, _Frozen

logger = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-6


class TinyScenario(_Frozen):
    """A scenario small enough for exhaustive search, plus its charging-power grid step (kWh per step)."""

    spec: ScenarioSpec
    grid_step: float = Field(gt=0)

    @model_validator(mode="after")
    def _check_limits(self) -> "TinyScenario":
        dims = self.spec.dims
        problems = []
        if len(dims.mobility_regions) != 1 or len(dims.grid_regions) != 1:
            problems.append("exactly one mobility region and one grid region")
        if dims.n_hours > 4:
            problems.append("at most 4 hours")
        if len(dims.ldv_batteries) + len(dims.hdv_batteries) > 2:
            problems.append("at most 2 battery types")
        if max(len(dims.ldv_chargers), len(dims.hdv_chargers)) > 2:
            problems.append("at most 2 charger levels per class")
        if len(dims.generators) > 2:
            problems.append("at most 2 generators")
        if max(len(dims.ldv_bins), len(dims.hdv_bins)) > 2:
            problems.append("at most 2 distance bins per class")
        last = dims.n_hours - 1
        for (vc, _d, t, _r), cell in self.spec.demand.cells.items():
            if cell.DD > 0 and len(dims.batteries(vc)) != 1:
                problems.append(f"a single battery type for {vc}, which has demand")
            if cell.DD > 0 and t == last:
                problems.append("no demand in the final hour")
        for row in self.spec.loads.rows.values():
            if row.E_Hpriv_min != row.E_Hpriv_max or row.E_Hhdr_min != row.E_Hhdr_max:
                problems.append("fixed private envelopes (minimum = maximum cumulative energy)")
                break
        if problems:
            raise ValueError("tiny scenario needs " + "; ".join(sorted(set(problems))))
        return self


@dataclass
class Candidate:
    point: np.ndarray
    feasible: bool
    objective: float


@dataclass
class OracleResult:
    objective: float
    point: np.ndarray
    slack: float
    evaluated: int
    feasible_points: int


class Comparison(_Frozen):
    passed: bool
    gap: float
    slack: float
    feasible: bool
    max_violation: float


# ---------------------------------------------------------------------------
# Fixed quantities of a tiny scenario
# ---------------------------------------------------------------------------

@dataclass
class _ClassData:
    vc: str
    battery: str
    levels: tuple[str, ...]
    energy: np.ndarray           # kWh consumed per step
    moving: np.ndarray           # vehicles on the road per step
    maintenance: float           # $ over the horizon
    per_kwh: dict[str, float]    # vehicles charging per kWh delivered, by level
    B: float
    fleet_cost: float            # $ per vehicle over the horizon
    charger_cost: dict[str, float]  # $ per charger over the horizon, by level


class _Context:
    def __init__(self, tiny: TinyScenario):
        spec = tiny.spec
        dims = spec.dims
        self.spec = spec
        self.dt = dims.dt_hours
        self.T = dims.n_hours
        self.r = dims.mobility_regions[0]
        self.i = dims.grid_regions[0]
        coeffs = compute_coefficients(spec)
        n_days = spec.grid.n_days
        r = self.r

        self.classes: list[_ClassData] = []
        for vc in VEHICLE_CLASSES:
            cells = {(d, t): c for (v, d, t, rr), c in spec.demand.cells.items() if v == vc and rr == r and c.DD > 0}
            if not cells:
                continue
            b = dims.batteries(vc)[0]
            row = spec.fleet.rows[(vc, b, r)]
            dh = spec.demand.deadhead[(vc, r)]
            psi_cdd, psi_cdt = (dh.psi_cdd, dh.psi_cdt) if vc == "ldv" else (1.0, 1.0)
            energy = np.zeros(self.T)
            moving = np.zeros(self.T)
            vm, nu, beta = [], [], []
            for (d, t), cell in cells.items():
                trip = spec.demand.bins[(vc, d)]
                energy[t] += energy_consumed(cell.DD, row.eta, trip.rho, trip.sigma, dh.psi_chdd, psi_cdd)
                m = moving_vehicles(cell.DD, trip.rho, trip.sigma, self.dt, cell.nu, psi_cdt)
                moving[t] += m
                vm.append(m)
                nu.append(cell.nu)
                beta.append(row.beta_v)
            levels = dims.chargers(vc)
            self.classes.append(_ClassData(
                vc=vc, battery=b, levels=levels, energy=energy, moving=moving,
                maintenance=maintenance_cost_row(vm, nu, beta) * self.dt,
                per_kwh={lv: charging_vehicles(1.0, spec.chargers.access[(vc, b, lv, r)],
                                               spec.chargers.levels[(vc, lv)].gamma, self.dt) for lv in levels},
                B=row.B,
                fleet_cost=n_days * fleet_cost_per_vehicle(coeffs, spec, vc, b, r),
                charger_cost={lv: n_days * spec.chargers.levels[(vc, lv)].gamma * coeffs.charger[(vc, lv)]
                              for lv in levels},
            ))

        loads = [spec.loads.row(t, r) for t in range(self.T)]
        self.private = np.array([row.P_private for row in loads])
        self.ph = {}
        self.ph_ok = True
        for prefix in ("Hpriv", "Hhdr"):
            cum = np.array([getattr(row, f"E_{prefix}_min") for row in loads])
            step = np.diff(np.concatenate(([0.0], cum)))
            lo = np.array([getattr(row, f"P_{prefix}_min") for row in loads]) * self.dt
            hi = np.array([getattr(row, f"P_{prefix}_max") for row in loads]) * self.dt
            self.ph[prefix] = step
            if np.any(step < lo - FEASIBILITY_TOL * (1 + np.abs(lo))) or np.any(step > hi + FEASIBILITY_TOL * (1 + np.abs(hi))):
                self.ph_ok = False
        self.other = np.array([spec.loads.other[(self.i, t)] for t in range(self.T)])
        self.gens = sorted(
            dims.generators, key=lambda g: (spec.grid.generators[g].C_g, dims.generators.index(g)),
        )
        self.peak_rate = coeffs.demand_charge[r] * self.T * self.dt
        self.index = build_index(spec)

        # One free grid coordinate per (class, level, step >= 1); the last one of each class is the remainder.
        self.free: list[tuple[int, str, int]] = []
        self.remainder: list[tuple[int, str, int]] = []
        for k, cd in enumerate(self.classes):
            coords = [(k, lv, t) for t in range(1, self.T) for lv in cd.levels]
            if coords:
                self.free += coords[:-1]
                self.remainder.append(coords[-1])

    def lipschitz(self) -> float:
        """Largest objective change per kWh moved between charging coordinates."""
        best = max((g.C_g for g in self.spec.grid.generators.values()), default=0.0)
        bound = 0.0
        for cd in self.classes:
            for lv in cd.levels:
                k = cd.per_kwh[lv]
                bound = max(bound, k * cd.fleet_cost + cd.fleet_cost / cd.B + k * cd.charger_cost[lv])
        return bound + self.peak_rate / self.dt + best


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _evaluate(ctx: _Context, charge: dict[tuple[int, str, int], float]) -> Candidate:
    spec, dt, T, r = ctx.spec, ctx.dt, ctx.T, ctx.r
    index = ctx.index
    x = np.zeros(index.size)
    feasible = ctx.ph_ok
    objective = 0.0
    fleet_load = np.zeros(T)

    for k, cd in enumerate(ctx.classes):
        P = {lv: np.array([charge.get((k, lv, t), 0.0) for t in range(T)]) for lv in cd.levels}
        total = sum(P.values())
        fleet_load += total
        cum_e = np.cumsum(cd.energy)
        cum_p = np.cumsum(total)
        prev_e = np.concatenate(([0.0], cum_e[:-1]))
        prev_p = np.concatenate(([0.0], cum_p[:-1]))
        scale = FEASIBILITY_TOL * (1.0 + np.abs(prev_e))
        if any(np.any(p < -FEASIBILITY_TOL) for p in P.values()) or np.any(cum_p > prev_e + scale):
            feasible = False
        if abs(cum_p[-1] - cum_e[-1]) > FEASIBILITY_TOL * (1 + cum_e[-1]):
            feasible = False

        charging = {lv: cd.per_kwh[lv] * P[lv] for lv in cd.levels}
        busy = cd.moving + sum(charging.values())
        vstar = max(0.0, float(busy.max()), float(np.max(cum_e - prev_p)) / cd.B)
        chargers = {lv: max(0.0, float(charging[lv].max())) for lv in cd.levels}
        objective += cd.maintenance + vstar * cd.fleet_cost
        objective += sum(chargers[lv] * cd.charger_cost[lv] for lv in cd.levels)

        vc, b = cd.vc, cd.battery
        for (v, d, t, rr) in spec.demand.cells:
            if v == vc:
                x[index.lookup(fam("D", vc), (b, d, t, rr))] = spec.demand.trips(vc, d, t, rr)
        x[index.lookup(fam("Vstar", vc), (b, r))] = vstar
        for t in range(T):
            x[index.lookup(fam("Vi", vc), (b, t, r))] = max(0.0, vstar - busy[t])
            for lv in cd.levels:
                x[index.lookup(fam("P", vc), (b, t, lv, r))] = P[lv][t]
        for lv in cd.levels:
            x[index.lookup(fam("N", vc), (lv, r))] = chargers[lv]

    ph_priv, ph_hdr = ctx.ph["Hpriv"], ctx.ph["Hhdr"]
    net = (fleet_load - ph_priv - ph_hdr) / dt - ctx.private
    pmax = max(0.0, float(net.max()))
    objective += pmax * ctx.peak_rate
    x[index.lookup("Pmax", (r,))] = pmax
    for t in range(T):
        x[index.lookup("PHpriv", (t, r))] = ph_priv[t]
        x[index.lookup("PHhdr", (t, r))] = ph_hdr[t]

    # Merit-order fill of the single grid region.
    load = (ctx.other + ctx.private) * dt + fleet_load + ph_priv + ph_hdr
    for t in range(T):
        need = load[t]
        for g in ctx.gens:
            gen = spec.grid.generators[g]
            out = min(max(need, 0.0), gen.capacity * dt)
            x[index.lookup("G", (g, t))] = out
            objective += out * gen.C_g
            need -= out
        if need > FEASIBILITY_TOL * (1.0 + load[t]):
            feasible = False
    return Candidate(point=x, feasible=feasible, objective=objective)


def _axes(ctx: _Context, step: float) -> list[np.ndarray]:
    axes = []
    for k, _lv, _t in ctx.free:
        top = float(ctx.classes[k].energy.sum())
        axes.append(step * np.arange(math.floor(top / step + 1e-9) + 1))
    return axes


def search_size(tiny: TinyScenario) -> int:
    ctx = _Context(tiny)
    return math.prod(len(a) for a in _axes(ctx, tiny.grid_step))


def iter_candidates(tiny: TinyScenario, budget: int | None = None) -> Iterator[Candidate]:
    """Every grid point with the oracle's own feasibility verdict."""
    budget = settings.oracle_budget if budget is None else budget
    ctx = _Context(tiny)
    axes = _axes(ctx, tiny.grid_step)
    size = math.prod(len(a) for a in axes)
    if size > budget:
        raise OracleBudgetError(f"search space has {size} points, budget is {budget}")
    for values in itertools.product(*axes):
        charge = dict(zip(ctx.free, values))
        for k, lv, t in ctx.remainder:
            spent = sum(v for (kk, _, _), v in charge.items() if kk == k)
            charge[(k, lv, t)] = float(ctx.classes[k].energy.sum()) - spent
        yield _evaluate(ctx, charge)


def enumerate_optimum(tiny: TinyScenario, budget: int | None = None) -> OracleResult:
    """Best feasible grid point and its Lipschitz slack.

    Raises
    ------
    OracleBudgetError
        When the grid has more points than *budget* (default settings.oracle_budget).
    """
    ctx = _Context(tiny)
    best: Candidate | None = None
    evaluated = feasible = 0
    for cand in iter_candidates(tiny, budget):
        evaluated += 1
        if not cand.feasible:
            continue
        feasible += 1
        if best is None or cand.objective < best.objective:
            best = cand
    slack = 2.0 * len(ctx.free) * tiny.grid_step * ctx.lipschitz()
    if best is None:
        logger.warning("Oracle found no feasible grid point among %d", evaluated)
        return OracleResult(math.inf, np.zeros(0), slack, evaluated, 0)
    logger.info("Oracle optimum %.6f over %d points (%d feasible), slack %.4g",
                best.objective, evaluated, feasible, slack)
    return OracleResult(best.objective, best.point, slack, evaluated, feasible)


def compare(oracle_result: OracleResult, solution, program: SparseProgram, tol: float = 1e-6) -> Comparison:
    """Pass when the pipeline objective lies within the oracle's slack and its point is feasible."""
    residuals = row_residuals(program, solution.x)
    feasible = residuals.feasible(FEASIBILITY_TOL)
    gap = solution.objective - oracle_result.objective
    margin = tol * (1.0 + abs(oracle_result.objective))
    within = -oracle_result.slack - margin <= gap <= oracle_result.slack + margin
    return Comparison(
        passed=bool(feasible and within),
        gap=gap,
        slack=oracle_result.slack,
        feasible=feasible,
        max_violation=residuals.max_violation,
    )


def main() -> None:
    from scenario_io import load_scenario

    ap = argparse.ArgumentParser(description="Brute-force the optimum of a tiny scenario.")
    ap.add_argument("scenario", help="Scenario directory")
    ap.add_argument("--grid-step", type=float, default=settings.oracle_grid_step, help="Charging grid step (kWh)")
    args = ap.parse_args()

    tiny = TinyScenario(spec=load_scenario(args.scenario), grid_step=args.grid_step)
    result = enumerate_optimum(tiny)
    print(json.dumps({
        "objective": result.objective,
        "slack": result.slack,
        "evaluated": result.evaluated,
        "feasible_points": result.feasible_points,
    }, indent=2))


if __name__ == "__main__":
    main()
