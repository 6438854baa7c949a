"""
Result tables, single runs and S-fraction sweeps.

run_single drives one scenario through load -> split -> costs -> assemble ->
solve -> certify -> dispatch and writes a bundle of CSV tables, one per
result family, each preceded by ``# result:`` and ``# units:`` lines.
run_sweep repeats that for a list of shared fractions, optionally in worker
processes, and writes ``summary.csv`` once every member has finished.

Floats are written with a fixed format and nothing time-dependent is
recorded, so identical inputs give byte-identical outputs.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from config import settings
from cost_engine import compute_coefficients, private_fleet_cost
from errors import FreightModelError, ScenarioFormatError, ScenarioValidationError
from fleet_model import charging_vehicles, energy_consumed, moving_vehicles
from grid_dispatch import extract_dispatch, verify_merit_order
from lp_assembler import VariableIndex, build_program, fam, row_residuals
from scenario import shaev_split, validate_scenario
from scenario_io import load_scenario
from schemas import VEHICLE_CLASSES, CostCoefficients, ScenarioSpec, SolveSettings, ValidationIssue
from solver import Solution, certify, diagnose_infeasibility, solve

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4

EXIT_CODES = {
    "optimal": EXIT_OK,
    "infeasible": EXIT_INFEASIBLE,
    "unbounded": EXIT_INFEASIBLE,
    "iteration_limit": EXIT_NUMERICAL,
    "numerical": EXIT_NUMERICAL,
}

# Objective column families -> cost line.
COST_LINES = {
    "D": "maintenance", "DH": "maintenance",
    "Pmax": "demand_charge",
    "N": "infrastructure", "NH": "infrastructure",
    "Vstar": "fleet", "VstarH": "fleet",
    "G": "generation",
    "T": "transmission",
}

UNITS = {
    "load_profile": "load_kw: kW",
    "chargers": "count: chargers; kw: kW installed",
    "peak_load": "value_kw: kW",
    "fleet_size": "vehicles: vehicles",
    "costs": "usd: $ over the horizon",
    "dispatch": "energy, capacity: kWh per step; cost: $",
    "flows": "energy, capacity: kWh per step",
    "prices": "price: $/kWh; load, generation, imports, exports, balance: kWh per step",
    "intermediates_energy": "energy: kWh per step",
    "intermediates_moving": "vehicles: vehicles",
    "intermediates_charging": "vehicles: vehicles",
    "intermediates_idle": "vehicles: vehicles",
    "diagnostics": "value: mixed",
    "validation": "none",
    "summary": "total_cost, objective: $; peak_load: kW; *_fleet, fleet_size: vehicles; *_chargers, charger_count: chargers",
}


@dataclass
class ReportBundle:
    tables: dict[str, pd.DataFrame]
    objective: float
    system_total: float
    status: str


@dataclass
class RunOutcome:
    status: str
    exit_code: int
    objective: float | None = None
    bundle: ReportBundle | None = None
    issues: list[ValidationIssue] = field(default_factory=list)
    out_dir: Path | None = None


# ---------------------------------------------------------------------------
# Intermediates
# ---------------------------------------------------------------------------

def reconstruct_intermediates(solution: Solution, index: VariableIndex, spec: ScenarioSpec) -> dict[str, pd.DataFrame]:
    """Evaluate the substituted energy, moving and charging relations at the solution."""
    dims = spec.dims
    dt = dims.dt_hours
    x = solution.x
    energy, moving, charging, idle = [], [], [], []
    for vc in VEHICLE_CLASSES:
        D = index.values(x, fam("D", vc))
        P = index.values(x, fam("P", vc))
        for (b, d, t, r), trips in D.items():
            row = spec.fleet.rows[(vc, b, r)]
            trip = spec.demand.bins[(vc, d)]
            dh = spec.demand.deadhead[(vc, r)]
            psi_cdd, psi_cdt = (dh.psi_cdd, dh.psi_cdt) if vc == "ldv" else (1.0, 1.0)
            energy.append((vc, b, d, t, r, energy_consumed(trips, row.eta, trip.rho, trip.sigma, dh.psi_chdd, psi_cdd)))
            cell = spec.demand.cells.get((vc, d, t, r))
            vm = moving_vehicles(trips, trip.rho, trip.sigma, dt, cell.nu, psi_cdt) if cell else 0.0
            moving.append((vc, b, d, t, r, vm))
        for (b, t, lv, r), kwh in P.items():
            gamma = spec.chargers.levels[(vc, lv)].gamma
            psi = spec.chargers.access[(vc, b, lv, r)]
            charging.append((vc, b, lv, t, r, charging_vehicles(kwh, psi, gamma, dt)))
        for (b, t, r), v in index.values(x, fam("Vi", vc)).items():
            idle.append((vc, b, t, r, v))
    return {
        "energy": pd.DataFrame(energy, columns=["vehicle_class", "battery", "distance_bin", "hour", "region", "energy"]),
        "moving": pd.DataFrame(moving, columns=["vehicle_class", "battery", "distance_bin", "hour", "region", "vehicles"]),
        "charging": pd.DataFrame(charging, columns=["vehicle_class", "battery", "level", "hour", "region", "vehicles"]),
        "idle": pd.DataFrame(idle, columns=["vehicle_class", "battery", "hour", "region", "vehicles"]),
    }


# ---------------------------------------------------------------------------
# Report tables
# ---------------------------------------------------------------------------

def _load_profile(solution: Solution, index: VariableIndex, spec: ScenarioSpec) -> pd.DataFrame:
    dims = spec.dims
    dt = dims.dt_hours
    x = solution.x
    records = []
    for vc, category in (("hdv", "shaev"), ("ldv", "ldv_fleet")):
        by_level: dict[tuple[str, int, str], float] = {}
        for (b, t, lv, r), kwh in index.values(x, fam("P", vc)).items():
            by_level[(r, t, lv)] = by_level.get((r, t, lv), 0.0) + kwh / dt
        records += [(r, t, category, lv, kw) for (r, t, lv), kw in by_level.items()]
    for family, category in (("PHpriv", "private_automated"), ("PHhdr", "private_human")):
        records += [(r, t, category, "", kwh / dt) for (t, r), kwh in index.values(x, family).items()]
    records += [(r, t, "private_ldv", "", spec.loads.row(t, r).P_private)
                for t in dims.hours for r in dims.mobility_regions]
    df = pd.DataFrame(records, columns=["region", "hour", "category", "level", "load_kw"])
    return df.sort_values(["region", "hour", "category", "level"], kind="mergesort").reset_index(drop=True)


def net_fleet_peak(solution: Solution, index: VariableIndex, spec: ScenarioSpec) -> dict[str, float]:
    """max(0, max_t net fleet demand) per mobility region, the value the billed peak must equal."""
    dims = spec.dims
    dt = dims.dt_hours
    x = solution.x
    out = {}
    for r in dims.mobility_regions:
        best = 0.0
        for t in dims.hours:
            fleet = sum(
                x[index.lookup(fam("P", vc), (b, t, lv, r))]
                for vc in VEHICLE_CLASSES for b in dims.batteries(vc) for lv in dims.chargers(vc)
            )
            private = x[index.lookup("PHpriv", (t, r))] + x[index.lookup("PHhdr", (t, r))]
            best = max(best, (fleet - private) / dt - spec.loads.row(t, r).P_private)
        out[r] = best
    return out


def _peak_load(solution, index, spec, dispatch) -> pd.DataFrame:
    dt = spec.dims.dt_hours
    records = []
    for r in spec.dims.mobility_regions:
        records.append(("billed_peak", r, float(solution.x[index.lookup("Pmax", (r,))])))
    for r, v in net_fleet_peak(solution, index, spec).items():
        records.append(("net_fleet_peak", r, v))
    loads = pd.DataFrame([(rh.grid_region, rh.hour, rh.load / dt) for rh in dispatch.regions],
                         columns=["grid_region", "hour", "kw"])
    for i, kw in loads.groupby("grid_region", sort=False)["kw"].max().items():
        records.append(("grid_peak", i, float(kw)))
    records.append(("system_peak", "all", float(loads.groupby("hour")["kw"].sum().max()) if len(loads) else 0.0))
    return pd.DataFrame(records, columns=["kind", "scope", "value_kw"])


def _costs(program, solution: Solution, index: VariableIndex, spec: ScenarioSpec, coeffs: CostCoefficients) -> pd.DataFrame:
    contrib = program.c * solution.x
    lines = {name: 0.0 for name in dict.fromkeys(COST_LINES.values())}
    for family in index.families:
        name = COST_LINES.get(family)
        if name is not None:
            lines[name] += float(np.sum(contrib[index.slice(family)]))
    objective = float(np.sum(contrib))
    trucks, depot = private_fleet_cost(coeffs, spec)
    records = [(k, v) for k, v in lines.items()]
    records += [
        ("objective_total", objective),
        ("private_fleet", trucks),
        ("private_infrastructure", depot),
        ("system_total", objective + trucks + depot),
    ]
    return pd.DataFrame(records, columns=["item", "usd"])


def build_report(spec: ScenarioSpec, program, index: VariableIndex, solution: Solution,
                 coeffs: CostCoefficients, certificate=None) -> ReportBundle:
    dispatch = extract_dispatch(solution, index, spec)
    violations = verify_merit_order(dispatch, spec)
    x = solution.x
    tables: dict[str, pd.DataFrame] = {"load_profile": _load_profile(solution, index, spec)}

    chargers = []
    for vc in VEHICLE_CLASSES:
        for (lv, r), n in index.values(x, fam("N", vc)).items():
            chargers.append((vc, lv, r, n, n * spec.chargers.levels[(vc, lv)].gamma))
    tables["chargers"] = pd.DataFrame(chargers, columns=["vehicle_class", "level", "region", "count", "kw"])
    tables["peak_load"] = _peak_load(solution, index, spec, dispatch)

    fleet = []
    for vc in VEHICLE_CLASSES:
        fleet += [(vc, b, r, v) for (b, r), v in index.values(x, fam("Vstar", vc)).items()]
    ref = spec.reference_battery()
    fleet += [(f"hdv_private_{kind}", ref, r, v) for (kind, r), v in sorted(spec.loads.private_fleet.items())]
    tables["fleet_size"] = pd.DataFrame(fleet, columns=["vehicle_class", "battery", "region", "vehicles"])

    costs = _costs(program, solution, index, spec, coeffs)
    tables["costs"] = costs
    tables["dispatch"] = pd.DataFrame([g.model_dump() for g in dispatch.generators])
    tables["flows"] = pd.DataFrame([f.model_dump() for f in dispatch.flows],
                                   columns=["from_region", "to_region", "hour", "energy", "capacity", "binding"])
    prices = pd.DataFrame([rh.model_dump() for rh in dispatch.regions])
    prices["price"] = prices["price"].astype(float)
    tables["prices"] = prices
    for name, df in reconstruct_intermediates(solution, index, spec).items():
        tables[f"intermediates_{name}"] = df

    residuals = row_residuals(program, x)
    diag = [
        ("status", solution.status),
        ("method", solution.method),
        ("objective", solution.objective),
        ("iterations", solution.iterations),
        ("primal_residual", solution.primal_residual),
        ("dual_residual", solution.dual_residual),
        ("gap", solution.gap),
        ("max_row_violation", residuals.max_violation),
        ("merit_order_violations", len(violations)),
        ("prices_available", dispatch.prices_available),
        ("config_version", settings.config_version),
    ]
    if certificate is not None:
        diag.append(("certificate_passed", certificate.passed))
    tables["diagnostics"] = pd.DataFrame(diag, columns=["key", "value"])

    system_total = float(costs.loc[costs["item"] == "system_total", "usd"].iloc[0])
    return ReportBundle(tables=tables, objective=solution.objective, system_total=system_total, status=solution.status)


def write_bundle(bundle: ReportBundle, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, df in bundle.tables.items():
        write_table(df, out / f"{name}.csv", name)
    logger.info("Wrote %d result tables to %s", len(bundle.tables), out)
    return out


def write_table(df: pd.DataFrame, path: Path, result: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# result: {result}\n")
        fh.write(f"# units: {UNITS.get(result, 'none')}\n")
        df.to_csv(fh, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------

def solve_settings_from_config(**overrides) -> SolveSettings:
    base = dict(
        feasibility_tol=settings.feasibility_tol,
        optimality_tol=settings.optimality_tol,
        max_iterations=settings.max_iterations,
        scaling=settings.scaling,
        method=settings.solver_method,
    )
    base.update({k: v for k, v in overrides.items() if v is not None})
    return SolveSettings(**base)


def _validation_outcome(issues, out_dir: Path | None) -> RunOutcome:
    for issue in issues:
        logger.error("Validation: [%s] %s (%s)", issue.code, issue.message, issue.location)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        df = pd.DataFrame([i.model_dump() for i in issues], columns=["code", "message", "location"])
        write_table(df, out_dir / "validation.csv", "validation")
    return RunOutcome(status="invalid", exit_code=EXIT_VALIDATION, issues=list(issues), out_dir=out_dir)


def prepare(scenario_path: str | Path, share: float | None) -> ScenarioSpec:
    """Load, validate and optionally split a scenario; raises ScenarioValidationError on issues."""
    spec = load_scenario(scenario_path)
    report = validate_scenario(spec)
    if not report.ok:
        raise ScenarioValidationError(report)
    if share is not None:
        spec = shaev_split(spec, share)
        report = validate_scenario(spec)
        if not report.ok:
            raise ScenarioValidationError(report)
    return spec


def run_single(scenario_path: str | Path, share: float | None = None,
               solve_settings: SolveSettings | None = None, out_dir: str | Path | None = None) -> RunOutcome:
    """Solve one scenario, optionally at shared fraction *share*, and write its bundle to *out_dir*."""
    out = Path(out_dir) if out_dir is not None else None
    solve_settings = solve_settings or solve_settings_from_config()
    try:
        spec = prepare(scenario_path, share)
    except ScenarioValidationError as exc:
        return _validation_outcome(exc.report.issues, out)
    except ScenarioFormatError as exc:
        return _validation_outcome([ValidationIssue(code="format", message=str(exc))], out)

    coeffs = compute_coefficients(spec)
    program, index = build_program(spec, coeffs)
    solution = solve(program, solve_settings)
    exit_code = EXIT_CODES[solution.status]

    if not solution.optimal:
        logger.error("Scenario '%s' ended with status %s", spec.name, solution.status)
        diag = [("status", solution.status), ("message", solution.message)]
        if solution.status == "infeasible":
            for fv in diagnose_infeasibility(program):
                diag.append((f"violated:{fv.family}", f"{fv.violation:.6g} over {fv.rows} row(s)"))
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            write_table(pd.DataFrame(diag, columns=["key", "value"]), out / "diagnostics.csv", "diagnostics")
        return RunOutcome(status=solution.status, exit_code=exit_code, objective=solution.objective, out_dir=out)

    certificate = certify(program, solution, solve_settings)
    if not certificate.passed:
        logger.warning("Certificate failed for '%s': %s", spec.name, certificate)
    bundle = build_report(spec, program, index, solution, coeffs, certificate)
    if out is not None:
        write_bundle(bundle, out)
    return RunOutcome(status=solution.status, exit_code=exit_code, objective=solution.objective,
                      bundle=bundle, out_dir=out)


SUMMARY_COLUMNS = [
    "share", "status", "total_cost", "objective", "peak_load",
    "fleet_size", "shared_fleet", "private_fleet",
    "charger_count", "shared_chargers", "private_chargers",
]


def summary_row(share: float, outcome: RunOutcome) -> dict:
    """One summary line; fleet and charger totals include private trucks and their depot chargers."""
    row = {"share": share, "status": outcome.status, **{c: np.nan for c in SUMMARY_COLUMNS[2:]}}
    if outcome.bundle is not None:
        t = outcome.bundle.tables
        peaks = t["peak_load"]
        fleet = t["fleet_size"]
        private = fleet["vehicle_class"].str.startswith("hdv_private_")
        shared_fleet = float(fleet.loc[~private, "vehicles"].sum())
        private_fleet = float(fleet.loc[private, "vehicles"].sum())
        shared_chargers = float(t["chargers"]["count"].sum())
        # One depot charger per private truck.
        private_chargers = private_fleet
        row.update(
            total_cost=outcome.bundle.system_total,
            objective=outcome.bundle.objective,
            peak_load=float(peaks.loc[peaks["kind"] == "system_peak", "value_kw"].iloc[0]),
            fleet_size=shared_fleet + private_fleet,
            shared_fleet=shared_fleet,
            private_fleet=private_fleet,
            charger_count=shared_chargers + private_chargers,
            shared_chargers=shared_chargers,
            private_chargers=private_chargers,
        )
    return row


def _sweep_member(job: tuple[int, float, str, SolveSettings, str]) -> dict:
    k, share, scenario_path, solve_settings, out_root = job
    member_dir = Path(out_root) / f"member_{k:02d}_share_{share:g}"
    try:
        outcome = run_single(scenario_path, share, solve_settings, member_dir)
    except (FreightModelError, ValueError, np.linalg.LinAlgError) as exc:
        logger.error("Sweep member %d (S=%g) failed: %s", k, share, exc)
        return {**summary_row(share, RunOutcome(status="failed", exit_code=EXIT_NUMERICAL)), "status": "failed"}
    return summary_row(share, outcome)


def run_sweep(scenario_path: str | Path, shares: list[float], solve_settings: SolveSettings | None = None,
              out_dir: str | Path | None = None, workers: int | None = None) -> pd.DataFrame:
    """Run every shared fraction in *shares* and return the summary table in input order."""
    if not shares:
        raise ValueError("sweep needs at least one shared fraction")
    bad = [s for s in shares if not 0.0 <= s <= 1.0]
    if bad:
        raise ValueError(f"shared fractions must lie in [0, 1], got {bad}")
    solve_settings = solve_settings or solve_settings_from_config()
    workers = workers or settings.workers
    out = Path(out_dir or settings.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(k, float(s), str(scenario_path), solve_settings, str(out)) for k, s in enumerate(shares)]

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            rows = list(pool.map(_sweep_member, jobs))
    else:
        rows = [_sweep_member(job) for job in jobs]

    summary = pd.DataFrame(rows, columns=SUMMARY_COLUMNS)
    write_table(summary, out / "summary.csv", "summary")
    logger.info("Sweep over %d shares written to %s", len(shares), out)
    return summary
