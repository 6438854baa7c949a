"""
Test-only assembly that keeps energy, moving and charging vehicles as columns.

Each relation becomes an equality row (def_energy, def_moving, def_charging)
and the fleet rows are written against those columns.  Every other row keeps
the family name and subscripts the production assembler uses, so residuals
can be compared label by label.
"""
from __future__ import annotations

import itertools

import numpy as np

from fleet_model import charging_vehicles, energy_consumed, moving_vehicles
from lp_assembler import EQ, GE, LE, ProgramBuilder, SparseProgram, VariableIndex, build_index, fam
from schemas import VEHICLE_CLASSES, CostCoefficients, ScenarioSpec


def _explicit_index(spec: ScenarioSpec) -> VariableIndex:
    dims = spec.dims
    index = build_index(spec)
    for vc in VEHICLE_CLASSES:
        keys = list(itertools.product(dims.batteries(vc), dims.bins(vc), dims.hours, dims.mobility_regions))
        index.register(fam("E", vc), keys)
        index.register(fam("Vm", vc), keys)
        index.register(fam("Vc", vc), itertools.product(
            dims.batteries(vc), dims.hours, dims.chargers(vc), dims.mobility_regions))
    return index


def _params(spec, vc, b, d, r):
    row = spec.fleet.rows[(vc, b, r)]
    trip = spec.demand.bins[(vc, d)]
    dh = spec.demand.deadhead[(vc, r)]
    if vc == "ldv":
        return row, trip, dh.psi_chdd, dh.psi_cdd, dh.psi_cdt
    return row, trip, dh.psi_chdd, 1.0, 1.0


def build_explicit(spec: ScenarioSpec, coeffs: CostCoefficients) -> tuple[SparseProgram, VariableIndex]:
    dims = spec.dims
    dt = dims.dt_hours
    hours, regions = dims.hours, dims.mobility_regions
    index = _explicit_index(spec)
    col = index.lookup
    c = np.zeros(index.size)
    lb = np.zeros(index.size)
    ub = np.full(index.size, np.inf)

    for vc in VEHICLE_CLASSES:
        for (b, d, t, r) in index.keys[fam("Vm", vc)]:
            cell = spec.demand.cells.get((vc, d, t, r))
            if cell is not None:
                c[col(fam("Vm", vc), (b, d, t, r))] = spec.fleet.rows[(vc, b, r)].beta_v * cell.nu * dt
        for (b, r) in index.keys[fam("Vstar", vc)]:
            row = spec.fleet.rows[(vc, b, r)]
            c[col(fam("Vstar", vc), (b, r))] = spec.grid.n_days * (
                coeffs.vehicle[(vc, b, r)] + coeffs.battery[(vc, b, r)] * row.B)
        for (lv, r) in index.keys[fam("N", vc)]:
            c[col(fam("N", vc), (lv, r))] = spec.grid.n_days * spec.chargers.levels[(vc, lv)].gamma * coeffs.charger[(vc, lv)]
    for r in regions:
        c[col("Pmax", (r,))] = coeffs.demand_charge[r] * len(hours) * dt
    for (g, t) in index.keys["G"]:
        c[col("G", (g, t))] = spec.grid.generators[g].C_g
        ub[col("G", (g, t))] = spec.grid.generators[g].capacity * dt
    for key in index.keys["T"]:
        c[col("T", key)] = spec.grid.links[key].C_t
        ub[col("T", key)] = spec.grid.links[key].capacity * dt

    pb = ProgramBuilder(index.size)

    for vc in VEHICLE_CLASSES:
        for d, t, r in itertools.product(dims.bins(vc), hours, regions):
            pb.add_row("demand_allocation", (vc, d, t, r),
                       [(col(fam("D", vc), (b, d, t, r)), 1.0) for b in dims.batteries(vc)],
                       EQ, spec.demand.trips(vc, d, t, r))

    for vc in VEHICLE_CLASSES:
        for b, r in itertools.product(dims.batteries(vc), regions):
            for t in hours:
                terms = [(col(fam("P", vc), (b, s, lv, r)), 1.0) for s in hours if s <= t for lv in dims.chargers(vc)]
                terms += [(col(fam("E", vc), (b, d, s, r)), -1.0) for s in hours if s <= t - 1 for d in dims.bins(vc)]
                pb.add_row("charging_upper", (vc, b, t, r), terms, LE, 0.0)
    for vc in VEHICLE_CLASSES:
        for b, r in itertools.product(dims.batteries(vc), regions):
            B = spec.fleet.rows[(vc, b, r)].B
            for t in hours:
                terms = [(col(fam("P", vc), (b, s, lv, r)), 1.0) for s in hours if s <= t - 1 for lv in dims.chargers(vc)]
                terms += [(col(fam("E", vc), (b, d, s, r)), -1.0) for s in hours if s <= t for d in dims.bins(vc)]
                terms.append((col(fam("Vstar", vc), (b, r)), B))
                pb.add_row("charging_lower", (vc, b, t, r), terms, GE, 0.0)
    for vc in VEHICLE_CLASSES:
        for b, lv, r in itertools.product(dims.batteries(vc), dims.chargers(vc), regions):
            pb.add_row("no_charge_at_start", (vc, b, lv, r), [(col(fam("P", vc), (b, hours[0], lv, r)), 1.0)], EQ, 0.0)
    for vc in VEHICLE_CLASSES:
        for b, r in itertools.product(dims.batteries(vc), regions):
            terms = [(col(fam("P", vc), (b, t, lv, r)), 1.0) for t in hours for lv in dims.chargers(vc)]
            terms += [(col(fam("E", vc), (b, d, t, r)), -1.0) for t in hours for d in dims.bins(vc)]
            pb.add_row("terminal_soc", (vc, b, r), terms, EQ, 0.0)
    for vc in VEHICLE_CLASSES:
        for b, t, r in itertools.product(dims.batteries(vc), hours, regions):
            terms = [(col(fam("Vm", vc), (b, d, t, r)), 1.0) for d in dims.bins(vc)]
            terms.append((col(fam("Vi", vc), (b, t, r)), 1.0))
            terms += [(col(fam("Vc", vc), (b, t, lv, r)), 1.0) for lv in dims.chargers(vc)]
            terms.append((col(fam("Vstar", vc), (b, r)), -1.0))
            pb.add_row("fleet_dispatch", (vc, b, t, r), terms, LE, 0.0)
    for vc in VEHICLE_CLASSES:
        for lv, t, r in itertools.product(dims.chargers(vc), hours, regions):
            terms = [(col(fam("Vc", vc), (b, t, lv, r)), 1.0) for b in dims.batteries(vc)]
            terms.append((col(fam("N", vc), (lv, r)), -1.0))
            pb.add_row("max_charging", (vc, lv, t, r), terms, LE, 0.0)

    for t, r in itertools.product(hours, regions):
        terms = [(col("Pmax", (r,)), 1.0)]
        for vc in VEHICLE_CLASSES:
            for b, lv in itertools.product(dims.batteries(vc), dims.chargers(vc)):
                terms.append((col(fam("P", vc), (b, t, lv, r)), -1.0 / dt))
        terms += [(col("PHpriv", (t, r)), 1.0 / dt), (col("PHhdr", (t, r)), 1.0 / dt)]
        pb.add_row("max_demand", (t, r), terms, GE, -spec.loads.row(t, r).P_private)

    for family, tag in (("PHpriv", "hpriv"), ("PHhdr", "hhdr")):
        prefix = family[1:]
        for bound, sense in (("min", GE), ("max", LE)):
            for t, r in itertools.product(hours, regions):
                pb.add_row(f"{tag}_power_{bound}", (t, r), [(col(family, (t, r)), 1.0)], sense,
                           getattr(spec.loads.row(t, r), f"P_{prefix}_{bound}") * dt)
        for bound, sense in (("min", GE), ("max", LE)):
            for r in regions:
                for t in hours:
                    pb.add_row(f"{tag}_energy_{bound}", (t, r),
                               [(col(family, (s, r)), 1.0) for s in hours if s <= t], sense,
                               getattr(spec.loads.row(t, r), f"E_{prefix}_{bound}"))

    for i, t in itertools.product(dims.grid_regions, hours):
        terms = [(col("G", (g, t)), 1.0) for g in dims.generators if spec.grid.generators[g].grid_region == i]
        for (a, s, z) in index.keys["T"]:
            if s != t:
                continue
            if z == i:
                terms.append((col("T", (a, s, z)), spec.grid.eta_trans))
            if a == i:
                terms.append((col("T", (a, s, z)), -1.0))
        fixed = spec.loads.other[(i, t)]
        for r in dims.regions_in(i):
            for vc in VEHICLE_CLASSES:
                for b, lv in itertools.product(dims.batteries(vc), dims.chargers(vc)):
                    terms.append((col(fam("P", vc), (b, t, lv, r)), -1.0))
            terms += [(col("PHpriv", (t, r)), -1.0), (col("PHhdr", (t, r)), -1.0)]
            fixed += spec.loads.row(t, r).P_private
        pb.add_row("generation", (i, t), terms, GE, fixed * dt)

    for vc in VEHICLE_CLASSES:
        for (b, d, t, r) in index.keys[fam("E", vc)]:
            row, trip, chdd, cdd, cdt = _params(spec, vc, b, d, r)
            D = col(fam("D", vc), (b, d, t, r))
            pb.add_row("def_energy", (vc, b, d, t, r),
                       [(col(fam("E", vc), (b, d, t, r)), 1.0), (D, -energy_consumed(1.0, row.eta, trip.rho, trip.sigma, chdd, cdd))],
                       EQ, 0.0)
            cell = spec.demand.cells.get((vc, d, t, r))
            per_trip = moving_vehicles(1.0, trip.rho, trip.sigma, dt, cell.nu, cdt) if cell else 0.0
            pb.add_row("def_moving", (vc, b, d, t, r),
                       [(col(fam("Vm", vc), (b, d, t, r)), 1.0), (D, -per_trip)], EQ, 0.0)
        for (b, t, lv, r) in index.keys[fam("Vc", vc)]:
            k = charging_vehicles(1.0, spec.chargers.access[(vc, b, lv, r)], spec.chargers.levels[(vc, lv)].gamma, dt)
            pb.add_row("def_charging", (vc, b, t, lv, r),
                       [(col(fam("Vc", vc), (b, t, lv, r)), 1.0), (col(fam("P", vc), (b, t, lv, r)), -k)], EQ, 0.0)

    return pb.finalize(c, lb, ub), index


def lift_point(spec: ScenarioSpec, x: np.ndarray, index: VariableIndex) -> np.ndarray:
    """Extend a substituted-program point with the energy, moving and charging columns it implies."""
    dims = spec.dims
    dt = dims.dt_hours
    out = np.zeros(index.size)
    out[: len(x)] = x
    for vc in VEHICLE_CLASSES:
        for (b, d, t, r) in index.keys[fam("E", vc)]:
            row, trip, chdd, cdd, cdt = _params(spec, vc, b, d, r)
            trips = x[index.lookup(fam("D", vc), (b, d, t, r))]
            out[index.lookup(fam("E", vc), (b, d, t, r))] = energy_consumed(trips, row.eta, trip.rho, trip.sigma, chdd, cdd)
            cell = spec.demand.cells.get((vc, d, t, r))
            out[index.lookup(fam("Vm", vc), (b, d, t, r))] = (
                moving_vehicles(trips, trip.rho, trip.sigma, dt, cell.nu, cdt) if cell else 0.0)
        for (b, t, lv, r) in index.keys[fam("Vc", vc)]:
            out[index.lookup(fam("Vc", vc), (b, t, lv, r))] = charging_vehicles(
                x[index.lookup(fam("P", vc), (b, t, lv, r))],
                spec.chargers.access[(vc, b, lv, r)], spec.chargers.levels[(vc, lv)].gamma, dt)
    return out
