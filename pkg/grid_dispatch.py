"""
Grid-side post-processing of a solved program.

extract_dispatch tabulates generator output, transmission flows and the
local marginal price of each grid region and hour (the multiplier of its
generation-balance row).  verify_merit_order checks that no generator runs
while cheaper capacity, local or importable over an unconstrained link,
sits idle.
"""
from __future__ import annotations

import logging
from collections import defaultdict

from lp_assembler import VariableIndex, fam
from schemas import (
    VEHICLE_CLASSES,
    DispatchResult,
    Flow,
    GeneratorDispatch,
    MeritViolation,
    RegionHour,
    ScenarioSpec,
)

logger = logging.getLogger(__name__)

CAPACITY_TOL = 1e-6
COST_TOL = 1e-12


def _at(value: float, limit: float) -> bool:
    return value >= limit - CAPACITY_TOL * (1.0 + abs(limit))


def _on(value: float, limit: float) -> bool:
    return value > CAPACITY_TOL * (1.0 + abs(limit))


def extract_dispatch(solution, index: VariableIndex, spec: ScenarioSpec) -> DispatchResult:
    dims = spec.dims
    dt = dims.dt_hours
    x = solution.x
    G = index.values(x, "G")
    T = index.values(x, "T")

    rows = {label: k for k, label in enumerate(solution.row_labels)}
    prices_available = bool(solution.duals_available) and solution.y is not None and len(solution.y) > 0

    generators: list[GeneratorDispatch] = []
    supply: dict[tuple[str, int], float] = defaultdict(float)
    for (g, t), energy in G.items():
        gen = spec.grid.generators[g]
        limit = gen.capacity * dt
        if not _on(energy, limit):
            status = "off"
        elif _at(energy, limit):
            status = "at_capacity"
        else:
            status = "marginal"
        generators.append(GeneratorDispatch(
            generator=g, grid_region=gen.grid_region, hour=t, energy=energy,
            capacity=limit, cost=energy * gen.C_g, status=status,
        ))
        supply[(gen.grid_region, t)] += energy

    flows: list[Flow] = []
    imports: dict[tuple[str, int], float] = defaultdict(float)
    exports: dict[tuple[str, int], float] = defaultdict(float)
    for (i, t, i2), energy in T.items():
        limit = spec.grid.links[(i, t, i2)].capacity * dt
        flows.append(Flow(from_region=i, to_region=i2, hour=t, energy=energy, capacity=limit, binding=_at(energy, limit)))
        exports[(i, t)] += energy
        imports[(i2, t)] += energy

    regions: list[RegionHour] = []
    for i in dims.grid_regions:
        for t in dims.hours:
            load = spec.loads.other.get((i, t), 0.0) * dt
            for r in dims.regions_in(i):
                load += spec.loads.row(t, r).P_private * dt
                load += x[index.lookup("PHpriv", (t, r))] + x[index.lookup("PHhdr", (t, r))]
                for vc in VEHICLE_CLASSES:
                    for b in dims.batteries(vc):
                        for lv in dims.chargers(vc):
                            load += x[index.lookup(fam("P", vc), (b, t, lv, r))]
            price = None
            if prices_available and ("generation", (i, t)) in rows:
                price = float(solution.y[rows[("generation", (i, t))]])
            generation = supply[(i, t)]
            balance = generation + spec.grid.eta_trans * imports[(i, t)] - exports[(i, t)] - load
            regions.append(RegionHour(
                grid_region=i, hour=t, price=price, load=float(load), generation=generation,
                imports=imports[(i, t)], exports=exports[(i, t)], balance=float(balance),
            ))

    if not prices_available:
        logger.warning("Solution carries no row duals; prices reported as unavailable")
    return DispatchResult(
        generators=tuple(generators), regions=tuple(regions), flows=tuple(flows),
        prices_available=prices_available,
    )


def verify_merit_order(result: DispatchResult, spec: ScenarioSpec) -> list[MeritViolation]:
    """Return every (region, hour) where dispatch skips cheaper available energy."""
    by_cell: dict[tuple[str, int], list[GeneratorDispatch]] = defaultdict(list)
    for gd in result.generators:
        by_cell[(gd.grid_region, gd.hour)].append(gd)
    inbound: dict[tuple[str, int], list[Flow]] = defaultdict(list)
    for flow in result.flows:
        inbound[(flow.to_region, flow.hour)].append(flow)
    eta = spec.grid.eta_trans

    def cost(gd: GeneratorDispatch) -> float:
        return spec.grid.generators[gd.generator].C_g

    def spare(gd: GeneratorDispatch) -> bool:
        return not _at(gd.energy, gd.capacity)

    violations: list[MeritViolation] = []
    for (i, t), units in sorted(by_cell.items()):
        for dispatched in units:
            if not _on(dispatched.energy, dispatched.capacity):
                continue
            for idle in units:
                if cost(idle) < cost(dispatched) - COST_TOL and spare(idle):
                    violations.append(MeritViolation(
                        grid_region=i, hour=t, dispatched=dispatched.generator, idle=idle.generator,
                        reason="cheaper local generator has spare capacity",
                    ))
            for flow in inbound[(i, t)]:
                if flow.binding:
                    continue
                c_t = spec.grid.links[(flow.from_region, t, i)].C_t
                for remote in by_cell.get((flow.from_region, t), []):
                    delivered = (cost(remote) + c_t) / eta
                    if delivered < cost(dispatched) - COST_TOL and spare(remote):
                        violations.append(MeritViolation(
                            grid_region=i, hour=t, dispatched=dispatched.generator, idle=remote.generator,
                            reason=f"cheaper import from {flow.from_region} over an unconstrained link",
                        ))
    if violations:
        logger.warning("Merit order violated in %d case(s)", len(violations))
    return violations
