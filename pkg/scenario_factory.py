#!/usr/bin/env python3
"""
Programmatic scenarios: the toy and tiny instances used by tests and the
oracle, a two-region grid instance, and the desk-scale sweep scenario.

make_scenario fills every table from compact keyword arguments; anything not
given gets a small, valid default.  Load rows are dense over (hour, region)
so a saved and reloaded scenario compares equal.

CLI (for manual testing):
    python scenario_factory.py desk --out scenarios/desk
"""
from __future__ import annotations

import argparse
import logging
from pathlib import Path

from schemas import (
    ChargerLevel,
    ChargerParams,
    Deadhead,
    DemandCell,
    DimensionSets,
    ExogenousLoads,
    FleetParams,
    FleetRow,
    Generator,
    GridParams,
    Link,
    LoadRow,
    MobilityDemand,
    ScenarioSpec,
    TripBin,
)

logger = logging.getLogger(__name__)

LDV_DEFAULTS = {
    "batteries": {"l60": dict(B=60.0, eta=0.3, beta_v=0.05, phi_v=30000.0, L_v=3650.0, phi_b=150.0, L_b=2920.0)},
    "chargers": {"l2": dict(gamma=7.0, phi_c=500.0, L_c=3650.0)},
    "bins": {"short": dict(rho=10.0, sigma=1.0)},
}
HDV_DEFAULTS = {
    "batteries": {"h300": dict(B=300.0, eta=2.0, beta_v=0.15, phi_v=150000.0, phi_om_v=20.0,
                               L_v=3650.0, phi_b=150.0, L_b=2920.0)},
    "chargers": {"dc100": dict(gamma=100.0, phi_c=800.0, L_c=3650.0)},
    "bins": {"regional": dict(rho=50.0, sigma=1.0)},
}


def make_scenario(
    *,
    name: str = "toy",
    n_hours: int = 4,
    dt_hours: float = 1.0,
    regions: dict[str, str] | None = None,
    ldv: dict | None = None,
    hdv: dict | None = None,
    demand: dict[tuple[str, str, int, str], tuple[float, float]] | None = None,
    generators: dict[str, tuple[str, float, float]] | None = None,
    other_load: float | dict[tuple[str, int], float] = 0.0,
    links: dict[tuple[str, str], tuple[float, float]] | None = None,
    demand_charge: float | dict[str, float] = 15.0,
    loads: dict[tuple[int, str], dict] | None = None,
    deadhead: dict[tuple[str, str], dict] | None = None,
    access: float = 1.0,
    eta_trans: float = 1.0,
    discount_rate: float = 0.0002,
    n_days: float | None = None,
    private_battery: str | None = None,
    private_charger: str | None = None,
) -> ScenarioSpec:
    """Build a ScenarioSpec.

    *ldv* / *hdv* take ``{"batteries": {...}, "chargers": {...}, "bins": {...}}``
    with FleetRow / ChargerLevel / TripBin keyword dicts; fleet rows are
    repeated in every region.  *demand* maps (class, bin, hour, region) to
    (trips, speed), *generators* maps name to (grid region, $/kWh, kW) and
    *links* maps (from, to) to ($/kWh, kW) for every hour.
    """
    regions = regions or {"r1": "g1"}
    grid_regions = tuple(dict.fromkeys(regions.values()))
    classes = {"ldv": {**LDV_DEFAULTS, **(ldv or {})}, "hdv": {**HDV_DEFAULTS, **(hdv or {})}}
    generators = generators or {"cheap": (grid_regions[0], 0.02, 10000.0), "peaker": (grid_regions[0], 0.30, 10000.0)}
    hours = tuple(range(n_hours))

    fleet, levels, access_map, bins, dh = {}, {}, {}, {}, {}
    for vc, tables in classes.items():
        for b, kw in tables["batteries"].items():
            for r in regions:
                fleet[(vc, b, r)] = FleetRow(**kw)
                for lv in tables["chargers"]:
                    access_map[(vc, b, lv, r)] = access
        for lv, kw in tables["chargers"].items():
            levels[(vc, lv)] = ChargerLevel(**kw)
        for d, kw in tables["bins"].items():
            bins[(vc, d)] = TripBin(**kw)
        for r in regions:
            dh[(vc, r)] = Deadhead(**(deadhead or {}).get((vc, r), {}))

    if isinstance(other_load, dict):
        other = {(i, t): other_load.get((i, t), 0.0) for i in grid_regions for t in hours}
    else:
        other = {(i, t): float(other_load) for i in grid_regions for t in hours}
    rows = {(t, r): LoadRow(**(loads or {}).get((t, r), {})) for t in hours for r in regions}

    link_map = {}
    for (i, i2), (c_t, cap) in (links or {}).items():
        for t in hours:
            link_map[(i, t, i2)] = Link(C_t=c_t, capacity=cap)
    charges = demand_charge if isinstance(demand_charge, dict) else {r: float(demand_charge) for r in regions}

    return ScenarioSpec(
        name=name,
        dims=DimensionSets(
            hours=hours,
            dt_hours=dt_hours,
            mobility_regions=tuple(regions),
            grid_regions=grid_regions,
            ldv_batteries=tuple(classes["ldv"]["batteries"]),
            hdv_batteries=tuple(classes["hdv"]["batteries"]),
            ldv_chargers=tuple(classes["ldv"]["chargers"]),
            hdv_chargers=tuple(classes["hdv"]["chargers"]),
            ldv_bins=tuple(classes["ldv"]["bins"]),
            hdv_bins=tuple(classes["hdv"]["bins"]),
            generators=tuple(generators),
            region_map=dict(regions),
        ),
        fleet=FleetParams(rows=fleet),
        chargers=ChargerParams(levels=levels, access=access_map),
        demand=MobilityDemand(
            bins=bins, deadhead=dh,
            cells={key: DemandCell(DD=dd, nu=nu) for key, (dd, nu) in (demand or {}).items()},
        ),
        loads=ExogenousLoads(rows=rows, other=other),
        grid=GridParams(
            generators={g: Generator(grid_region=i, C_g=c, capacity=cap) for g, (i, c, cap) in generators.items()},
            links=link_map,
            eta_trans=eta_trans,
            demand_charge=charges,
            discount_rate=discount_rate,
            n_days=n_days if n_days is not None else n_hours * dt_hours / 24.0,
        ),
        private_battery=private_battery,
        private_charger=private_charger,
    )


# ---------------------------------------------------------------------------
# Small instances
# ---------------------------------------------------------------------------

def zero_demand_scenario(**kw) -> ScenarioSpec:
    kw.setdefault("name", "zero_demand")
    return make_scenario(**kw)


def toy_scenario(trips: float = 2.0, **kw) -> ScenarioSpec:
    """One region, four hours, *trips* HDV trips of 50 miles in hour 1."""
    kw.setdefault("name", "toy")
    return make_scenario(demand={("hdv", "regional", 1, "r1"): (trips, 50.0)}, **kw)


def tiny_scenarios() -> dict[str, ScenarioSpec]:
    """Instances inside the oracle's limits, each stressing a different part of the model."""
    two_levels = {
        "chargers": {
            "dc100": dict(gamma=100.0, phi_c=800.0, L_c=3650.0),
            "dc40": dict(gamma=40.0, phi_c=300.0, L_c=3650.0),
        },
    }
    two_bins = {
        "bins": {"local": dict(rho=20.0, sigma=2.0), "regional": dict(rho=60.0, sigma=1.5)},
    }
    human = {
        (t, "r1"): dict(P_Hhdr_min=0.0, P_Hhdr_max=100.0, E_Hhdr_min=e, E_Hhdr_max=e, P_private=p)
        for t, (e, p) in enumerate([(0.0, 5.0), (50.0, 5.0), (100.0, 0.0), (100.0, 0.0)])
    }
    return {
        "single": toy_scenario(name="tiny_single"),
        "two_levels": make_scenario(
            name="tiny_two_levels", n_hours=3, hdv=two_levels,
            demand={("hdv", "regional", 0, "r1"): (1.0, 50.0)},
        ),
        "two_bins": make_scenario(
            name="tiny_two_bins", hdv=two_bins,
            demand={
                ("hdv", "local", 0, "r1"): (2.0, 25.0),
                ("hdv", "regional", 1, "r1"): (1.0, 45.0),
            },
        ),
        "merit": toy_scenario(
            name="tiny_merit", other_load=450.0,
            generators={"cheap": ("g1", 0.02, 500.0), "peaker": ("g1", 0.30, 5000.0)},
        ),
        "envelopes": toy_scenario(name="tiny_envelopes", trips=1.0, loads=human),
        "ldv": make_scenario(
            name="tiny_ldv", demand={("ldv", "short", 0, "r1"): (6.0, 30.0), ("ldv", "short", 1, "r1"): (4.0, 30.0)},
        ),
        "zero": zero_demand_scenario(name="tiny_zero"),
    }


def two_region_grid(link_capacity: float = 1000.0, remote_cost: float = 0.02, local_cost: float = 0.10,
                    local_load: float = 800.0) -> ScenarioSpec:
    """Two grid regions and no demand: g1 holds cheap capacity, g2 an expensive unit and the load."""
    return make_scenario(
        name="two_region_grid",
        n_hours=2,
        regions={"r1": "g1", "r2": "g2"},
        generators={"remote": ("g1", remote_cost, 5000.0), "local": ("g2", local_cost, 5000.0)},
        other_load={("g2", 0): local_load, ("g2", 1): local_load},
        links={("g1", "g2"): (0.001, link_capacity)},
        eta_trans=0.95,
    )


# ---------------------------------------------------------------------------
# Desk scenario
# ---------------------------------------------------------------------------

DESK_HOURS = 24
DESK_ACTIVE_HOURS = range(6, 17)
DESK_TRIPS = {"local": (40.0, 25.0), "regional": (15.0, 45.0), "longhaul": (4.0, 55.0)}


def _desk_other_load(night: float, day: float, evening: float, late: float) -> list[float]:
    out = []
    for t in range(DESK_HOURS):
        if t < 6:
            out.append(night)
        elif t < 17:
            out.append(day)
        elif t < 23:
            out.append(evening)
        else:
            out.append(late)
    return out


def desk_scenario() -> ScenarioSpec:
    """Two regions, one day, sharing-dominant HDV demand; the sweep scenario."""
    hdv_row = dict(eta=1.9, beta_v=0.15, phi_v=150000.0, phi_om_v=20.0, L_v=3650.0,
                   phi_b=150.0, L_b=2920.0, psi_f=1.1)
    hdv = {
        "batteries": {"h300": {**hdv_row, "B": 300.0}, "h600": {**hdv_row, "B": 600.0, "eta": 2.1}},
        "chargers": {
            "depot100": dict(gamma=100.0, phi_c=800.0, L_c=3650.0),
            "fast350": dict(gamma=350.0, phi_c=1500.0, L_c=3650.0),
        },
        "bins": {
            "local": dict(rho=20.0, sigma=2.0),
            "regional": dict(rho=60.0, sigma=1.8),
            "longhaul": dict(rho=150.0, sigma=1.5),
        },
    }
    demand = {}
    for r, scale in (("r1", 1.0), ("r2", 0.75)):
        for t in DESK_ACTIVE_HOURS:
            for d, (trips, speed) in DESK_TRIPS.items():
                demand[("hdv", d, t, r)] = (trips * scale, speed)
    other = {}
    for i, profile in (("g1", _desk_other_load(2000.0, 3500.0, 8000.0, 4000.0)),
                       ("g2", _desk_other_load(1500.0, 2500.0, 6500.0, 3000.0))):
        for t, v in enumerate(profile):
            other[(i, t)] = v
    return make_scenario(
        name="desk",
        n_hours=DESK_HOURS,
        regions={"r1": "g1", "r2": "g2"},
        hdv=hdv,
        demand=demand,
        generators={
            "hydro": ("g1", 0.02, 6000.0),
            "gas_cc": ("g2", 0.04, 8000.0),
            "peaker": ("g1", 0.30, 40000.0),
        },
        other_load=other,
        links={("g1", "g2"): (0.005, 10000.0), ("g2", "g1"): (0.005, 10000.0)},
        eta_trans=0.97,
        deadhead={("hdv", "r1"): dict(psi_chdd=1.1), ("hdv", "r2"): dict(psi_chdd=1.1)},
        demand_charge=15.0,
        discount_rate=0.0002,
        n_days=1.0,
    )


GENERATORS = {
    "toy": toy_scenario,
    "tiny": lambda: tiny_scenarios()["two_bins"],
    "desk": desk_scenario,
}


def generate(kind: str, out: str | Path) -> Path:
    from scenario_io import save_scenario

    if kind not in GENERATORS:
        raise ValueError(f"unknown scenario kind '{kind}'; choose from {sorted(GENERATORS)}")
    return save_scenario(GENERATORS[kind](), out)


def main() -> None:
    ap = argparse.ArgumentParser(description="Write a bundled scenario directory.")
    ap.add_argument("kind", choices=sorted(GENERATORS))
    ap.add_argument("--out", required=True, help="Target directory")
    args = ap.parse_args()
    print(generate(args.kind, args.out))


if __name__ == "__main__":
    main()
