"""Energy, moving-vehicle and charging-vehicle relations.

These are the affine definitions the program substitutes out of its columns.
The assembler uses the per-unit coefficients; the reporter and the explicit
test assembler evaluate the full relations.  LDVs carry customer deadhead
corrections, HDVs do not.
"""
from __future__ import annotations

from errors import AssemblyError
from schemas import ScenarioSpec


def energy_consumed(trips, eta, rho, sigma, psi_chdd=1.0, psi_cdd=1.0):
    """kWh consumed serving *trips* trips of length *rho* miles."""
    return trips * psi_chdd * psi_cdd * eta * rho / sigma


def moving_vehicles(trips, rho, sigma, dt, nu, psi_cdt=1.0):
    """Vehicles on the road during a step of *dt* hours."""
    return trips * rho * psi_cdt / (sigma * dt * nu)


def charging_vehicles(energy, psi_chdt, gamma, dt):
    """Vehicles plugged in to deliver *energy* kWh in one step."""
    return energy / (psi_chdt * gamma * dt)


# ---------------------------------------------------------------------------
# Per-unit coefficients
# ---------------------------------------------------------------------------

def _lookup(table: dict, name: str, key: tuple):
    try:
        return table[key]
    except KeyError:
        raise AssemblyError(name, key) from None


def energy_per_trip(spec: ScenarioSpec, vc: str, b: str, d: str, r: str) -> float:
    row = _lookup(spec.fleet.rows, "fleet", (vc, b, r))
    trip = _lookup(spec.demand.bins, "trips", (vc, d))
    dh = _lookup(spec.demand.deadhead, "deadhead", (vc, r))
    psi_cdd = dh.psi_cdd if vc == "ldv" else 1.0
    return energy_consumed(1.0, row.eta, trip.rho, trip.sigma, dh.psi_chdd, psi_cdd)


def moving_per_trip(spec: ScenarioSpec, vc: str, d: str, t: int, r: str) -> float:
    """Moving vehicles per trip; zero for a cell without demand."""
    cell = spec.demand.cells.get((vc, d, t, r))
    if cell is None:
        return 0.0
    trip = _lookup(spec.demand.bins, "trips", (vc, d))
    dh = _lookup(spec.demand.deadhead, "deadhead", (vc, r))
    psi_cdt = dh.psi_cdt if vc == "ldv" else 1.0
    return moving_vehicles(1.0, trip.rho, trip.sigma, spec.dims.dt_hours, cell.nu, psi_cdt)


def charging_per_energy(spec: ScenarioSpec, vc: str, b: str, lv: str, r: str) -> float:
    level = _lookup(spec.chargers.levels, "chargers", (vc, lv))
    psi = _lookup(spec.chargers.access, "charger_access", (vc, b, lv, r))
    return charging_vehicles(1.0, psi, level.gamma, spec.dims.dt_hours)
