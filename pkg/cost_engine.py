#!/usr/bin/env python3
"""
Amortized and operating cost coefficients.

Capital costs are turned into equivalent daily payments with the capital
recovery factor

    amortize_daily = capital * r * (1 + r)^L / ((1 + r)^L - 1)

evaluated through ``expm1``/``log1p`` so small daily rates keep full
precision; at r = 0 the analytic limit capital / L is used.

CLI (for manual testing):
    python cost_engine.py --capital 150000 --rate 0.0002 --lifetime 3650
"""
from __future__ import annotations

import argparse
import json
import logging
import math

import numpy as np

from errors import CostDomainError
from schemas import CostCoefficients, FleetRow, ScenarioSpec

logger = logging.getLogger(__name__)

DAYS_PER_MONTH = 30.5
HOURS_PER_DAY = 24.0


# ---------------------------------------------------------------------------
# Scalar formulas
# ---------------------------------------------------------------------------

def amortize_daily(capital: float, rate: float, lifetime: float) -> float:
    """Equivalent daily payment for *capital* over *lifetime* days at daily *rate*.

    Raises
    ------
    CostDomainError
        On negative capital or rate, non-positive lifetime, or a result that
        is not finite.
    """
    if capital < 0 or rate < 0 or lifetime <= 0 or not all(map(math.isfinite, (capital, rate, lifetime))):
        raise CostDomainError(f"amortize_daily({capital}, {rate}, {lifetime}) outside domain")
    if rate == 0.0:
        return capital / lifetime
    try:
        growth = math.expm1(lifetime * math.log1p(rate))  # (1+r)^L - 1
        value = capital * rate * (1.0 + growth) / growth
    except (OverflowError, ZeroDivisionError) as exc:
        raise CostDomainError(f"amortize_daily overflow for rate={rate}, lifetime={lifetime}") from exc
    if not math.isfinite(value):
        raise CostDomainError(f"amortize_daily not finite for rate={rate}, lifetime={lifetime}")
    return value


def daily_vehicle_cost(row: FleetRow, rate: float) -> float:
    """Daily vehicle cost without battery: psi_f * (phi_om + amortized capital)."""
    return row.psi_f * (row.phi_om_v + amortize_daily(row.phi_v, rate, row.L_v))


def daily_battery_cost(row: FleetRow, rate: float) -> float:
    """Daily battery cost per kWh of capacity."""
    return row.psi_b * amortize_daily(row.phi_b, rate, row.L_b)


def daily_charger_cost(phi_c: float, rate: float, lifetime: float) -> float:
    """Daily charger cost per kW of rating."""
    return amortize_daily(phi_c, rate, lifetime)


def maintenance_cost_row(vehicles_moving, speed, beta) -> float:
    """Hourly maintenance cost beta * V^m * nu, summed over the given cells."""
    vm = np.asarray(vehicles_moving, dtype=float)
    nu = np.asarray(speed, dtype=float)
    if np.any(nu <= 0):
        raise CostDomainError("speed must be positive")
    return float(np.sum(np.asarray(beta, dtype=float) * vm * nu))


def demand_charge_hourly_rate(beta: float) -> float:
    """Convert a $/kW/month demand charge into a $/kW/hour rate."""
    if beta < 0:
        raise CostDomainError(f"demand charge must be >= 0, got {beta}")
    return beta / DAYS_PER_MONTH / HOURS_PER_DAY


# ---------------------------------------------------------------------------
# Scenario-wide coefficients
# ---------------------------------------------------------------------------

def compute_coefficients(spec: ScenarioSpec) -> CostCoefficients:
    """Precompute every cost coefficient the program and the reports need."""
    dims = spec.dims
    rate = spec.grid.discount_rate

    charger = {
        key: daily_charger_cost(level.phi_c, rate, level.L_c)
        for key, level in spec.chargers.levels.items()
    }
    vehicle: dict[tuple[str, str, str], float] = {}
    battery: dict[tuple[str, str, str], float] = {}
    for key, row in spec.fleet.rows.items():
        vehicle[key] = daily_vehicle_cost(row, rate)
        battery[key] = daily_battery_cost(row, rate)

    maintenance: dict[tuple[str, str, str, int, str], float] = {}
    for (vc, d, t, r), cell in spec.demand.cells.items():
        for b in dims.batteries(vc):
            row = spec.fleet.rows.get((vc, b, r))
            if row is not None:
                maintenance[(vc, b, d, t, r)] = row.beta_v * cell.nu

    demand_charge = {r: demand_charge_hourly_rate(beta) for r, beta in spec.grid.demand_charge.items()}

    # Private trucks: reference HDV battery and one depot charger each, no mismatch factor.
    private_truck: dict[str, float] = {}
    private_charger: dict[str, float] = {}
    ref_b, ref_l = spec.reference_battery(), spec.reference_charger()
    level = spec.chargers.levels.get(("hdv", ref_l))
    for r in dims.mobility_regions:
        row = spec.fleet.rows.get(("hdv", ref_b, r))
        if row is None or level is None:
            continue
        plain = row.model_copy(update={"psi_f": 1.0, "psi_b": 1.0})
        private_truck[r] = daily_vehicle_cost(plain, rate) + daily_battery_cost(plain, rate) * row.B
        private_charger[r] = level.gamma * charger[("hdv", ref_l)]

    coeffs = CostCoefficients(
        charger=charger,
        vehicle=vehicle,
        battery=battery,
        maintenance=maintenance,
        demand_charge=demand_charge,
        private_truck=private_truck,
        private_charger=private_charger,
    )
    logger.debug(
        "Cost coefficients for '%s': %d charger levels, %d fleet rows, %d maintenance cells",
        spec.name, len(charger), len(vehicle), len(maintenance),
    )
    return coeffs


def fleet_cost_per_vehicle(coeffs: CostCoefficients, spec: ScenarioSpec, vc: str, b: str, r: str) -> float:
    """theta_v + theta_b * B for one vehicle of battery type *b* in region *r*."""
    key = (vc, b, r)
    return coeffs.vehicle[key] + coeffs.battery[key] * spec.fleet.rows[key].B


def private_fleet_cost(coeffs: CostCoefficients, spec: ScenarioSpec) -> tuple[float, float]:
    """Horizon cost of the exogenous private fleet: (trucks, depot chargers)."""
    trucks = chargers = 0.0
    for (_kind, r), count in spec.loads.private_fleet.items():
        trucks += count * coeffs.private_truck.get(r, 0.0)
        chargers += count * coeffs.private_charger.get(r, 0.0)
    n = spec.grid.n_days
    return n * trucks, n * chargers


def main() -> None:
    ap = argparse.ArgumentParser(description="Evaluate the amortized daily cost of a capital item.")
    ap.add_argument("--capital", type=float, required=True, help="Capital cost ($)")
    ap.add_argument("--rate", type=float, default=0.0, help="Daily discount rate")
    ap.add_argument("--lifetime", type=float, required=True, help="Lifetime (days)")
    ap.add_argument("--demand-charge", type=float, default=None, help="Also convert a $/kW/month charge")
    args = ap.parse_args()

    result = {"daily_cost": amortize_daily(args.capital, args.rate, args.lifetime)}
    if args.demand_charge is not None:
        result["hourly_demand_rate"] = demand_charge_hourly_rate(args.demand_charge)
    print(json.dumps(result, indent=2))


if __name__ == "__main__":
    main()
