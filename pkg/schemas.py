"""Pydantic models for freight-gem scenarios, cost coefficients and results.

Scenario tables are dictionaries keyed by tuples of set members, using the
class labels ``"ldv"`` and ``"hdv"`` and integer hour indices ``0..T-1``.
Everything here is frozen: a scenario is built once and shared read-only.
"""
from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

VehicleClass = Literal["ldv", "hdv"]
VEHICLE_CLASSES: tuple[str, ...] = ("ldv", "hdv")
PRIVATE_KINDS: tuple[str, ...] = ("automated", "human")


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True)


# ---------------------------------------------------------------------------
# Scenario: dimension sets
# ---------------------------------------------------------------------------

class DimensionSets(_Frozen):
    hours: tuple[int, ...]
    dt_hours: float = 1.0
    mobility_regions: tuple[str, ...]
    grid_regions: tuple[str, ...]
    ldv_batteries: tuple[str, ...]
    hdv_batteries: tuple[str, ...]
    ldv_chargers: tuple[str, ...]
    hdv_chargers: tuple[str, ...]
    ldv_bins: tuple[str, ...]
    hdv_bins: tuple[str, ...]
    generators: tuple[str, ...]
    # mobility region -> grid region
    region_map: dict[str, str]

    @property
    def n_hours(self) -> int:
        return len(self.hours)

    def batteries(self, vc: str) -> tuple[str, ...]:
        return self.ldv_batteries if vc == "ldv" else self.hdv_batteries

    def chargers(self, vc: str) -> tuple[str, ...]:
        return self.ldv_chargers if vc == "ldv" else self.hdv_chargers

    def bins(self, vc: str) -> tuple[str, ...]:
        return self.ldv_bins if vc == "ldv" else self.hdv_bins

    def regions_in(self, grid_region: str) -> tuple[str, ...]:
        return tuple(r for r in self.mobility_regions if self.region_map.get(r) == grid_region)


# ---------------------------------------------------------------------------
# Scenario: fleet and chargers
# ---------------------------------------------------------------------------

class FleetRow(_Frozen):
    """Vehicle and battery parameters for one (class, battery, region)."""

    B: float
    eta: float
    beta_v: float = 0.0
    phi_v: float
    phi_om_v: float = 0.0
    L_v: float
    phi_b: float
    L_b: float
    psi_f: float = 1.0
    psi_b: float = 1.0


class FleetParams(_Frozen):
    rows: dict[tuple[str, str, str], FleetRow]


class ChargerLevel(_Frozen):
    gamma: float
    phi_c: float
    L_c: float


class ChargerParams(_Frozen):
    levels: dict[tuple[str, str], ChargerLevel]
    # (class, battery, level, region) -> charger deadhead time correction
    access: dict[tuple[str, str, str, str], float]


# ---------------------------------------------------------------------------
# Scenario: mobility demand
# ---------------------------------------------------------------------------

class TripBin(_Frozen):
    rho: float
    sigma: float = 1.0


class Deadhead(_Frozen):
    psi_chdd: float = 1.0
    psi_cdd: float = 1.0
    psi_cdt: float = 1.0


class DemandCell(_Frozen):
    DD: float
    nu: float


class MobilityDemand(_Frozen):
    bins: dict[tuple[str, str], TripBin]
    deadhead: dict[tuple[str, str], Deadhead]
    # Sparse: a missing (class, bin, hour, region) cell carries no trips.
    cells: dict[tuple[str, str, int, str], DemandCell] = Field(default_factory=dict)

    def trips(self, vc: str, d: str, t: int, r: str) -> float:
        cell = self.cells.get((vc, d, t, r))
        return cell.DD if cell is not None else 0.0


# ---------------------------------------------------------------------------
# Scenario: exogenous loads and grid
# ---------------------------------------------------------------------------

class LoadRow(_Frozen):
    """Exogenous loads and private-HDV envelopes for one (hour, region).

    Power in kW, cumulative energy in kWh counted from hour 0.
    """

    P_private: float = 0.0
    P_Hpriv_min: float = 0.0
    P_Hpriv_max: float = 0.0
    E_Hpriv_min: float = 0.0
    E_Hpriv_max: float = 0.0
    P_Hhdr_min: float = 0.0
    P_Hhdr_max: float = 0.0
    E_Hhdr_min: float = 0.0
    E_Hhdr_max: float = 0.0
    miles_Hpriv: float = 0.0
    miles_Hhdr: float = 0.0


ENVELOPE_PREFIX = {"automated": "Hpriv", "human": "Hhdr"}


class ExogenousLoads(_Frozen):
    rows: dict[tuple[int, str], LoadRow]
    # (grid region, hour) -> non-mobility demand, kW
    other: dict[tuple[str, int], float]
    # (private kind, region) -> private truck count
    private_fleet: dict[tuple[str, str], float] = Field(default_factory=dict)

    def row(self, t: int, r: str) -> LoadRow:
        return self.rows.get((t, r), _ZERO_LOAD)


_ZERO_LOAD = LoadRow()


class Generator(_Frozen):
    grid_region: str
    C_g: float
    capacity: float


class Link(_Frozen):
    C_t: float
    capacity: float


class GridParams(_Frozen):
    generators: dict[str, Generator]
    # (from grid region, hour, to grid region)
    links: dict[tuple[str, int, str], Link] = Field(default_factory=dict)
    eta_trans: float = 1.0
    # mobility region -> $/kW/month
    demand_charge: dict[str, float]
    discount_rate: float = 0.0
    # Horizon length in days; fractional for sub-day horizons.
    n_days: float = 1.0


class ScenarioSpec(_Frozen):
    name: str = "scenario"
    dims: DimensionSets
    fleet: FleetParams
    chargers: ChargerParams
    demand: MobilityDemand
    loads: ExogenousLoads
    grid: GridParams
    # Reference HDV battery/charger for private trucks; first declared if unset.
    private_battery: str | None = None
    private_charger: str | None = None

    def reference_battery(self) -> str:
        return self.private_battery or self.dims.hdv_batteries[0]

    def reference_charger(self) -> str:
        return self.private_charger or self.dims.hdv_chargers[0]


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

class ValidationIssue(_Frozen):
    code: str
    message: str
    location: str = ""


class ValidationReport(_Frozen):
    issues: tuple[ValidationIssue, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.issues

    def codes(self) -> set[str]:
        return {i.code for i in self.issues}


# ---------------------------------------------------------------------------
# Cost coefficients
# ---------------------------------------------------------------------------

class CostCoefficients(_Frozen):
    # (class, level) -> $/kW/day
    charger: dict[tuple[str, str], float]
    # (class, battery, region) -> $/vehicle/day, battery excluded
    vehicle: dict[tuple[str, str, str], float]
    # (class, battery, region) -> $/kWh/day
    battery: dict[tuple[str, str, str], float]
    # (class, battery, bin, hour, region) -> $ per moving-vehicle-hour
    maintenance: dict[tuple[str, str, str, int, str], float]
    # mobility region -> $/kW/hour
    demand_charge: dict[str, float]
    # mobility region -> $/truck/day for the private fleet and its depot charger
    private_truck: dict[str, float] = Field(default_factory=dict)
    private_charger: dict[str, float] = Field(default_factory=dict)


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------

SolveMethod = Literal["highs-ipm", "highs-ds", "mehrotra"]
SolveStatus = Literal["optimal", "infeasible", "unbounded", "iteration_limit", "numerical"]


class SolveSettings(_Frozen):
    feasibility_tol: float = Field(default=1e-8, gt=0)
    optimality_tol: float = Field(default=1e-8, gt=0)
    max_iterations: int = Field(default=20000, ge=1)
    scaling: bool = True
    method: SolveMethod = "highs-ipm"
    # Re-solve with the dual simplex when the first answer fails certification.
    fallback: bool = True
    presolve: bool = True
    # Accepted for forward compatibility; every solve starts cold.
    warm_start: bool = False


class CertificateReport(_Frozen):
    primal_residual: float
    dual_residual: float
    gap: float
    primal_objective: float
    dual_objective: float
    primal_ok: bool
    dual_ok: bool
    gap_ok: bool
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.primal_ok and self.dual_ok and self.gap_ok


class FamilyViolation(_Frozen):
    family: str
    violation: float
    rows: int


# ---------------------------------------------------------------------------
# Grid dispatch
# ---------------------------------------------------------------------------

GeneratorStatus = Literal["off", "marginal", "at_capacity"]


class GeneratorDispatch(_Frozen):
    generator: str
    grid_region: str
    hour: int
    energy: float
    capacity: float
    cost: float
    status: GeneratorStatus


class RegionHour(_Frozen):
    grid_region: str
    hour: int
    price: float | None
    load: float
    generation: float
    imports: float
    exports: float
    balance: float


class Flow(_Frozen):
    from_region: str
    to_region: str
    hour: int
    energy: float
    capacity: float
    binding: bool


class DispatchResult(_Frozen):
    generators: tuple[GeneratorDispatch, ...]
    regions: tuple[RegionHour, ...]
    flows: tuple[Flow, ...] = ()
    prices_available: bool = True


class MeritViolation(_Frozen):
    grid_region: str
    hour: int
    dispatched: str
    idle: str
    reason: str
