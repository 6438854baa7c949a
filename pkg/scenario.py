"""
Scenario checks and the shared/private HDV demand split.

validate_scenario reports every violated invariant as a ValidationIssue and
never raises.  shaev_split returns a new scenario in which a fraction S of
HDV trips stays with the shared fleet and the rest becomes exogenous private
charging envelopes.
"""
from __future__ import annotations

import logging
import math

import numpy as np

from config import settings
from errors import ScenarioValidationError
from schemas import (
    ENVELOPE_PREFIX,
    PRIVATE_KINDS,
    VEHICLE_CLASSES,
    DemandCell,
    ExogenousLoads,
    LoadRow,
    MobilityDemand,
    ScenarioSpec,
    ValidationIssue,
    ValidationReport,
)

logger = logging.getLogger(__name__)

ENVELOPE_TOL = 1e-9
PRIVATE_ENVELOPE_FIELDS = tuple(f for f in LoadRow.model_fields if f != "P_private")


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

class _Collector:
    def __init__(self) -> None:
        self.issues: list[ValidationIssue] = []

    def add(self, code: str, message: str, location: str = "") -> None:
        self.issues.append(ValidationIssue(code=code, message=message, location=location))

    def check(self, ok: bool, code: str, message: str, location: str = "") -> None:
        if not ok:
            self.add(code, message, location)


def _check_sets(spec: ScenarioSpec, out: _Collector) -> None:
    dims = spec.dims
    for field in (
        "mobility_regions", "grid_regions", "ldv_batteries", "hdv_batteries",
        "ldv_chargers", "hdv_chargers", "ldv_bins", "hdv_bins", "generators",
    ):
        members = getattr(dims, field)
        out.check(len(members) > 0, "empty_set", f"dimension set '{field}' is empty", field)
        out.check(len(set(members)) == len(members), "duplicate_member", f"'{field}' repeats a member", field)
    out.check(len(dims.hours) > 0, "empty_set", "no hours", "hours")
    out.check(
        dims.hours == tuple(range(len(dims.hours))),
        "hours_contiguous", "hours must be 0..T-1 with uniform step", "hours",
    )
    expected = spec.grid.n_days * 24 / dims.dt_hours
    out.check(
        math.isclose(len(dims.hours), expected),
        "horizon_length", f"{len(dims.hours)} hours but n_days*24/dt = {expected:g}", "hours",
    )
    for r in dims.mobility_regions:
        i = dims.region_map.get(r)
        out.check(i in dims.grid_regions, "region_map", f"mobility region '{r}' maps to unknown grid region {i!r}", r)
    for r in dims.region_map:
        out.check(r in dims.mobility_regions, "region_map", f"region_map names unknown region '{r}'", r)


def _check_fleet(spec: ScenarioSpec, out: _Collector) -> None:
    dims = spec.dims
    for vc in VEHICLE_CLASSES:
        for b in dims.batteries(vc):
            for r in dims.mobility_regions:
                loc = f"{vc}/{b}/{r}"
                row = spec.fleet.rows.get((vc, b, r))
                if row is None:
                    out.add("missing_entry", "no fleet row", f"fleet.csv {loc}")
                    continue
                for name in ("B", "eta", "L_v", "L_b"):
                    out.check(getattr(row, name) > 0, "positive", f"{name} must be > 0", loc)
                for name in ("beta_v", "phi_v", "phi_om_v", "phi_b"):
                    out.check(getattr(row, name) >= 0, "non_negative", f"{name} must be >= 0", loc)
                out.check(row.psi_f >= 1 and row.psi_b >= 1, "mismatch_factor", "psi_f and psi_b must be >= 1", loc)
                for lv in dims.chargers(vc):
                    psi = spec.chargers.access.get((vc, b, lv, r))
                    if psi is None:
                        out.add("missing_entry", "no charger access factor", f"charger_access.csv {loc}/{lv}")
                    else:
                        out.check(0 < psi <= 1, "charger_deadhead", "psi_chdt must lie in (0, 1]", f"{loc}/{lv}")
        for lv in dims.chargers(vc):
            level = spec.chargers.levels.get((vc, lv))
            if level is None:
                out.add("missing_entry", "no charger level", f"chargers.csv {vc}/{lv}")
                continue
            out.check(level.gamma > 0, "positive", "gamma must be > 0", f"{vc}/{lv}")
            out.check(level.L_c > 0, "positive", "L_c must be > 0", f"{vc}/{lv}")
            out.check(level.phi_c >= 0, "non_negative", "phi_c must be >= 0", f"{vc}/{lv}")


def _check_demand(spec: ScenarioSpec, out: _Collector) -> None:
    dims = spec.dims
    last = len(dims.hours) - 1
    for vc in VEHICLE_CLASSES:
        for d in dims.bins(vc):
            trip = spec.demand.bins.get((vc, d))
            if trip is None:
                out.add("missing_entry", "no trip bin", f"trips.csv {vc}/{d}")
                continue
            out.check(trip.sigma >= 1, "sharing_factor", f"sharing factor >= 1 required, got {trip.sigma:g}", f"{vc}/{d}")
            out.check(trip.rho > 0, "positive", "trip distance must be > 0", f"{vc}/{d}")
        for r in dims.mobility_regions:
            dh = spec.demand.deadhead.get((vc, r))
            if dh is None:
                out.add("missing_entry", "no deadhead row", f"deadhead.csv {vc}/{r}")
                continue
            out.check(
                min(dh.psi_chdd, dh.psi_cdd, dh.psi_cdt) > 0,
                "positive", "deadhead corrections must be > 0", f"{vc}/{r}",
            )
    for (vc, d, t, r), cell in spec.demand.cells.items():
        loc = f"{vc}/{d}/{t}/{r}"
        out.check(
            vc in VEHICLE_CLASSES and d in dims.bins(vc) and r in dims.mobility_regions and 0 <= t <= last,
            "unknown_key", "demand cell outside the dimension sets", loc,
        )
        out.check(cell.DD >= 0, "non_negative", "demand must be >= 0", loc)
        out.check(cell.nu > 0, "speed", "speed must be > 0", loc)
        if t == last and cell.DD > 0:
            out.add(
                "terminal_step_demand",
                "demand in the final hour cannot be recharged before the terminal state of charge",
                loc,
            )


def _check_envelopes(spec: ScenarioSpec, out: _Collector) -> None:
    dims = spec.dims
    dt = dims.dt_hours
    for r in dims.mobility_regions:
        for kind, prefix in ENVELOPE_PREFIX.items():
            prev_lo = prev_hi = 0.0
            reach = 0.0
            for t in dims.hours:
                row = spec.loads.row(t, r)
                loc = f"{kind}/{t}/{r}"
                p_lo, p_hi = getattr(row, f"P_{prefix}_min"), getattr(row, f"P_{prefix}_max")
                e_lo, e_hi = getattr(row, f"E_{prefix}_min"), getattr(row, f"E_{prefix}_max")
                out.check(p_lo >= 0, "non_negative", "envelope power must be >= 0", loc)
                out.check(p_lo <= p_hi + ENVELOPE_TOL, "envelope_bounds", "power lower bound exceeds upper", loc)
                out.check(e_lo <= e_hi + ENVELOPE_TOL, "envelope_bounds", "energy lower bound exceeds upper", loc)
                out.check(
                    e_lo >= prev_lo - ENVELOPE_TOL and e_hi >= prev_hi - ENVELOPE_TOL,
                    "envelope_monotonicity", "cumulative energy bounds decrease", loc,
                )
                reach += p_hi * dt
                out.check(
                    reach >= e_lo - ENVELOPE_TOL * (1 + abs(e_lo)),
                    "envelope_feasibility", "power upper bounds cannot reach the energy lower bound", loc,
                )
                prev_lo, prev_hi = e_lo, e_hi
        for t in dims.hours:
            out.check(spec.loads.row(t, r).P_private >= 0, "non_negative", "P_private must be >= 0", f"{t}/{r}")
    for (t, r) in spec.loads.rows:
        out.check(r in dims.mobility_regions and t in dims.hours, "unknown_key", "load row outside the sets", f"{t}/{r}")


def _check_grid(spec: ScenarioSpec, out: _Collector) -> None:
    dims, grid = spec.dims, spec.grid
    out.check(0 < grid.eta_trans <= 1, "transmission_loss", "eta_trans must lie in (0, 1]", "manifest")
    out.check(grid.discount_rate >= 0, "discount_rate", "discount rate must be >= 0", "manifest")
    out.check(grid.n_days > 0, "positive", "n_days must be > 0", "manifest")
    for g in dims.generators:
        gen = grid.generators.get(g)
        if gen is None:
            out.add("missing_entry", "no generator row", f"generators.csv {g}")
            continue
        out.check(gen.grid_region in dims.grid_regions, "unknown_key", "generator in unknown grid region", g)
        out.check(gen.capacity >= 0, "capacity", "generator capacity must be >= 0", g)
    for g in grid.generators:
        out.check(g in dims.generators, "unknown_key", "generator not declared in dimensions", g)
    for (i, t, i2), link in grid.links.items():
        loc = f"{i}->{i2}@{t}"
        out.check(i != i2, "self_loop", "transmission from a region to itself", loc)
        out.check(i in dims.grid_regions and i2 in dims.grid_regions, "unknown_key", "link names unknown region", loc)
        out.check(t in dims.hours, "unknown_key", "link hour outside the horizon", loc)
        out.check(link.capacity >= 0, "capacity", "transmission capacity must be >= 0", loc)
    for i in dims.grid_regions:
        for t in dims.hours:
            if (i, t) not in spec.loads.other:
                out.add("missing_entry", "no non-mobility load", f"other_load.csv {i}/{t}")
    for r in dims.mobility_regions:
        beta = grid.demand_charge.get(r)
        if beta is None:
            out.add("missing_entry", "no demand charge", f"demand_charges.csv {r}")
        else:
            out.check(beta >= 0, "non_negative", "demand charge must be >= 0", r)


def validate_scenario(spec: ScenarioSpec) -> ValidationReport:
    """Check every scenario invariant; an empty report means the scenario is valid."""
    out = _Collector()
    _check_sets(spec, out)
    _check_fleet(spec, out)
    _check_demand(spec, out)
    _check_envelopes(spec, out)
    _check_grid(spec, out)
    report = ValidationReport(issues=tuple(out.issues))
    if report.ok:
        logger.debug("Scenario '%s' passed validation", spec.name)
    else:
        logger.info("Scenario '%s' has %d validation issue(s)", spec.name, len(report.issues))
    return report


# ---------------------------------------------------------------------------
# Trip-mile accounting
# ---------------------------------------------------------------------------

def hdv_trip_miles(spec: ScenarioSpec) -> float:
    """Total HDV trip-miles: shared demand plus private-fleet miles."""
    shared = math.fsum(
        cell.DD * spec.demand.bins[(vc, d)].rho
        for (vc, d, _t, _r), cell in spec.demand.cells.items()
        if vc == "hdv"
    )
    private = math.fsum(row.miles_Hpriv + row.miles_Hhdr for row in spec.loads.rows.values())
    return shared + private


def plug_schedule(n_hours: int, dt: float, start_hour: int, end_hour: int) -> np.ndarray:
    """1.0 for steps whose clock hour lies in the plug-in window [start, end), wrapping midnight."""
    clock = (np.arange(n_hours) * dt) % 24
    if start_hour <= end_hour:
        plugged = (clock >= start_hour) & (clock < end_hour)
    else:
        plugged = (clock >= start_hour) | (clock < end_hour)
    return plugged.astype(float)


# ---------------------------------------------------------------------------
# Private fleet sizing and envelopes
# ---------------------------------------------------------------------------

def private_fleet_size(energy: np.ndarray, moving: np.ndarray, plugged: np.ndarray,
                       battery: float, power: float, dt: float) -> float:
    """Smallest truck count that covers peak driving and replenishes *energy* on schedule.

    Trucks start full, charge only while plugged at *power* kW each, and must
    end the horizon full.  For every pair s < t the count must satisfy
    ``cum(t) - cum(s) <= n * (power*dt*(h(t)-h(s)) + battery*[t < T-1])``
    where ``h`` counts plugged steps.
    """
    cum = np.concatenate(([0.0], np.cumsum(energy)))
    h = np.concatenate(([0.0], np.cumsum(plugged)))
    n_steps = len(energy)
    need = float(moving.max()) if moving.size else 0.0
    for t in range(n_steps):
        rise = cum[t + 1] - cum[: t + 1]
        reach = power * dt * (h[t + 1] - h[: t + 1]) + (battery if t < n_steps - 1 else 0.0)
        positive = rise > ENVELOPE_TOL * (1.0 + cum[t + 1])
        if np.any(positive & (reach <= 0)):
            report = ValidationReport(issues=(ValidationIssue(
                code="private_schedule",
                message=f"private trucks consume energy after the last plugged step (step {t})",
            ),))
            raise ScenarioValidationError(report)
        if np.any(positive):
            need = max(need, float(np.max(rise[positive] / reach[positive])))
    return need


def _greedy_profile(cum: np.ndarray, limit: np.ndarray) -> np.ndarray:
    """Cumulative energy when charging as fast as possible up to what has been consumed."""
    out = np.empty_like(cum)
    level = 0.0
    for t, (c, step) in enumerate(zip(cum, limit)):
        level = min(c, level + step)
        out[t] = level
    return out


def shaev_split(
    spec: ScenarioSpec,
    S: float,
    automated_share: float | None = None,
    plug_start: int | None = None,
    plug_end: int | None = None,
) -> ScenarioSpec:
    """Route a fraction *S* of HDV trips to the shared fleet and the rest to private trucks.

    Parameters
    ----------
    spec : ScenarioSpec
        Scenario whose HDV demand table holds total truck demand.
    S : float
        Shared fraction in [0, 1].
    automated_share : float, optional
        Fraction of the private remainder driven by automated trucks
        (defaults to ``settings.private_automated_share``).
    plug_start, plug_end : int, optional
        Plug-in window for private trucks, clock hours.

    Returns
    -------
    ScenarioSpec
        New scenario with scaled HDV demand, private-HDV envelopes for the
        automated (flexible) and human-driven (charge on arrival) trucks,
        and private truck counts.  Total HDV trip-miles are unchanged.

    Raises
    ------
    ValueError
        On a fraction outside [0, 1].
    ScenarioValidationError
        When *spec* already carries private-HDV envelopes, or the plug-in
        window cannot deliver the private trucks' energy.
    """
    if not 0.0 <= S <= 1.0 or math.isnan(S):
        raise ValueError(f"shared fraction must lie in [0, 1], got {S}")
    a = settings.private_automated_share if automated_share is None else automated_share
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"automated share must lie in [0, 1], got {a}")
    start = settings.plug_start_hour if plug_start is None else plug_start
    end = settings.plug_end_hour if plug_end is None else plug_end

    dims = spec.dims
    dt = dims.dt_hours
    n_hours = dims.n_hours
    plugged = plug_schedule(n_hours, dt, start, end)
    battery = spec.reference_battery()
    charger = spec.reference_charger()
    gamma = spec.chargers.levels[("hdv", charger)].gamma
    shares = {"automated": a * (1.0 - S), "human": (1.0 - a) * (1.0 - S)}

    existing = sorted(
        key for key, row in spec.loads.rows.items()
        if any(getattr(row, f) for f in PRIVATE_ENVELOPE_FIELDS)
    )
    if existing:
        t, r = existing[0]
        raise ScenarioValidationError(ValidationReport(issues=(ValidationIssue(
            code="private_envelopes_present",
            message=f"scenario already carries private HDV envelopes in {len(existing)} row(s); "
                    "the split derives them from HDV demand",
            location=f"exogenous_loads.csv {t}/{r}",
        ),)))

    cells = {
        key: (DemandCell(DD=cell.DD * S, nu=cell.nu) if key[0] == "hdv" else cell)
        for key, cell in spec.demand.cells.items()
    }

    rows: dict[tuple[int, str], dict[str, float]] = {
        key: {**row.model_dump(), **{f: 0.0 for f in LoadRow.model_fields if f != "P_private"}}
        for key, row in spec.loads.rows.items()
    }
    private_fleet: dict[tuple[str, str], float] = {
        key: v for key, v in spec.loads.private_fleet.items() if key[0] not in PRIVATE_KINDS
    }

    for r in dims.mobility_regions:
        fleet = spec.fleet.rows[("hdv", battery, r)]
        psi_chdd = spec.demand.deadhead[("hdv", r)].psi_chdd
        miles = np.zeros(n_hours)
        moving = np.zeros(n_hours)
        for (vc, d, t, rr), cell in spec.demand.cells.items():
            if vc != "hdv" or rr != r:
                continue
            rho = spec.demand.bins[(vc, d)].rho
            miles[t] += cell.DD * rho
            moving[t] += cell.DD * rho / (dt * cell.nu)

        for kind in PRIVATE_KINDS:
            prefix = ENVELOPE_PREFIX[kind]
            share = shares[kind]
            # Private trucks carry one trip per vehicle-trip.
            energy = share * miles * psi_chdd * fleet.eta
            count = private_fleet_size(energy, share * moving, plugged, fleet.B, gamma, dt) if share > 0 else 0.0
            private_fleet[(kind, r)] = count
            cum = np.cumsum(energy)
            p_max = gamma * count * plugged
            if kind == "automated":
                e_hi = cum.copy()
                e_lo = np.maximum(0.0, cum - fleet.B * count)
                if n_hours:
                    e_lo[-1] = cum[-1]
                p_lo = np.zeros(n_hours)
            else:
                e_lo = _greedy_profile(cum, p_max * dt)
                if n_hours:
                    e_lo[-1] = cum[-1]
                e_hi = e_lo.copy()
                p_lo = np.zeros(n_hours)
            for t in dims.hours:
                row = rows.setdefault((t, r), LoadRow().model_dump())
                row[f"P_{prefix}_min"] = float(p_lo[t])
                row[f"P_{prefix}_max"] = float(p_max[t])
                row[f"E_{prefix}_min"] = float(e_lo[t])
                row[f"E_{prefix}_max"] = float(e_hi[t])
                row[f"miles_{prefix}"] = float(share * miles[t])

    new_loads = ExogenousLoads(
        rows={key: LoadRow(**vals) for key, vals in rows.items()},
        other=spec.loads.other,
        private_fleet=private_fleet,
    )
    new_demand = MobilityDemand(bins=spec.demand.bins, deadhead=spec.demand.deadhead, cells=cells)
    logger.info(
        "Split '%s' at S=%.3f: %.1f private automated, %.1f private human-driven trucks",
        spec.name, S,
        sum(v for (k, _), v in private_fleet.items() if k == "automated"),
        sum(v for (k, _), v in private_fleet.items() if k == "human"),
    )
    return spec.model_copy(update={"demand": new_demand, "loads": new_loads})
