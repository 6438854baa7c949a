#!/usr/bin/env python3
"""
Scenario directory reader and writer.

A scenario is a directory holding ``manifest.txt`` (KEY=value lines) and one
CSV table per parameter group.  Numbers are written with ``repr`` and read
back with ``float`` so a save/load round trip reproduces every value bit for
bit.

CLI (for manual testing):
    python scenario_io.py path/to/scenario
"""
from __future__ import annotations

import argparse
import json
import logging
from collections.abc import Callable, Iterable
from pathlib import Path

import pandas as pd
from dotenv import dotenv_values
from pydantic import ValidationError

from errors import ScenarioFormatError
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

MANIFEST = "manifest.txt"

# set name in dimensions.csv -> DimensionSets field
DIMENSION_SETS: dict[str, str] = {
    "mobility_region": "mobility_regions",
    "grid_region": "grid_regions",
    "ldv_battery": "ldv_batteries",
    "hdv_battery": "hdv_batteries",
    "ldv_charger": "ldv_chargers",
    "hdv_charger": "hdv_chargers",
    "ldv_bin": "ldv_bins",
    "hdv_bin": "hdv_bins",
    "generator": "generators",
}

FLEET_COLUMNS = ["B", "eta", "beta_v", "phi_v", "phi_om_v", "L_v", "phi_b", "L_b", "psi_f", "psi_b"]
LOAD_COLUMNS = list(LoadRow.model_fields)


# ---------------------------------------------------------------------------
# Low-level helpers
# ---------------------------------------------------------------------------

def _fmt(value: float) -> str:
    return repr(float(value))


def _read_table(directory: Path, name: str, columns: Iterable[str], required: bool = True) -> list[dict[str, str]]:
    path = directory / name
    if not path.exists():
        if required:
            raise ScenarioFormatError(f"{directory}: missing table {name}")
        return []
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, comment="#", skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise ScenarioFormatError(f"{path}: {exc}") from exc
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise ScenarioFormatError(f"{path}: missing column(s) {', '.join(missing)}")
    return [{k: str(v).strip() for k, v in rec.items()} for rec in df.to_dict("records")]


def _parse(rec: dict[str, str], column: str, table: str, cast: Callable = float, default=None):
    raw = rec.get(column, "")
    if raw == "":
        if default is not None:
            return default
        raise ScenarioFormatError(f"{table}: empty value in column '{column}' ({rec})")
    try:
        return cast(raw)
    except ValueError as exc:
        raise ScenarioFormatError(f"{table}: bad value {raw!r} in column '{column}'") from exc


def _write_table(directory: Path, name: str, columns: list[str], records: list[list[str]]) -> None:
    pd.DataFrame(records, columns=columns, dtype=str).to_csv(directory / name, index=False)


# ---------------------------------------------------------------------------
# Load
# ---------------------------------------------------------------------------

def load_scenario(path: str | Path) -> ScenarioSpec:
    """Parse a scenario directory into a ScenarioSpec.

    Raises
    ------
    ScenarioFormatError
        When the directory, a table or a value cannot be parsed.
    """
    directory = Path(path)
    if not directory.is_dir():
        raise ScenarioFormatError(f"{directory}: not a scenario directory")
    manifest_path = directory / MANIFEST
    if not manifest_path.exists():
        raise ScenarioFormatError(f"{directory}: missing {MANIFEST}")
    manifest = {k.strip().lower(): (v or "").strip() for k, v in dotenv_values(manifest_path).items()}

    n_days = _parse(manifest, "n_days", MANIFEST, float, default=1.0)
    dt = _parse(manifest, "dt_hours", MANIFEST, float, default=1.0)
    if dt <= 0 or n_days <= 0:
        raise ScenarioFormatError(f"{MANIFEST}: n_days and dt_hours must be positive")
    n_hours = n_days * 24 / dt
    if abs(n_hours - round(n_hours)) > 1e-9:
        raise ScenarioFormatError(f"{MANIFEST}: dt_hours={dt} does not divide the horizon")

    sets: dict[str, list[str]] = {field: [] for field in DIMENSION_SETS.values()}
    region_map: dict[str, str] = {}
    for rec in _read_table(directory, "dimensions.csv", ["set", "member", "grid_region"]):
        field = DIMENSION_SETS.get(rec["set"])
        if field is None:
            raise ScenarioFormatError(f"dimensions.csv: unknown set '{rec['set']}'")
        sets[field].append(rec["member"])
        if rec["set"] == "mobility_region" and rec["grid_region"]:
            region_map[rec["member"]] = rec["grid_region"]

    fleet = {
        (rec["vehicle_class"], rec["battery"], rec["region"]): FleetRow(
            **{c: _parse(rec, c, "fleet.csv") for c in FLEET_COLUMNS}
        )
        for rec in _read_table(directory, "fleet.csv", ["vehicle_class", "battery", "region", *FLEET_COLUMNS])
    }
    levels = {
        (rec["vehicle_class"], rec["level"]): ChargerLevel(
            gamma=_parse(rec, "gamma", "chargers.csv"),
            phi_c=_parse(rec, "phi_c", "chargers.csv"),
            L_c=_parse(rec, "L_c", "chargers.csv"),
        )
        for rec in _read_table(directory, "chargers.csv", ["vehicle_class", "level", "gamma", "phi_c", "L_c"])
    }
    access = {
        (rec["vehicle_class"], rec["battery"], rec["level"], rec["region"]): _parse(rec, "psi_chdt", "charger_access.csv")
        for rec in _read_table(
            directory, "charger_access.csv", ["vehicle_class", "battery", "level", "region", "psi_chdt"]
        )
    }
    bins = {
        (rec["vehicle_class"], rec["distance_bin"]): TripBin(
            rho=_parse(rec, "rho", "trips.csv"), sigma=_parse(rec, "sigma", "trips.csv")
        )
        for rec in _read_table(directory, "trips.csv", ["vehicle_class", "distance_bin", "rho", "sigma"])
    }
    deadhead = {
        (rec["vehicle_class"], rec["region"]): Deadhead(
            psi_chdd=_parse(rec, "psi_chdd", "deadhead.csv"),
            psi_cdd=_parse(rec, "psi_cdd", "deadhead.csv", default=1.0),
            psi_cdt=_parse(rec, "psi_cdt", "deadhead.csv", default=1.0),
        )
        for rec in _read_table(directory, "deadhead.csv", ["vehicle_class", "region", "psi_chdd"])
    }
    cells = {
        (rec["vehicle_class"], rec["distance_bin"], _parse(rec, "hour", "demand.csv", int), rec["region"]): DemandCell(
            DD=_parse(rec, "DD", "demand.csv"), nu=_parse(rec, "nu", "demand.csv")
        )
        for rec in _read_table(directory, "demand.csv", ["vehicle_class", "distance_bin", "hour", "region", "DD", "nu"])
    }

    # Only the rows given; ExogenousLoads.row reads missing ones as zero.
    rows: dict[tuple[int, str], LoadRow] = {}
    for rec in _read_table(directory, "exogenous_loads.csv", ["hour", "region"], required=False):
        key = (_parse(rec, "hour", "exogenous_loads.csv", int), rec["region"])
        rows[key] = LoadRow(**{c: _parse(rec, c, "exogenous_loads.csv", default=0.0) for c in LOAD_COLUMNS})
    other = {
        (rec["grid_region"], _parse(rec, "hour", "other_load.csv", int)): _parse(rec, "P_other", "other_load.csv")
        for rec in _read_table(directory, "other_load.csv", ["grid_region", "hour", "P_other"])
    }
    private_fleet = {
        (rec["kind"], rec["region"]): _parse(rec, "vehicles", "private_fleet.csv")
        for rec in _read_table(directory, "private_fleet.csv", ["kind", "region", "vehicles"], required=False)
    }

    generators = {
        rec["generator"]: Generator(
            grid_region=rec["grid_region"],
            C_g=_parse(rec, "C_g", "generators.csv"),
            capacity=_parse(rec, "capacity", "generators.csv"),
        )
        for rec in _read_table(directory, "generators.csv", ["generator", "grid_region", "C_g", "capacity"])
    }
    links: dict[tuple[str, int, str], Link] = {}
    for rec in _read_table(
        directory, "transmission.csv", ["from_region", "to_region", "hour", "C_t", "capacity"], required=False
    ):
        link = Link(C_t=_parse(rec, "C_t", "transmission.csv"), capacity=_parse(rec, "capacity", "transmission.csv"))
        hours = range(int(round(n_hours))) if rec["hour"] == "" else [_parse(rec, "hour", "transmission.csv", int)]
        for t in hours:
            links[(rec["from_region"], t, rec["to_region"])] = link
    demand_charge = {
        rec["region"]: _parse(rec, "beta_r", "demand_charges.csv")
        for rec in _read_table(directory, "demand_charges.csv", ["region", "beta_r"])
    }

    try:
        spec = ScenarioSpec(
            name=manifest.get("name") or directory.name,
            dims=DimensionSets(
                hours=tuple(range(int(round(n_hours)))),
                dt_hours=dt,
                region_map=region_map,
                **{k: tuple(v) for k, v in sets.items()},
            ),
            fleet=FleetParams(rows=fleet),
            chargers=ChargerParams(levels=levels, access=access),
            demand=MobilityDemand(bins=bins, deadhead=deadhead, cells=cells),
            loads=ExogenousLoads(rows=rows, other=other, private_fleet=private_fleet),
            grid=GridParams(
                generators=generators,
                links=links,
                eta_trans=_parse(manifest, "eta_trans", MANIFEST, float, default=1.0),
                demand_charge=demand_charge,
                discount_rate=_parse(manifest, "discount_rate", MANIFEST, float, default=0.0),
                n_days=n_days,
            ),
            private_battery=manifest.get("private_battery") or None,
            private_charger=manifest.get("private_charger") or None,
        )
    except ValidationError as exc:
        raise ScenarioFormatError(f"{directory}: {exc}") from exc

    logger.info(
        "Loaded scenario '%s': %d hours, %d mobility regions, %d demand cells",
        spec.name, spec.dims.n_hours, len(spec.dims.mobility_regions), len(cells),
    )
    return spec


# ---------------------------------------------------------------------------
# Save
# ---------------------------------------------------------------------------

def save_scenario(spec: ScenarioSpec, path: str | Path) -> Path:
    """Write *spec* as a scenario directory that ``load_scenario`` reads back unchanged."""
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    dims = spec.dims

    manifest = {
        "name": spec.name,
        "n_days": _fmt(spec.grid.n_days),
        "dt_hours": _fmt(dims.dt_hours),
        "discount_rate": _fmt(spec.grid.discount_rate),
        "eta_trans": _fmt(spec.grid.eta_trans),
    }
    if spec.private_battery:
        manifest["private_battery"] = spec.private_battery
    if spec.private_charger:
        manifest["private_charger"] = spec.private_charger
    (directory / MANIFEST).write_text("".join(f"{k}={v}\n" for k, v in manifest.items()), encoding="utf-8")

    dim_rows = []
    for set_name, field in DIMENSION_SETS.items():
        for member in getattr(dims, field):
            grid = dims.region_map.get(member, "") if set_name == "mobility_region" else ""
            dim_rows.append([set_name, member, grid])
    _write_table(directory, "dimensions.csv", ["set", "member", "grid_region"], dim_rows)

    _write_table(
        directory, "fleet.csv", ["vehicle_class", "battery", "region", *FLEET_COLUMNS],
        [[*key, *(_fmt(getattr(row, c)) for c in FLEET_COLUMNS)] for key, row in spec.fleet.rows.items()],
    )
    _write_table(
        directory, "chargers.csv", ["vehicle_class", "level", "gamma", "phi_c", "L_c"],
        [[*key, _fmt(lv.gamma), _fmt(lv.phi_c), _fmt(lv.L_c)] for key, lv in spec.chargers.levels.items()],
    )
    _write_table(
        directory, "charger_access.csv", ["vehicle_class", "battery", "level", "region", "psi_chdt"],
        [[*key, _fmt(v)] for key, v in spec.chargers.access.items()],
    )
    _write_table(
        directory, "trips.csv", ["vehicle_class", "distance_bin", "rho", "sigma"],
        [[*key, _fmt(b.rho), _fmt(b.sigma)] for key, b in spec.demand.bins.items()],
    )
    _write_table(
        directory, "deadhead.csv", ["vehicle_class", "region", "psi_chdd", "psi_cdd", "psi_cdt"],
        [[*key, _fmt(d.psi_chdd), _fmt(d.psi_cdd), _fmt(d.psi_cdt)] for key, d in spec.demand.deadhead.items()],
    )
    _write_table(
        directory, "demand.csv", ["vehicle_class", "distance_bin", "hour", "region", "DD", "nu"],
        [[vc, d, str(t), r, _fmt(c.DD), _fmt(c.nu)] for (vc, d, t, r), c in spec.demand.cells.items()],
    )
    _write_table(
        directory, "exogenous_loads.csv", ["hour", "region", *LOAD_COLUMNS],
        [[str(t), r, *(_fmt(getattr(row, c)) for c in LOAD_COLUMNS)] for (t, r), row in spec.loads.rows.items()],
    )
    _write_table(
        directory, "other_load.csv", ["grid_region", "hour", "P_other"],
        [[i, str(t), _fmt(v)] for (i, t), v in spec.loads.other.items()],
    )
    _write_table(
        directory, "private_fleet.csv", ["kind", "region", "vehicles"],
        [[k, r, _fmt(v)] for (k, r), v in spec.loads.private_fleet.items()],
    )
    _write_table(
        directory, "generators.csv", ["generator", "grid_region", "C_g", "capacity"],
        [[g, gen.grid_region, _fmt(gen.C_g), _fmt(gen.capacity)] for g, gen in spec.grid.generators.items()],
    )
    _write_table(
        directory, "transmission.csv", ["from_region", "to_region", "hour", "C_t", "capacity"],
        [[i, i2, str(t), _fmt(l.C_t), _fmt(l.capacity)] for (i, t, i2), l in spec.grid.links.items()],
    )
    _write_table(
        directory, "demand_charges.csv", ["region", "beta_r"],
        [[r, _fmt(v)] for r, v in spec.grid.demand_charge.items()],
    )
    logger.info("Wrote scenario '%s' to %s", spec.name, directory)
    return directory


def main() -> None:
    ap = argparse.ArgumentParser(description="Parse a scenario directory and print its dimensions.")
    ap.add_argument("scenario", help="Scenario directory")
    args = ap.parse_args()

    spec = load_scenario(args.scenario)
    dims = spec.dims
    summary = {
        "name": spec.name,
        "hours": dims.n_hours,
        "dt_hours": dims.dt_hours,
        "mobility_regions": list(dims.mobility_regions),
        "grid_regions": list(dims.grid_regions),
        "hdv_batteries": list(dims.hdv_batteries),
        "hdv_chargers": list(dims.hdv_chargers),
        "generators": list(dims.generators),
        "demand_cells": len(spec.demand.cells),
    }
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
