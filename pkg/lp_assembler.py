#!/usr/bin/env python3
"""
Sparse linear program for joint fleet, charger and grid planning.

build_program turns a validated scenario and its cost coefficients into a
SparseProgram (objective, triplet matrix, row senses, right-hand sides,
column bounds) plus the VariableIndex that names every column.  Energy,
moving vehicles and charging vehicles are affine in trips D and charging
energy P, so they are substituted into the rows rather than carried as
columns; fleet_model holds their definitions.

Units: P, P^Hpriv, P^Hhdr, G and T columns are energy per step (kWh).
Power quantities (kW) are multiplied by dt where they meet them.

CLI (for manual testing):
    python lp_assembler.py path/to/scenario --lp program.lp
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import sparse

from cost_engine import fleet_cost_per_vehicle
from errors import AssemblyError
from fleet_model import charging_per_energy, energy_per_trip, moving_per_trip
from schemas import ENVELOPE_PREFIX, VEHICLE_CLASSES, CostCoefficients, ScenarioSpec

logger = logging.getLogger(__name__)

LE, GE, EQ = "<=", ">=", "="

# Column families in column order; the "H" twin of each fleet family holds HDVs.
COLUMN_FAMILIES = (
    "D", "DH", "Vi", "ViH", "Vstar", "VstarH", "N", "NH", "P", "PH",
    "Pmax", "PHpriv", "PHhdr", "G", "T",
)

ROW_FAMILIES: dict[str, str] = {
    "demand_allocation": "trips assigned to battery types equal exogenous demand",
    "charging_upper": "cumulative charging cannot exceed energy consumed through the previous step",
    "charging_lower": "cumulative charging keeps the fleet state of charge non-negative",
    "no_charge_at_start": "no charging in the first step",
    "terminal_soc": "batteries end the horizon full",
    "fleet_dispatch": "moving, idle and charging vehicles fit in the fleet",
    "max_charging": "charging vehicles fit on the installed chargers",
    "max_demand": "billed peak covers net fleet demand each step",
    "hpriv_power_min": "private automated charging power lower bound",
    "hpriv_power_max": "private automated charging power upper bound",
    "hpriv_energy_min": "private automated cumulative energy lower bound",
    "hpriv_energy_max": "private automated cumulative energy upper bound",
    "hhdr_power_min": "private human-driven charging power lower bound",
    "hhdr_power_max": "private human-driven charging power upper bound",
    "hhdr_energy_min": "private human-driven cumulative energy lower bound",
    "hhdr_energy_max": "private human-driven cumulative energy upper bound",
    "generation": "supply plus net imports covers load in each grid region and step",
}


def fam(base: str, vc: str) -> str:
    return base if vc == "ldv" else base + "H"


# ---------------------------------------------------------------------------
# Variable index
# ---------------------------------------------------------------------------

class VariableIndex:
    """Bijection between (family, subscripts) and column positions."""

    def __init__(self) -> None:
        self.families: list[str] = []
        self.keys: dict[str, list[tuple]] = {}
        self.offsets: dict[str, int] = {}
        self._pos: dict[str, dict[tuple, int]] = {}
        self.size = 0

    def register(self, family: str, keys: Iterable[tuple]) -> None:
        if family in self._pos:
            raise ValueError(f"family '{family}' already registered")
        keys = list(keys)
        self.families.append(family)
        self.keys[family] = keys
        self.offsets[family] = self.size
        self._pos[family] = {k: self.size + j for j, k in enumerate(keys)}
        if len(self._pos[family]) != len(keys):
            raise ValueError(f"family '{family}' has duplicate subscripts")
        self.size += len(keys)

    def lookup(self, family: str, key: tuple) -> int:
        try:
            return self._pos[family][key]
        except KeyError:
            raise KeyError(f"no column {family}{key}") from None

    def slice(self, family: str) -> slice:
        start = self.offsets[family]
        return slice(start, start + len(self.keys[family]))

    def label(self, col: int) -> tuple[str, tuple]:
        for family in reversed(self.families):
            start = self.offsets[family]
            if col >= start and col - start < len(self.keys[family]):
                return family, self.keys[family][col - start]
        raise IndexError(col)

    def values(self, x: np.ndarray, family: str) -> dict[tuple, float]:
        return dict(zip(self.keys[family], x[self.slice(family)].tolist()))

    def names(self) -> list[str]:
        return [_name(f, k) for f in self.families for k in self.keys[f]]


def _name(family: str, key: tuple) -> str:
    return f"{family}({','.join(str(k) for k in key)})".replace(" ", "_")


# ---------------------------------------------------------------------------
# Sparse program
# ---------------------------------------------------------------------------

@dataclass
class SparseProgram:
    """min c.x  subject to  A x (sense) rhs,  lb <= x <= ub."""

    c: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    senses: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    row_labels: list[tuple[str, tuple]] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return len(self.rhs)

    @property
    def n_cols(self) -> int:
        return len(self.c)

    def matrix(self) -> sparse.csr_matrix:
        return sparse.csr_matrix((self.vals, (self.rows, self.cols)), shape=(self.n_rows, self.n_cols))

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x)

    def family_rows(self, family: str) -> np.ndarray:
        return np.array([i for i, (f, _) in enumerate(self.row_labels) if f == family], dtype=int)

    def with_objective(self, c: np.ndarray) -> "SparseProgram":
        return SparseProgram(
            np.asarray(c, dtype=float), self.rows, self.cols, self.vals,
            self.senses, self.rhs, self.lb, self.ub, self.row_labels,
        )

    def drop_rows(self, drop: np.ndarray) -> "SparseProgram":
        """Copy without the rows flagged in the boolean mask *drop*."""
        keep = ~np.asarray(drop, dtype=bool)
        new_id = np.cumsum(keep) - 1
        mask = keep[self.rows]
        return SparseProgram(
            self.c, new_id[self.rows[mask]], self.cols[mask], self.vals[mask],
            self.senses[keep], self.rhs[keep], self.lb, self.ub,
            [lab for lab, k in zip(self.row_labels, keep) if k],
        )


class ProgramBuilder:
    """Collects rows as triplets and finalizes them into a SparseProgram."""

    def __init__(self, n_cols: int) -> None:
        self.n_cols = n_cols
        self._rows: list[int] = []
        self._cols: list[int] = []
        self._vals: list[float] = []
        self.senses: list[str] = []
        self.rhs: list[float] = []
        self.labels: list[tuple[str, tuple]] = []

    def add_row(self, family: str, key: tuple, terms: Iterable[tuple[int, float]], sense: str, rhs: float) -> int:
        row = len(self.rhs)
        for col, val in terms:
            self._rows.append(row)
            self._cols.append(col)
            self._vals.append(val)
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        self.labels.append((family, key))
        return row

    def finalize(self, c: np.ndarray, lb: np.ndarray, ub: np.ndarray) -> SparseProgram:
        m = len(self.rhs)
        coo = sparse.coo_matrix(
            (np.asarray(self._vals, dtype=float), (np.asarray(self._rows, dtype=np.int64), np.asarray(self._cols, dtype=np.int64))),
            shape=(m, self.n_cols),
        )
        # Duplicate (row, col) pairs are summed; rows come out in row-major order.
        csr = coo.tocsr()
        csr.sum_duplicates()
        csr.eliminate_zeros()
        csr.sort_indices()
        out = csr.tocoo()
        return SparseProgram(
            c=np.asarray(c, dtype=float),
            rows=out.row.astype(np.int64),
            cols=out.col.astype(np.int64),
            vals=out.data.astype(float),
            senses=np.asarray(self.senses, dtype="<U2"),
            rhs=np.asarray(self.rhs, dtype=float),
            lb=np.asarray(lb, dtype=float),
            ub=np.asarray(ub, dtype=float),
            row_labels=self.labels,
        )


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

def build_index(spec: ScenarioSpec) -> VariableIndex:
    dims = spec.dims
    hours, regions = dims.hours, dims.mobility_regions
    index = VariableIndex()
    per_class = {
        "D": lambda vc: itertools.product(dims.batteries(vc), dims.bins(vc), hours, regions),
        "Vi": lambda vc: itertools.product(dims.batteries(vc), hours, regions),
        "Vstar": lambda vc: itertools.product(dims.batteries(vc), regions),
        "N": lambda vc: itertools.product(dims.chargers(vc), regions),
        "P": lambda vc: itertools.product(dims.batteries(vc), hours, dims.chargers(vc), regions),
    }
    for base, keys in per_class.items():
        for vc in VEHICLE_CLASSES:
            index.register(fam(base, vc), keys(vc))
    index.register("Pmax", [(r,) for r in regions])
    index.register("PHpriv", itertools.product(hours, regions))
    index.register("PHhdr", itertools.product(hours, regions))
    index.register("G", itertools.product(dims.generators, hours))
    order = {i: n for n, i in enumerate(dims.grid_regions)}
    for key in spec.grid.links:
        if key[0] not in order or key[2] not in order:
            raise AssemblyError("transmission", key)
    links = sorted(spec.grid.links, key=lambda k: (order[k[0]], k[1], order[k[2]]))
    index.register("T", links)
    return index


def build_program(spec: ScenarioSpec, coeffs: CostCoefficients) -> tuple[SparseProgram, VariableIndex]:
    """Assemble the planning program for *spec*.

    Returns
    -------
    (SparseProgram, VariableIndex)
        Rows are ordered by family then subscripts; columns follow
        COLUMN_FAMILIES.  All columns are non-negative; generator and
        transmission columns are capped at capacity * dt.

    Raises
    ------
    AssemblyError
        When a table lacks an entry some row or coefficient needs.
    """
    dims = spec.dims
    dt = dims.dt_hours
    hours, regions = dims.hours, dims.mobility_regions
    n_days = spec.grid.n_days
    index = build_index(spec)
    col = index.lookup

    energy = {
        (vc, b, d, r): energy_per_trip(spec, vc, b, d, r)
        for vc in VEHICLE_CLASSES for b in dims.batteries(vc) for d in dims.bins(vc) for r in regions
    }
    moving = {
        (vc, d, t, r): moving_per_trip(spec, vc, d, t, r)
        for vc in VEHICLE_CLASSES for d in dims.bins(vc) for t in hours for r in regions
    }
    per_kwh = {
        (vc, b, lv, r): charging_per_energy(spec, vc, b, lv, r)
        for vc in VEHICLE_CLASSES for b in dims.batteries(vc) for lv in dims.chargers(vc) for r in regions
    }

    # -- objective and bounds ------------------------------------------------
    c = np.zeros(index.size)
    lb = np.zeros(index.size)
    ub = np.full(index.size, np.inf)
    for vc in VEHICLE_CLASSES:
        for (b, d, t, r) in index.keys[fam("D", vc)]:
            rate = coeffs.maintenance.get((vc, b, d, t, r), 0.0)
            c[col(fam("D", vc), (b, d, t, r))] = rate * moving[(vc, d, t, r)] * dt
        for (b, r) in index.keys[fam("Vstar", vc)]:
            try:
                c[col(fam("Vstar", vc), (b, r))] = n_days * fleet_cost_per_vehicle(coeffs, spec, vc, b, r)
            except KeyError:
                raise AssemblyError("fleet", (vc, b, r)) from None
        for (lv, r) in index.keys[fam("N", vc)]:
            level = spec.chargers.levels.get((vc, lv))
            if level is None:
                raise AssemblyError("chargers", (vc, lv))
            c[col(fam("N", vc), (lv, r))] = n_days * level.gamma * coeffs.charger[(vc, lv)]
    horizon_hours = len(hours) * dt
    for r in regions:
        if r not in coeffs.demand_charge:
            raise AssemblyError("demand_charges", (r,))
        c[col("Pmax", (r,))] = coeffs.demand_charge[r] * horizon_hours
    for (g, t) in index.keys["G"]:
        gen = spec.grid.generators.get(g)
        if gen is None:
            raise AssemblyError("generators", (g,))
        j = col("G", (g, t))
        c[j] = gen.C_g
        ub[j] = gen.capacity * dt
    for key in index.keys["T"]:
        link = spec.grid.links[key]
        j = col("T", key)
        c[j] = link.C_t
        ub[j] = link.capacity * dt

    builder = ProgramBuilder(index.size)
    add = builder.add_row

    # -- demand allocation -----------------------------------------------------
    for vc in VEHICLE_CLASSES:
        D = fam("D", vc)
        for d, t, r in itertools.product(dims.bins(vc), hours, regions):
            add("demand_allocation", (vc, d, t, r),
                [(col(D, (b, d, t, r)), 1.0) for b in dims.batteries(vc)],
                EQ, spec.demand.trips(vc, d, t, r))

    # -- cumulative charging bounds -------------------------------------------
    def charge_terms(vc: str, b: str, t: int, r: str) -> list[tuple[int, float]]:
        return [(col(fam("P", vc), (b, t, lv, r)), 1.0) for lv in dims.chargers(vc)]

    def use_terms(vc: str, b: str, t: int, r: str, sign: float) -> list[tuple[int, float]]:
        return [(col(fam("D", vc), (b, d, t, r)), sign * energy[(vc, b, d, r)]) for d in dims.bins(vc)]

    for vc in VEHICLE_CLASSES:
        for b, r in itertools.product(dims.batteries(vc), regions):
            charged: list[tuple[int, float]] = []
            used_prev: list[tuple[int, float]] = []
            for t in hours:
                charged = charged + charge_terms(vc, b, t, r)
                add("charging_upper", (vc, b, t, r), charged + used_prev, LE, 0.0)
                used_prev = used_prev + use_terms(vc, b, t, r, -1.0)

    for vc in VEHICLE_CLASSES:
        for b, r in itertools.product(dims.batteries(vc), regions):
            B = spec.fleet.rows[(vc, b, r)].B
            vstar = (col(fam("Vstar", vc), (b, r)), B)
            charged_prev: list[tuple[int, float]] = []
            used: list[tuple[int, float]] = []
            for t in hours:
                used = used + use_terms(vc, b, t, r, -1.0)
                add("charging_lower", (vc, b, t, r), charged_prev + used + [vstar], GE, 0.0)
                charged_prev = charged_prev + charge_terms(vc, b, t, r)

    first = hours[0]
    for vc in VEHICLE_CLASSES:
        for b, lv, r in itertools.product(dims.batteries(vc), dims.chargers(vc), regions):
            add("no_charge_at_start", (vc, b, lv, r), [(col(fam("P", vc), (b, first, lv, r)), 1.0)], EQ, 0.0)

    for vc in VEHICLE_CLASSES:
        for b, r in itertools.product(dims.batteries(vc), regions):
            terms = []
            for t in hours:
                terms += charge_terms(vc, b, t, r) + use_terms(vc, b, t, r, -1.0)
            add("terminal_soc", (vc, b, r), terms, EQ, 0.0)

    # -- fleet dispatch and chargers ------------------------------------------
    for vc in VEHICLE_CLASSES:
        for b, t, r in itertools.product(dims.batteries(vc), hours, regions):
            terms = [(col(fam("D", vc), (b, d, t, r)), moving[(vc, d, t, r)])
                     for d in dims.bins(vc) if moving[(vc, d, t, r)] != 0.0]
            terms.append((col(fam("Vi", vc), (b, t, r)), 1.0))
            terms += [(col(fam("P", vc), (b, t, lv, r)), per_kwh[(vc, b, lv, r)]) for lv in dims.chargers(vc)]
            terms.append((col(fam("Vstar", vc), (b, r)), -1.0))
            add("fleet_dispatch", (vc, b, t, r), terms, LE, 0.0)

    for vc in VEHICLE_CLASSES:
        for lv, t, r in itertools.product(dims.chargers(vc), hours, regions):
            terms = [(col(fam("P", vc), (b, t, lv, r)), per_kwh[(vc, b, lv, r)]) for b in dims.batteries(vc)]
            terms.append((col(fam("N", vc), (lv, r)), -1.0))
            add("max_charging", (vc, lv, t, r), terms, LE, 0.0)

    # -- peak demand -------------------------------------------------------------
    def fleet_load_terms(t: int, r: str, scale: float) -> list[tuple[int, float]]:
        return [
            (col(fam("P", vc), (b, t, lv, r)), scale)
            for vc in VEHICLE_CLASSES for b in dims.batteries(vc) for lv in dims.chargers(vc)
        ]

    for t, r in itertools.product(hours, regions):
        terms = [(col("Pmax", (r,)), 1.0)] + fleet_load_terms(t, r, -1.0 / dt)
        terms += [(col("PHpriv", (t, r)), 1.0 / dt), (col("PHhdr", (t, r)), 1.0 / dt)]
        add("max_demand", (t, r), terms, GE, -spec.loads.row(t, r).P_private)

    # -- private HDV envelopes --------------------------------------------------
    for kind, prefix in ENVELOPE_PREFIX.items():
        family = "P" + prefix
        tag = prefix.lower()
        for bound, sense in (("min", GE), ("max", LE)):
            for t, r in itertools.product(hours, regions):
                level = getattr(spec.loads.row(t, r), f"P_{prefix}_{bound}") * dt
                add(f"{tag}_power_{bound}", (t, r), [(col(family, (t, r)), 1.0)], sense, level)
        for bound, sense in (("min", GE), ("max", LE)):
            for r in regions:
                terms: list[tuple[int, float]] = []
                for t in hours:
                    terms = terms + [(col(family, (t, r)), 1.0)]
                    level = getattr(spec.loads.row(t, r), f"E_{prefix}_{bound}")
                    add(f"{tag}_energy_{bound}", (t, r), terms, sense, level)

    # -- generation balance ------------------------------------------------------
    links_in: dict[tuple[str, int], list[int]] = {}
    links_out: dict[tuple[str, int], list[int]] = {}
    for (i, t, i2) in index.keys["T"]:
        j = col("T", (i, t, i2))
        links_out.setdefault((i, t), []).append(j)
        links_in.setdefault((i2, t), []).append(j)
    for i, t in itertools.product(dims.grid_regions, hours):
        if (i, t) not in spec.loads.other:
            raise AssemblyError("other_load", (i, t))
        terms = [(col("G", (g, t)), 1.0) for g in dims.generators if spec.grid.generators[g].grid_region == i]
        terms += [(j, spec.grid.eta_trans) for j in links_in.get((i, t), [])]
        terms += [(j, -1.0) for j in links_out.get((i, t), [])]
        private = 0.0
        for r in dims.regions_in(i):
            terms += fleet_load_terms(t, r, -1.0)
            terms += [(col("PHpriv", (t, r)), -1.0), (col("PHhdr", (t, r)), -1.0)]
            private += spec.loads.row(t, r).P_private
        add("generation", (i, t), terms, GE, (spec.loads.other[(i, t)] + private) * dt)

    program = builder.finalize(c, lb, ub)
    logger.info(
        "Assembled '%s': %d columns, %d rows, %d nonzeros",
        spec.name, program.n_cols, program.n_rows, len(program.vals),
    )
    return program, index


# ---------------------------------------------------------------------------
# Residuals
# ---------------------------------------------------------------------------

@dataclass
class ResidualTable:
    labels: list[tuple[str, tuple]]
    residual: np.ndarray
    violation: np.ndarray
    scaled: np.ndarray
    bound_violation: np.ndarray

    @property
    def max_violation(self) -> float:
        rows = float(self.violation.max()) if self.violation.size else 0.0
        cols = float(self.bound_violation.max()) if self.bound_violation.size else 0.0
        return max(rows, cols)

    def by_family(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for (family, _), v in zip(self.labels, self.violation.tolist()):
            out[family] = max(out.get(family, 0.0), v)
        out["bounds"] = float(self.bound_violation.max()) if self.bound_violation.size else 0.0
        return out

    def violated_rows(self, tol: float) -> np.ndarray:
        return np.flatnonzero(self.scaled > tol)

    def feasible(self, tol: float) -> bool:
        return not self.violated_rows(tol).size and not np.any(self.bound_violation > tol)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "family": [f for f, _ in self.labels],
            "key": [",".join(map(str, k)) for _, k in self.labels],
            "residual": self.residual,
            "violation": self.violation,
        })


def row_residuals(program: SparseProgram, point: np.ndarray) -> ResidualTable:
    """Signed residual lhs - rhs per row and the amount each row's sense is violated."""
    x = np.asarray(point, dtype=float)
    if x.shape != (program.n_cols,):
        raise ValueError(f"point has shape {x.shape}, program has {program.n_cols} columns")
    lhs = program.matrix() @ x
    residual = lhs - program.rhs
    violation = np.where(
        program.senses == LE, np.maximum(residual, 0.0),
        np.where(program.senses == GE, np.maximum(-residual, 0.0), np.abs(residual)),
    )
    with np.errstate(invalid="ignore"):
        bound = np.maximum(np.maximum(program.lb - x, x - program.ub), 0.0)
    bound = np.nan_to_num(bound, nan=0.0)
    return ResidualTable(
        labels=program.row_labels,
        residual=residual,
        violation=violation,
        scaled=violation / (1.0 + np.abs(program.rhs)),
        bound_violation=bound / (1.0 + np.abs(np.where(np.isfinite(program.ub), program.ub, 0.0))),
    )


# ---------------------------------------------------------------------------
# LP-format dump
# ---------------------------------------------------------------------------

def _expr(terms: Iterable[tuple[str, float]]) -> list[str]:
    parts = [f"{'+' if v >= 0 else '-'} {abs(v)!r} {n}" for n, v in terms]
    return [" ".join(parts[k:k + 6]) for k in range(0, len(parts), 6)] or ["0"]


def write_lp(program: SparseProgram, index: VariableIndex, path: str | Path) -> Path:
    """Write *program* in CPLEX LP text format with labelled rows and columns."""
    names = index.names()
    csr = program.matrix()
    lines = ["\\ freight-gem planning program", "Minimize"]
    obj = [(names[j], v) for j, v in enumerate(program.c.tolist()) if v != 0.0]
    lines += [" obj: " + chunk if k == 0 else "   " + chunk for k, chunk in enumerate(_expr(obj))]
    lines.append("Subject To")
    for i, (family, key) in enumerate(program.row_labels):
        start, stop = csr.indptr[i], csr.indptr[i + 1]
        terms = [(names[j], v) for j, v in zip(csr.indices[start:stop].tolist(), csr.data[start:stop].tolist())]
        chunks = _expr(terms)
        lines.append(f" {_name(family, key)}: {chunks[0]}")
        lines += ["   " + ch for ch in chunks[1:]]
        lines.append(f"   {program.senses[i]} {float(program.rhs[i])!r}")
    lines.append("Bounds")
    for j, (lo, hi) in enumerate(zip(program.lb.tolist(), program.ub.tolist())):
        if np.isinf(lo) and np.isinf(hi):
            lines.append(f" {names[j]} free")
        elif np.isfinite(hi) or lo != 0.0:
            lo_s = "-inf" if np.isinf(lo) else repr(lo)
            hi_s = "+inf" if np.isinf(hi) else repr(hi)
            lines.append(f" {lo_s} <= {names[j]} <= {hi_s}")
    lines.append("End")
    out = Path(path)
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("Wrote LP dump to %s", out)
    return out


def main() -> None:
    from cost_engine import compute_coefficients
    from scenario_io import load_scenario

    ap = argparse.ArgumentParser(description="Assemble a scenario's program and print its size.")
    ap.add_argument("scenario", help="Scenario directory")
    ap.add_argument("--lp", default=None, help="Also write the program in LP format to this path")
    args = ap.parse_args()

    spec = load_scenario(args.scenario)
    program, index = build_program(spec, compute_coefficients(spec))
    if args.lp:
        write_lp(program, index, args.lp)
    families: dict[str, int] = {}
    for f, _ in program.row_labels:
        families[f] = families.get(f, 0) + 1
    print(json.dumps({"columns": program.n_cols, "rows": program.n_rows,
                      "nonzeros": int(len(program.vals)), "row_families": families}, indent=2))


if __name__ == "__main__":
    main()
