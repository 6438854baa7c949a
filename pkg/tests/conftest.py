"""Shared fixtures: scenarios from scenario_factory and a solve-everything helper."""
from __future__ import annotations

from dataclasses import dataclass

import pytest

from cost_engine import compute_coefficients
from lp_assembler import SparseProgram, VariableIndex, build_program
from scenario_factory import desk_scenario, tiny_scenarios, toy_scenario, zero_demand_scenario
from schemas import CostCoefficients, ScenarioSpec, SolveSettings
from solver import Solution, solve


@dataclass
class Solved:
    spec: ScenarioSpec
    coeffs: CostCoefficients
    program: SparseProgram
    index: VariableIndex
    solution: Solution


def solve_spec(spec: ScenarioSpec, **settings) -> Solved:
    coeffs = compute_coefficients(spec)
    program, index = build_program(spec, coeffs)
    solution = solve(program, SolveSettings(**settings))
    return Solved(spec, coeffs, program, index, solution)


@pytest.fixture
def solved():
    return solve_spec


@pytest.fixture
def toy() -> ScenarioSpec:
    return toy_scenario()


@pytest.fixture
def zero_demand() -> ScenarioSpec:
    return zero_demand_scenario()


@pytest.fixture(scope="session")
def tiny() -> dict[str, ScenarioSpec]:
    return tiny_scenarios()


@pytest.fixture(scope="session")
def desk() -> ScenarioSpec:
    return desk_scenario()


@pytest.fixture(scope="session")
def desk_dir(tmp_path_factory):
    from scenario_io import save_scenario

    return save_scenario(desk_scenario(), tmp_path_factory.mktemp("desk") / "desk")


@pytest.fixture
def toy_dir(tmp_path):
    from scenario_io import save_scenario

    return save_scenario(toy_scenario(), tmp_path / "toy")
