"""
Grid dispatch tests: merit order on one bus, congested and uncongested
transmission, price extraction and the merit-order check itself.
"""
from __future__ import annotations

import dataclasses

import pytest

from grid_dispatch import extract_dispatch, verify_merit_order
from scenario_factory import two_region_grid, zero_demand_scenario
from schemas import DispatchResult, Flow, GeneratorDispatch
from tests.conftest import solve_spec

# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

CHEAP_AND_DEAR = {"cheap": ("g1", 0.02, 100.0), "dear": ("g1", 0.05, 1000.0)}


def one_bus(other_load: float):
    solved = solve_spec(zero_demand_scenario(generators=CHEAP_AND_DEAR, other_load=other_load, n_hours=2))
    assert solved.solution.optimal
    return solved, extract_dispatch(solved.solution, solved.index, solved.spec)


def unit(result: DispatchResult, generator: str, hour: int = 0) -> GeneratorDispatch:
    return next(gd for gd in result.generators if gd.generator == generator and gd.hour == hour)


def price(result: DispatchResult, region: str, hour: int = 0) -> float | None:
    return next(rh.price for rh in result.regions if rh.grid_region == region and rh.hour == hour)


# ---------------------------------------------------------------------------
# Single bus
# ---------------------------------------------------------------------------

class TestSingleBus:
    def test_cheap_unit_covers_light_load(self):
        _, result = one_bus(50.0)
        assert unit(result, "cheap").energy == pytest.approx(50.0, rel=1e-8)
        assert unit(result, "cheap").status == "marginal"
        assert unit(result, "dear").status == "off"
        assert price(result, "g1") == pytest.approx(0.02, rel=1e-6)

    def test_dear_unit_sets_price_once_cheap_is_full(self):
        _, result = one_bus(110.0)
        assert unit(result, "cheap").status == "at_capacity"
        assert unit(result, "dear").energy == pytest.approx(10.0, rel=1e-6)
        assert unit(result, "dear").status == "marginal"
        assert price(result, "g1") == pytest.approx(0.05, rel=1e-6)

    @pytest.mark.parametrize("load", [50.0, 110.0])
    def test_merit_order_holds(self, load):
        solved, result = one_bus(load)
        assert verify_merit_order(result, solved.spec) == []

    def test_balance_closes(self):
        _, result = one_bus(110.0)
        for rh in result.regions:
            assert rh.load == pytest.approx(110.0)
            assert rh.balance == pytest.approx(0.0, abs=1e-6)

    def test_fleet_charging_counts_as_load(self, toy):
        solved = solve_spec(toy)
        result = extract_dispatch(solved.solution, solved.index, toy)
        loads = [rh.load for rh in sorted(result.regions, key=lambda rh: rh.hour)]
        assert loads == pytest.approx([0.0, 0.0, 100.0, 100.0], abs=1e-6)
        assert price(result, "g1", 2) == pytest.approx(0.02, rel=1e-6)


# ---------------------------------------------------------------------------
# Two regions
# ---------------------------------------------------------------------------

class TestTransmission:
    def test_uncongested_link_imports_everything(self):
        solved = solve_spec(two_region_grid(link_capacity=1000.0))
        result = extract_dispatch(solved.solution, solved.index, solved.spec)
        flow = next(f for f in result.flows if f.hour == 0)
        assert flow.energy == pytest.approx(800.0 / 0.95, rel=1e-6)
        assert not flow.binding
        assert unit(result, "local").status == "off"
        assert price(result, "g1") == pytest.approx(0.02, rel=1e-6)
        assert price(result, "g2") == pytest.approx(0.021 / 0.95, rel=1e-6)
        assert verify_merit_order(result, solved.spec) == []

    def test_congested_link_separates_prices(self):
        solved = solve_spec(two_region_grid(link_capacity=100.0))
        result = extract_dispatch(solved.solution, solved.index, solved.spec)
        flow = next(f for f in result.flows if f.hour == 0)
        assert flow.binding
        assert flow.energy == pytest.approx(100.0, rel=1e-8)
        assert unit(result, "local").energy == pytest.approx(800.0 - 95.0, rel=1e-6)
        assert price(result, "g2") == pytest.approx(0.10, rel=1e-6)
        assert price(result, "g1") == pytest.approx(0.02, rel=1e-6)
        assert verify_merit_order(result, solved.spec) == []

    def test_losses_show_in_balance(self):
        solved = solve_spec(two_region_grid(link_capacity=100.0))
        result = extract_dispatch(solved.solution, solved.index, solved.spec)
        g2 = next(rh for rh in result.regions if rh.grid_region == "g2" and rh.hour == 1)
        assert g2.imports == pytest.approx(100.0, rel=1e-8)
        assert g2.generation + 0.95 * g2.imports == pytest.approx(g2.load, rel=1e-8)


# ---------------------------------------------------------------------------
# Prices and the merit-order check
# ---------------------------------------------------------------------------

class TestPrices:
    def test_missing_duals_give_no_prices(self):
        solved, _ = one_bus(50.0)
        blind = dataclasses.replace(solved.solution, duals_available=False)
        result = extract_dispatch(blind, solved.index, solved.spec)
        assert not result.prices_available
        assert all(rh.price is None for rh in result.regions)
        assert unit(result, "cheap").energy == pytest.approx(50.0, rel=1e-8)


class TestMeritOrderCheck:
    def test_idle_cheap_local_unit_flagged(self):
        spec = zero_demand_scenario(generators=CHEAP_AND_DEAR, n_hours=2)
        result = DispatchResult(generators=(
            GeneratorDispatch(generator="cheap", grid_region="g1", hour=0, energy=0.0,
                              capacity=100.0, cost=0.0, status="off"),
            GeneratorDispatch(generator="dear", grid_region="g1", hour=0, energy=50.0,
                              capacity=1000.0, cost=2.5, status="marginal"),
        ), regions=())
        violations = verify_merit_order(result, spec)
        assert [(v.dispatched, v.idle) for v in violations] == [("dear", "cheap")]
        assert violations[0].hour == 0

    def test_full_cheap_unit_not_flagged(self):
        spec = zero_demand_scenario(generators=CHEAP_AND_DEAR, n_hours=2)
        result = DispatchResult(generators=(
            GeneratorDispatch(generator="cheap", grid_region="g1", hour=0, energy=100.0,
                              capacity=100.0, cost=2.0, status="at_capacity"),
            GeneratorDispatch(generator="dear", grid_region="g1", hour=0, energy=10.0,
                              capacity=1000.0, cost=0.5, status="marginal"),
        ), regions=())
        assert verify_merit_order(result, spec) == []

    def _import_case(self, binding: bool) -> DispatchResult:
        return DispatchResult(
            generators=(
                GeneratorDispatch(generator="remote", grid_region="g1", hour=0, energy=0.0,
                                  capacity=5000.0, cost=0.0, status="off"),
                GeneratorDispatch(generator="local", grid_region="g2", hour=0, energy=800.0,
                                  capacity=5000.0, cost=80.0, status="marginal"),
            ),
            regions=(),
            flows=(Flow(from_region="g1", to_region="g2", hour=0, energy=100.0 if binding else 0.0,
                        capacity=100.0, binding=binding),),
        )

    def test_skipped_import_flagged(self):
        violations = verify_merit_order(self._import_case(binding=False), two_region_grid(link_capacity=100.0))
        assert len(violations) == 1
        assert violations[0].idle == "remote"
        assert "g1" in violations[0].reason

    def test_congested_import_not_flagged(self):
        assert verify_merit_order(self._import_case(binding=True), two_region_grid(link_capacity=100.0)) == []
