"""
Scenario model tests: directory round trip, validation, private-fleet sizing
and the shared/private HDV split.

Run from the repo root:
    python -m pytest tests/ -v
"""
from __future__ import annotations

import numpy as np
import pytest

from errors import ScenarioFormatError, ScenarioValidationError
from scenario import hdv_trip_miles, plug_schedule, private_fleet_size, shaev_split, validate_scenario
from scenario_factory import desk_scenario, make_scenario, tiny_scenarios, toy_scenario
from scenario_io import load_scenario, save_scenario
from schemas import LoadRow

# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

BAD_SIGMA = {"bins": {"regional": dict(rho=50.0, sigma=0.5)}}

CROSSED_ENVELOPE = {
    (1, "r1"): dict(P_Hpriv_max=10.0, E_Hpriv_min=20.0, E_Hpriv_max=5.0),
}


def _codes(spec) -> set[str]:
    return validate_scenario(spec).codes()


# ---------------------------------------------------------------------------
# Scenario directories
# ---------------------------------------------------------------------------

class TestScenarioIO:
    def test_round_trip_toy(self, tmp_path):
        spec = toy_scenario()
        path = save_scenario(spec, tmp_path / "toy")
        assert (path / "manifest.txt").exists()
        assert load_scenario(path) == spec

    def test_round_trip_keeps_fractional_days(self, tmp_path):
        spec = toy_scenario()
        loaded = load_scenario(save_scenario(spec, tmp_path / "toy"))
        assert loaded.grid.n_days == spec.grid.n_days == pytest.approx(4 / 24)

    def test_round_trip_two_regions_with_links(self, tmp_path):
        spec = desk_scenario()
        loaded = load_scenario(save_scenario(spec, tmp_path / "desk"))
        assert loaded == spec
        assert len(loaded.grid.links) == 2 * 24

    @pytest.mark.parametrize("kept", [{(0, "r1"): LoadRow()}, {(2, "r1"): LoadRow(P_private=3.5)}, {}])
    def test_round_trip_sparse_load_rows(self, tmp_path, kept):
        base = toy_scenario()
        spec = base.model_copy(update={"loads": base.loads.model_copy(update={"rows": kept})})
        loaded = load_scenario(save_scenario(spec, tmp_path / "sparse"))
        assert loaded.loads.rows == kept
        assert loaded == spec

    def test_missing_load_rows_read_as_zero(self, tmp_path):
        base = toy_scenario()
        spec = base.model_copy(update={"loads": base.loads.model_copy(update={"rows": {}})})
        loaded = load_scenario(save_scenario(spec, tmp_path / "sparse"))
        assert loaded.loads.row(1, "r1") == LoadRow()
        assert validate_scenario(loaded).ok

    def test_missing_directory_rejected(self, tmp_path):
        with pytest.raises(ScenarioFormatError):
            load_scenario(tmp_path / "nowhere")

    def test_missing_manifest_rejected(self, tmp_path):
        path = save_scenario(toy_scenario(), tmp_path / "toy")
        (path / "manifest.txt").unlink()
        with pytest.raises(ScenarioFormatError, match="manifest"):
            load_scenario(path)

    def test_missing_table_rejected(self, tmp_path):
        path = save_scenario(toy_scenario(), tmp_path / "toy")
        (path / "fleet.csv").unlink()
        with pytest.raises(ScenarioFormatError, match="fleet.csv"):
            load_scenario(path)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

class TestValidation:
    def test_bundled_scenarios_are_valid(self):
        specs = [toy_scenario(), desk_scenario(), *tiny_scenarios().values()]
        for spec in specs:
            report = validate_scenario(spec)
            assert report.ok, (spec.name, report.issues)

    def test_sharing_factor_below_one(self):
        assert "sharing_factor" in _codes(make_scenario(hdv=BAD_SIGMA))

    def test_final_hour_demand(self):
        spec = make_scenario(demand={("hdv", "regional", 3, "r1"): (1.0, 50.0)})
        assert "terminal_step_demand" in _codes(spec)

    def test_horizon_length_must_match_days(self):
        assert "horizon_length" in _codes(make_scenario(n_hours=4, n_days=1.0))

    def test_crossed_envelope(self):
        assert "envelope_bounds" in _codes(make_scenario(loads=CROSSED_ENVELOPE))

    def test_unreachable_envelope(self):
        loads = {(0, "r1"): dict(P_Hhdr_max=5.0, E_Hhdr_min=50.0, E_Hhdr_max=50.0)}
        assert "envelope_feasibility" in _codes(make_scenario(loads=loads))

    def test_transmission_loss_out_of_range(self):
        assert "transmission_loss" in _codes(make_scenario(eta_trans=1.5))

    def test_every_issue_is_listed(self):
        spec = make_scenario(
            hdv=BAD_SIGMA, eta_trans=0.0,
            demand={("hdv", "regional", 3, "r1"): (1.0, 50.0)},
        )
        codes = _codes(spec)
        assert {"sharing_factor", "transmission_loss", "terminal_step_demand"} <= codes

    @pytest.mark.parametrize("spec", [desk_scenario(), make_scenario(hdv=BAD_SIGMA, eta_trans=1.5)],
                             ids=["valid", "invalid"])
    def test_repeatable_and_leaves_input_alone(self, spec):
        before = spec.model_dump()
        first = validate_scenario(spec)
        assert validate_scenario(spec) == first
        assert spec.model_dump() == before

    def test_negative_demand_and_speed(self):
        spec = make_scenario(demand={("hdv", "regional", 1, "r1"): (-1.0, 0.0)})
        codes = _codes(spec)
        assert "non_negative" in codes
        assert "speed" in codes


# ---------------------------------------------------------------------------
# Plug-in schedule and private fleet sizing
# ---------------------------------------------------------------------------

class TestPrivateFleet:
    def test_overnight_window_wraps_midnight(self):
        plugged = plug_schedule(24, 1.0, 18, 6)
        assert plugged.sum() == 12
        assert plugged[18] == 1.0 and plugged[5] == 1.0 and plugged[6] == 0.0

    def test_daytime_window(self):
        assert plug_schedule(4, 1.0, 0, 2).tolist() == [1.0, 1.0, 0.0, 0.0]

    def test_count_covers_peak_driving(self):
        n = private_fleet_size(
            energy=np.array([0.0, 100.0, 0.0, 0.0]), moving=np.array([0.0, 2.0, 0.0, 0.0]),
            plugged=np.ones(4), battery=300.0, power=100.0, dt=1.0,
        )
        assert n == pytest.approx(2.0)

    def test_count_covers_energy_when_driving_is_light(self):
        # 900 kWh must come back over the last three plugged hours at 100 kW per truck.
        n = private_fleet_size(
            energy=np.array([0.0, 900.0, 0.0, 0.0]), moving=np.array([0.0, 1.0, 0.0, 0.0]),
            plugged=np.ones(4), battery=300.0, power=100.0, dt=1.0,
        )
        assert n == pytest.approx(3.0)

    def test_consumption_after_last_plug_rejected(self):
        with pytest.raises(ScenarioValidationError) as exc:
            private_fleet_size(
                energy=np.array([0.0, 0.0, 10.0]), moving=np.array([0.0, 0.0, 1.0]),
                plugged=np.array([1.0, 0.0, 0.0]), battery=100.0, power=10.0, dt=1.0,
            )
        assert exc.value.report.codes() == {"private_schedule"}


# ---------------------------------------------------------------------------
# Shared / private split
# ---------------------------------------------------------------------------

class TestShaevSplit:
    def test_trip_miles_preserved(self):
        spec = toy_scenario()
        assert hdv_trip_miles(spec) == pytest.approx(100.0)
        for share in (0.0, 0.3, 0.5, 1.0):
            assert hdv_trip_miles(shaev_split(spec, share)) == pytest.approx(100.0, rel=1e-12)

    def test_full_share_keeps_demand(self):
        spec = toy_scenario()
        split = shaev_split(spec, 1.0)
        assert split.demand == spec.demand
        assert all(v == 0.0 for v in split.loads.private_fleet.values())

    def test_zero_share_moves_everything_private(self):
        split = shaev_split(toy_scenario(), 0.0, automated_share=0.5)
        assert all(cell.DD == 0.0 for (vc, *_), cell in split.demand.cells.items() if vc == "hdv")
        assert split.loads.private_fleet[("automated", "r1")] == pytest.approx(1.0)
        assert split.loads.private_fleet[("human", "r1")] == pytest.approx(1.0)

    def test_human_driven_charge_on_arrival(self):
        split = shaev_split(toy_scenario(), 0.0, automated_share=0.5)
        lows = [split.loads.row(t, "r1").E_Hhdr_min for t in range(4)]
        highs = [split.loads.row(t, "r1").E_Hhdr_max for t in range(4)]
        assert lows == pytest.approx([0.0, 100.0, 100.0, 100.0])
        assert highs == lows

    def test_automated_envelope_is_flexible(self):
        split = shaev_split(toy_scenario(), 0.0, automated_share=0.5)
        rows = [split.loads.row(t, "r1") for t in range(4)]
        assert [r.E_Hpriv_max for r in rows] == pytest.approx([0.0, 100.0, 100.0, 100.0])
        assert [r.E_Hpriv_min for r in rows] == pytest.approx([0.0, 0.0, 0.0, 100.0])
        assert all(r.P_Hpriv_min == 0.0 for r in rows)

    def test_split_scenario_validates(self):
        for share in (0.0, 0.25, 0.75):
            assert validate_scenario(shaev_split(desk_scenario(), share)).ok

    def test_split_rejects_existing_envelopes(self):
        spec = tiny_scenarios()["envelopes"]
        with pytest.raises(ScenarioValidationError) as exc:
            shaev_split(spec, 1.0)
        assert exc.value.report.codes() == {"private_envelopes_present"}
        assert exc.value.report.issues[0].location == "exogenous_loads.csv 0/r1"

    def test_split_rejects_existing_private_miles(self):
        spec = toy_scenario(loads={(0, "r1"): dict(miles_Hhdr=40.0)})
        with pytest.raises(ScenarioValidationError):
            shaev_split(spec, 0.5)

    def test_split_keeps_other_private_load(self):
        spec = toy_scenario(loads={(0, "r1"): dict(P_private=7.0)})
        split = shaev_split(spec, 1.0)
        assert split.loads.row(0, "r1").P_private == 7.0
        assert hdv_trip_miles(split) == pytest.approx(hdv_trip_miles(spec))

    @pytest.mark.parametrize("share", [-0.1, 1.5, float("nan")])
    def test_share_out_of_range(self, share):
        with pytest.raises(ValueError):
            shaev_split(toy_scenario(), share)

    def test_plug_window_missing_consumption(self):
        with pytest.raises(ScenarioValidationError):
            shaev_split(toy_scenario(), 0.0, plug_start=0, plug_end=1)
