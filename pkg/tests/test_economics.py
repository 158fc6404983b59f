import math
from dataclasses import replace

import numpy as np
import pytest

from borealrot.economics import (EconomicConfig, Ledger, LedgerEvent, ValueTables,
                                 build_ledger, carbon_equivalent, cycle_expectation,
                                 expectation_curve, expected_capitalization,
                                 expected_profit_rate, expected_return_rate, expected_volume,
                                 harvest_revenue, stand_value, value_trajectory)
from borealrot.errors import PreconditionError
from borealrot.growth import SPECIES, SiteDescriptor, StandState
from borealrot.schedule import Schedule, ThinningSpec, simulate_schedule, simulate_trajectory

from conftest import oracle, random_ledger


def flat_ledger(times, capital, profit, events=()):
    times = np.asarray(times, dtype=float)
    n = len(times) - 1
    cap = np.broadcast_to(np.asarray(capital, dtype=float), (n,)).copy()
    prof = np.broadcast_to(np.asarray(profit, dtype=float), (n,)).copy()
    return Ledger(times, cap, cap, prof, prof, np.zeros(n), np.zeros(n), tuple(events))


class TestExpectations:
    def test_zero_profit(self):
        assert expected_profit_rate(flat_ledger([0, 10], 5000, 0)) == 0.0

    def test_linear_profit_profile(self):
        led = Ledger(np.array([0.0, 10.0]), np.array([1.0]), np.array([1.0]),
                     np.array([0.0]), np.array([10.0]), np.zeros(1), np.zeros(1))
        assert expected_profit_rate(led) == 5.0

    def test_constant_capital(self):
        assert expected_capitalization(flat_ledger([0, 2.5, 5, 30], 5000, 0)) == 5000.0

    def test_linear_capital(self):
        led = Ledger(np.array([0.0, 40.0]), np.array([0.0]), np.array([1000.0]),
                     np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1))
        assert expected_capitalization(led) == 500.0

    def test_constant_ratio(self):
        assert expected_return_rate(flat_ledger([0, 50], 5000, 100)) == pytest.approx(0.02)

    def test_zero_profit_return(self):
        assert expected_return_rate(flat_ledger([0, 50], 5000, 0)) == 0.0

    def test_step_profile_with_harvest_drop(self):
        # capital drops at t=20 (a withdrawal), atoms counted once
        times = np.array([0.0, 20.0, 40.0])
        led = Ledger(times, np.array([1000.0, 400.0]), np.array([3000.0, 900.0]),
                     np.array([100.0, 20.0]), np.array([100.0, 20.0]), np.zeros(2), np.zeros(2),
                     (LedgerEvent(20.0, "a", "withdrawal", 2600.0),
                      LedgerEvent(40.0, "b", "amortization", -300.0)))
        assert expected_capitalization(led) == pytest.approx(
            oracle(times, [1000, 400], [3000, 900]), rel=1e-9)
        assert expected_profit_rate(led) == pytest.approx(
            oracle(times, [100, 20], [100, 20], atoms=-300.0), rel=1e-9)

    def test_randomized_oracle(self):
        rng = np.random.default_rng(20190101)
        for _ in range(200):
            led = random_ledger(rng)
            atoms = math.fsum(e.amount for e in led.events if e.is_profit)
            p = oracle(led.times, led.profit_start, led.profit_end, atoms)
            k = oracle(led.times, led.capital_start, led.capital_end)
            assert expected_profit_rate(led) == pytest.approx(p, rel=1e-9, abs=1e-9)
            assert expected_capitalization(led) == pytest.approx(k, rel=1e-9)
            r = expected_return_rate(led)
            assert r * expected_capitalization(led) == pytest.approx(
                expected_profit_rate(led), rel=1e-12, abs=1e-12)

    def test_zero_duration_rejected(self):
        with pytest.raises(PreconditionError):
            expected_profit_rate(flat_ledger([5.0, 5.0], 1, 1))

    def test_non_positive_capital_rejected(self):
        with pytest.raises(PreconditionError):
            expected_return_rate(flat_ledger([0, 10], 0.0, 1.0))


class TestValuation:
    def test_empty_stand_is_bare_land(self, growth, econ):
        empty = StandState(0.0, np.zeros((4, 12)), SiteDescriptor(26.0))
        assert stand_value(empty, growth, econ) == econ.bare_land_value

    def test_substitution(self, econ):
        vols = {"spruce": {"sawlog": 100.0, "pulp": 50.0}}
        cfg = replace(econ, bare_land_value=0.0)
        assert harvest_revenue(vols, "clearcut", cfg) == 6650.0

    def test_pulp_revenue(self, econ):
        assert harvest_revenue({"spruce": {"pulp": 10.0}}, "clearcut", econ) == 170.0
        assert harvest_revenue({"spruce": {"pulp": 0.0}}, "thinning", econ) == 0.0

    def test_harvest_type_row(self, econ):
        vols = {"spruce": {"sawlog": 1.0}}
        assert harvest_revenue(vols, "thinning", econ) == econ.price("spruce", "sawlog", "thinning")
        assert harvest_revenue(vols, "clearcut", econ) == econ.price("spruce", "sawlog", "clearcut")

    def test_unknown_keys_rejected(self, econ):
        with pytest.raises(PreconditionError):
            harvest_revenue({"oak": {"pulp": 1.0}}, "clearcut", econ)
        with pytest.raises(PreconditionError):
            harvest_revenue({"spruce": {"veneer": 1.0}}, "clearcut", econ)

    def test_price_linearity(self, stands, growth, econ):
        state = stands[0].state
        base = stand_value(state, growth, econ) - econ.bare_land_value
        doubled = stand_value(state, growth, econ.scaled(2.0)) - 2.0 * econ.bare_land_value
        assert doubled == pytest.approx(2.0 * base, rel=1e-12)

    @pytest.mark.parametrize("mode, expected", [("total", 200.0), ("stem", 100.0)])
    def test_carbon(self, econ, mode, expected):
        assert carbon_equivalent(100.0, econ, mode) == expected
        assert carbon_equivalent(0.0, econ, mode) == 0.0

    def test_config_round_trip(self, econ):
        assert EconomicConfig.from_dict(econ.to_dict()) == econ


def _schedule(state, thin_times=(), ferts=(), rotation=80.0):
    specs = tuple(ThinningSpec(t, {"spruce": 0.3, "pine": 0.3, "birch": 0.3}, 1.0)
                  for t in thin_times)
    return Schedule(rotation, specs, tuple(ferts))


class TestLedger:
    def test_regeneration_written_off_at_final_harvest(self, stands, growth, econ):
        state = stands[0].state
        sch = _schedule(state)
        led = simulate_schedule(state, sch, growth, econ).ledger
        regen = [e for e in led.events if e.kind == "regeneration_amortization"]
        assert len(regen) == 1 and regen[0].time == 80.0
        assert regen[0].amount == -econ.regeneration_cost

    def test_fertilization_written_off_at_next_thinning(self, stands, growth, econ):
        state = stands[0].state
        sch = _schedule(state, thin_times=(55.0,), ferts=(50.0,), rotation=70.0)
        led = simulate_schedule(state, sch, growth, econ).ledger
        fert = [e for e in led.events if e.kind == "fertilization_amortization"]
        assert [(e.time, e.amount) for e in fert] == [(55.0, -econ.fertilization_cost)]

    def test_fertilization_after_last_thinning_written_off_at_rotation(self, stands, growth, econ):
        state = stands[0].state
        sch = _schedule(state, thin_times=(45.0,), ferts=(50.0,), rotation=70.0)
        led = simulate_schedule(state, sch, growth, econ).ledger
        fert = [e for e in led.events if e.kind == "fertilization_amortization"]
        assert [e.time for e in fert] == [70.0]

    def test_investments_balance_write_offs(self, stands, growth, econ):
        state = stands[1].state
        sch = _schedule(state, thin_times=(45.0, 60.0), ferts=(50.0,), rotation=90.0)
        led = simulate_schedule(state, sch, growth, econ).ledger
        invest = math.fsum(e.amount for e in led.events if e.category == "investment")
        writes = math.fsum(e.amount for e in led.events if e.category == "amortization")
        assert invest == pytest.approx(-writes)

    def test_capital_at_least_bare_land(self, stands, growth, econ):
        state = stands[2].state
        sch = _schedule(state, thin_times=(45.0, 60.0), ferts=(65.0,), rotation=95.0)
        led = simulate_schedule(state, sch, growth, econ).ledger
        assert np.all(led.capital_start >= econ.bare_land_value)
        assert np.all(led.capital_end >= econ.bare_land_value)

    def test_withdrawal_neutral_at_equal_prices(self, stands, growth, econ):
        # with thinning priced like clearcut, thinning leaves no profit atom
        cfg = replace(econ, prices={"thinning": econ.prices["clearcut"],
                                    "clearcut": econ.prices["clearcut"]})
        state = stands[0].state
        sch = _schedule(state, thin_times=(45.0,), rotation=80.0)
        led = simulate_schedule(state, sch, growth, cfg).ledger
        real = [e for e in led.events if e.category == "realization"]
        assert real and all(abs(e.amount) < 1e-9 for e in real)

    def test_constant_value_zero_profit(self):
        led = flat_ledger([0, 10, 20], 3000, 0)
        assert np.all(led.profit_start == 0.0)
        assert expected_profit_rate(led) == 0.0

    def test_event_outside_cycle_rejected(self, stands, growth, econ):
        state = stands[0].state
        traj = simulate_trajectory(state, (), (), growth, 20)
        bad = Schedule(60.0, (), ())
        object.__setattr__(bad, "fertilizations", (70.0,))
        with pytest.raises(PreconditionError):
            build_ledger(traj, bad, econ, growth)

    @pytest.mark.parametrize("n_thin", [0, 1, 2])
    def test_curve_matches_ledger(self, stands, growth, econ, n_thin):
        state = stands[3].state
        times = (45.0, 57.5)[:n_thin]
        sch = _schedule(state, thin_times=times, ferts=(50.0,), rotation=85.0)
        res = simulate_schedule(state, sch, growth, econ)
        exp = cycle_expectation(res.ledger)
        point = [p for p in res.expectations() if p.tau == 85.0][0]
        assert point.expected_return_rate == pytest.approx(exp.expected_return_rate, rel=1e-12)
        assert point.expected_capitalization == pytest.approx(
            exp.expected_capitalization, rel=1e-12)
        assert point.expected_volume == pytest.approx(exp.expected_volume, rel=1e-12)

    def test_initial_age_zero(self, growth, econ):
        x = np.zeros((4, 12))
        x[0, 0] = 2000.0
        state = StandState(0.0, x, SiteDescriptor(26.0))
        res = simulate_schedule(state, Schedule(60.0), growth, econ)
        assert res.expectations()[-1].expected_return_rate == pytest.approx(
            expected_return_rate(res.ledger), rel=1e-12)


class TestHomogeneity:
    def test_scaling_leaves_return_curve(self, stands, growth, econ):
        state = stands[0].state
        sch = _schedule(state, thin_times=(45.0,), ferts=(50.0,), rotation=120.0)
        a = simulate_schedule(state, sch, growth, econ).curve
        b = simulate_schedule(state, sch, growth, econ.scaled(2.0)).curve
        np.testing.assert_allclose(b["return_rate"], a["return_rate"], rtol=1e-12, atol=0)
        np.testing.assert_allclose(b["capitalization"], 2 * a["capitalization"], rtol=1e-12)
        np.testing.assert_allclose(b["profit_rate"], 2 * a["profit_rate"], rtol=1e-12)


def test_curve_vectorization_matches_per_rotation_ledgers(stands, growth, econ):
    state = stands[4].state
    sch = _schedule(state, thin_times=(40.0, 52.5), ferts=(45.0,), rotation=100.0)
    traj = simulate_trajectory(state, sch.thinnings, sch.fertilizations, growth, 25)
    tables = ValueTables.build(growth, econ)
    curve = expectation_curve(value_trajectory(traj, tables), econ)
    for tau, r in zip(curve["tau"], curve["return_rate"]):
        if tau <= sch.last_event:
            continue
        led = build_ledger(traj, sch.with_rotation(float(tau)), econ, growth, tables)
        assert r == pytest.approx(expected_return_rate(led), rel=1e-12)
