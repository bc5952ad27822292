from dataclasses import replace

import pytest

from evmarket.domain import PricingPolicy
from evmarket.exceptions import VerificationError
from evmarket.offers import ViolationReport, Violation
from evmarket.presets import PRESETS, get_preset, with_overrides
from evmarket.scenarios import (AvailabilityPattern, ScenarioOptions, ScenarioSpec, SweepSpec, generate_instance,
                                restation, run_scenario, run_spec, run_sweep, station_for_rates)


def small_spec(rates_kw=(22.0,), users=4, slots=12, gamma=0.0, seed=0, bids=(2.0, 4.0), availability=None):
    return ScenarioSpec(user_count=users, bid_range=bids, demand_bounds=(10.0, 20.0),
                        availability=availability or AvailabilityPattern(),
                        station=station_for_rates(rates_kw, slots), policy=PricingPolicy(gamma=gamma), seed=seed)


def test_baseline_bids_in_range():
    spec = get_preset('baseline-single-rate').scenario(seed=3)
    instance = generate_instance(spec)
    assert instance.num_users == 10
    assert instance.station.num_slots == 48
    assert all(2.0 <= b.bid_price <= 4.0 for b in instance.bids)
    assert all(round(b.bid_price, 2) == b.bid_price for b in instance.bids)
    assert all(b.q_min == 20.0 and b.q_max == 40.0 for b in instance.bids)


def test_split_availability_gives_narrow_window():
    spec = get_preset('heterogeneous-availability').scenario(seed=0)
    instance = generate_instance(spec)
    for bid in instance.bids[:5]:
        assert bid.acceptable_slots == tuple(range(48))
    for bid in instance.bids[5:]:
        assert bid.acceptable_slots == tuple(range(20, 28))


def test_generation_is_deterministic():
    spec = small_spec(seed=42)
    assert generate_instance(spec) == generate_instance(spec)
    assert generate_instance(spec) != generate_instance(replace(spec, seed=43))


def test_each_user_has_its_own_stream():
    few = generate_instance(small_spec(users=3, seed=5))
    many = generate_instance(small_spec(users=8, seed=5))
    assert [b.bid_price for b in few.bids] == [b.bid_price for b in many.bids[:3]]


def test_spec_checks():
    with pytest.raises(ValueError, match='low > high'):
        small_spec(bids=(4.0, 2.0))
    with pytest.raises(ValueError):
        small_spec(availability=AvailabilityPattern('split', narrow_users=2, window_slots=20))
    with pytest.raises(ValueError):
        AvailabilityPattern('sometimes')
    with pytest.raises(ValueError):
        station_for_rates([11.0])


def test_run_scenario_tiny_a(tiny_a):
    result = run_scenario(tiny_a, seed=1)
    assert result.metrics.operator_profit == pytest.approx(12.375)
    assert result.metrics.acceptance_rate == 1.0
    assert result.report.ok
    assert len(result.decisions) == 1
    assert result.metrics.seed == 1


def test_run_scenario_tiny_b(tiny_b):
    result = run_scenario(tiny_b)
    assert result.metrics.acceptance_rate == 0.0
    assert result.decisions == []
    assert result.metrics.post_response_acceptance is None


def test_run_scenario_without_responses(tiny_a):
    result = run_scenario(tiny_a, ScenarioOptions(respond=False))
    assert result.decisions is None


def test_verification_failure_aborts(tiny_a, monkeypatch):
    bad = ViolationReport((Violation('eq15', 1, 0, 0, 9.0, 3.75, 'price above cap'),))
    monkeypatch.setattr('evmarket.scenarios.verify_offer', lambda offer, instance, tolerance: bad)
    with pytest.raises(VerificationError) as err:
        run_scenario(tiny_a)
    assert err.value.report is bad


def test_profit_never_rises_with_gamma():
    for seed in range(3):
        profits = [run_spec(small_spec(gamma=g, seed=seed)).metrics.operator_profit
                   for g in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)]
        for lo, hi in zip(profits, profits[1:]):
            assert hi <= lo + 1e-4, (seed, profits)


def test_single_cell_sweep():
    spec = SweepSpec(small_spec(), gammas=(0.4,), rate_configs=((22.0,),), bid_ranges=((2.0, 4.0),), seeds=1)
    rows = run_sweep(spec, progress=False)
    assert len(rows) == 1
    row = rows[0]
    assert row.complete
    assert row.status in ('ok', 'no-service')
    assert row.metrics.seeds == 1
    assert row.metrics.operator_profit.std == 0.0


def test_sweep_rows_follow_cell_order():
    spec = SweepSpec(small_spec(users=3, slots=8), gammas=(0.2, 0.8), rate_configs=((22.0,), (50.0,)),
                     bid_ranges=((2.0, 4.0),), seeds=2)
    rows = run_sweep(spec, progress=False)
    assert [(r.cell.rates_kw, r.cell.gamma) for r in rows] == [((22.0,), 0.2), ((22.0,), 0.8),
                                                               ((50.0,), 0.2), ((50.0,), 0.8)]
    for lo, hi in ((rows[0], rows[1]), (rows[2], rows[3])):
        assert hi.metrics.operator_profit.mean <= lo.metrics.operator_profit.mean + 1e-4


def test_sweep_in_worker_processes_matches_serial():
    spec = SweepSpec(small_spec(users=3, slots=8), gammas=(0.0, 0.5), seeds=2)
    serial = run_sweep(spec, progress=False)
    parallel = run_sweep(spec, processes=2, progress=False)
    assert [r.metrics for r in serial] == [r.metrics for r in parallel]


def test_low_bids_report_no_service_instead_of_dropping_the_cell():
    # bids under the 100 kW floor of 3.75 cannot be served at bid
    spec = SweepSpec(small_spec((100.0,), users=3, slots=4), gammas=(1.0,), rate_configs=((100.0,),),
                     bid_ranges=((0.5, 2.0),), seeds=2)
    rows = run_sweep(spec, progress=False)
    assert len(rows) == 1
    assert rows[0].status == 'no-service'
    assert rows[0].metrics.acceptance_rate.mean == 0.0


def test_failed_seeds_are_recorded(monkeypatch):
    def boom(spec, options):
        raise VerificationError(ViolationReport((Violation('eq8', message='slot capacity exceeded'),)))
    monkeypatch.setattr('evmarket.scenarios.run_spec', boom)
    spec = SweepSpec(small_spec(), seeds=2)
    rows = run_sweep(spec, progress=False)
    assert rows[0].status == 'error'
    assert rows[0].metrics is None
    assert len(rows[0].errors) == 2
    assert not rows[0].complete


def test_sweep_spec_checks():
    with pytest.raises(ValueError):
        SweepSpec(small_spec(), gammas=())
    with pytest.raises(ValueError):
        SweepSpec(small_spec(), seeds=0)
    with pytest.raises(ValueError):
        SweepSpec(small_spec(), bid_ranges=((3.0, 1.0),))


def test_every_preset_builds():
    for name, preset in PRESETS.items():
        spec = preset.scenario()
        assert spec.station.num_slots == 48, name
        assert len(preset.sweep.cells()) >= 1


def test_table2_has_twelve_cells():
    assert len(get_preset('table2').sweep.cells()) == 12


def test_overrides():
    sweep = with_overrides(get_preset('heterogeneous-availability'), gammas=(0.4,), users=3, num_slots=12, seeds=2)
    spec = sweep.spec_for(sweep.cells()[0], 0)
    assert spec.user_count == 3
    assert spec.availability.narrow_users == 3
    assert spec.station.num_slots == 12
    assert spec.policy.gamma == 0.4
    assert sweep.seeds == 2


def test_rate_cells_keep_station_settings():
    station = station_for_rates([22.0], 12, charger_count=3, max_markup=1.0, slot_capacity=30.0)
    sweep = SweepSpec(replace(small_spec(), station=station), rate_configs=((22.0, 50.0),), seeds=1)
    rebuilt = sweep.spec_for(sweep.cells()[0], 0).station
    assert [r.rate_kw for r in rebuilt.rates] == [22.0, 50.0]
    assert [r.charger_count for r in rebuilt.rates] == [3, 3]
    assert [r.max_markup for r in rebuilt.rates] == [1.0, 1.0]
    assert rebuilt.slot_capacity == (30.0,) * 12
    assert restation(station, num_slots=24).slot_capacity == (30.0,) * 24


def test_default_capacity_follows_new_rates():
    station = small_spec().with_rates((22.0, 50.0)).station
    # one charger each: 5.5 + 12.5 kWh per slot
    assert station.slot_capacity == (18.0,) * 12


def test_uneven_capacity_cannot_change_horizon():
    station = station_for_rates([22.0], 2, slot_capacity=(10.0, 20.0))
    assert restation(station, (50.0,)).slot_capacity == (10.0, 20.0)
    with pytest.raises(ValueError, match='non-uniform'):
        restation(station, num_slots=4)
