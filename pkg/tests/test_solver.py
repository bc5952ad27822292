import pytest

from evmarket.exceptions import ConfigError, UnknownBackendError
from evmarket.model import build_model
from evmarket.solver import (SOLVER_ENV_VAR, HighsSolver, SolutionStatus, SolverOptions, get_solver,
                             solve)


def test_tiny_a_counters_one_slot_at_the_cap(tiny_a):
    solution = solve(build_model(tiny_a))
    assert solution.status is SolutionStatus.optimal
    assert solution.is_optimal
    assert solution.has_point
    # 5.5 kWh at 3.75 against a cost of 1.5
    assert solution.objective == pytest.approx(12.375, abs=1e-6)
    assert solution.backend == 'highs'


def test_full_protection_serves_at_bid(tiny_a_protected):
    solution = solve(build_model(tiny_a_protected))
    assert solution.objective == pytest.approx(8.25, abs=1e-6)


def test_bid_above_cap_is_rejected_under_full_protection(tiny_b):
    solution = solve(build_model(tiny_b))
    assert solution.is_optimal
    assert solution.objective == pytest.approx(0.0, abs=1e-6)


def test_convert_negates_objective_for_maximisation(tiny_a):
    model = build_model(tiny_a)
    kwargs = HighsSolver().convert(model)
    index = model.index()
    assert kwargs['c'][index['pF_0_0_0']] == pytest.approx(-5.5)
    assert kwargs['constraints'].A.shape == (len(model.constraints), len(model.variables))
    assert kwargs['options']['mip_rel_gap'] == 0.0


def test_backend_selection_from_environment(monkeypatch):
    monkeypatch.setenv(SOLVER_ENV_VAR, 'scipy')
    assert isinstance(get_solver(), HighsSolver)
    monkeypatch.setenv(SOLVER_ENV_VAR, 'gurobi')
    with pytest.raises(UnknownBackendError):
        get_solver()
    monkeypatch.delenv(SOLVER_ENV_VAR)
    assert get_solver().name == 'highs'


def test_unknown_backend_is_a_config_error():
    with pytest.raises(ConfigError):
        get_solver('cplex')


def test_options_are_checked():
    with pytest.raises(ValueError):
        SolverOptions(time_limit=0)
    with pytest.raises(ValueError):
        SolverOptions(threads=0)


def test_threads_and_seed_are_accepted(tiny_a):
    solution = solve(build_model(tiny_a), SolverOptions(threads=2, seed=5))
    assert solution.objective == pytest.approx(12.375, abs=1e-6)
