"""Randomized checks over small seeded systems."""

import numpy as np
import pytest

from models.congestion import (
    CostMatrix,
    PerfTable,
    nash_enumerate,
    payoff,
    payoff_table,
    potential,
    potential_table,
    verify_potential_identity,
)
from models.design import build_design_system, least_squares_design, solve_exact
from models.dynamics import best_response_maps, fixed_points, simulate, transition_maps
from models.fbs_model import enumerate_profiles, rank_profile, unrank_profile
from tests.conftest import random_model

SEEDS = range(200)


def _instance(seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng)
    xi = CostMatrix(rng.integers(-5, 10, size=(model.n_facilities, model.n_players)).astype(float))
    return rng, model, xi


@pytest.mark.parametrize("seed", SEEDS)
def test_profile_indexing_is_a_bijection(seed):
    _, model, _ = _instance(seed)
    indices = [rank_profile(model, p.choices) for p in enumerate_profiles(model)]
    assert indices == list(range(1, model.n_profiles + 1))
    for k in (1, model.n_profiles):
        assert unrank_profile(model, k).index == k


@pytest.mark.parametrize("seed", SEEDS)
def test_rosenthal_potential_is_exact(seed):
    _, model, xi = _instance(seed)
    table = potential_table(model, xi)
    payoffs = payoff_table(model, xi)
    for p in enumerate_profiles(model)[:20]:
        assert potential(model, xi, p) == table[p.index - 1]
        assert payoff(model, xi, p, model.n_players) == payoffs[p.index - 1, -1]
    report = verify_potential_identity(model, xi, PerfTable(table), tol=1e-9)
    assert report.passed
    assert report.worst_violation == 0.0


@pytest.mark.parametrize("seed", SEEDS)
def test_exact_design_recovers_any_realizable_criterion(seed):
    _, model, xi = _instance(seed)
    perf = PerfTable(potential_table(model, xi))
    outcome = solve_exact(build_design_system(model, perf))
    assert outcome.is_exact
    scale = 1.0 + np.abs(perf.values).max()
    np.testing.assert_allclose(potential_table(model, outcome.xi), perf.values, atol=1e-7 * scale)
    assert outcome.rank + outcome.freedom == model.n_facilities * model.n_players


@pytest.mark.parametrize("seed", SEEDS)
def test_closest_game_is_an_orthogonal_projection(seed):
    rng, model, _ = _instance(seed)
    perf = PerfTable(rng.normal(scale=10.0, size=model.n_profiles))
    outcome = least_squares_design(model, perf)
    bmat = build_design_system(model, perf).bmat.astype(float)
    residual = perf.values - outcome.p0.values
    scale = 1.0 + np.abs(perf.values).max()
    np.testing.assert_allclose(bmat.T @ residual, 0.0, atol=1e-6 * scale * model.n_profiles)
    np.testing.assert_allclose(potential_table(model, outcome.xi), outcome.p0.values, atol=1e-8 * scale)
    assert outcome.epsilon_hat == pytest.approx(np.abs(residual).max())

    exact = solve_exact(build_design_system(model, perf))
    assert exact.rank == len(outcome.kept_columns)


@pytest.mark.parametrize("seed", SEEDS)
def test_fixed_points_and_nash_agree(seed):
    rng, model, _ = _instance(seed)
    # small integer payoffs produce plenty of exact ties
    payoffs = rng.integers(0, 3, size=(model.n_profiles, model.n_players)).astype(float)
    maps = best_response_maps(model, payoffs)
    assert fixed_points(model, maps) == {p.index for p in nash_enumerate(model, payoffs)}


@pytest.mark.parametrize("seed", SEEDS)
def test_round_robin_dynamics_converge_in_congestion_games(seed):
    rng, model, xi = _instance(seed)
    maps = best_response_maps(model, payoff_table(model, xi))
    equilibria = fixed_points(model, maps)
    assert equilibria
    transitions = transition_maps(maps, model)
    x0 = int(rng.integers(1, model.n_profiles + 1))
    values = potential_table(model, xi)
    trace = simulate(transitions, "rr", x0, values=values)
    assert trace.converged
    assert trace.absorbing in equilibria
    series = np.array(trace.potential_series)
    moved = np.diff(np.array(trace.profiles)) != 0
    assert np.all(np.diff(series)[moved] < 0)
    assert np.all(np.diff(series)[~moved] == 0)


@pytest.mark.parametrize("seed", SEEDS)
def test_closest_game_cannot_be_improved_along_kept_columns(seed):
    rng, model, _ = _instance(seed)
    perf = PerfTable(rng.normal(scale=10.0, size=model.n_profiles))
    outcome = least_squares_design(model, perf)
    bmat = build_design_system(model, perf).bmat.astype(float)
    best = np.linalg.norm(perf.values - bmat @ outcome.xi.flat)
    for column in outcome.kept_columns[:6]:
        for step in (-0.1, 0.1):
            flat = outcome.xi.flat
            flat[column - 1] += step
            assert np.linalg.norm(perf.values - bmat @ flat) >= best - 1e-9
