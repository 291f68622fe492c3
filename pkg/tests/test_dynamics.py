import numpy as np
import pytest

from models.activation import RandomActivationSimulator, ReplaySimulator, RoundRobinSimulator
from models.base_simulator import ProfileDynamicsSimulator
from models.congestion import CostMatrix, PerfTable, nash_enumerate, payoff_table, potential_table
from models.design import least_squares_design
from models.dynamics import (
    best_response_map,
    best_response_maps,
    dynamic_equivalence,
    fixed_points,
    near_optimality_check,
    replay,
    simulate,
    transition_maps,
)
from models.fbs_model import FbsModel

L1 = [10, 2, 3, 4, 5, 6, 7, 17, 9, 10, 2, 3, 4, 5, 6, 7, 17, 9]
L2 = [7, 5, 6, 7, 5, 6, 7, 5, 6, 16, 14, 18, 16, 14, 18, 16, 14, 18]
L3 = [3, 3, 3, 5, 5, 5, 9, 9, 9, 12, 12, 12, 14, 14, 14, 18, 18, 18]

F1 = [2, 1, 1, 1, 1, 1, 1, 2, 1, 2, 1, 1, 1, 1, 1, 1, 2, 1]
F2 = [3, 2, 2, 3, 2, 2, 3, 2, 2, 3, 2, 3, 3, 2, 3, 3, 2, 3]
F3 = [3, 3, 3, 2, 2, 2, 3, 3, 3, 3, 3, 3, 2, 2, 2, 3, 3, 3]


@pytest.fixture
def item2_maps(example_model, item2_xi):
    return best_response_maps(example_model, payoff_table(example_model, item2_xi))


@pytest.fixture
def item2_transitions(example_model, item2_maps):
    return transition_maps(item2_maps, example_model)


def test_best_response_choices_match_published_dynamics(item2_maps):
    for brm, expected in zip(item2_maps, (F1, F2, F3)):
        np.testing.assert_array_equal(brm.choice, expected)


def test_transition_maps_match_published_matrices(item2_transitions):
    for tmap, expected in zip(item2_transitions, (L1, L2, L3)):
        np.testing.assert_array_equal(tmap.next, expected)


def test_logical_matrix_columns_are_unit_vectors(item2_transitions):
    matrix = item2_transitions[0].as_logical_matrix()
    assert matrix.shape == (18, 18)
    np.testing.assert_array_equal(matrix.sum(axis=0), 1)
    assert matrix[9, 0] == 1


def test_fixed_points_equal_nash_equilibria(example_model, item2_xi, item2_maps):
    payoffs = payoff_table(example_model, item2_xi)
    assert fixed_points(example_model, item2_maps) == {p.index for p in nash_enumerate(example_model, payoffs)}
    assert fixed_points(example_model, item2_maps) == {5}


def test_ties_keep_incumbent_then_lowest_action():
    model = FbsModel.from_actions([[[1], [2], [3]]], n_facilities=3)
    payoffs = np.array([[1.0], [0.0], [0.0]])
    brm = best_response_map(model, payoffs, 1)
    np.testing.assert_array_equal(brm.choice, [2, 2, 3])
    assert brm.argmin_sets == (frozenset({2, 3}),) * 3


@pytest.mark.parametrize("schedule", ["rr", "rand"])
def test_every_start_reaches_the_unique_equilibrium(item2_transitions, schedule):
    for x0 in range(1, 19):
        trace = simulate(item2_transitions, schedule, x0, seed=7)
        assert trace.converged
        assert trace.absorbing == 5
        assert trace.profiles[0] == x0
        assert len(trace.profiles) == trace.steps + 1


def test_start_at_equilibrium_takes_no_steps(item2_transitions):
    trace = simulate(item2_transitions, "rr", 5)
    assert trace.steps == 0
    assert trace.profiles == (5,)
    assert trace.converged


def test_random_schedule_is_reproducible(item2_transitions):
    a = simulate(item2_transitions, "rand", 18, seed=3)
    b = simulate(item2_transitions, "rand", 18, seed=3)
    assert a.schedule == b.schedule
    assert a.profiles == b.profiles
    assert a.seed == 3


def test_replay_reproduces_recorded_run(item2_transitions):
    trace = simulate(item2_transitions, "rand", 12, seed=11)
    again = replay(item2_transitions, trace.schedule, trace.start)
    assert again.profiles == trace.profiles
    assert again.schedule_kind == "replay"


def test_potential_series_never_increases(example_model, item2_xi, item2_transitions):
    values = potential_table(example_model, item2_xi)
    trace = simulate(item2_transitions, "rand", 1, seed=5, values=values)
    series = np.array(trace.potential_series)
    assert series.size == len(trace.profiles)
    assert np.all(np.diff(series) <= 1e-9)


def test_step_budget_stops_cycling_dynamics():
    # matching pennies in cost form has no pure equilibrium
    model = FbsModel.from_actions([[[1], [2]], [[1], [2]]], n_facilities=2)
    payoffs = np.array([[0.0, 1.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    maps = transition_maps(best_response_maps(model, payoffs), model)
    trace = simulate(maps, "rr", 1, max_steps=10)
    assert not trace.converged
    assert trace.absorbing is None
    assert trace.steps == 10


def test_simulate_argument_checks(item2_transitions):
    with pytest.raises(ValueError):
        simulate(item2_transitions, "rr", 1, max_steps=0)
    with pytest.raises(ValueError):
        simulate(item2_transitions, "sweep", 1)
    with pytest.raises(ValueError):
        simulate(item2_transitions, "rr", 19)


def test_simulators_record_steps(item2_transitions):
    sim = RoundRobinSimulator(item2_transitions)
    trace = sim.run_simulation(1)
    df = sim.to_dataframe()
    assert list(df.columns) == ["step", "player", "profile", "value"]
    assert len(df) == trace.steps
    assert list(df["player"]) == [(s - 1) % 3 + 1 for s in range(1, trace.steps + 1)]

    rand = RandomActivationSimulator(item2_transitions, seed=1)
    assert rand.run_simulation(1).profiles == rand.run_simulation(1).profiles

    with pytest.raises(ValueError):
        ReplaySimulator(item2_transitions, schedule=[1, 4])
    with pytest.raises(NotImplementedError):
        ProfileDynamicsSimulator(item2_transitions).run_simulation(1)


def test_closest_game_is_dynamically_equivalent(example_model, item2_perf, item2_maps):
    closest = least_squares_design(example_model, item2_perf)
    closest_maps = best_response_maps(example_model, payoff_table(example_model, closest.xi))
    report = dynamic_equivalence(item2_maps, closest_maps, "selected")
    assert report.equivalent
    assert report.witnesses == []
    assert dynamic_equivalence(closest_maps, item2_maps, "selected").equivalent
    assert dynamic_equivalence(item2_maps, item2_maps, "strict").equivalent


def test_equivalence_reports_witnesses(example_model, item2_maps):
    other = best_response_maps(example_model, np.zeros((18, 3)))
    strict = dynamic_equivalence(item2_maps, other, "strict")
    selected = dynamic_equivalence(item2_maps, other, "selected")
    assert not strict.equivalent
    assert not selected.equivalent
    assert all(1 <= w.profile <= 18 for w in strict.witnesses)
    reverse = dynamic_equivalence(other, item2_maps, "strict")
    assert not reverse.equivalent
    assert [w.profile for w in reverse.witnesses] == [w.profile for w in strict.witnesses]
    assert not dynamic_equivalence(other, item2_maps, "selected").equivalent
    with pytest.raises(ValueError):
        dynamic_equivalence(item2_maps, other, "loose")


def test_near_optimality_bound(example_model, item2_perf):
    closest = least_squares_design(example_model, item2_perf)
    report = near_optimality_check(item2_perf, closest.p0, 5, 0.9)
    assert report.holds
    assert report.gap == 0.0
    assert report.bound == pytest.approx(1.8)
    assert report.deviation == pytest.approx(0.8315, abs=1e-3)
    with pytest.raises(ValueError):
        near_optimality_check(item2_perf, closest.p0, 5, 0.5)


def test_near_optimality_needs_matching_tables():
    with pytest.raises(ValueError):
        near_optimality_check(PerfTable(np.zeros(3)), PerfTable(np.zeros(2)), 1, 1.0)


def test_closest_game_has_the_same_choice_tables(example_model, item2_perf):
    closest = least_squares_design(example_model, item2_perf)
    maps = best_response_maps(example_model, payoff_table(example_model, closest.xi))
    for brm, expected in zip(maps, (F1, F2, F3)):
        np.testing.assert_array_equal(brm.choice, expected)


def test_closest_game_is_strictly_equivalent(example_model, item2_perf, item2_maps):
    closest = least_squares_design(example_model, item2_perf)
    closest_maps = best_response_maps(example_model, payoff_table(example_model, closest.xi))
    assert dynamic_equivalence(item2_maps, closest_maps, "strict").equivalent
    assert dynamic_equivalence(closest_maps, item2_maps, "strict").equivalent


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_random_activation_converges_quickly_from_every_start(item2_transitions, seed):
    for x0 in range(1, 19):
        trace = simulate(item2_transitions, "rand", x0, max_steps=100, seed=seed + x0)
        assert trace.absorbing == 5
