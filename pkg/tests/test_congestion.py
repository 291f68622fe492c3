import numpy as np
import pytest

from models.congestion import (
    CostMatrix,
    DimensionError,
    PerfTable,
    deviation_gain,
    nash_enumerate,
    payoff,
    payoff_table,
    potential,
    potential_table,
    verify_potential_identity,
)
from models.design import least_squares_design
from models.fbs_model import enumerate_profiles, unrank_profile

# payoffs of the second example game, players as rows
ITEM2_PAYOFFS = [
    [6, 7, 5.5, 11.5, 6, 12, 2, 10.5, 2.5, 3.5, 10.5, 6, 15.5, 11.5, 21, 4, 10, 5.5],
    [10.5, 13, 16, 10, 1, 10.5, 5, 11.5, 11.5, 4.5, 10.5, 7, 10.5, 0.5, 10, 3.5, 5, 5],
    [6, 2, 0.5, 21, 5.5, 10.5, 5.5, 5.5, 1, 3.5, 5.5, 1, 15.5, 1.5, 10, 4, 1.5, 0.5],
]


def test_payoff_matches_hand_computation(example_model, item2_xi):
    p = unrank_profile(example_model, 1)
    # loads (3, 2, 2, 2, 0); player 1 uses facilities 1, 2, 3
    assert payoff(example_model, item2_xi, p, 1) == pytest.approx(0.5 + 5 + 0.5)
    assert payoff(example_model, item2_xi, p, 2) == pytest.approx(10.5)


def test_payoff_table_reproduces_published_table(example_model, item2_xi):
    table = payoff_table(example_model, item2_xi)
    np.testing.assert_allclose(table.T, ITEM2_PAYOFFS, atol=1e-12)


def test_payoff_table_agrees_with_scalar_payoff(example_model, item2_xi):
    table = payoff_table(example_model, item2_xi)
    for p in enumerate_profiles(example_model):
        for i in (1, 2, 3):
            assert table[p.index - 1, i - 1] == pytest.approx(payoff(example_model, item2_xi, p, i))


def test_potential_of_designed_costs_is_the_criterion(example_model, table1_xi, table1_perf):
    table = potential_table(example_model, table1_xi)
    np.testing.assert_allclose(table, table1_perf.values)
    for p in enumerate_profiles(example_model):
        assert potential(example_model, table1_xi, p) == pytest.approx(table1_perf.values[p.index - 1])


def test_potential_ignores_unused_facilities(example_model):
    # facility 5 is idle at profile 1, so its costs never count there
    xi = CostMatrix(np.vstack([np.zeros((4, 3)), [[100.0, 100.0, 100.0]]]))
    assert potential(example_model, xi, unrank_profile(example_model, 1)) == 0.0


def test_cumulative_round_trip(table1_xi):
    cumulative = table1_xi.cumulative()
    np.testing.assert_array_equal(cumulative[0], [11, 13, 17])
    np.testing.assert_array_equal(CostMatrix.from_cumulative(cumulative).xi, table1_xi.xi)


def test_verify_passes_for_designed_costs(example_model, table1_xi, table1_perf):
    report = verify_potential_identity(example_model, table1_xi, table1_perf)
    assert report.passed
    assert report.worst_violation <= 1e-9
    assert report.summary().startswith("PASS")


def test_verify_reports_witness_on_failure(example_model, item2_xi, item2_perf):
    report = verify_potential_identity(example_model, item2_xi, item2_perf)
    assert not report.passed
    assert report.kind in ("potential", "deviation")
    assert 1 <= report.profile <= 18
    assert report.summary().startswith("FAIL")


def test_verify_detects_single_perturbed_entry(example_model, table1_xi):
    values = np.array(potential_table(example_model, table1_xi))
    values[6] += 0.5
    report = verify_potential_identity(example_model, table1_xi, PerfTable(values))
    assert not report.passed
    assert report.worst_violation == pytest.approx(0.5)
    assert report.kind == "potential"
    assert report.profile == 7


def test_shape_mismatches_raise(example_model, table1_perf):
    with pytest.raises(DimensionError):
        payoff_table(example_model, CostMatrix(np.zeros((5, 2))))
    with pytest.raises(DimensionError):
        verify_potential_identity(example_model, CostMatrix.zeros(example_model), PerfTable(np.zeros(17)))
    with pytest.raises(DimensionError):
        CostMatrix(np.array([[np.inf]]))
    with pytest.raises(DimensionError):
        CostMatrix.from_flat(np.zeros(14), 5, 3)


def test_nash_of_second_example_is_unique(example_model, item2_xi):
    equilibria = nash_enumerate(example_model, payoff_table(example_model, item2_xi))
    assert [p.index for p in equilibria] == [5]
    assert equilibria[0].choices == (1, 2, 2)


def test_nash_includes_potential_minimum(example_model, table1_xi, table1_perf):
    equilibria = {p.index for p in nash_enumerate(example_model, payoff_table(example_model, table1_xi))}
    assert int(np.argmin(table1_perf.values)) + 1 in equilibria


def test_deviation_gain_equals_perf_change_in_potential_game(example_model, table1_xi, table1_perf):
    payoffs = payoff_table(example_model, table1_xi)
    gain = deviation_gain(example_model, payoffs, 1, 1, 2)
    assert gain == pytest.approx(table1_perf.values[9] - table1_perf.values[0])


def test_all_zero_payoffs_make_every_profile_an_equilibrium(example_model):
    equilibria = nash_enumerate(example_model, np.zeros((18, 3)))
    assert len(equilibria) == 18


# payoffs of the closest game, as published (rounded to 0.01)
CLOSEST_PAYOFFS = [
    [4.81, 7.01, 4.96, 11.25, 5.28, 11.57, 1.85, 10.88, 2.17, 2.67, 10.73, 5.14, 14.54, 11.38, 20.79, 2.67, 10.73, 5.14],
    [9.70, 12.55, 16.09, 9.53, 0.13, 9.53, 5.01, 11.26, 11.26, 4.28, 10.17, 7.06, 9.53, 0.13, 9.53, 2.55, 5.01, 5.01],
    [5.14, 1.14, 0.13, 20.94, 4.68, 9.53, 5.29, 4.68, 0.13, 2.83, 4.68, 0.13, 15.01, 1.58, 9.53, 3.15, 1.58, 0.13],
]


def test_closest_game_payoffs_match_published_table(example_model, item2_perf):
    closest = least_squares_design(example_model, item2_perf)
    table = payoff_table(example_model, closest.xi)
    np.testing.assert_allclose(table.T, CLOSEST_PAYOFFS, atol=0.011)
