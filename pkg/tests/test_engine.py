import numpy as np
import pytest

from lpqreview.engine import (
    ErmProblem,
    LpqProblem,
    aggregate,
    aggregate_step,
    balance_gap,
    erm_fit,
    left_median,
    median_interval,
    pmean_1d,
    solve_1d_columns,
    solve_dataset,
    solve_lpq,
)
from lpqreview.model import FittedValues, ObjectivityError, Params, validate_dataset


def chain():
    return validate_dataset([[1, 2], [3, 4]], [[1, 2], [1, 2]])


def flat_fit():
    return validate_dataset([[3, 2], [2, 1]], [[2, 1], [3, 2]])


@pytest.mark.parametrize(
    "values, expected",
    [([8, 8, 9, 8], 8), ([8, 8, 3, 8], 8), ([3, 1, 4], 3), ([2, 3, 9], 3), ([1, 2], 1), ([5], 5)],
)
def test_left_median(values, expected):
    assert left_median(values) == expected


def test_median_interval_even_length():
    assert median_interval([1, 4, 2, 3]) == (2.0, 3.0)


def test_pmean_matches_mean_for_p2():
    assert pmean_1d([8, 8, 9, 8], 2) == pytest.approx(8.25, abs=1e-12)
    assert pmean_1d([2, 3, 9], 2) == pytest.approx(14 / 3, abs=1e-12)


def test_pmean_closed_form_p4():
    # stationarity on {0, 1, 1}: s^3 = 2 (1 - s)^3
    r = 2 ** (1 / 3)
    assert pmean_1d([0, 1, 1], 4) == pytest.approx(r / (1 + r), abs=1e-13)


def test_pmean_two_points_is_midpoint():
    for p in (1.5, 3, 4, 7):
        assert pmean_1d([4, 6], p) == pytest.approx(5.0, abs=1e-13)


def test_balance_gap_at_optimum():
    values = [0.3, 2.0, 2.5, 9.0, 7.1]
    for p in (1.5, 2, 3, 4):
        assert abs(balance_gap(values, pmean_1d(values, p), p)) <= 1e-9


def test_solve_1d_columns_agrees_with_scalar_path():
    rng = np.random.default_rng(5)
    mat = rng.uniform(0, 10, size=(5, 30))
    for p in (1, 1.5, 2, 3):
        cols = solve_1d_columns(mat, p)
        scalar = [pmean_1d(mat[:, j], p) if p > 1 else left_median(mat[:, j]) for j in range(mat.shape[1])]
        np.testing.assert_allclose(cols, scalar, atol=1e-12)


def test_chain_erm_and_aggregation_p1():
    fitted, sol = aggregate(chain(), Params(1, 1))
    np.testing.assert_allclose(fitted.values, [[1, 1], [1, 2]], atol=1e-9)
    np.testing.assert_allclose(sol.scores, [1, 1], atol=1e-9)
    assert sol.erm_loss == pytest.approx(1.0, abs=1e-9)


def test_chain_erm_and_aggregation_p2():
    fitted, sol = aggregate(chain(), Params(2, 2))
    np.testing.assert_allclose(fitted.values, [[1, 1.5], [1.5, 2]], atol=1e-9)
    np.testing.assert_allclose(sol.scores, [1.25, 1.75], atol=1e-9)


def test_chain_misreport_moves_fitted_values():
    ds = validate_dataset([[1, 2], [3, 4]], [[1, 2], [1.2, 2]])
    fitted, sol = aggregate(ds, Params(1, 1))
    np.testing.assert_allclose(fitted.values, [[1, 1.2], [1.2, 2]], atol=1e-9)
    np.testing.assert_allclose(sol.scores, [1, 1.2], atol=1e-9)


def test_flat_fit_everything_equals_two():
    fitted, sol = aggregate(flat_fit(), Params(2, 2))
    np.testing.assert_allclose(fitted.values, 2.0, atol=1e-9)
    np.testing.assert_allclose(sol.scores, [2, 2], atol=1e-9)


def test_monotone_targets_are_returned_unchanged():
    prob = LpqProblem(np.array([[1.0, 3.0]]), np.array([[0, 1]]), 2, ((0, 1),), 1.5, 2.5)
    np.testing.assert_array_equal(solve_lpq(prob), [1.0, 3.0])


def test_flat_face_uses_min_norm():
    # every (a, b) in [1, 1.5] x [1.5, 2] with a + b = 3 is optimal; min-norm picks (1.5, 1.5)
    fitted = FittedValues(np.array([[1.0, 1.5], [1.5, 2.0]]))
    sol = aggregate_step(fitted, Params(1, 2))
    # tie-breaking along a curved-across face is accurate to ~1e-6 for p=1 < q
    np.testing.assert_allclose(sol.scores, [1.5, 1.5], atol=1e-5)


def test_unconstrained_p_equals_q_decomposes():
    rng = np.random.default_rng(0)
    fitted = rng.uniform(0, 10, size=(4, 3))
    sol = aggregate_step(FittedValues(fitted), Params(3, 3))
    np.testing.assert_allclose(sol.scores, solve_1d_columns(fitted, 3), atol=1e-9)


def test_erm_respects_order_constraints():
    rng = np.random.default_rng(1)
    scores = rng.permuted(np.tile(np.arange(3.0), (3, 1)), axis=1)
    recs = rng.integers(0, 10, size=(3, 3)).astype(float)
    ds = validate_dataset(scores, recs)
    prob = ErmProblem.from_dataset(ds, Params(1.5, 3))
    node_vals = solve_lpq(prob.lpq())
    for u, w in prob.order.edges:
        assert node_vals[u] <= node_vals[w] + 1e-12
    assert erm_fit(prob).values.shape == (3, 3)


def test_hidden_setting_aggregates_raw_recommendations():
    scores = np.broadcast_to([[0.0, 9.0], [9.0, 0.0]], (4, 2, 2))
    ds = validate_dataset(scores, [[8, 8], [8, 8], [9, 3], [8, 8]])
    _, sol = solve_dataset(ds, Params(2, 2), "hidden")
    np.testing.assert_allclose(sol.scores, [8.25, 6.75], atol=1e-12)
    with pytest.raises(ObjectivityError):
        solve_dataset(chain(), Params(1, 1), "hidden")
