import numpy as np
import pytest

from lpqreview.engine import ErmProblem, LpqProblem, aggregate, solve_lpq
from lpqreview.model import FittedValues, Params, validate_dataset
from lpqreview.oracle import GridSpec, OracleError, grid_aggregate, grid_best_near, grid_erm, grid_minimize
from lpqreview.repro import pooled_tie_dataset, chain_dataset, flat_fit_dataset


def test_chain_p1():
    values, objective = grid_erm(ErmProblem.from_dataset(chain_dataset(), Params(1, 1)))
    np.testing.assert_allclose(values, [1, 1, 1, 2])
    assert objective == pytest.approx(1.0)


def test_single_node_mean():
    prob = LpqProblem(np.array([[1.0], [3.0]]), np.array([[0], [0]]), 1, (), 2, 2)
    values, _ = grid_minimize(prob)
    assert values[0] == pytest.approx(2.0)


def test_monotone_chain_has_zero_loss():
    prob = LpqProblem(np.array([[1.0, 3.0]]), np.array([[0, 1]]), 2, ((0, 1),), 1.5, 2)
    values, objective = grid_minimize(prob)
    np.testing.assert_allclose(values, [1, 3])
    assert objective == 0


def test_aggregate_two_values_takes_lower_median():
    scores, _ = grid_aggregate(np.array([[1.0], [2.0]]), Params(1, 1))
    assert scores[0] == pytest.approx(1.0)


def test_aggregate_constant_column():
    for p, q in [(1, 1), (2, 3), (3, 1.5)]:
        scores, _ = grid_aggregate(np.full((3, 1), 5.0), Params(p, q))
        assert scores[0] == pytest.approx(5.0)


def test_aggregate_flat_fit_values():
    fitted, _ = aggregate(flat_fit_dataset(), Params(2, 2))
    scores, _ = grid_aggregate(fitted, Params(2, 2))
    np.testing.assert_allclose(scores, [2, 2])


def test_flat_face_min_norm_point():
    # rows (1, 1.5) and (1.5, 2) at p=1, q=2: optimal set is a + b = 3 inside the box
    scores, objective = grid_aggregate(FittedValues(np.array([[1.0, 1.5], [1.5, 2.0]])), Params(1, 2))
    np.testing.assert_allclose(scores, [1.5, 1.5])
    assert objective == pytest.approx(0.5)


def test_pooled_node_value_p1_q2():
    # pooled node sees two cells of reviewer 1 (target 1) and one of reviewer 2 (target 4):
    # (2 (v - 1))^2 + (4 - v)^2 is minimal at v = 1.6
    prob = ErmProblem.from_dataset(pooled_tie_dataset(), Params(1, 2))
    values, objective = grid_erm(prob)
    np.testing.assert_allclose(values, [6, 6, 1.6, 4], atol=1e-12)
    assert objective == pytest.approx(7.2)
    np.testing.assert_allclose(solve_lpq(prob.lpq()), values, atol=1e-6)


@pytest.mark.parametrize("pq", [(1.5, 3), (3, 1.5), (2, 1)])
def test_chain_values_off_diagonal_exponents(pq):
    prob = ErmProblem.from_dataset(chain_dataset(), Params(*pq))
    values, _ = grid_erm(prob, GridSpec(0.01))
    expected = [1, 1, 1, 2] if pq == (2, 1) else [1, 1.5, 1.5, 2]
    np.testing.assert_allclose(values, expected, atol=1e-12)
    np.testing.assert_allclose(solve_lpq(prob.lpq()), expected, atol=1e-6)


def test_too_many_nodes():
    ds = validate_dataset([[float(k) for k in range(7)]], [[float(k) for k in range(7)]])
    with pytest.raises(OracleError, match="limited"):
        grid_erm(ErmProblem.from_dataset(ds, Params(1, 1)))
    with pytest.raises(OracleError):
        grid_aggregate(np.ones((2, 5)), Params(1, 1))


def test_gridspec_validation():
    with pytest.raises(ValueError):
        GridSpec(step=0)
    with pytest.raises(ValueError):
        GridSpec(bounds=(2.0, 1.0))


def test_solver_matches_oracle_on_random_chains():
    rng = np.random.default_rng(3)
    for _ in range(10):
        targets = rng.integers(0, 5, size=(2, 3)) / 2.0
        node = np.array([[0, 1, 2], [0, 1, 2]])
        for p, q in [(1, 1), (2, 2), (1.5, 3), (2, 1)]:
            prob = LpqProblem(targets, node, 3, ((0, 1), (1, 2)), p, q)
            grid_vals, grid_obj = grid_minimize(prob)
            v = solve_lpq(prob)
            assert prob.objective(v) <= grid_obj + 1e-9
            assert np.max(np.abs(v - grid_vals)) <= 0.02 + 1e-7


def test_objective_only_mode_agrees_on_value():
    prob = ErmProblem.from_dataset(chain_dataset(), Params(1.5, 3)).lpq()
    lex_vals, lex_obj = grid_minimize(prob)
    vals, obj = grid_minimize(prob, tie_break=False)
    assert obj == pytest.approx(lex_obj, rel=1e-12)
    assert prob.objective(vals) == pytest.approx(obj, rel=1e-12)


def test_best_near_point():
    prob = LpqProblem(np.array([[1.0], [3.0]]), np.array([[0], [0]]), 1, (), 2, 2)
    vals, obj = grid_best_near(prob, [2.02], 0.03)
    assert vals[0] == pytest.approx(2.0) and obj == pytest.approx(2.0)
    vals, obj = grid_best_near(prob, [2.5], 0.03)
    assert vals[0] == pytest.approx(2.47)
    assert grid_best_near(prob, [9.0], 0.03) == (None, float("inf"))


def test_flat_face_with_shared_nodes():
    # p=1, q=3 with nodes shared across rows: the optimal set is a face of
    # dimension two; every optimum has objective 3.5 and the smallest-norm one is unique
    targets = np.array([[0.0, 1.5], [0.5, 0.0], [2.0, 0.5]])
    node = np.array([[1, 5], [0, 2], [3, 4]])
    edges = ((0, 1), (0, 2), (1, 4), (2, 3), (3, 4), (4, 5))
    prob = LpqProblem(targets, node, 6, edges, 1, 3)
    values, objective = grid_minimize(prob)
    np.testing.assert_allclose(values, [0, 0, 0, 0.5, 0.5, 1.5], atol=1e-12)
    assert objective == pytest.approx(3.5)
