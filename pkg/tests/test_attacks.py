import numpy as np
import pytest

from lpqreview.attacks import (
    AttackError,
    build_bisection_instance,
    build_discontinuity_instance,
    construct_recommendation_attack,
    continuity_probe,
    find_crossing,
    random_misreport_search,
    score_misreport_attack,
)
from lpqreview.axioms import check_strategy_proofness
from lpqreview.engine import solve_dataset
from lpqreview.model import Params, validate_dataset
from lpqreview.oracle import grid_aggregate
from lpqreview.repro import chain_dataset


def test_bisection_instances():
    assert build_bisection_instance(0).recommendations.tolist() == [[4, 4], [6, 4]]
    assert build_bisection_instance(1).recommendations.tolist() == [[4, 6], [6, 6]]
    assert build_bisection_instance(0.5).recommendations[:, 1].tolist() == [5, 5]
    with pytest.raises(ValueError):
        build_bisection_instance(1.5)


@pytest.mark.parametrize("p", [2, 4, 1.5])
def test_crossing_is_one_half(p):
    params = Params(p, p)
    u = find_crossing(params)
    assert u == pytest.approx(0.5, abs=1e-9)
    s = solve_dataset(build_bisection_instance(u), params, "hidden")[1].scores
    assert abs(s[0] - s[1]) <= 1e-9


def test_crossing_left_median_is_degenerate():
    # left-median of (4, 6) is 4, equal to the unanimous paper already at t = 0
    assert find_crossing(Params(1, 1)) == 0.0


def test_crossing_without_sign_change(monkeypatch):
    import lpqreview.attacks as attacks

    monkeypatch.setattr(attacks, "_gap", lambda t, params: 1.0 + t)
    with pytest.raises(AttackError):
        attacks.find_crossing(Params(2, 2))


def test_recommendation_attack_p2():
    res = construct_recommendation_attack(Params(2, 2))
    np.testing.assert_allclose(res.honest.scores, [5.5, 5.0], atol=1e-9)
    np.testing.assert_allclose(res.manipulated.scores, [5.0, 5.0], atol=1e-9)
    assert res.distance_before == pytest.approx(0.5, abs=1e-9)
    assert res.distance_after == pytest.approx(0.0, abs=1e-9)


def test_recommendation_attack_p3_replays():
    res = construct_recommendation_attack(Params(3, 3))
    assert res.gain > 0
    rep = check_strategy_proofness(res.dataset, res.params, res.reviewer, res.misreport_recs, setting="hidden")
    assert rep.violated
    # independent check of the manipulated scores on the grid
    grid_scores, _ = grid_aggregate(np.array([[4.0, 5.0], [6.0, 5.0]]), Params(3, 3))
    np.testing.assert_allclose(res.manipulated.scores, grid_scores, atol=0.02)


def test_recommendation_attack_requires_p_equal_q_above_one():
    with pytest.raises(ValueError):
        construct_recommendation_attack(Params(1, 1))


def test_discontinuity_instance():
    ds = build_discontinuity_instance(0.2)
    np.testing.assert_allclose(ds.scores[..., 0], [[1, 2.9], [3.1, 1], [3.1, 4]])
    np.testing.assert_allclose(ds.recommendations, [[1, 2], [1, 1], [1, 2]])
    build_discontinuity_instance(0.01)
    with pytest.raises(ValueError):
        build_discontinuity_instance(3)


def test_continuity_probe():
    gaps = continuity_probe(Params(1, 1), [0.1, 0.01, 0.001])
    assert [g for _, g in gaps] == pytest.approx([1, 1, 1], abs=1e-6)
    assert continuity_probe(Params(2, 2), [0.01])[0][1] > 0.1
    assert continuity_probe(Params(1, 1), [0.1], misreport=False)[0][1] == 0


def test_score_misreport_attack_gains():
    res = score_misreport_attack(Params(1, 1), 0.01)
    assert res.successful
    rep = check_strategy_proofness(res.dataset, res.params, 0, None, res.misreport_scores, "non_hidden")
    assert rep.violated and rep.mode == "with_scores"


def test_random_search_chain():
    res = random_misreport_search(chain_dataset(), Params(1, 1), 1, trials=150, seed=0)
    assert res is not None and res.gain >= 0.1
    rep = check_strategy_proofness(res.dataset, res.params, 1, res.misreport_recs)
    assert rep.violated


def test_random_search_unanimous_hidden():
    recs = np.array([[3.0, 7.0], [3.0, 7.0]])
    ds = validate_dataset(np.broadcast_to([[0.0, 9.0], [9.0, 0.0]], (2, 2, 2)), recs)
    assert random_misreport_search(ds, Params(1, 1), 0, trials=100, setting="hidden") is None
