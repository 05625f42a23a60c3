import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpqreview.axioms import (
    AuditSettings,
    AxiomReport,
    Domination,
    audit_random,
    check_consensus,
    check_consistency,
    check_efficiency,
    check_strategy_proofness,
    dominates,
    dominates_with_scores,
    replay,
    trial_dataset,
)
from lpqreview.model import Params, validate_dataset
from lpqreview.repro import pooled_tie_dataset, chain_dataset, flat_fit_dataset


def hidden(columns):
    recs = np.asarray(columns, dtype=float).T
    n, m = recs.shape
    vectors = np.stack([np.linspace(0, 10, m), np.linspace(10, 0, m)], axis=1)
    return validate_dataset(np.broadcast_to(vectors, (n, m, 2)), recs)


def brute_dominates(xa, ya, xb, yb):
    n = len(ya)
    best = Domination.NONE
    for perm in itertools.permutations(range(n)):
        ok = all(np.all(xa[i] >= xb[perm[i]]) and ya[i] >= yb[perm[i]] for i in range(n))
        if not ok:
            continue
        strict = any(np.any(xa[i] > xb[perm[i]]) or ya[i] > yb[perm[i]] for i in range(n))
        if strict:
            return Domination.STRICT
        best = Domination.WEAK
    return best


def test_dominates_examples():
    assert dominates([8, 8, 9, 8], [8, 8, 3, 8]) is Domination.STRICT
    assert dominates([2, 3, 9], [3, 1, 4]) is Domination.STRICT
    assert dominates([3, 1, 4], [2, 3, 9]) is Domination.NONE
    assert dominates([1, 5], [5, 1]) is Domination.WEAK
    with pytest.raises(ValueError):
        dominates([1], [1, 2])


def test_dominates_with_scores_examples():
    ds = flat_fit_dataset()
    a = (ds.scores[:, 0], ds.recommendations[:, 0])
    b = (ds.scores[:, 1], ds.recommendations[:, 1])
    assert dominates_with_scores(*a, *b) is Domination.STRICT
    assert dominates_with_scores(*a, *a) is Domination.WEAK
    # identity pairing fails, the swapped one works with equalities only
    xa, ya = np.array([[1.0], [3.0]]), np.array([1.0, 3.0])
    xb, yb = np.array([[3.0], [1.0]]), np.array([3.0, 1.0])
    assert dominates_with_scores(xa, ya, xb, yb) is Domination.WEAK


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 5).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 3), min_size=n, max_size=n),
    st.lists(st.integers(0, 3), min_size=n, max_size=n),
)))
def test_dominates_matches_permutation_search(pair):
    a, b = (np.array(v, dtype=float) for v in pair)
    x = np.zeros((len(a), 1))
    assert dominates(a, b) is brute_dominates(x, a, x, b)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 5).flatmap(lambda n: st.lists(st.integers(0, 2), min_size=6 * n, max_size=6 * n)))
def test_dominates_with_scores_matches_permutation_search(flat):
    n = len(flat) // 6
    arr = np.array(flat, dtype=float).reshape(n, 6)
    xa, ya, xb, yb = arr[:, 0:2], arr[:, 2], arr[:, 3:5], arr[:, 5]
    assert dominates_with_scores(xa, ya, xb, yb) is brute_dominates(xa, ya, xb, yb)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(st.integers(0, 4), min_size=3, max_size=3), min_size=3, max_size=3))
def test_dominates_is_transitive(cols):
    a, b, c = (np.array(v, dtype=float) for v in cols)
    if dominates(a, b) and dominates(b, c):
        assert dominates(a, c)


def test_consensus_chain():
    rep = check_consensus(chain_dataset(), Params(1, 1))
    assert rep.violated and rep.witness["papers"] == (1,)
    assert check_consensus(chain_dataset(), Params(1, 1), "with_scores").verdict == "inconclusive"


def test_consensus_hidden_unanimous_column():
    assert check_consensus(hidden([[7, 7, 7], [1, 5, 9]]), Params(2, 2)).verdict == "holds"


def test_efficiency_pooled_tie_instance():
    rep = check_efficiency(pooled_tie_dataset(), Params(2, 2))
    assert rep.violated
    s = rep.witness["solution"]
    assert abs(s[0] - s[1]) == pytest.approx(2 / 3, abs=1e-6)


def test_efficiency_identical_papers():
    rep = check_efficiency(hidden([[3, 6, 2], [3, 6, 2]]), Params(1.5, 1))
    assert rep.verdict == "holds"


def test_consistency_left_median_vs_mean():
    ds = hidden([[8, 8, 9, 8], [8, 8, 3, 8]])
    assert check_consistency(ds, Params(1, 1)).violated
    assert check_consistency(ds, Params(2, 2)).verdict == "holds"


def test_consistency_flat_fit_with_scores():
    assert check_consistency(flat_fit_dataset(), Params(2, 2), "with_scores").violated


def test_strategy_proofness_chain():
    rep = check_strategy_proofness(chain_dataset(), Params(1, 1), 1, [1.2, 2.0])
    assert rep.violated
    assert rep.witness["distance_before"] == pytest.approx(1.0, abs=1e-6)
    assert rep.witness["distance_after"] == pytest.approx(0.8, abs=1e-6)
    again = replay(rep)
    assert again.violated and again.witness["distance_after"] == rep.witness["distance_after"]


def test_strategy_proofness_rejects_bad_misreport():
    with pytest.raises(ValueError):
        check_strategy_proofness(chain_dataset(), Params(1, 1), 1, [1.0])
    with pytest.raises(ValueError):
        check_strategy_proofness(chain_dataset(), Params(1, 1), 1, [1.0, 12.0])


def test_violated_report_needs_witness():
    with pytest.raises(ValueError):
        AxiomReport("consensus", "plain", "violated")


def test_audit_hidden_p1_finds_no_sp_or_efficiency_violation():
    found = audit_random(Params(1, 1), AuditSettings(axioms=("efficiency", "strategy_proofness"), misreports=60), 60, seed=4)
    assert found == []


def test_audit_q1_efficiency_violation_replays():
    found = audit_random(Params(2, 1), AuditSettings(axioms=("efficiency",), stop_on_violation=True), 2000, seed=0)
    assert found
    rep = found[0]
    regenerated = trial_dataset(AuditSettings(axioms=("efficiency",)), rep.witness["seed"], rep.witness["trial"])
    assert regenerated.same_data(rep.witness["dataset"])
    assert replay(rep).violated


def test_audit_rejects_zero_trials():
    with pytest.raises(ValueError):
        audit_random(Params(), trials=0)
