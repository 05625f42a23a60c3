import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from lpqreview.engine import ErmProblem, balance_gap, left_median, pmean_1d, solve_dataset, solve_lpq
from lpqreview.generate import random_monotone_dataset
from lpqreview.model import Params

values = st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=9)
exponents = st.sampled_from([1.0, 1.5, 2.0, 3.0])


@settings(max_examples=200, deadline=None)
@given(values, st.sampled_from([1.5, 2.0, 3.0, 4.0]))
def test_pmean_balances_and_lies_in_range(v, p):
    s = pmean_1d(v, p)
    assert min(v) - 1e-12 <= s <= max(v) + 1e-12
    assert abs(balance_gap(v, s, p)) <= 1e-6


@settings(max_examples=200, deadline=None)
@given(values)
def test_left_median_is_an_l1_minimizer(v):
    s = left_median(v)
    arr = np.asarray(v)
    cost = np.abs(arr - s).sum()
    grid = np.linspace(0, 10, 201)
    assert s in v
    assert cost <= np.abs(arr[:, None] - grid[None]).sum(axis=0).min() + 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), exponents, exponents)
def test_erm_respects_order_and_is_deterministic(seed, p, q):
    ds = random_monotone_dataset(np.random.default_rng(seed), 2, 3, 2)
    prob = ErmProblem.from_dataset(ds, Params(p, q)).lpq()
    v = solve_lpq(prob)
    assert prob.violation(v) <= 1e-9
    assert np.array_equal(v, solve_lpq(prob))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), exponents)
def test_monotone_reviewers_with_common_vectors_fit_exactly(seed, p):
    # when each reviewer's recommendations are monotone and the vectors are
    # shared, every reviewer is already consistent with the order
    rng = np.random.default_rng(seed)
    ds = random_monotone_dataset(rng, 1, 4, 2)
    fitted, _ = solve_dataset(ds, Params(p, p), "non_hidden")
    np.testing.assert_allclose(fitted.values, ds.recommendations, atol=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([1.0, 2.0]))
def test_reviewer_order_does_not_matter(seed, p):
    ds = random_monotone_dataset(np.random.default_rng(seed), 3, 3, 2)
    perm = np.random.default_rng(seed + 1).permutation(3)
    shuffled = ds.replace(scores=ds.scores[perm], recommendations=ds.recommendations[perm])
    a = solve_dataset(ds, Params(p, p), "non_hidden")[1].scores
    b = solve_dataset(shuffled, Params(p, p), "non_hidden")[1].scores
    np.testing.assert_allclose(a, b, atol=1e-6)
