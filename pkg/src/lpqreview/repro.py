"""Small constructed instances with known outcomes.

Every case recomputes its instance, checks the expected numbers and raises
:class:`ReproDrift` if anything moved.  Each returns ``(sections, violated)``
where ``violated`` says whether the case exhibits the axiom failure it was
built to show.
"""

from __future__ import annotations

import numpy as np

from .attacks import build_discontinuity_instance, construct_recommendation_attack, continuity_probe, find_crossing
from .axioms import check_consensus, check_consistency, check_efficiency, check_strategy_proofness, paper_domination
from .engine import solve_dataset
from .model import Params, ReviewDataset, validate_dataset

TOL = 1e-6


class ReproDrift(AssertionError):
    pass


def _expect(name: str, got, want, tol: float = TOL):
    got_arr, want_arr = np.asarray(got, dtype=float), np.asarray(want, dtype=float)
    if got_arr.shape != want_arr.shape or not np.allclose(got_arr, want_arr, atol=tol, rtol=0):
        raise ReproDrift(f"{name}: expected {want_arr.tolist()}, got {got_arr.tolist()}")


def _hidden(columns) -> ReviewDataset:
    recs = np.asarray(columns, dtype=float).T
    n, m = recs.shape
    vectors = np.stack([np.linspace(0, 10, m), np.linspace(10, 0, m)], axis=1)
    return validate_dataset(np.broadcast_to(vectors, (n, m, 2)), recs)


def chain_dataset() -> ReviewDataset:
    return validate_dataset([[1.0, 2.0], [3.0, 4.0]], [[1.0, 2.0], [1.0, 2.0]])


def flat_fit_dataset() -> ReviewDataset:
    return validate_dataset([[3.0, 2.0], [2.0, 1.0]], [[2.0, 1.0], [3.0, 2.0]])


def pooled_tie_dataset() -> ReviewDataset:
    """Three reviewers; reviewers 1 and 2 on paper a and reviewer 1 on paper b share one vector."""
    pooled = [5.0, 5.0]
    scores = np.array([
        [pooled, pooled],
        [pooled, [9.0, 0.0]],
        [[0.0, 9.0], [1.0, 8.0]],
    ])
    recs = np.array([[1.0, 1.0], [4.0, 4.0], [6.0, 6.0]])
    return validate_dataset(scores, recs)


def case_leftmedian(params: Params | None = None):
    pairs = {"first": ([8, 8, 9, 8], [8, 8, 3, 8]), "second": ([2, 3, 9], [3, 1, 4])}
    sections, violated = {}, False
    for label, (a, b) in pairs.items():
        ds = _hidden([a, b])
        s1 = solve_dataset(ds, Params(1, 1), "hidden")[1].scores
        s2 = solve_dataset(ds, Params(2, 2), "hidden")[1].scores
        want1 = [8, 8] if label == "first" else [3, 3]
        _expect(f"{label} pair, p=q=1", s1, want1, 0)
        _expect(f"{label} pair, p=q=2", s2, [np.mean(a), np.mean(b)], 1e-9)
        rep = check_consistency(ds, Params(1, 1), "plain", "hidden")
        violated |= rep.violated
        sections[label] = {"columns": [a, b], "s_p1": s1, "s_p2": s2, "consistency_p1": rep.verdict}
    return sections, violated


def case_chain(params: Params | None = None):
    ds = chain_dataset()
    p = Params(1, 1)
    fitted, sol = solve_dataset(ds, p, "non_hidden")
    _expect("fitted values", fitted.values.ravel(), [1, 1, 1, 2])
    _expect("scores", sol.scores, [1, 1])
    cons = check_consensus(ds, p, "plain", "non_hidden")
    sp = check_strategy_proofness(ds, p, 1, [1.2, 2.0], setting="non_hidden")
    _expect("distances", [sp.witness["distance_before"], sp.witness["distance_after"]], [1.0, 0.8])
    sections = {
        "fitted": fitted.values,
        "scores": sol.scores,
        "consensus": cons.verdict,
        "strategy_proofness": sp.verdict,
        "manipulated_scores": sp.witness["manipulated_solution"],
        "distance_before": sp.witness["distance_before"],
        "distance_after": sp.witness["distance_after"],
    }
    return sections, cons.violated and sp.violated


def case_flat_fit(params: Params | None = None):
    ds = flat_fit_dataset()
    p = Params(2, 2)
    fitted, sol = solve_dataset(ds, p, "non_hidden")
    _expect("fitted values", fitted.values, np.full((2, 2), 2.0))
    _expect("scores", sol.scores, [2, 2])
    rel = paper_domination(ds, 0, 1, "with_scores")
    if rel.value != "strict":
        raise ReproDrift(f"expected strict domination with scores, got {rel.value}")
    rep = check_consistency(ds, p, "with_scores", "non_hidden")
    return {"fitted": fitted.values, "scores": sol.scores, "domination": rel, "consistency": rep.verdict}, rep.violated


def case_discontinuity(params: Params | None = None):
    params = params or Params(1, 1)
    eps = [0.1, 0.01, 0.001]
    gaps = continuity_probe(params, eps)
    if params.p == 1 and params.q == 1:
        _expect("gaps", [g for _, g in gaps], [1, 1, 1])
    ds = build_discontinuity_instance(0.2)
    _expect("instance scores", ds.scores[..., 0], [[1, 2.9], [3.1, 1], [3.1, 4]], 1e-12)
    return {"epsilons": eps, "gaps": [g for _, g in gaps]}, any(g > TOL for _, g in gaps)


def case_pooled_tie(params: Params | None = None):
    ds = pooled_tie_dataset()
    p = Params(2, 2)
    fitted, sol = solve_dataset(ds, p, "non_hidden")
    gap = abs(sol.scores[0] - sol.scores[1])
    _expect("score gap", gap, 2 / 3)
    _expect("sorted scores", np.sort(sol.scores), [10 / 3, 4])
    rep = check_efficiency(ds, p, "plain", "non_hidden")
    return {"fitted": fitted.values, "scores": sol.scores, "gap": gap, "efficiency": rep.verdict}, rep.violated


def case_crossing(params: Params | None = None):
    params = params or Params(2, 2)
    u = find_crossing(params)
    attack = construct_recommendation_attack(params)
    if params.p == 2 and params.q == 2:
        _expect("crossing", u, 0.5, 1e-9)
        _expect("honest scores", attack.honest.scores, [5.5, 5.0], 1e-9)
        _expect("manipulated scores", attack.manipulated.scores, [5.0, 5.0], 1e-9)
        _expect("distances", [attack.distance_before, attack.distance_after], [0.5, 0.0], 1e-9)
    return {
        "crossing": u,
        "honest_scores": attack.honest.scores,
        "manipulated_scores": attack.manipulated.scores,
        "distance_before": attack.distance_before,
        "distance_after": attack.distance_after,
        "gain": attack.gain,
    }, attack.successful


CASES = {
    "leftmedian": case_leftmedian,
    "fig2": case_chain,
    "fig3": case_flat_fit,
    "fig4": case_discontinuity,
    "efficiency-l22": case_pooled_tie,
    "prop32": case_crossing,
}
