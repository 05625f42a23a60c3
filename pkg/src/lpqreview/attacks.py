"""Constructive manipulations and random misreport search."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .axioms import check_strategy_proofness
from .engine import reviewer_distance, solve_dataset
from .model import Params, ReviewDataset, Solution, validate_dataset

BISECTION_MAX_ITER = 100
BISECTION_TOL = 1e-12
CROSSING_TOL = 1e-9


class AttackError(RuntimeError):
    pass


@dataclass
class AttackResult:
    dataset: ReviewDataset
    reviewer: int
    misreport_recs: np.ndarray | None
    misreport_scores: np.ndarray | None
    honest: Solution
    manipulated: Solution
    params: Params
    setting: str = "auto"

    @property
    def distance_before(self) -> float:
        return reviewer_distance(self.honest.scores, self.dataset.recommendations[self.reviewer])

    @property
    def distance_after(self) -> float:
        return reviewer_distance(self.manipulated.scores, self.dataset.recommendations[self.reviewer])

    @property
    def gain(self) -> float:
        return self.distance_before - self.distance_after

    @property
    def successful(self) -> bool:
        return self.gain > 0


def _hidden(recs, vectors=None) -> ReviewDataset:
    recs = np.asarray(recs, dtype=float)
    n, m = recs.shape
    if vectors is None:
        # one incomparable vector per paper keeps the order constraints vacuous
        vectors = np.stack([np.linspace(0, 10, m), np.linspace(10, 0, m)], axis=1) if m > 1 else np.full((1, 2), 5.0)
    return validate_dataset(np.broadcast_to(vectors, (n, m, vectors.shape[1])), recs)


def build_bisection_instance(t: float) -> ReviewDataset:
    """Two reviewers, two papers: a column (4, 6) and a unanimous column at 4 + 2t."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    return _hidden([[4.0, 4.0 + 2 * t], [6.0, 4.0 + 2 * t]])


def _gap(t: float, params: Params) -> float:
    s = solve_dataset(build_bisection_instance(t), params, "hidden")[1].scores
    return float(s[1] - s[0])


def find_crossing(params: Params) -> float:
    """Bisect t until the two papers' scores coincide."""
    lo, hi = 0.0, 1.0
    g_lo, g_hi = _gap(lo, params), _gap(hi, params)
    if g_lo == 0.0:
        return lo
    if g_hi == 0.0:
        return hi
    if np.sign(g_lo) == np.sign(g_hi):
        raise AttackError(f"no sign change of s_b - s_a over [0, 1] ({g_lo:.3g}, {g_hi:.3g})")
    for _ in range(BISECTION_MAX_ITER):
        mid = 0.5 * (lo + hi)
        g = _gap(mid, params)
        if g == 0.0:
            return mid
        if np.sign(g) == np.sign(g_lo):
            lo, g_lo = mid, g
        else:
            hi = mid
        if hi - lo <= BISECTION_TOL:
            break
    u = 0.5 * (lo + hi)
    if abs(_gap(u, params)) > CROSSING_TOL:
        raise AttackError("bisection ended without an equal-score crossing")
    return u


def construct_recommendation_attack(params: Params) -> AttackResult:
    """Reviewer 1 shades a unanimous-looking paper down to pull the other paper's score.

    At the crossing both papers score the same value ``s``.  The honest
    dataset gives reviewer 1 recommendations ``(s, s)`` and reviewer 2
    ``(6, s)``; reviewer 1 then reports 4 on the first paper.
    """
    if not (params.p == params.q and params.p > 1):
        raise ValueError("the construction needs p == q > 1")
    u = find_crossing(params)
    s_u = float(solve_dataset(build_bisection_instance(u), params, "hidden")[1].scores[0])
    honest_ds = _hidden([[s_u, s_u], [6.0, s_u]])
    misreport = np.array([4.0, s_u])
    rep = check_strategy_proofness(honest_ds, params, 0, misreport, setting="hidden")
    result = AttackResult(
        honest_ds, 0, misreport, None,
        solve_dataset(honest_ds, params, "hidden")[1],
        solve_dataset(honest_ds.replace(recommendations=np.array([misreport, [6.0, s_u]])), params, "hidden")[1],
        params, "hidden",
    )
    if not rep.violated or not result.successful:
        raise AttackError("constructed misreport did not help the reviewer")
    return result


def build_discontinuity_instance(epsilon: float) -> ReviewDataset:
    """Three reviewers, two papers, one criterion.

    Scores: reviewer 1 gives (1, 3.1 - eps), reviewer 2 (3.1, 1), reviewer 3
    (3.1, 4); recommendations (1, 2), (1, 1), (1, 2).
    """
    if not 0.0 < epsilon < 2.1:
        raise ValueError(f"epsilon must lie in (0, 2.1), got {epsilon}")
    scores = np.array([[1.0, 3.1 - epsilon], [3.1, 1.0], [3.1, 4.0]])
    recs = np.array([[1.0, 2.0], [1.0, 1.0], [1.0, 2.0]])
    return validate_dataset(scores, recs)


def continuity_probe(params: Params, epsilons, misreport: bool = True) -> list[tuple[float, float]]:
    """Gap in paper b's score when reviewer 1 lifts x_1b just above x_2a.

    The misreported score is ``x_2a + eps``; with ``misreport=False`` the
    probe re-solves the honest data and reports a zero gap.
    """
    out = []
    for eps in epsilons:
        ds = build_discontinuity_instance(eps)
        honest = solve_dataset(ds, params, "non_hidden")[1]
        if misreport:
            scores = np.array(ds.scores)
            scores[0, 1, 0] = ds.scores[1, 0, 0] + eps
            after = solve_dataset(ds.replace(scores=scores), params, "non_hidden")[1]
        else:
            after = solve_dataset(ds, params, "non_hidden")[1]
        out.append((float(eps), abs(float(after.scores[1] - honest.scores[1]))))
    return out


def score_misreport_attack(params: Params, epsilon: float) -> AttackResult:
    ds = build_discontinuity_instance(epsilon)
    scores = np.array(ds.scores[0])
    scores[1, 0] = ds.scores[1, 0, 0] + epsilon
    full = np.array(ds.scores)
    full[0] = scores
    return AttackResult(
        ds, 0, None, scores,
        solve_dataset(ds, params, "non_hidden")[1],
        solve_dataset(ds.replace(scores=full), params, "non_hidden")[1],
        params, "non_hidden",
    )


def random_misreport_search(
    ds: ReviewDataset,
    params: Params,
    reviewer: int,
    trials: int = 500,
    seed: int = 0,
    perturb_scores: bool = False,
    setting: str = "auto",
) -> AttackResult | None:
    """Best of ``trials`` random misreports, or None when nothing helps."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng([seed, reviewer])
    honest = solve_dataset(ds, params, setting)[1]
    truth = ds.recommendations[reviewer]
    best = None
    best_gain = 1e-9
    for _ in range(trials):
        recs = np.array(ds.recommendations)
        scores = np.array(ds.scores)
        if rng.random() < 0.5:
            recs[reviewer] = np.clip(truth + rng.normal(0, 0.5, size=truth.size), 0, 10)
        else:
            recs[reviewer] = rng.uniform(0, 10, size=truth.size)
        if perturb_scores:
            scores[reviewer] = np.clip(scores[reviewer] + rng.normal(0, 0.5, size=scores[reviewer].shape), 0, 10)
        try:
            manipulated_ds = ds.replace(scores=scores, recommendations=recs)
        except ValueError:
            continue
        run_setting = setting
        if setting == "hidden" and perturb_scores:
            run_setting = "non_hidden"
        manipulated = solve_dataset(manipulated_ds, params, run_setting)[1]
        gain = reviewer_distance(honest.scores, truth) - reviewer_distance(manipulated.scores, truth)
        if gain > best_gain:
            best_gain = gain
            best = AttackResult(
                ds, reviewer, recs[reviewer].copy(), scores[reviewer].copy() if perturb_scores else None,
                honest, manipulated, params, setting,
            )
    return best
