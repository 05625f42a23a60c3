"""Random review datasets for audits and property tests."""

from __future__ import annotations

import numpy as np

from .model import ReviewDataset, validate_dataset


def antichain_vectors(num_papers: int, d: int = 2) -> np.ndarray:
    """Pairwise incomparable score vectors, one per paper.

    With d >= 2 the points lie on the anti-diagonal of [0, 10]^2, so no two
    are componentwise ordered and the monotone constraints are vacuous.
    """
    if num_papers == 1:
        base = np.full((1, 2), 5.0)
    else:
        t = 10.0 * np.arange(num_papers) / (num_papers - 1)
        base = np.stack([t, 10.0 - t], axis=1)
    if d > 2:
        base = np.concatenate([base, np.full((num_papers, d - 2), 5.0)], axis=1)
    return base[:, :d]


def random_hidden_dataset(
    rng: np.random.Generator,
    num_reviewers: int = 3,
    num_papers: int = 2,
    *,
    levels: int = 11,
    step: float = 1.0,
) -> ReviewDataset:
    """Objectivity-respecting dataset with recommendations on a coarse grid.

    A coarse grid makes ties and domination between papers common, which is
    where the axioms are most likely to bite.
    """
    recs = rng.integers(0, levels, size=(num_reviewers, num_papers)) * step
    recs = np.clip(recs, 0.0, 10.0)
    vectors = antichain_vectors(num_papers)
    scores = np.broadcast_to(vectors, (num_reviewers, num_papers, vectors.shape[1]))
    return validate_dataset(scores, recs, strict=True)


def random_monotone_dataset(
    rng: np.random.Generator,
    num_reviewers: int = 3,
    num_papers: int = 3,
    d: int = 2,
    *,
    score_levels: int = 4,
    plant_consensus: bool = True,
) -> ReviewDataset:
    """Non-hidden dataset where every reviewer is individually monotone.

    Reviewer i maps a score vector x to ``clip(c + g_i(x) - g_i(x0), 0, 10)``
    with ``g_i`` a nondecreasing step function (nonnegative weights, floored
    to half points).  When ``plant_consensus`` is set, paper 0 receives the
    vector ``x0`` and recommendation ``c`` from every reviewer, so it is
    unanimous in both scores and recommendations.
    """
    scores = rng.integers(0, score_levels, size=(num_reviewers, num_papers, d)).astype(float) * (10.0 / (score_levels - 1))
    anchor = rng.integers(0, score_levels, size=d).astype(float) * (10.0 / (score_levels - 1))
    common = float(rng.integers(0, 21)) / 2
    recs = np.empty((num_reviewers, num_papers))
    for i in range(num_reviewers):
        w = rng.uniform(0.0, 0.6, size=d)
        g = lambda x: np.floor(2.0 * (x @ w)) / 2.0  # noqa: E731
        if plant_consensus:
            scores[i, 0] = anchor
        recs[i] = np.clip(common + g(scores[i]) - g(anchor), 0.0, 10.0)
    return validate_dataset(scores, recs, strict=True)


def random_linear_dataset(
    rng: np.random.Generator,
    num_reviewers: int = 3,
    num_papers: int = 5,
    d: int = 2,
    *,
    plant_domination: bool = True,
) -> ReviewDataset:
    """Continuous scores with every reviewer exactly linear with positive slopes.

    If ``plant_domination`` is set, paper 1 is a componentwise lowered copy of
    paper 0 for every reviewer, so paper 0 strictly dominates paper 1 under
    score vectors.
    """
    scores = rng.uniform(1.0, 9.0, size=(num_reviewers, num_papers, d))
    if plant_domination and num_papers >= 2:
        scores[:, 1] = scores[:, 0] - rng.uniform(0.1, 1.0, size=(num_reviewers, d))
    recs = np.empty((num_reviewers, num_papers))
    for i in range(num_reviewers):
        w = rng.uniform(0.2, 1.0, size=d)
        w = w / w.sum() * rng.uniform(0.6, 1.0)
        b = rng.uniform(0.0, 1.0)
        recs[i] = np.clip(scores[i] @ w + b, 0.0, 10.0)
    return validate_dataset(scores, recs, strict=True)
