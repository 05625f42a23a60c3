"""Domain types for review datasets and the monotone constraint graph."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SCORE_MIN = 0.0
SCORE_MAX = 10.0


class DatasetError(ValueError):
    """Raised when review data violates a dataset invariant."""


class ObjectivityError(DatasetError):
    """Raised when reviewers disagree on the score vector of some paper."""

    def __init__(self, paper: int, paper_id: str):
        super().__init__(f"objectivity violated: reviewers disagree on scores of paper {paper_id!r}")
        self.paper = paper
        self.paper_id = paper_id


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ReviewDataset:
    """Complete reviewer x paper matrix of (score vector, recommendation) pairs.

    ``scores`` has shape ``(n, m, d)`` and ``recommendations`` shape ``(n, m)``;
    reviewer ``i`` gave paper ``a`` the vector ``scores[i, a]`` and the overall
    recommendation ``recommendations[i, a]``.  Build instances through
    :func:`validate_dataset` or :meth:`from_cells`.
    """

    scores: np.ndarray
    recommendations: np.ndarray
    reviewer_ids: tuple[str, ...]
    paper_ids: tuple[str, ...]
    warnings: tuple[str, ...] = field(default=())

    @property
    def num_reviewers(self) -> int:
        return self.recommendations.shape[0]

    @property
    def num_papers(self) -> int:
        return self.recommendations.shape[1]

    @property
    def num_criteria(self) -> int:
        return self.scores.shape[2]

    def cell(self, reviewer: int, paper: int) -> tuple[np.ndarray, float]:
        return self.scores[reviewer, paper], float(self.recommendations[reviewer, paper])

    def replace(
        self,
        scores: np.ndarray | None = None,
        recommendations: np.ndarray | None = None,
        strict: bool = False,
    ) -> "ReviewDataset":
        """Return a re-validated copy with some arrays swapped out."""
        return validate_dataset(
            self.scores if scores is None else scores,
            self.recommendations if recommendations is None else recommendations,
            reviewer_ids=self.reviewer_ids,
            paper_ids=self.paper_ids,
            strict=strict,
        )

    def same_data(self, other: "ReviewDataset") -> bool:
        return (
            self.reviewer_ids == other.reviewer_ids
            and self.paper_ids == other.paper_ids
            and np.array_equal(self.scores, other.scores)
            and np.array_equal(self.recommendations, other.recommendations)
        )

    @classmethod
    def from_cells(
        cls,
        cells: Mapping[tuple[int, int], tuple[Sequence[float] | float, float]],
        num_reviewers: int,
        num_papers: int,
        strict: bool = False,
    ) -> "ReviewDataset":
        """Build a dataset from a ``(reviewer, paper) -> (scores, recommendation)`` map."""
        if not cells:
            raise DatasetError("empty dataset")
        d = len(np.atleast_1d(next(iter(cells.values()))[0]))
        scores = np.full((num_reviewers, num_papers, d), np.nan)
        recs = np.full((num_reviewers, num_papers), np.nan)
        for (i, a), (vec, rec) in cells.items():
            if not (0 <= i < num_reviewers and 0 <= a < num_papers):
                raise DatasetError(f"cell ({i}, {a}) outside the {num_reviewers}x{num_papers} matrix")
            vec = np.atleast_1d(np.asarray(vec, dtype=float))
            if vec.shape != (d,):
                raise DatasetError(f"cell ({i}, {a}) has {vec.size} criteria, expected {d}")
            scores[i, a] = vec
            recs[i, a] = rec
        return validate_dataset(scores, recs, strict=strict)


@dataclass(frozen=True)
class Params:
    p: float = 1.0
    q: float = 1.0
    tolerance: float = 1e-7
    seed: int = 0

    def __post_init__(self):
        for name in ("p", "q"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 1:
                raise ValueError(f"{name} must be a finite real >= 1, got {value}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")


def validate_dataset(
    scores,
    recommendations,
    *,
    reviewer_ids: Sequence[str] | None = None,
    paper_ids: Sequence[str] | None = None,
    strict: bool = False,
) -> ReviewDataset:
    """Check all dataset invariants and return an immutable :class:`ReviewDataset`.

    ``scores`` may be ``(n, m)`` for a single criterion.  Missing cells are
    encoded as NaN.  Per-reviewer monotonicity violations are errors when
    ``strict`` is set and recorded warnings otherwise.
    """
    recs = np.asarray(recommendations, dtype=float)
    xs = np.asarray(scores, dtype=float)
    if recs.ndim != 2 or recs.size == 0:
        raise DatasetError("recommendations must be a nonempty reviewer x paper matrix")
    if xs.ndim == 2:
        xs = xs[:, :, None]
    if xs.ndim != 3 or xs.shape[:2] != recs.shape or xs.shape[2] == 0:
        raise DatasetError(f"scores shape {xs.shape} does not match recommendations {recs.shape}")
    n, m, d = xs.shape

    reviewer_ids = tuple(str(r) for r in reviewer_ids) if reviewer_ids is not None else tuple(f"r{i}" for i in range(n))
    paper_ids = tuple(str(a) for a in paper_ids) if paper_ids is not None else tuple(f"p{a}" for a in range(m))
    if len(reviewer_ids) != n or len(paper_ids) != m:
        raise DatasetError("id lists do not match the matrix dimensions")
    if len(set(reviewer_ids)) != n or len(set(paper_ids)) != m:
        raise DatasetError("duplicate reviewer or paper ids")

    missing = np.isnan(recs) | np.isnan(xs).any(axis=2)
    if missing.any():
        i, a = map(int, np.argwhere(missing)[0])
        raise DatasetError(f"incomplete matrix: missing cell (reviewer {reviewer_ids[i]!r}, paper {paper_ids[a]!r})")
    for name, arr in (("score", xs), ("recommendation", recs)):
        bad = (arr < SCORE_MIN) | (arr > SCORE_MAX) | ~np.isfinite(arr)
        if bad.any():
            idx = tuple(int(v) for v in np.argwhere(bad)[0])
            raise DatasetError(f"{name} value {arr[idx]} at {idx} outside [0, 10]")

    warnings: list[str] = []
    for i in range(n):
        leq = (xs[i][:, None, :] <= xs[i][None, :, :]).all(axis=2)
        equal = leq & leq.T
        conflict = equal & (recs[i][:, None] != recs[i][None, :])
        if conflict.any():
            a, b = map(int, np.argwhere(conflict)[0])
            raise DatasetError(
                f"reviewer {reviewer_ids[i]!r} gives equal score vectors to papers "
                f"{paper_ids[a]!r} and {paper_ids[b]!r} but different recommendations"
            )
        violated = leq & (recs[i][:, None] > recs[i][None, :])
        if violated.any():
            a, b = map(int, np.argwhere(violated)[0])
            msg = (
                f"reviewer monotonicity violated: reviewer {reviewer_ids[i]!r} scores paper "
                f"{paper_ids[a]!r} <= {paper_ids[b]!r} but recommends {recs[i, a]:g} > {recs[i, b]:g}"
            )
            if strict:
                raise DatasetError(msg)
            logger.debug(msg)
            warnings.append(msg)

    return ReviewDataset(_freeze(xs), _freeze(recs), reviewer_ids, paper_ids, tuple(warnings))


@dataclass(frozen=True, eq=False)
class MonotoneOrder:
    """Pooled-node DAG over the distinct score vectors of a dataset.

    Node ``k`` holds every cell whose score vector equals ``vectors[k]``;
    nodes are sorted lexicographically by vector.  An edge ``(u, v)`` means
    the fitted value at ``u`` must not exceed the one at ``v``.  Edges are
    transitively reduced; :attr:`closure` gives full reachability.
    """

    vectors: np.ndarray
    nodes: tuple[tuple[tuple[int, int], ...], ...]
    edges: tuple[tuple[int, int], ...]
    cell_node: np.ndarray
    closure: np.ndarray

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def closure_edges(self) -> list[tuple[int, int]]:
        return [(int(u), int(v)) for u, v in np.argwhere(self.closure)]


def order_from_vectors(vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pool equal rows and return ``(unique_vectors, inverse, strict_leq)``."""
    vectors = np.asarray(vectors, dtype=float)
    uniq, inverse = np.unique(vectors, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    strict = (uniq[:, None, :] <= uniq[None, :, :]).all(axis=2)
    np.fill_diagonal(strict, False)
    return uniq, inverse, strict


def transitive_reduction(strict: np.ndarray) -> np.ndarray:
    s = strict.astype(np.float32)
    return strict & ~((s @ s) > 0)


def build_monotone_order(ds: ReviewDataset) -> MonotoneOrder:
    n, m, d = ds.scores.shape
    uniq, inverse, strict = order_from_vectors(ds.scores.reshape(n * m, d))
    cell_node = inverse.reshape(n, m)
    members: list[list[tuple[int, int]]] = [[] for _ in range(len(uniq))]
    for i in range(n):
        for a in range(m):
            members[cell_node[i, a]].append((i, a))
    reduced = transitive_reduction(strict)
    edges = tuple((int(u), int(v)) for u, v in np.argwhere(reduced))
    cell_node = np.array(cell_node, dtype=int)
    cell_node.setflags(write=False)
    strict.setflags(write=False)
    return MonotoneOrder(_freeze(uniq), tuple(tuple(c) for c in members), edges, cell_node, strict)


@dataclass(frozen=True, eq=False)
class HiddenScores:
    """Objectivity view of a dataset: one score vector per paper."""

    paper_vectors: np.ndarray
    recommendations: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.paper_vectors.shape[0]


def apply_objectivity(ds: ReviewDataset) -> HiddenScores:
    same = (ds.scores == ds.scores[0:1]).all(axis=(0, 2))
    if not same.all():
        a = int(np.argmin(same))
        raise ObjectivityError(a, ds.paper_ids[a])
    return HiddenScores(_freeze(ds.scores[0]), ds.recommendations)


def satisfies_objectivity(ds: ReviewDataset) -> bool:
    return bool((ds.scores == ds.scores[0:1]).all())


@dataclass(frozen=True, eq=False)
class FittedValues:
    """ERM output: one fitted value per (reviewer, paper) cell."""

    values: np.ndarray
    objective: float = 0.0

    def __getitem__(self, cell: tuple[int, int]) -> float:
        return float(self.values[cell])


@dataclass(frozen=True, eq=False)
class Solution:
    scores: np.ndarray
    erm_loss: float
    aggregation_loss: float

    def __getitem__(self, paper: int) -> float:
        return float(self.scores[paper])
