"""Linear hypothesis class: per-reviewer monotone linear fits and their aggregation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import cvxpy as cp
import numpy as np
from scipy.optimize import minimize, nnls

from .engine import ConvergenceError, LpqProblem, solve_lpq
from .model import Params, ReviewDataset, Solution

KKT_TOL = 1e-7
ZERO_SLOPE = 1e-9
FIT_SLACK = 1e-10


@dataclass(frozen=True)
class LinearModel:
    """``h(x) = c[:d] . x + c[d]`` with every coefficient nonnegative."""

    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if c.ndim != 1 or c.size < 2:
            raise ValueError("need d slopes and one intercept")
        if np.any(c < -ZERO_SLOPE):
            raise ValueError(f"negative coefficient in {c}")
        object.__setattr__(self, "coefficients", np.maximum(c, 0.0))

    @property
    def slopes(self) -> np.ndarray:
        return self.coefficients[:-1]

    @property
    def intercept(self) -> float:
        return float(self.coefficients[-1])

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x @ self.slopes + self.intercept


def _design(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return np.hstack([x, np.ones((x.shape[0], 1))])


def _fit_loss(residual, p: float):
    if p == 1:
        return cp.sum(cp.abs(residual))
    if p == 2:
        return cp.sum_squares(residual)
    return cp.sum(cp.power(cp.abs(residual), p))


def _solve(problem: cp.Problem):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        try:
            problem.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
        except cp.SolverError:
            problem.solve(solver=cp.SCS, eps=1e-10, max_iters=200_000)
    if problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise ConvergenceError(f"linear fit failed with status {problem.status}")


def kkt_residual(a: np.ndarray, y: np.ndarray, c: np.ndarray, p: float) -> float:
    """Stationarity plus complementarity residual of the nonnegative p-power fit (p > 1)."""
    r = a @ c - y
    grad = a.T @ (p * np.sign(r) * np.abs(r) ** (p - 1))
    # projected gradient: zero on the free set, nonnegative on the active set
    proj = np.where(c > ZERO_SLOPE, grad, np.minimum(grad, 0.0))
    return float(np.max(np.abs(proj)))


def _polish_support(a, y, c, p):
    """Exact least-squares refit on the detected support (p == 2 only)."""
    support = c > 1e-7
    if not support.any():
        return np.zeros_like(c)
    sol, *_ = np.linalg.lstsq(a[:, support], y, rcond=None)
    if np.any(sol < 0):
        return None
    out = np.zeros_like(c)
    out[support] = sol
    return out


def _polish_unique(a, y, c, p):
    """Bounded quasi-Newton refinement; only used when the minimizer is unique."""

    def fun(v):
        r = a @ v - y
        return float(np.sum(np.abs(r) ** p)), a.T @ (p * np.sign(r) * np.abs(r) ** (p - 1))

    res = minimize(
        fun, c, jac=True, method="L-BFGS-B", bounds=[(0, None)] * c.size,
        options={"ftol": 0.0, "gtol": 1e-13, "maxiter": 2000},
    )
    c = np.maximum(res.x, 0.0)
    # finish with Newton steps on the free coordinates
    for _ in range(20):
        free = c > ZERO_SLOPE
        if not free.any():
            break
        r = a @ c - y
        w = p * (p - 1) * np.maximum(np.abs(r), 1e-12) ** (p - 2)
        af = a[:, free]
        grad = af.T @ (p * np.sign(r) * np.abs(r) ** (p - 1))
        hess = af.T @ (w[:, None] * af)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        trial = c.copy()
        trial[free] = np.maximum(c[free] - step, 0.0)
        if kkt_residual(a, y, trial, p) >= kkt_residual(a, y, c, p):
            break
        c = trial
    return c


def _min_norm_stage(a, y, c_star, p):
    """Smallest-norm coefficients among (near-)minimizers of the fit loss."""
    c = cp.Variable(a.shape[1], nonneg=True)
    if p > 1:
        # predictions are unique for p > 1, so fixing them describes the optimal set
        cons = [a @ c == a @ c_star]
    else:
        fstar = float(np.abs(a @ c_star - y).sum())
        cons = [cp.sum(cp.abs(a @ c - y)) <= fstar + FIT_SLACK * max(1.0, fstar)]
    try:
        _solve(cp.Problem(cp.Minimize(cp.sum_squares(c)), cons))
    except ConvergenceError:
        return c_star
    coef = np.maximum(c.value, 0.0)
    if p == 2:
        polished = _polish_support(a, y, coef, p)
        if polished is not None and kkt_residual(a, y, polished, p) <= kkt_residual(a, y, coef, p) + 1e-12:
            coef = polished
    return coef


def fit_reviewer(x, y, p: float = 2.0) -> LinearModel:
    """Nonnegative linear fit minimizing sum |h(x_a) - y_a|^p.

    Among minimizers the coefficient vector of smallest Euclidean norm is
    returned.  For p > 1 the fitted predictions are unique, so the second
    stage fixes them exactly; for p == 1 it keeps the loss within a relative
    slack of the optimum.
    """
    a = _design(x)
    y = np.asarray(y, dtype=float).ravel()
    if a.shape[0] != y.size or y.size == 0:
        raise ValueError("need at least one (scores, recommendation) cell")
    unique = p > 1 and np.linalg.matrix_rank(a) == a.shape[1]
    if unique and p == 2:
        # strictly convex: the active-set solution is the only minimizer
        coef = nnls(a, y)[0]
    else:
        c = cp.Variable(a.shape[1], nonneg=True)
        _solve(cp.Problem(cp.Minimize(_fit_loss(a @ c - y, p))))
        coef = np.maximum(c.value, 0.0)
        if unique:
            polished = _polish_unique(a, y, coef, p)
            if kkt_residual(a, y, polished, p) < kkt_residual(a, y, coef, p):
                coef = polished
        else:
            coef = _min_norm_stage(a, y, coef, p)
    if p > 1:
        res = kkt_residual(a, y, coef, p)
        scale = max(1.0, float(np.abs(a).max()) * float(np.abs(y).max()))
        if res > KKT_TOL * scale * 10:
            raise ConvergenceError("linear fit did not reach stationarity", {"kkt": res})
    return LinearModel(coef)


def _lpq_rows(targets: np.ndarray, p: float, q: float, tolerance: float = 1e-7) -> np.ndarray:
    """Unconstrained L(p,q) center of the rows of ``targets``."""
    targets = np.asarray(targets, dtype=float)
    n, k = targets.shape
    prob = LpqProblem(targets, np.tile(np.arange(k), (n, 1)), k, (), p, q)
    return solve_lpq(prob, tolerance)


def aggregate_coefficients(models: list[LinearModel], p: float, q: float) -> LinearModel:
    if not models:
        raise ValueError("need at least one model")
    coeffs = np.stack([m.coefficients for m in models])
    return LinearModel(np.maximum(_lpq_rows(coeffs, p, q), 0.0))


def aggregate_score_vectors(ds: ReviewDataset, p: float, q: float) -> np.ndarray:
    """Per paper, the L(p,q) center of the reviewers' score vectors; shape (m, d)."""
    return np.stack([_lpq_rows(ds.scores[:, a, :], p, q) for a in range(ds.num_papers)])


@dataclass
class LinearResult:
    models: list[LinearModel]
    combined: LinearModel
    vectors: np.ndarray
    solution: Solution


def linear_pipeline(ds: ReviewDataset, params: Params) -> LinearResult:
    """Fit every reviewer, aggregate coefficients and score vectors, then score papers."""
    p, q = params.p, params.q
    models = [fit_reviewer(ds.scores[i], ds.recommendations[i], p) for i in range(ds.num_reviewers)]
    combined = aggregate_coefficients(models, p, q)
    vectors = aggregate_score_vectors(ds, p, q)
    scores = combined.predict(vectors)
    residual = np.stack([m.predict(ds.scores[i]) - ds.recommendations[i] for i, m in enumerate(models)])
    fit_loss = float(((np.abs(residual) ** p).sum(axis=1) ** (q / p)).sum() ** (1 / q))
    coeffs = np.stack([m.coefficients for m in models])
    agg_loss = float(((np.abs(coeffs - combined.coefficients) ** p).sum(axis=1) ** (q / p)).sum() ** (1 / q))
    return LinearResult(models, combined, vectors, Solution(scores, fit_loss, agg_loss))


def detect_ignored_criteria(models: list[LinearModel]) -> set[int]:
    """Zero-based indices of criteria whose slope is zero for every reviewer."""
    slopes = np.stack([m.slopes for m in models])
    return {int(j) for j in np.flatnonzero(np.all(slopes <= ZERO_SLOPE, axis=0))}


def pipeline_sensitivity(ds: ReviewDataset, params: Params, delta: float, seed: int = 0) -> float:
    """Largest change in the final scores, per unit of input change, for one random nudge.

    Every score and recommendation is moved by at most ``delta`` (kept inside
    [0, 10]); the return value is ``max |s' - s| / delta``.
    """
    rng = np.random.default_rng(seed)
    base = linear_pipeline(ds, params).solution.scores
    scores = np.clip(ds.scores + rng.uniform(-delta, delta, size=ds.scores.shape), 0, 10)
    recs = np.clip(ds.recommendations + rng.uniform(-delta, delta, size=ds.recommendations.shape), 0, 10)
    moved = linear_pipeline(ds.replace(scores=scores, recommendations=recs), params).solution.scores
    return float(np.max(np.abs(moved - base)) / delta)
