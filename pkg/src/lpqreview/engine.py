"""L(p,q) empirical risk minimization and aggregation.

Both stages minimize ``sum_g (sum_j |y_gj - v[node_gj]|^p)^(q/p)``, i.e. the
q-th power of the L(p,q) loss, where rows ``g`` are reviewers.  They differ
only in the node map and the order constraints:

* ERM: nodes are pooled score vectors, constrained by the monotone order;
* aggregation: nodes are papers, unconstrained.

Among multiple minimizers (possible when p == 1 or q == 1) the point with the
smallest Euclidean norm of the full per-cell vector is returned.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import (
    FittedValues,
    MonotoneOrder,
    Params,
    ReviewDataset,
    Solution,
    apply_objectivity,
    build_monotone_order,
    satisfies_objectivity,
)

logger = logging.getLogger(__name__)

TIE_SLACK = 1e-10
RANGE_SLACK = 1e-9
ROW_SLACK = 1e-9
BISECTION_MAX_ITER = 200
BISECTION_TOL = 1e-12


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residuals: dict | None = None):
        super().__init__(message if not residuals else f"{message} (residuals: {residuals})")
        self.residuals = residuals or {}


# ---------------------------------------------------------------------------
# one-dimensional problems


def left_median(values: Sequence[float]) -> float:
    """Smallest minimizer of ``s -> sum |v_i - s|``: the ceil(k/2)-th smallest value."""
    arr = np.sort(np.asarray(values, dtype=float).ravel())
    if arr.size == 0:
        raise ValueError("left_median of an empty list")
    return float(arr[(arr.size + 1) // 2 - 1])


def median_interval(values: Sequence[float]) -> tuple[float, float]:
    """Interval of minimizers of the sum of absolute deviations."""
    arr = np.sort(np.asarray(values, dtype=float).ravel())
    if arr.size == 0:
        raise ValueError("median_interval of an empty list")
    k = arr.size
    return float(arr[(k + 1) // 2 - 1]), float(arr[k // 2])


def min_norm_median(values: Sequence[float]) -> float:
    """Minimum-|s| point of the median interval (the left median for nonnegative data)."""
    lo, hi = median_interval(values)
    return float(min(max(0.0, lo), hi))


def power_derivative(values, s: float, p: float) -> float:
    """E'(s) for E(s) = sum |v_i - s|^p, i.e. p * sum sign(s - v_i) |s - v_i|^(p-1)."""
    diff = s - np.asarray(values, dtype=float)
    return float(p * np.sum(np.sign(diff) * np.abs(diff) ** (p - 1)))


def balance_gap(values, s: float, p: float) -> float:
    """Left side minus right side of the (p-1)-power balance equation at ``s``."""
    v = np.asarray(values, dtype=float)
    below = v[v <= s]
    above = v[v >= s]
    return float(np.sum((s - below) ** (p - 1)) - np.sum((above - s) ** (p - 1)))


def pmean_1d(values: Sequence[float], p: float) -> float:
    """Unique minimizer of ``s -> sum |v_i - s|^p`` for p > 1.

    Bisection on the strictly increasing derivative over [min, max], carried
    to floating-point resolution (at most 200 halvings).
    """
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("pmean_1d of an empty list")
    if p < 1:
        raise ValueError(f"exponent must be >= 1, got {p}")
    if p == 1:
        return min_norm_median(arr)
    lo, hi = float(arr.min()), float(arr.max())
    if lo == hi:
        return lo
    if p == 2:
        return float(np.clip(arr.mean(), lo, hi))
    for _ in range(BISECTION_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if power_derivative(arr, mid, p) > 0:
            hi = mid
        else:
            lo = mid
    return lo if abs(power_derivative(arr, lo, p)) <= abs(power_derivative(arr, hi, p)) else hi


def solve_1d(values: Sequence[float], p: float) -> float:
    return min_norm_median(values) if p == 1 else pmean_1d(values, p)


def solve_1d_columns(matrix: np.ndarray, p: float) -> np.ndarray:
    """Column-wise :func:`solve_1d` for an ``(n, m)`` array, vectorized over columns."""
    mat = np.asarray(matrix, dtype=float)
    if mat.ndim != 2 or mat.shape[0] == 0:
        raise ValueError("expected a nonempty (n, m) matrix")
    n = mat.shape[0]
    srt = np.sort(mat, axis=0)
    if p == 1:
        return np.clip(0.0, srt[(n + 1) // 2 - 1], srt[n // 2])
    if p == 2:
        return np.clip(mat.mean(axis=0), srt[0], srt[-1])
    lo, hi = srt[0].copy(), srt[-1].copy()
    for _ in range(BISECTION_MAX_ITER):
        mid = 0.5 * (lo + hi)
        active = (mid > lo) & (mid < hi)
        if not active.any():
            break
        diff = mid[None, :] - mat
        deriv = np.sum(np.sign(diff) * np.abs(diff) ** (p - 1), axis=0)
        up = active & (deriv > 0)
        down = active & ~(deriv > 0)
        hi[up] = mid[up]
        lo[down] = mid[down]
    d_lo = np.abs(np.sum(np.sign(lo[None, :] - mat) * np.abs(lo[None, :] - mat) ** (p - 1), axis=0))
    d_hi = np.abs(np.sum(np.sign(hi[None, :] - mat) * np.abs(hi[None, :] - mat) ** (p - 1), axis=0))
    return np.where(d_lo <= d_hi, lo, hi)


# ---------------------------------------------------------------------------
# general problem


@dataclass(frozen=True, eq=False)
class LpqProblem:
    """``min_v sum_g (sum_j |targets[g, j] - v[node[g, j]]|^p)^(q/p)`` s.t. ``v[u] <= v[w]`` per edge."""

    targets: np.ndarray
    node: np.ndarray
    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    p: float
    q: float

    def __post_init__(self):
        if self.targets.shape != self.node.shape or self.targets.ndim != 2:
            raise ValueError("targets and node maps must be matching 2-D arrays")
        if self.num_nodes < 1 or np.bincount(self.node.ravel(), minlength=self.num_nodes).min() == 0:
            raise ValueError("every node needs at least one target")

    @property
    def weights(self) -> np.ndarray:
        return np.bincount(self.node.ravel(), minlength=self.num_nodes).astype(float)

    def node_targets(self, k: int) -> np.ndarray:
        return self.targets[self.node == k]

    def objective(self, values) -> float:
        """Return the q-th power of the L(p,q) loss at ``values``."""
        v = np.asarray(values, dtype=float)
        resid = np.abs(self.targets - v[self.node])
        if self.p == self.q:
            return float(np.sum(resid ** self.p))
        rows = np.sum(resid ** self.p, axis=1)
        return float(np.sum(rows ** (self.q / self.p)))

    def loss(self, values) -> float:
        """The L(p,q) loss itself."""
        return self.objective(values) ** (1.0 / self.q)

    def violation(self, values) -> float:
        v = np.asarray(values, dtype=float)
        if not self.edges:
            return 0.0
        e = np.asarray(self.edges)
        return float(max(0.0, np.max(v[e[:, 0]] - v[e[:, 1]])))

    def sq_norm(self, values) -> float:
        v = np.asarray(values, dtype=float)
        return float(np.sum(self.weights * v * v))


def _zero_loss_point(prob: LpqProblem) -> np.ndarray | None:
    k = prob.num_nodes
    flat_node = prob.node.ravel()
    flat_y = prob.targets.ravel()
    lo = np.full(k, np.inf)
    hi = np.full(k, -np.inf)
    np.minimum.at(lo, flat_node, flat_y)
    np.maximum.at(hi, flat_node, flat_y)
    if np.any(lo != hi):
        return None
    if prob.violation(lo) > 0:
        return None
    return lo


def _components(num_nodes: int, edges, values: np.ndarray, tau: float) -> np.ndarray:
    parent = list(range(num_nodes))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, w in edges:
        if values[w] - values[u] <= tau:
            ru, rw = find(u), find(w)
            if ru != rw:
                parent[max(ru, rw)] = min(ru, rw)
    roots = np.array([find(x) for x in range(num_nodes)])
    _, labels = np.unique(roots, return_inverse=True)
    return labels.reshape(-1)


def _newton_blocks(prob: LpqProblem, labels: np.ndarray, x0: np.ndarray, iters: int = 60) -> np.ndarray:
    """Unconstrained Newton on block values; requires p, q > 1."""
    p, q = prob.p, prob.q
    bnode = labels[prob.node]
    nb = int(labels.max()) + 1
    onehot = np.zeros(prob.node.shape + (nb,))
    np.put_along_axis(onehot, bnode[..., None], 1.0, axis=-1)

    def fval(x):
        rows = np.sum(np.abs(prob.targets - x[bnode]) ** p, axis=1)
        return float(np.sum(rows ** (q / p)))

    x = x0.copy()
    f = fval(x)
    # tiny rows can overflow the curvature terms; such steps are rejected below
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for _ in range(iters):
            r = prob.targets - x[bnode]
            a = np.abs(r)
            rows = np.sum(a ** p, axis=1)
            safe_rows = np.maximum(rows, 1e-300)
            # dS_g/dx_b and d2S_g/dx_b^2 per row
            cell_grad = -p * np.sign(r) * a ** (p - 1)
            cell_hess = p * (p - 1) * np.maximum(a, 1e-12) ** (p - 2)
            gS = np.einsum("gj,gjb->gb", cell_grad, onehot)
            hS = np.einsum("gj,gjb->gb", cell_hess, onehot)
            c1 = (q / p) * safe_rows ** (q / p - 1)
            c2 = (q / p) * (q / p - 1) * safe_rows ** (q / p - 2)
            live = rows > 0
            c1 = np.where(live, c1, 0.0)
            c2 = np.where(live, c2, 0.0)
            grad = np.sum(c1[:, None] * gS, axis=0)
            hess = np.einsum("g,gb,gc->bc", c2, gS, gS) + np.diag(np.sum(c1[:, None] * hS, axis=0))
            if not np.all(np.isfinite(grad)) or np.max(np.abs(grad)) < 1e-15:
                break
            try:
                step = np.linalg.solve(hess + 1e-14 * np.eye(nb), grad)
            except np.linalg.LinAlgError:
                break
            # objective changes can fall below float resolution near the optimum,
            # so accept steps that do not measurably raise it
            t = 1.0
            accepted = False
            while t > 1e-12:
                cand = x - t * step
                fc = fval(cand)
                if fc <= f + 4 * np.finfo(float).eps * max(1.0, abs(f)):
                    accepted = True
                    x, f = cand, min(f, fc)
                    break
                t *= 0.5
            if not accepted or np.max(np.abs(t * step)) < 1e-15:
                break
    return x


def _polish(prob: LpqProblem, v: np.ndarray, scale: float) -> list[np.ndarray]:
    """Candidate refinements of an approximate optimum by pooling tight blocks."""
    p, q = prob.p, prob.q
    if not (p == q or (p > 1 and q > 1)):
        return []
    out = []
    seen = set()
    for tau in (1e-9, 1e-7, 1e-5, 1e-3):
        labels = _components(prob.num_nodes, prob.edges, v, tau * scale)
        key = labels.tobytes()
        if key in seen:
            continue
        seen.add(key)
        nb = int(labels.max()) + 1
        if p == q:
            block_vals = np.array([solve_1d(prob.targets[labels[prob.node] == b], p) for b in range(nb)])
        else:
            x0 = np.array([np.mean(v[labels == b]) for b in range(nb)])
            block_vals = _newton_blocks(prob, labels, x0)
        out.append(np.clip(block_vals[labels], prob.targets.min(), prob.targets.max()))
    return out


def _row_sums(prob: LpqProblem, values: np.ndarray) -> np.ndarray:
    return np.abs(prob.targets - values[prob.node]).sum(axis=1)


def _cvx_solve(
    prob: LpqProblem,
    tolerance: float,
    objective_cap: float | None = None,
    row_caps: np.ndarray | None = None,
) -> np.ndarray:
    """Minimize the objective, or the weighted norm over a sublevel set.

    With ``objective_cap`` the set is {objective <= cap}.  With ``row_caps``
    (p == 1 only) it is {row absolute-residual sums <= caps}, a polyhedron.
    """
    import cvxpy as cp

    g, mcols = prob.targets.shape
    v = cp.Variable(prob.num_nodes)
    resid = prob.targets.ravel() - v[prob.node.ravel()]
    p, q = prob.p, prob.q
    order_cons = []
    if prob.edges:
        e = np.asarray(prob.edges)
        order_cons.append(v[e[:, 0]] <= v[e[:, 1]])
    cons = list(order_cons)
    if p == q:
        obj = cp.sum(cp.abs(resid)) if p == 1 else cp.sum(cp.power(cp.abs(resid), p))
    else:
        t = cp.Variable(g)
        if p == 1:
            cons.append(cp.sum(cp.reshape(cp.abs(resid), (g, mcols), order="C"), axis=1) <= t)
        else:
            z = cp.Variable(g * mcols)
            rows = np.repeat(np.arange(g), mcols)
            cons.append(cp.constraints.PowCone3D(z, t[rows], resid, 1.0 / p))
            cons.append(cp.sum(cp.reshape(z, (g, mcols), order="C"), axis=1) == t)
        obj = cp.sum(t) if q == 1 else cp.sum(cp.power(t, q))
    if row_caps is not None:
        row_abs = cp.sum(cp.reshape(cp.abs(resid), (g, mcols), order="C"), axis=1)
        problem = cp.Problem(cp.Minimize(cp.sum(cp.multiply(prob.weights, cp.square(v)))), order_cons + [row_abs <= row_caps])
    elif objective_cap is None:
        problem = cp.Problem(cp.Minimize(obj), cons)
    else:
        problem = cp.Problem(cp.Minimize(cp.sum(cp.multiply(prob.weights, cp.square(v)))), cons + [obj <= objective_cap])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            problem.solve(
                solver="CLARABEL",
                tol_gap_abs=1e-11,
                tol_gap_rel=1e-11,
                tol_feas=1e-11,
                max_iter=400,
            )
        except cp.error.SolverError as exc:
            raise ConvergenceError(f"conic solver failed: {exc}") from exc
    if v.value is None or problem.status not in ("optimal", "optimal_inaccurate"):
        raise ConvergenceError(f"conic solver status {problem.status!r}")
    values = np.asarray(v.value, dtype=float)
    viol = prob.violation(values)
    if viol > max(tolerance, 1e-6):
        raise ConvergenceError("solution infeasible", {"edge_violation": viol, "status": problem.status})
    return values


def _pick(prob: LpqProblem, candidates: list[np.ndarray], ties_possible: bool) -> np.ndarray | None:
    """Lowest objective wins; on objective ties, earlier candidates win unless
    ties are genuine (p == 1 or q == 1), where the smaller norm wins."""
    best = None
    best_key = None
    for cand in candidates:
        if prob.violation(cand) > 1e-12:
            continue
        f = prob.objective(cand)
        norm = prob.sq_norm(cand)
        if best is None:
            best, best_key = cand, (f, norm)
            continue
        tie = 1e-12 * max(1.0, best_key[0])
        if f < best_key[0] - tie or (ties_possible and f <= best_key[0] + tie and norm < best_key[1]):
            best, best_key = cand, (f, norm)
    return best


def _face_walk(prob: LpqProblem, v: np.ndarray, sweeps: int = 20) -> np.ndarray:
    """Slide tied blocks toward zero while the objective stays flat.

    All moves together may raise the objective by at most one part in 1e15,
    so drift along directions where the loss curves upward stays below ~1e-7.
    """
    ref = prob.objective(v)
    allowed = ref + 1e-15 * max(1.0, ref)
    out = v.copy()
    ylo = max(0.0, float(prob.targets.min()))
    preds = _closure_lists(prob)
    for _ in range(sweeps):
        moved = False
        labels = _components(prob.num_nodes, prob.edges, out, 0.0)
        nb = int(labels.max()) + 1
        block_values = np.array([out[np.flatnonzero(labels == b)[0]] for b in range(nb)])
        for b in np.argsort(-block_values, kind="stable"):
            members = np.flatnonzero(labels == b)
            current = out[members[0]]
            floor = max([ylo] + [out[u] for k in members for u in preds[k] if labels[u] != b])
            if current <= floor:
                continue
            trial = out.copy()
            trial[members] = floor
            if prob.objective(trial) <= allowed:
                out = trial
                moved = True
                continue
            lo, hi = floor, current
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if mid <= lo or mid >= hi:
                    break
                trial[members] = mid
                if prob.objective(trial) <= allowed:
                    hi = mid
                else:
                    lo = mid
            if hi < current:
                out[members] = hi
                moved = True
        if not moved:
            break
    return out


def _closure_lists(prob: LpqProblem) -> list[list[int]]:
    """Direct predecessors of each node."""
    preds: list[list[int]] = [[] for _ in range(prob.num_nodes)]
    for u, w in prob.edges:
        preds[w].append(u)
    return preds


def solve_lpq(prob: LpqProblem, tolerance: float = 1e-7) -> np.ndarray:
    """Minimizer of ``prob`` with minimum-norm tie-breaking."""
    flat = prob.targets.ravel()
    ylo, yhi = float(flat.min()), float(flat.max())
    scale = max(1.0, yhi - ylo)

    exact = _zero_loss_point(prob)
    if exact is not None:
        return exact
    p, q = prob.p, prob.q
    if p == q and not prob.edges:
        return np.array([solve_1d(prob.node_targets(k), p) for k in range(prob.num_nodes)])

    ties_possible = p == 1 or q == 1
    v = _tidy(prob, _cvx_solve(prob, tolerance), ylo, yhi)
    if ties_possible:
        f_star = prob.objective(v)
        if p == 1 and q > 1:
            # row sums are unique over the optimal set when q > 1, which is
            # then a polyhedron; capping each row keeps the tie-break linear
            caps = _row_sums(prob, v) + ROW_SLACK * scale
            v_min = _tidy(prob, _cvx_solve(prob, tolerance, row_caps=caps), ylo, yhi)
        else:
            cap = f_star + TIE_SLACK * max(1.0, f_star)
            v_min = _tidy(prob, _cvx_solve(prob, tolerance, objective_cap=cap), ylo, yhi)
        f_min = prob.objective(v_min)
        if f_min > f_star + tolerance * max(1.0, f_star):
            raise ConvergenceError(
                "tie-breaking moved off the optimal face",
                {"objective": f_star, "tie_broken_objective": f_min},
            )
        v = v_min
    candidates = _polish(prob, v, scale)
    if ties_possible:
        walked = _face_walk(prob, v)
        candidates.append(walked)
    best = _pick(prob, candidates + [v], ties_possible)
    if best is None:
        raise ConvergenceError("no feasible candidate", {"edge_violation": prob.violation(v)})
    return best


def _tidy(prob: LpqProblem, v: np.ndarray, ylo: float, yhi: float) -> np.ndarray:
    v = np.clip(v, ylo, yhi)
    # remove solver-level noise on the order constraints
    return _repair_order(prob, v) if prob.edges else v


def _repair_order(prob: LpqProblem, v: np.ndarray) -> np.ndarray:
    """Raise each node to its predecessors' maximum; moves are bounded by the violation.

    Node indices follow lexicographic order of the score vectors, which is a
    topological order of the componentwise partial order.
    """
    out = v.copy()
    preds = _closure_lists(prob)
    for w in range(prob.num_nodes):
        for u in preds[w]:
            if out[u] > out[w]:
                out[w] = out[u]
    return out


# ---------------------------------------------------------------------------
# the two stages


@dataclass(frozen=True, eq=False)
class ErmProblem:
    """First-stage problem: recommendations grouped by pooled score vector."""

    order: MonotoneOrder
    recommendations: np.ndarray
    params: Params

    @classmethod
    def from_dataset(cls, ds: ReviewDataset, params: Params, order: MonotoneOrder | None = None) -> "ErmProblem":
        return cls(order if order is not None else build_monotone_order(ds), ds.recommendations, params)

    @property
    def targets(self) -> list[list[tuple[int, float]]]:
        """Per node, the (reviewer, recommendation) pairs pooled there."""
        return [[(i, float(self.recommendations[i, a])) for i, a in node] for node in self.order.nodes]

    def lpq(self) -> LpqProblem:
        return LpqProblem(
            np.asarray(self.recommendations, dtype=float),
            np.asarray(self.order.cell_node),
            self.order.num_nodes,
            self.order.edges,
            self.params.p,
            self.params.q,
        )


def erm_fit(prob: ErmProblem) -> FittedValues:
    lp = prob.lpq()
    node_values = solve_lpq(lp, prob.params.tolerance)
    values = node_values[lp.node]
    values.setflags(write=False)
    return FittedValues(values, lp.objective(node_values))


def aggregation_problem(fitted: np.ndarray, params: Params) -> LpqProblem:
    fitted = np.asarray(fitted, dtype=float)
    n, m = fitted.shape
    return LpqProblem(fitted, np.tile(np.arange(m), (n, 1)), m, (), params.p, params.q)


def aggregate_step(fitted: FittedValues, params: Params, erm_objective: float | None = None) -> Solution:
    lp = aggregation_problem(fitted.values, params)
    scores = solve_lpq(lp, params.tolerance)
    scores.setflags(write=False)
    erm_obj = fitted.objective if erm_objective is None else erm_objective
    return Solution(scores, erm_obj ** (1.0 / params.q), lp.loss(scores))


def aggregate(ds: ReviewDataset, params: Params) -> tuple[FittedValues, Solution]:
    """Run ERM under the monotone order and then the aggregation step."""
    fitted = erm_fit(ErmProblem.from_dataset(ds, params))
    solution = aggregate_step(fitted, params)
    lo, hi = float(ds.recommendations.min()), float(ds.recommendations.max())
    slack = RANGE_SLACK * max(1.0, hi - lo)
    if np.any(solution.scores < lo - slack) or np.any(solution.scores > hi + slack):
        raise ConvergenceError("aggregated scores left the recommendation range")
    return fitted, solution


def hidden_scores_solution(recommendations: np.ndarray, p: float) -> np.ndarray:
    """Per-paper solution for unconstrained hidden-scores data when p == q."""
    return solve_1d_columns(recommendations, p)


def reviewer_distance(scores: np.ndarray, row: np.ndarray) -> float:
    return float(math.sqrt(np.sum((np.asarray(scores) - np.asarray(row)) ** 2)))


SETTINGS = ("auto", "hidden", "non_hidden")


def resolve_setting(ds: ReviewDataset, setting: str = "auto") -> str:
    if setting not in SETTINGS:
        raise ValueError(f"unknown setting {setting!r}; expected one of {SETTINGS}")
    if setting == "hidden":
        apply_objectivity(ds)
        return "hidden"
    if setting == "auto":
        return "hidden" if satisfies_objectivity(ds) else "non_hidden"
    return setting


def solve_dataset(ds: ReviewDataset, params: Params, setting: str = "auto") -> tuple[FittedValues, Solution]:
    """Solve under the requested setting.

    With hidden scores the score vectors carry no information, so the
    recommendations themselves are aggregated (fitted values equal the raw
    recommendations).  Otherwise the full two-stage method runs.
    """
    if resolve_setting(ds, setting) == "non_hidden":
        return aggregate(ds, params)
    recs = np.asarray(ds.recommendations, dtype=float)
    fitted = FittedValues(recs, 0.0)
    if params.p == params.q:
        scores = hidden_scores_solution(recs, params.p)
        scores.setflags(write=False)
        return fitted, Solution(scores, 0.0, aggregation_problem(recs, params).loss(scores))
    return fitted, aggregate_step(fitted, params, 0.0)
