"""Brute-force grid reference for small L(p,q) problems.

The search returns the exact minimizer of the L(p,q)^q objective over all
order-respecting assignments of grid values (ties broken by the smallest
weighted norm).  It enumerates the grid by branch and bound over integer
boxes.  A box is discarded only when a lower bound of the objective over the
box exceeds the best feasible grid value found so far, or when the box can
beat neither that value nor the norm of the point attaining it, so no
candidate for the tie-broken grid optimum is ever pruned.

Three lower bounds are combined, each valid on its own:

* an interval bound that lets every cell take its best value in the box;
* a Lagrangian linearization at the box center (convexity of the objective);
* for q >= p, a separable model obtained from the tangent of t -> t^(q/p)
  at the incumbent, minimized exactly node by node.

The multipliers of the order constraints in the last two only affect how
much is pruned, never correctness.  Nothing here calls the conic solver or
the one-dimensional routines in :mod:`lpqreview.engine`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog, nnls

from .engine import ErmProblem, LpqProblem, aggregation_problem
from .model import FittedValues, Params

MAX_BOXES = 200_000_000
CHUNK = 100_000
LEAF_CHUNK = 10_000
BISECT_STEPS = 56
MAX_GRID_POINTS = 1_000_000


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    step: float = 0.01
    bounds: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("grid step must be positive")
        if self.bounds is not None and self.bounds[0] > self.bounds[1]:
            raise ValueError("grid bounds must satisfy lo <= hi")


def _closure_pairs(num_nodes: int, edges) -> np.ndarray:
    reach = np.zeros((num_nodes, num_nodes), dtype=bool)
    for u, w in edges:
        reach[u, w] = True
    for k in range(num_nodes):
        reach |= reach[:, [k]] & reach[[k], :]
    return np.argwhere(reach)


class _GridSearch:
    def __init__(self, targets, node, num_nodes, pairs, p, q, lo, step):
        self.y = np.asarray(targets, dtype=float)
        self.node = np.asarray(node)
        self.k = num_nodes
        self.pairs = pairs
        self.p, self.q = p, q
        self.lo, self.step = lo, step
        self.weights = np.bincount(self.node.ravel(), minlength=num_nodes).astype(float)
        self.onehot = np.eye(num_nodes)[self.node.ravel()]
        self.cons = np.zeros((len(pairs), num_nodes))
        if len(pairs):
            self.cons[np.arange(len(pairs)), pairs[:, 0]] = 1.0
            self.cons[np.arange(len(pairs)), pairs[:, 1]] = -1.0
        self.multipliers = np.zeros(len(pairs))
        # separable relaxation (only valid when t -> t^(q/p) is convex)
        self.separable = q >= p
        self.cells_of = [np.flatnonzero(self.node.ravel() == n) for n in range(num_nodes)]
        self.sep_weight = np.ones(self.y.size)
        self.sep_linear = np.zeros(num_nodes)
        self.sep_const = 0.0

    def values(self, idx):
        return self.lo + self.step * idx

    def _combine(self, dist):
        # dist: (N, G, M) nonnegative residual magnitudes
        powered = dist**self.p
        if self.p == self.q:
            return powered.sum(axis=(1, 2))
        return (powered.sum(axis=2) ** (self.q / self.p)).sum(axis=1)

    def objective(self, idx):
        v = self.values(idx)
        return self._combine(np.abs(self.y[None] - v[:, self.node]))

    def lower_bound(self, low, high):
        vl = self.values(low)[:, self.node]
        vh = self.values(high)[:, self.node]
        dist = np.maximum(0.0, np.maximum(vl - self.y[None], self.y[None] - vh))
        return self._combine(dist)

    def subgradient(self, vals):
        """A subgradient of the objective at each row of node values ``vals``."""
        r = vals[:, self.node] - self.y[None]
        mag = np.abs(r)
        if self.p == self.q:
            d = self.p * np.sign(r) * mag ** (self.p - 1)
        else:
            rows = (mag**self.p).sum(axis=2, keepdims=True)
            with np.errstate(divide="ignore", invalid="ignore"):
                outer = np.where(rows > 0, rows ** (self.q / self.p - 1), 0.0)
            d = self.q * outer * np.sign(r) * mag ** (self.p - 1)
        return d.reshape(len(vals), -1) @ self.onehot

    def update_multipliers(self, idx):
        """Refresh the parameters of the convexity bounds at the incumbent ``idx``.

        Any nonnegative multipliers (and any tangent point) give valid
        bounds; choosing them at the incumbent makes the bounds tight near
        the optimum.
        """
        vals = self.values(idx)
        if len(self.pairs):
            g = self.subgradient(vals[None])[0]
            self.multipliers = nnls(self.cons.T, -g)[0]
        if self.separable:
            self._update_separable(vals)

    def _update_separable(self, vals):
        r = vals[self.node] - self.y
        mag = np.abs(r)
        rows = (mag**self.p).sum(axis=1)
        ratio = self.q / self.p
        with np.errstate(divide="ignore", invalid="ignore"):
            w_row = np.where(rows > 0, ratio * rows ** (ratio - 1), 0.0) if ratio > 1 else np.ones_like(rows)
        # tangent of t -> t^ratio at each row's current sum
        self.sep_const = float(np.sum(rows**ratio - w_row * rows))
        w = np.repeat(w_row, self.y.shape[1])
        self.sep_weight = w
        # subdifferential interval of each node's separable part at vals
        rf, mf = r.ravel(), mag.ravel()
        slope = self.p * mf ** (self.p - 1) if self.p > 1 else np.ones_like(mf)
        at_kink = (rf == 0) & (self.p == 1)
        lo_cell = w * np.where(at_kink, -1.0, np.sign(rf) * slope)
        hi_cell = w * np.where(at_kink, 1.0, np.sign(rf) * slope)
        lo = np.array([lo_cell[c].sum() for c in self.cells_of])
        hi = np.array([hi_cell[c].sum() for c in self.cells_of])
        if not len(self.pairs):
            self.sep_linear = np.zeros(self.k)
            return
        # multipliers lam >= 0 with -(A^T lam) inside [lo, hi] as nearly as possible
        e, k = len(self.pairs), self.k
        at = self.cons.T
        cost = np.concatenate([np.zeros(e), np.ones(2 * k)])
        a_ub = np.block([[at, np.zeros((k, k)), -np.eye(k)], [-at, -np.eye(k), np.zeros((k, k))]])
        b_ub = np.concatenate([-lo, hi])
        res = linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=[(0, None)] * (e + 2 * k), method="highs")
        lam = np.maximum(res.x[:e], 0.0) if res.status == 0 else np.zeros(e)
        self.sep_linear = lam @ self.cons

    def separable_bound(self, low, high):
        """Lower bound from the tangent-weighted, order-relaxed separable model.

        For feasible x and convex t -> t^(q/p):
        f(x) >= const + sum_cells w |x_node - y|^p + (A^T lam) . x,
        whose minimum over a box splits into one convex 1-D problem per node.
        """
        vl, vh = self.values(low), self.values(high)
        y = self.y.ravel()
        total = np.full(len(low), self.sep_const)
        for n, cells in enumerate(self.cells_of):
            yc, wc, c = y[cells], self.sep_weight[cells], self.sep_linear[n]
            a, b = vl[:, n], vh[:, n]

            def h(x):
                return (wc * np.abs(x[:, None] - yc) ** self.p).sum(axis=1) + c * x

            if self.p == 1:
                # piecewise linear: the minimum sits at an endpoint or a clipped breakpoint
                cand = np.concatenate([a[:, None], b[:, None], np.clip(yc[None], a[:, None], b[:, None])], axis=1)
                vals = (wc * np.abs(cand[:, :, None] - yc)).sum(axis=2) + c * cand
                total += vals.min(axis=1)
                continue

            def dh(x):
                diff = x[:, None] - yc
                return (wc * self.p * np.sign(diff) * np.abs(diff) ** (self.p - 1)).sum(axis=1) + c

            left, right = a.copy(), b.copy()
            at_left = dh(a) >= 0
            right[at_left] = a[at_left]
            at_right = ~at_left & (dh(b) <= 0)
            left[at_right] = b[at_right]
            for _ in range(BISECT_STEPS):
                mid = 0.5 * (left + right)
                neg = dh(mid) < 0
                left = np.where(neg, mid, left)
                right = np.where(neg, right, mid)
            # tangent at the left end of the bracket bounds the minimum from below
            total += h(left) + np.minimum(0.0, dh(left)) * (right - left)
        return total

    def linear_bound(self, low, high):
        """Lagrangian linearization bound at the box centers.

        For feasible x, f(x) >= f(x) + lam . (A x) >= L(m) + grad L(m) . (x - m)
        by convexity, and the right side is minimized over the box in closed form.
        """
        vl, vh = self.values(low), self.values(high)
        m = 0.5 * (vl + vh)
        lam = self.multipliers
        d = self.subgradient(m) + lam @ self.cons
        base = self._combine(np.abs(self.y[None] - m[:, self.node])) + (m @ self.cons.T) @ lam
        return base + np.minimum(d * (vl - m), d * (vh - m)).sum(axis=1)

    def feasible_boxes(self, low, high):
        if len(self.pairs) == 0:
            return np.ones(len(low), dtype=bool)
        return np.all(low[:, self.pairs[:, 0]] <= high[:, self.pairs[:, 1]], axis=1)

    def monotone(self, idx):
        if len(self.pairs) == 0:
            return np.ones(len(idx), dtype=bool)
        return np.all(idx[:, self.pairs[:, 0]] <= idx[:, self.pairs[:, 1]], axis=1)

    def lift(self, low):
        """Smallest order-respecting point dominating ``low`` (inside feasible boxes)."""
        out = low.copy()
        for _ in range(self.k):
            if len(self.pairs) == 0:
                break
            before = out.copy()
            np.maximum.at(out.T, self.pairs[:, 1], out.T[self.pairs[:, 0]])
            if np.array_equal(before, out):
                break
        return out

    def norms(self, idx):
        vals = self.values(idx)
        return (self.weights * vals * vals).sum(axis=1)

    def norm_lower_bound(self, low, high):
        closest = np.clip(0.0, self.values(low), self.values(high))
        return (self.weights * closest * closest).sum(axis=1)

    def _best(self, pts):
        """Lexicographic best of ``pts``: lowest objective, then smallest norm among ties."""
        obj = self.objective(pts)
        fmin = float(obj.min())
        tied = np.flatnonzero(obj <= fmin + self.tie(fmin))
        norms = self.norms(pts[tied])
        k = tied[int(np.argmin(norms))]
        return pts[k], float(obj[k]), float(norms.min())

    @staticmethod
    def tie(f):
        return 1e-11 * max(1.0, f)

    def polish(self, idx, top: int):
        """Pattern search on the grid: all moves in {-1, 0, 1}^k times a halving step.

        Only used to find good incumbents early; optimality is certified by
        the bounds, not by this search.
        """
        moves = np.array(np.meshgrid(*([[-1, 0, 1]] * self.k), indexing="ij")).reshape(self.k, -1).T
        best = idx.copy()
        best_f = float(self.objective(best[None])[0])
        step = max(1, top // 4)
        while True:
            pts = np.clip(best[None] + step * moves, 0, top)
            pts = pts[self.monotone(pts)]
            obj = self.objective(pts)
            k = int(np.argmin(obj))
            if obj[k] < best_f - self.tie(best_f):
                best, best_f = pts[k], float(obj[k])
            elif step == 1:
                return best
            else:
                step //= 2

    def _prune(self, low, high, inc_f, inc_n, tie_break=True):
        lb = np.maximum(self.lower_bound(low, high), self.linear_bound(low, high))
        if self.separable:
            lb = np.maximum(lb, self.separable_bound(low, high))
        if not tie_break:
            return lb < inc_f - self.tie(inc_f)
        no_better = lb >= inc_f - self.tie(inc_f)
        return (lb <= inc_f + self.tie(inc_f)) & ~(no_better & (self.norm_lower_bound(low, high) >= inc_n))

    def _leaf_points(self, low, high):
        corners = np.array(np.meshgrid(*([[0, 1]] * self.k), indexing="ij")).reshape(self.k, -1).T
        pts = np.minimum(low[:, None, :] + corners[None], high[:, None, :]).reshape(-1, self.k)
        pts = np.unique(pts, axis=0)
        return pts[self.monotone(pts)]

    def _split(self, low, high):
        for dim in range(self.k):
            wide = high[:, dim] - low[:, dim] >= 2
            if not wide.any():
                continue
            mid = (low[wide, dim] + high[wide, dim]) // 2
            lower_half_high = high[wide].copy()
            lower_half_high[:, dim] = mid
            upper_half_low = low[wide].copy()
            upper_half_low[:, dim] = mid + 1
            low = np.concatenate([low[~wide], low[wide], upper_half_low])
            high = np.concatenate([high[~wide], lower_half_high, high[wide]])
        return low, high

    def run(self, top: int, tie_break: bool = True):
        """Branch and bound for the lexicographic (objective, norm) minimum.

        With ``tie_break`` off only the optimal objective is certified and the
        returned point is some grid optimum, which is much cheaper on flat
        optimal faces.

        A box is dropped when its objective lower bound exceeds the incumbent,
        or when it cannot beat the incumbent's objective and cannot beat its
        norm either.  Boxes are processed depth first in chunks, so memory
        stays bounded and the incumbent improves early; unit boxes are
        finished by enumerating their corners.
        """
        inc_pt, inc_f, inc_n = self._best(self.polish(np.full(self.k, top // 2, dtype=np.int64), top)[None])
        self.update_multipliers(inc_pt)

        def consider(pts):
            nonlocal inc_pt, inc_f, inc_n
            if len(pts) == 0:
                return
            pt, f, n = self._best(pts)
            if f < inc_f - self.tie(inc_f):
                pt, f, n = self._best(np.vstack([pt[None], self.polish(pt, top)[None]]))
            better = f < inc_f - self.tie(inc_f)
            if better or (tie_break and f <= inc_f + self.tie(inc_f) and n < inc_n):
                inc_pt, inc_f, inc_n = pt, f, n
                self.update_multipliers(inc_pt)

        stack = [(np.zeros((1, self.k), dtype=np.int64), np.full((1, self.k), top, dtype=np.int64))]
        examined = 0
        while stack:
            low, high = stack.pop()
            if len(low) > CHUNK:
                stack.append((low[CHUNK:], high[CHUNK:]))
                low, high = low[:CHUNK], high[:CHUNK]
            examined += len(low)
            if examined > MAX_BOXES:
                raise OracleError("grid too coarse to certify: candidate set exceeds the box budget")
            ok = self.feasible_boxes(low, high)
            low, high = low[ok], high[ok]
            if len(low) == 0:
                continue
            consider(self.lift(low))
            keep = self._prune(low, high, inc_f, inc_n, tie_break)
            low, high = low[keep], high[keep]
            leaf = np.all(high - low <= 1, axis=1)
            for k in range(0, int(leaf.sum()), LEAF_CHUNK):
                consider(self._leaf_points(low[leaf][k:k + LEAF_CHUNK], high[leaf][k:k + LEAF_CHUNK]))
            if (~leaf).any():
                stack.append(self._split(low[~leaf], high[~leaf]))
        return self.values(inc_pt), inc_f


def _search(prob: LpqProblem, grid: GridSpec, max_nodes: int):
    if prob.num_nodes > max_nodes:
        raise OracleError(f"oracle limited to {max_nodes} nodes, got {prob.num_nodes}")
    lo, hi = grid.bounds if grid.bounds is not None else (float(prob.targets.min()), float(prob.targets.max()))
    top = int(np.floor((hi - lo) / grid.step + 1e-9))
    if top > MAX_GRID_POINTS:
        raise OracleError("grid too fine for the oracle")
    pairs = _closure_pairs(prob.num_nodes, prob.edges)
    return _GridSearch(prob.targets, prob.node, prob.num_nodes, pairs, prob.p, prob.q, lo, grid.step), top


def grid_minimize(
    prob: LpqProblem, grid: GridSpec = GridSpec(), max_nodes: int = 6, tie_break: bool = True
) -> tuple[np.ndarray, float]:
    """Exact grid optimum of an :class:`LpqProblem` with at most ``max_nodes`` nodes.

    With ``tie_break`` the smallest-norm grid optimum is returned; without it
    the objective is still exact but the point is an arbitrary grid optimum.
    """
    search, top = _search(prob, grid, max_nodes)
    return search.run(top, tie_break)


def grid_best_near(prob: LpqProblem, center, radius: float, grid: GridSpec = GridSpec(), max_nodes: int = 6):
    """Best order-respecting grid point within ``radius`` (sup norm) of ``center``.

    Enumerates the grid of :func:`grid_minimize` exhaustively, so comparing
    the result with the global grid optimum tells whether a grid optimum
    lies that close to ``center``.  Returns ``(values, objective)``, or
    ``(None, inf)`` when no feasible grid point is that close.
    """
    search, top = _search(prob, grid, max_nodes)
    c = (np.asarray(center, dtype=float) - search.lo) / grid.step
    first = np.maximum(np.ceil(c - radius / grid.step - 1e-9), 0).astype(np.int64)
    last = np.minimum(np.floor(c + radius / grid.step + 1e-9), top).astype(np.int64)
    if np.any(first > last):
        return None, float("inf")
    axes = [np.arange(a, b + 1) for a, b in zip(first, last)]
    pts = np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(axes), -1).T
    pts = pts[search.monotone(pts)]
    if len(pts) == 0:
        return None, float("inf")
    obj = search.objective(pts)
    k = int(np.argmin(obj))
    return search.values(pts[k]), float(obj[k])


def grid_erm(prob: ErmProblem, grid: GridSpec = GridSpec()) -> tuple[np.ndarray, float]:
    """Grid optimum of the ERM stage; returns per-node values and the objective."""
    return grid_minimize(prob.lpq(), grid, max_nodes=6)


def grid_aggregate(fitted: FittedValues | np.ndarray, params: Params, grid: GridSpec = GridSpec()) -> tuple[np.ndarray, float]:
    values = fitted.values if isinstance(fitted, FittedValues) else np.asarray(fitted, dtype=float)
    return grid_minimize(aggregation_problem(values, params), grid, max_nodes=4)


def lipschitz_slack(prob: LpqProblem, step: float) -> float:
    """Upper bound on how much rounding an optimum to the grid can cost."""
    g, m = prob.targets.shape
    span = float(prob.targets.max() - prob.targets.min()) + step
    per_row = (m * span**prob.p) ** (1.0 / prob.p)
    # derivative of t -> t^q on [0, per_row] times the row p-norm's sensitivity
    lip = prob.q * per_row ** (prob.q - 1) * m ** (1.0 / prob.p)
    return g * lip * step
