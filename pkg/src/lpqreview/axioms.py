"""Domination relations, axiom checks and randomized audits."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .engine import hidden_scores_solution, reviewer_distance, solve_dataset
from .generate import random_hidden_dataset, random_monotone_dataset
from .model import Params, ReviewDataset, satisfies_objectivity

logger = logging.getLogger(__name__)

WEAK_TOL = 1e-6
STRICT_TOL = 1e-9
SP_TOL = 1e-9

AXIOMS = ("consensus", "efficiency", "consistency", "strategy_proofness")
MODES = ("plain", "with_scores")


class Domination(str, Enum):
    NONE = "none"
    WEAK = "weak"
    STRICT = "strict"

    def __bool__(self) -> bool:
        return self is not Domination.NONE


def dominates(rec_a, rec_b) -> Domination:
    """Does column ``a`` dominate column ``b`` under some reviewer permutation?

    Comparing sorted vectors suffices: if any permutation works then the
    sorted pairing works, and strictness holds unless the sorted vectors
    coincide.
    """
    a = np.sort(np.asarray(rec_a, dtype=float))
    b = np.sort(np.asarray(rec_b, dtype=float))
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if not np.all(a >= b):
        return Domination.NONE
    return Domination.WEAK if np.array_equal(a, b) else Domination.STRICT


def _perfect_matching(adj: np.ndarray) -> bool:
    n = adj.shape[0]
    if n == 0:
        return True
    if not adj.any(axis=1).all() or not adj.any(axis=0).all():
        return False
    match = maximum_bipartite_matching(csr_matrix(adj.astype(np.int8)), perm_type="column")
    return bool(np.all(match >= 0))


def dominates_with_scores(xa, ya, xb, yb) -> Domination:
    """Domination of paper a over paper b when score vectors must also dominate.

    ``xa``/``xb`` are ``(n, d)`` score vectors and ``ya``/``yb`` length-``n``
    recommendations, one row per reviewer.  Weak domination is a perfect
    matching in the graph of componentwise-dominating (reviewer, reviewer)
    pairs; strictness forces each strictly dominating edge in turn.
    """
    xa, xb = np.atleast_2d(np.asarray(xa, dtype=float)), np.atleast_2d(np.asarray(xb, dtype=float))
    ya, yb = np.asarray(ya, dtype=float).ravel(), np.asarray(yb, dtype=float).ravel()
    if xa.shape != xb.shape or ya.shape != yb.shape or xa.shape[0] != ya.size:
        raise ValueError("size mismatch between the two papers")
    geq = (xa[:, None, :] >= xb[None, :, :]).all(axis=2) & (ya[:, None] >= yb[None, :])
    if not _perfect_matching(geq):
        return Domination.NONE
    strict = geq & ((xa[:, None, :] > xb[None, :, :]).any(axis=2) | (ya[:, None] > yb[None, :]))
    n = geq.shape[0]
    for i, j in np.argwhere(strict):
        rows = np.arange(n) != i
        cols = np.arange(n) != j
        if _perfect_matching(geq[np.ix_(rows, cols)]):
            return Domination.STRICT
    return Domination.WEAK


def paper_domination(ds: ReviewDataset, a: int, b: int, mode: str) -> Domination:
    if mode == "plain":
        return dominates(ds.recommendations[:, a], ds.recommendations[:, b])
    return dominates_with_scores(ds.scores[:, a], ds.recommendations[:, a], ds.scores[:, b], ds.recommendations[:, b])


@dataclass
class AxiomReport:
    """Outcome of one axiom check.

    A ``violated`` verdict always carries a witness holding enough to replay
    the check: the dataset, params, setting, papers or reviewer involved and
    both solutions.
    """

    axiom: str
    mode: str
    verdict: str
    witness: dict[str, Any] | None = None
    detail: str = ""
    checked: int = 0

    def __post_init__(self):
        if self.verdict == "violated" and self.witness is None:
            raise ValueError("violated reports need a witness")

    @property
    def violated(self) -> bool:
        return self.verdict == "violated"


def _check_mode(mode: str):
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")


def _witness(ds, params, setting, solution, **extra) -> dict[str, Any]:
    w = {"dataset": ds, "params": params, "setting": setting, "solution": np.array(solution.scores)}
    w.update(extra)
    return w


def check_consensus(ds: ReviewDataset, params: Params, mode: str = "plain", setting: str = "auto", solution=None) -> AxiomReport:
    _check_mode(mode)
    recs = ds.recommendations
    unanimous = np.all(recs == recs[0:1], axis=0)
    if mode == "with_scores":
        unanimous &= np.all(ds.scores == ds.scores[0:1], axis=(0, 2))
    papers = np.flatnonzero(unanimous)
    if papers.size == 0:
        return AxiomReport("consensus", mode, "inconclusive", detail="no unanimous paper")
    if solution is None:
        solution = solve_dataset(ds, params, setting)[1]
    for a in papers:
        if abs(solution.scores[a] - recs[0, a]) > WEAK_TOL:
            return AxiomReport(
                "consensus", mode, "violated",
                _witness(ds, params, setting, solution, papers=(int(a),)),
                f"paper {ds.paper_ids[a]} is unanimous at {recs[0, a]:g} but scored {solution.scores[a]:.9g}",
                checked=papers.size,
            )
    return AxiomReport("consensus", mode, "holds", checked=papers.size)


def _pairwise(ds, params, mode, setting, solution, strict_required: bool, axiom: str) -> AxiomReport:
    _check_mode(mode)
    m = ds.num_papers
    relations = {}
    for a in range(m):
        for b in range(m):
            if a != b:
                rel = paper_domination(ds, a, b, mode)
                if rel:
                    relations[(a, b)] = rel
    if not relations:
        return AxiomReport(axiom, mode, "inconclusive", detail="no dominating pair")
    if solution is None:
        solution = solve_dataset(ds, params, setting)[1]
    s = solution.scores
    for (a, b), rel in relations.items():
        bad = s[a] < s[b] - WEAK_TOL
        why = f"paper {ds.paper_ids[a]} {rel.value}ly dominates {ds.paper_ids[b]} but {s[a]:.9g} < {s[b]:.9g}"
        if not bad and strict_required and rel is Domination.STRICT and not s[a] > s[b] + STRICT_TOL:
            bad = True
            why = f"paper {ds.paper_ids[a]} strictly dominates {ds.paper_ids[b]} but {s[a]:.9g} <= {s[b]:.9g}"
        if bad:
            return AxiomReport(axiom, mode, "violated", _witness(ds, params, setting, solution, papers=(a, b)), why, len(relations))
    return AxiomReport(axiom, mode, "holds", checked=len(relations))


def check_efficiency(ds: ReviewDataset, params: Params, mode: str = "plain", setting: str = "auto", solution=None) -> AxiomReport:
    """Weak domination must imply s_a >= s_b (up to 1e-6)."""
    return _pairwise(ds, params, mode, setting, solution, False, "efficiency")


def check_consistency(ds: ReviewDataset, params: Params, mode: str = "plain", setting: str = "auto", solution=None) -> AxiomReport:
    """Efficiency plus strictly separated scores under strict domination."""
    return _pairwise(ds, params, mode, setting, solution, True, "consistency")


def check_strategy_proofness(
    ds: ReviewDataset,
    params: Params,
    reviewer: int,
    misreport_recs=None,
    misreport_scores=None,
    setting: str = "auto",
    honest=None,
) -> AxiomReport:
    """Compare the reviewer's L2 distance to the solution before and after a misreport.

    The distance is always measured against the reviewer's true
    recommendations.  Score-vector misreports are an extension of the
    recommendation-only axiom and are flagged in the report's mode.
    """
    if not 0 <= reviewer < ds.num_reviewers:
        raise ValueError(f"reviewer index {reviewer} out of range")
    if misreport_recs is None and misreport_scores is None:
        raise ValueError("empty misreport")
    recs = np.array(ds.recommendations)
    scores = np.array(ds.scores)
    if misreport_recs is not None:
        row = np.asarray(misreport_recs, dtype=float)
        if row.shape != (ds.num_papers,):
            raise ValueError("malformed recommendation misreport")
        recs[reviewer] = row
    if misreport_scores is not None:
        block = np.asarray(misreport_scores, dtype=float).reshape(ds.num_papers, ds.num_criteria)
        scores[reviewer] = block
    manipulated_ds = ds.replace(scores=scores, recommendations=recs)
    mode = "plain" if misreport_scores is None else "with_scores"
    if setting == "hidden" and not satisfies_objectivity(manipulated_ds):
        setting = "non_hidden"
    if honest is None:
        honest = solve_dataset(ds, params, setting)[1]
    manipulated = solve_dataset(manipulated_ds, params, setting)[1]
    truth = ds.recommendations[reviewer]
    before = reviewer_distance(honest.scores, truth)
    after = reviewer_distance(manipulated.scores, truth)
    witness = {
        "dataset": ds,
        "params": params,
        "setting": setting,
        "reviewer": reviewer,
        "misreport_recs": None if misreport_recs is None else np.asarray(misreport_recs, dtype=float),
        "misreport_scores": None if misreport_scores is None else np.asarray(misreport_scores, dtype=float),
        "solution": np.array(honest.scores),
        "manipulated_solution": np.array(manipulated.scores),
        "distance_before": before,
        "distance_after": after,
    }
    if after < before - SP_TOL:
        return AxiomReport("strategy_proofness", mode, "violated", witness, f"distance {before:.9g} -> {after:.9g}", 1)
    return AxiomReport("strategy_proofness", mode, "holds", None, f"distance {before:.9g} -> {after:.9g}", 1)


def replay(report: AxiomReport) -> AxiomReport:
    """Re-run the check recorded in a violated report's witness."""
    w = report.witness
    if w is None:
        raise ValueError("nothing to replay: report has no witness")
    if report.axiom == "strategy_proofness":
        return check_strategy_proofness(
            w["dataset"], w["params"], w["reviewer"], w["misreport_recs"], w["misreport_scores"], w["setting"]
        )
    fn = {"consensus": check_consensus, "efficiency": check_efficiency, "consistency": check_consistency}[report.axiom]
    return fn(w["dataset"], w["params"], report.mode, w["setting"])


# ---------------------------------------------------------------------------
# randomized audits


@dataclass
class AuditSettings:
    """Knobs for :func:`audit_random`."""

    hidden: bool = True
    num_reviewers: int = 3
    num_papers: int = 2
    num_criteria: int = 2
    levels: int = 11
    axioms: tuple[str, ...] = AXIOMS
    mode: str = "plain"
    misreports: int = 20
    stop_on_violation: bool = False
    extra: dict = field(default_factory=dict)


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, trial])


def trial_dataset(settings: AuditSettings, seed: int, trial: int) -> ReviewDataset:
    """Dataset of a given trial; reproducible from ``(seed, trial)`` alone."""
    rng = trial_rng(seed, trial)
    if settings.hidden:
        return random_hidden_dataset(rng, settings.num_reviewers, settings.num_papers, levels=settings.levels)
    return random_monotone_dataset(rng, settings.num_reviewers, settings.num_papers, settings.num_criteria)


def _misreport_rows(rng: np.random.Generator, truth: np.ndarray, count: int) -> np.ndarray:
    """Mix of uniform rows, grid rows and local perturbations of the true row."""
    m = truth.size
    k1 = count // 3
    k2 = count // 3
    uniform = rng.uniform(0, 10, size=(k1, m))
    grid = rng.integers(0, 21, size=(k2, m)) / 2.0
    local = np.clip(truth + rng.normal(0, 1.0, size=(count - k1 - k2, m)), 0, 10)
    return np.concatenate([uniform, grid, local])


def _fast_hidden_sp(ds, params, rows, reviewer, honest) -> AxiomReport | None:
    """Vectorized recommendation misreports for hidden scores with p == q."""
    n, m = ds.recommendations.shape
    k = rows.shape[0]
    batch = np.repeat(ds.recommendations[None], k, axis=0)
    batch[:, reviewer] = rows
    scores = hidden_scores_solution(batch.transpose(1, 0, 2).reshape(n, k * m), params.p).reshape(k, m)
    truth = ds.recommendations[reviewer]
    before = reviewer_distance(honest.scores, truth)
    after = np.sqrt(((scores - truth) ** 2).sum(axis=1))
    worst = int(np.argmin(after))
    if after[worst] < before - SP_TOL:
        # confirm through the generic checker so the witness is canonical
        return check_strategy_proofness(ds, params, reviewer, rows[worst], setting="hidden", honest=honest)
    return None


def audit_trial(ds: ReviewDataset, params: Params, settings: AuditSettings, rng: np.random.Generator) -> list[AxiomReport]:
    setting = "hidden" if settings.hidden else "non_hidden"
    honest = solve_dataset(ds, params, setting)[1]
    out = []
    for axiom in settings.axioms:
        if axiom == "consensus":
            out.append(check_consensus(ds, params, settings.mode, setting, honest))
        elif axiom == "efficiency":
            out.append(check_efficiency(ds, params, settings.mode, setting, honest))
        elif axiom == "consistency":
            out.append(check_consistency(ds, params, settings.mode, setting, honest))
        elif axiom == "strategy_proofness":
            reviewers = rng.integers(0, ds.num_reviewers, size=settings.misreports)
            found = None
            for i in range(ds.num_reviewers):
                rows = _misreport_rows(rng, ds.recommendations[i], int(np.sum(reviewers == i)))
                if rows.shape[0] == 0:
                    continue
                if settings.hidden and params.p == params.q:
                    found = _fast_hidden_sp(ds, params, rows, i, honest)
                else:
                    for row in rows:
                        rep = check_strategy_proofness(ds, params, i, row, setting=setting, honest=honest)
                        if rep.violated:
                            found = rep
                            break
                if found is not None:
                    break
            out.append(found if found is not None else AxiomReport("strategy_proofness", "plain", "holds", checked=settings.misreports))
        else:
            raise ValueError(f"unknown axiom {axiom!r}")
    return out


def audit_random(params: Params, settings: AuditSettings | None = None, trials: int = 100, seed: int = 0) -> list[AxiomReport]:
    """Run ``trials`` random datasets through the selected checks.

    Returns the violated reports; each witness records ``seed`` and
    ``trial`` so :func:`trial_dataset` regenerates the instance.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    settings = settings or AuditSettings()
    violations = []
    for t in range(trials):
        ds = trial_dataset(settings, seed, t)
        for rep in audit_trial(ds, params, settings, np.random.default_rng([seed, t, 1])):
            if rep.violated:
                rep.witness["seed"] = seed
                rep.witness["trial"] = t
                violations.append(rep)
        if violations and settings.stop_on_violation:
            break
    logger.info("audit: %d trials, %d violations", trials, len(violations))
    return violations
