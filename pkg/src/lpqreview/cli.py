"""Command-line entry point.

Exit codes: 0 success, 1 bad input or flags, 2 a violation was found or
reproduced, 3 a reproduction case drifted from its expected values.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict, dataclass

import numpy as np

from . import attacks, axioms, repro
from .engine import ConvergenceError, solve_dataset
from .io import Report, emit_report, parse_reviews, residual_ranking
from .linear import detect_ignored_criteria, linear_pipeline
from .model import DatasetError, Params

EXIT_OK, EXIT_INPUT, EXIT_VIOLATION, EXIT_DRIFT = 0, 1, 2, 3

logger = logging.getLogger("lpqreview")


@dataclass
class RunConfig:
    p: float = 1.0
    q: float = 1.0
    tolerance: float = 1e-7
    seed: int = 0
    setting: str = "auto"
    tie_break: str = "min_l2"

    def params(self) -> Params:
        return Params(self.p, self.q, self.tolerance, self.seed)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _common(sub: argparse.ArgumentParser, p_default: float | None = 1.0, q_default: float | None = 1.0):
    sub.add_argument("--p", type=float, default=p_default)
    sub.add_argument("--q", type=float, default=q_default)
    sub.add_argument("--tolerance", type=float, default=1e-7)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", help="write the JSON report here (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lpqreview", description="L(p,q) aggregation of multi-criteria peer reviews")
    parser.add_argument("-v", "--verbose", action="store_true")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    agg = subs.add_parser("aggregate", help="fit and aggregate a review file")
    agg.add_argument("--input", required=True)
    agg.add_argument("--format", choices=("csv", "json"))
    agg.add_argument("--setting", choices=("auto", "hidden", "non_hidden"), default="auto")
    agg.add_argument("--csv", help="also write per-paper scores and per-cell residuals as CSV")
    agg.add_argument("--top", type=int, default=None, help="keep only the largest residuals")
    agg.add_argument("--strict", action="store_true", help="reject reviewers that are not monotone in their scores")
    _common(agg)

    aud = subs.add_parser("audit", help="randomized axiom audit")
    aud.add_argument("--axiom", choices=axioms.AXIOMS + ("all",), default="all")
    aud.add_argument("--with-scores", action="store_true")
    aud.add_argument("--setting", choices=("hidden", "non_hidden"), default="hidden")
    aud.add_argument("--trials", type=int, default=100)
    aud.add_argument("--reviewers", type=int, default=3)
    aud.add_argument("--papers", type=int, default=2)
    aud.add_argument("--misreports", type=int, default=20)
    aud.add_argument("--stop-on-violation", action="store_true")
    _common(aud)

    att = subs.add_parser("attack", help="run a manipulation construction")
    att.add_argument("--method", choices=("bisection", "score-misreport", "random"), required=True)
    att.add_argument("--epsilon", type=float, nargs="+", default=[0.1, 0.01, 0.001])
    att.add_argument("--input", help="dataset for --method random")
    att.add_argument("--reviewer", type=int, default=0)
    att.add_argument("--trials", type=int, default=200)
    att.add_argument("--strict", action="store_true", help="reject reviewers that are not monotone in their scores")
    _common(att, 2.0, 2.0)

    rep = subs.add_parser("repro", help="reproduce a constructed counterexample")
    rep.add_argument("--case", choices=sorted(repro.CASES), required=True)
    # each case has its own exponents unless overridden
    _common(rep, None, None)

    lin = subs.add_parser("linear", help="linear-model pipeline on a review file")
    lin.add_argument("--input", required=True)
    lin.add_argument("--format", choices=("csv", "json"))
    lin.add_argument("--strict", action="store_true", help="reject reviewers that are not monotone in their scores")
    _common(lin, 2.0, 2.0)
    return parser


def _config(args) -> RunConfig:
    p = 1.0 if args.p is None else args.p
    q = 1.0 if args.q is None else args.q
    cfg = RunConfig(p, q, args.tolerance, args.seed, getattr(args, "setting", "auto"))
    cfg.params()  # validates
    return cfg


def _cmd_aggregate(args, cfg: RunConfig):
    ds = parse_reviews(args.input, args.format, strict=args.strict)
    fitted, sol = solve_dataset(ds, cfg.params(), cfg.setting)
    report = Report("aggregate", {**asdict(cfg), "input": args.input})
    report.sections = {
        "solution": [{"paper_id": pid, "score": float(s)} for pid, s in zip(ds.paper_ids, sol.scores)],
        "fitted": fitted.values,
        "erm_loss": sol.erm_loss,
        "aggregation_loss": sol.aggregation_loss,
        "residual_ranking": residual_ranking(ds, fitted, args.top),
        "warnings": list(ds.warnings),
    }
    return report, EXIT_OK, args.csv


def _report_summary(r: axioms.AxiomReport) -> dict:
    w = r.witness or {}
    keep = {k: v for k, v in w.items() if k not in ("params",)}
    return {"axiom": r.axiom, "mode": r.mode, "verdict": r.verdict, "detail": r.detail, "witness": keep}


def _cmd_audit(args, cfg: RunConfig):
    if args.trials < 1:
        raise ValueError("--trials must be >= 1")
    settings = axioms.AuditSettings(
        hidden=args.setting == "hidden",
        num_reviewers=args.reviewers,
        num_papers=args.papers,
        axioms=axioms.AXIOMS if args.axiom == "all" else (args.axiom,),
        mode="with_scores" if args.with_scores else "plain",
        misreports=args.misreports,
        stop_on_violation=args.stop_on_violation,
    )
    found = axioms.audit_random(cfg.params(), settings, args.trials, cfg.seed)
    report = Report("audit", {**asdict(cfg), **{k: v for k, v in vars(args).items() if k not in ("out", "verbose")}})
    report.sections = {"trials": args.trials, "violations": [_report_summary(r) for r in found]}
    return report, EXIT_VIOLATION if found else EXIT_OK, None


def _attack_summary(a: attacks.AttackResult) -> dict:
    return {
        "dataset": a.dataset,
        "reviewer": a.reviewer,
        "misreport_recs": a.misreport_recs,
        "misreport_scores": a.misreport_scores,
        "honest_scores": a.honest.scores,
        "manipulated_scores": a.manipulated.scores,
        "distance_before": a.distance_before,
        "distance_after": a.distance_after,
        "gain": a.gain,
    }


def _cmd_attack(args, cfg: RunConfig):
    params = cfg.params()
    report = Report("attack", {**asdict(cfg), "method": args.method})
    if args.method == "bisection":
        result = attacks.construct_recommendation_attack(params)
        report.sections = {"crossing": attacks.find_crossing(params), "attack": _attack_summary(result)}
        return report, EXIT_VIOLATION if result.successful else EXIT_OK, None
    if args.method == "score-misreport":
        gaps = attacks.continuity_probe(params, args.epsilon)
        report.sections = {"gaps": [{"epsilon": e, "gap": g} for e, g in gaps]}
        return report, EXIT_VIOLATION if any(g > 1e-6 for _, g in gaps) else EXIT_OK, None
    if not args.input:
        raise ValueError("--method random needs --input")
    ds = parse_reviews(args.input, strict=args.strict)
    best = attacks.random_misreport_search(ds, params, args.reviewer, args.trials, cfg.seed)
    report.sections = {"attack": None if best is None else _attack_summary(best)}
    return report, EXIT_VIOLATION if best is not None else EXIT_OK, None


def _cmd_repro(args, cfg: RunConfig):
    overridden = args.p is not None or args.q is not None
    sections, violated = repro.CASES[args.case](cfg.params() if overridden else None)
    config = {**asdict(cfg), "case": args.case}
    if not overridden:
        config["p"] = config["q"] = "case default"
    report = Report("repro", config)
    report.sections = {"result": sections, "violation_reproduced": violated}
    return report, EXIT_VIOLATION if violated else EXIT_OK, None


def _cmd_linear(args, cfg: RunConfig):
    ds = parse_reviews(args.input, args.format, strict=args.strict)
    res = linear_pipeline(ds, cfg.params())
    report = Report("linear", {**asdict(cfg), "input": args.input})
    report.sections = {
        "models": {rid: m.coefficients for rid, m in zip(ds.reviewer_ids, res.models)},
        "combined": res.combined.coefficients,
        "vectors": {pid: v for pid, v in zip(ds.paper_ids, res.vectors)},
        "solution": [{"paper_id": pid, "score": float(s)} for pid, s in zip(ds.paper_ids, res.solution.scores)],
        "ignored_criteria": sorted(detect_ignored_criteria(res.models)),
    }
    return report, EXIT_OK, None


COMMANDS = {
    "aggregate": _cmd_aggregate,
    "audit": _cmd_audit,
    "attack": _cmd_attack,
    "repro": _cmd_repro,
    "linear": _cmd_linear,
}


def run_command(argv: list[str] | None = None, stdout=None) -> tuple[int, Report | None]:
    stdout = stdout or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT, None
    except SystemExit as exc:  # --help
        return int(exc.code or 0), None
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        cfg = _config(args)
        report, code, csv_path = COMMANDS[args.command](args, cfg)
    except repro.ReproDrift as exc:
        print(f"reproduction drifted: {exc}", file=sys.stderr)
        return EXIT_DRIFT, None
    except (DatasetError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT, None
    except ConvergenceError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_INPUT, None
    text = emit_report(report, args.out, csv_path)
    if args.out is None:
        stdout.write(text)
    return code, report


def main(argv: list[str] | None = None) -> int:
    return run_command(argv)[0]


if __name__ == "__main__":
    raise SystemExit(main())
