import math
from typing import List, Tuple

import pandas as pd

from pocan.errors import ModelValidationError
from pocan.exptime import Mode, classify_finiteness, expected_times
from pocan.newton import solve_termination
from pocan.reach import ordered_pairs, positive_pairs
from .base_analyzer import AnalysisContext, BaseAnalyzer


def selected_pairs(context: AnalysisContext, tpos) -> List[Tuple[str, str]]:
    """Pairs named with --pairs, or every pair with positive termination probability."""
    m = context.model
    if context.pairs is None:
        return ordered_pairs(m, tpos)
    for p, q in context.pairs:
        for s in (p, q):
            if s not in m.index:
                raise ModelValidationError(f"Unknown state '{s}' in --pairs")
    return list(context.pairs)


class TerminationAnalyzer(BaseAnalyzer):
    """Analyzer for the 'term' command."""

    def analyze(self, context: AnalysisContext) -> dict:
        m = context.model
        eps = float(context.option("rel_err"))
        with context.timer.phase("reach"):
            tpos = positive_pairs(m)
        with context.timer.phase("newton"):
            sol = solve_termination(m, eps, None, tpos, context.setting("newton", "denominator_bits"))
        rows = [{"p": p, "q": q, "prob": float(sol.prob(p, q)), "rel_err": eps if (p, q) in tpos else 0.0}
                for p, q in selected_pairs(context, tpos)]
        totals = pd.DataFrame([{"p": p, "[p↓]": float(sol.total_from(p))} for p in m.states])
        return {
            "results": {"pairs": rows},
            "precision": {"requested": eps, "achieved": eps, "residual": sol.residual,
                          "backend": sol.backend.value, "iterations": sol.iterations,
                          "escalated_blocks": sol.escalated_blocks},
            "tables": {"Termination probabilities": pd.DataFrame(rows, columns=["p", "q", "prob", "rel_err"]),
                       "Totals": totals},
        }


class FinitenessAnalyzer(BaseAnalyzer):
    """Analyzer for the 'classify' command."""

    def analyze(self, context: AnalysisContext) -> dict:
        m = context.model
        with context.timer.phase("reach"):
            tpos = positive_pairs(m)
            report = classify_finiteness(m, tpos)
        rows = []
        for p, q in selected_pairs(context, tpos):
            v = report.verdicts.get((p, q))
            if v is None:
                rows.append({"p": p, "q": q, "verdict": "ZERO_PROBABILITY", "reason": "NOT_IN_T_POS"})
            else:
                rows.append({"p": p, "q": q, "verdict": v.verdict.value, "reason": v.reason.value})
        return {
            "results": {"pairs": rows},
            "summary": {"Finite pairs": len(report.finite_pairs), "Infinite pairs": len(report.infinite_pairs)},
            "tables": {"Finiteness": pd.DataFrame(rows, columns=["p", "q", "verdict", "reason"])},
        }


class ExpTimeAnalyzer(BaseAnalyzer):
    """Analyzer for the 'exptime' command."""

    def analyze(self, context: AnalysisContext) -> dict:
        m = context.model
        eps = float(context.option("abs_err"))
        mode = Mode(context.option("mode"))
        with context.timer.phase("exptime"):
            report = expected_times(m, eps, mode, rounds=context.setting("exptime", "adaptive_rounds"),
                                    initial_rel=context.setting("exptime", "initial_rel_err"))
        verdicts = report.finiteness.verdicts
        rows = []
        for p, q in selected_pairs(context, verdicts.keys()):
            if (p, q) not in verdicts:
                rows.append({"p": p, "q": q, "value": None, "abs_err": None, "reason": "NOT_IN_T_POS"})
                continue
            value = report.value(p, q)
            rows.append({"p": p, "q": q, "value": value, "abs_err": None if math.isinf(value) else eps,
                         "reason": verdicts[(p, q)].reason.value})
        budget = report.budget
        achieved = eps
        if len(report.history) > 1:
            prev, last = report.history[-2], report.history[-1]
            achieved = max((abs(last[k] - prev[k]) for k in last), default=0.0)
        return {
            "results": {
                "pairs": rows,
                "budget": {"b_log2": budget.b_log2, "delta_log2": budget.delta_log2, "mode": mode.value},
            },
            "precision": {"requested": eps, "achieved": achieved, "term_rel_err": budget.term_rel_err,
                          "rounds": budget.rounds},
            "tables": {"Expected termination times": pd.DataFrame(rows, columns=["p", "q", "value", "abs_err", "reason"])},
        }
