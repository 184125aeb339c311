from fractions import Fraction
import math
from typing import List

import pandas as pd

from pocan.bounds import (BoundReport, GrandCase, azuma_tail, divergence_tail, gap_bound, grand_bound,
                          hitting_bound, potential_span_bound, pumping_bound, uniform_grand_bound)
from pocan.chain import analyze_bsccs
from pocan.exptime import min_nonzero_trend
from .base_analyzer import AnalysisContext, BaseAnalyzer


def _inputs(report: BoundReport) -> dict:
    return {k: str(v) if isinstance(v, Fraction) else v for k, v in report.inputs.items()}


def model_bounds(context: AnalysisContext) -> List[BoundReport]:
    """Every closed-form bound instantiated with the model's size, x_min, trends and spans."""
    m = context.model
    nq, x_min = m.n_states, m.x_min
    out = [
        potential_span_bound(nq, x_min),
        pumping_bound(nq),
        hitting_bound(nq, x_min, nq),
        grand_bound(GrandCase.PREPOST_FINITE, nq, x_min),
        grand_bound(GrandCase.NOT_IN_BSCC, nq, x_min),
    ]
    t_min = min_nonzero_trend(m)
    if t_min is not None:
        out.append(grand_bound(GrandCase.TREND_NONZERO, nq, x_min, t_min))
        out.append(uniform_grand_bound(nq, x_min, t_min))
    _, _, analyses = analyze_bsccs(m)
    for a in analyses:
        if a.trend == 0:
            continue
        t, span = a.trend, a.span
        h = 2 * (-span - 1) / t if t < 0 else 2 * (span - 1) / t
        out.append(azuma_tail(t, span, 1, max(1, math.ceil(h))))
        if t > 0:
            out.append(gap_bound(t, span))
            out.append(divergence_tail(t, span, max(1, math.ceil(span))))
    return out


class BoundsAnalyzer(BaseAnalyzer):
    """Analyzer for the 'bounds' command."""

    def analyze(self, context: AnalysisContext) -> dict:
        with context.timer.phase("bounds"):
            reports = model_bounds(context)
        rows = [{"name": r.name, "inputs": _inputs(r), "value_log2": r.log2, "flag": r.flag} for r in reports]
        table = pd.DataFrame([
            {"name": r["name"], "inputs": ", ".join(f"{k}={v}" for k, v in r["inputs"].items()),
             "value_log2": r["value_log2"], "flag": r["flag"] or ""}
            for r in rows
        ])
        return {"results": {"bounds": rows}, "tables": {"Bounds": table}}
