import pandas as pd

from pocan.chain import analyze_bsccs
from pocan.reach import positive_pairs, sure_divergers
from .base_analyzer import AnalysisContext, BaseAnalyzer


class ChainAnalyzer(BaseAnalyzer):
    """Analyzer for the 'analyze' command: SCCs, trends and potentials of the underlying chain."""

    def analyze(self, context: AnalysisContext) -> dict:
        m = context.model
        with context.timer.phase("chain"):
            _, scc, analyses = analyze_bsccs(m)
        with context.timer.phase("reach"):
            sure = sure_divergers(m)
            tpos = positive_pairs(m)

        component_id = {q: i for i, comp in enumerate(scc.components) for q in comp}
        states = pd.DataFrame([
            {"state": q, "scc": component_id[q], "bottom": scc.bottom_of(q) is not None, "sure_diverger": q in sure}
            for q in m.states
        ])
        bsccs = []
        potentials = []
        for a in analyses:
            bsccs.append({
                "members": list(a.members),
                "trend": a.trend,
                "span": a.span,
                "argmax_potential": a.argmax_potential(),
            })
            potentials.extend({"state": q, "alpha": a.alpha[q], "potential": a.potential[q]} for q in a.members)

        bscc_table = pd.DataFrame([
            {"bscc": " ".join(b["members"]), "trend": float(b["trend"]), "trend_exact": str(b["trend"]),
             "span": float(b["span"]), "argmax_potential": b["argmax_potential"]}
            for b in bsccs
        ])
        potential_table = pd.DataFrame([
            {"state": r["state"], "alpha": float(r["alpha"]), "potential": float(r["potential"])} for r in potentials
        ])
        return {
            "results": {
                "states": m.n_states,
                "x_min": str(m.x_min),
                "sccs": [list(c) for c in scc.components],
                "bsccs": [
                    {**b, "trend": str(b["trend"]), "span": str(b["span"])} for b in bsccs
                ],
                "potential": {r["state"]: str(r["potential"]) for r in potentials},
                "sure_divergers": [q for q in m.states if q in sure],
                "positive_pairs": len(tpos),
            },
            "summary": {
                "States": m.n_states,
                "Minimal rule probability": str(m.x_min),
                "SCCs": len(scc.components),
                "BSCCs": len(analyses),
                "Pairs with [p↓q] > 0": len(tpos),
            },
            "tables": {"States": states, "BSCCs": bscc_table, "Potential": potential_table},
        }
