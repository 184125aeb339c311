import pandas as pd

from pocan.errors import ModelValidationError
from pocan.exptime import Mode
from pocan.omega import DivergenceOracle, model_check, nonterm_probs
from .base_analyzer import AnalysisContext, BaseAnalyzer


class DivergenceAnalyzer(BaseAnalyzer):
    """Analyzer for the 'diverge' command: [p↑] with its qualitative witness and certified lower bound."""

    def analyze(self, context: AnalysisContext) -> dict:
        m = context.model
        if context.start is None:
            raise ModelValidationError("'diverge' needs a start state (--from)")
        p = context.start.state
        if p not in m.index:
            raise ModelValidationError(f"Unknown state '{p}'")
        eps = float(context.option("rel_err"))
        mode = Mode(context.option("mode"))
        with context.timer.phase("divergence"):
            oracle = DivergenceOracle(m)
            info = oracle.info(p)
        with context.timer.phase("newton"):
            value = nonterm_probs(m, eps, mode, oracle)[p] if info.positive else 0.0
        results = {
            "state": p,
            "positive": info.positive,
            "witness": info.witness.value if info.witness else None,
            "lower_bound_log2": info.lower_bound_log2,
            "value": value,
            "witness_state": info.witness_state,
            "path_length": info.path_length,
        }
        return {
            "results": results,
            "precision": {"requested": eps, "achieved": eps if info.positive else 0.0, "mode": mode.value},
            "tables": {"Divergence": pd.DataFrame([results])},
        }


class ModelCheckAnalyzer(BaseAnalyzer):
    """Analyzer for the 'mc' command: probability that a run is accepted by the given DRA."""

    def analyze(self, context: AnalysisContext) -> dict:
        if context.dra is None:
            raise ModelValidationError("'mc' needs a Rabin automaton (--dra)")
        if context.start is None:
            raise ModelValidationError("'mc' needs a start configuration (--from)")
        eps = float(context.option("rel_err"))
        mode = Mode(context.option("mode"))
        with context.timer.phase("model_check"):
            res = model_check(context.model, None, context.dra, context.start.state, eps, mode,
                              counter=context.start.counter)
        results = {"probability": res.probability, "rel_err": res.rel_err, "product_states": res.product_states}
        g = res.chain
        partition = pd.DataFrame([
            {"part": "reach 1", "states": len(g.g1)},
            {"part": "reach 0", "states": len(g.g0)},
            {"part": "in between", "states": len(g.g)},
        ])
        return {
            "results": results,
            "summary": {"Start": res.start, "Probability": res.probability, "Rounds": res.rounds},
            "precision": {"requested": eps, "achieved": eps, "mode": mode.value},
            "tables": {"Chain G": partition},
        }
