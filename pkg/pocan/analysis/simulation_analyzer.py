import pandas as pd

from pocan.errors import ModelValidationError
from pocan.omega import product
from pocan.sim import estimate_acceptance, estimate_exp_time, estimate_termination
from .base_analyzer import AnalysisContext, BaseAnalyzer


class SimulationAnalyzer(BaseAnalyzer):
    """
    Analyzer for the 'simulate' command.

    `estimate` selects the quantity: 'term' ([p↓q], needs --to), 'exptime' (E(p↓q), needs --to)
    or 'accept' (acceptance by the --dra automaton, heuristic).
    """

    def __init__(self, estimate: str):
        self.estimate = estimate

    def analyze(self, context: AnalysisContext) -> dict:
        m = context.model
        if context.start is None:
            raise ModelValidationError("'simulate' needs a start configuration (--from)")
        n = int(context.option("samples"))
        horizon = int(context.option("horizon"))
        seed = int(context.option("seed"))
        p, counter = context.start.state, context.start.counter

        with context.timer.phase("simulate"):
            if self.estimate == "accept":
                if context.dra is None:
                    raise ModelValidationError("Estimating acceptance needs a Rabin automaton (--dra)")
                if m.labels is None:
                    raise ModelValidationError("Estimating acceptance needs label lines in the model")
                rp, init = product(m, m.labels, context.dra)
                if p not in init:
                    raise ModelValidationError(f"Unknown state '{p}'")
                est = estimate_acceptance(rp, init[p], n, horizon, int(context.option("window")), seed, counter)
            else:
                if context.target is None:
                    raise ModelValidationError(f"Estimating '{self.estimate}' needs a target state (--to)")
                fn = estimate_termination if self.estimate == "term" else estimate_exp_time
                est = fn(m, p, context.target, n, horizon, seed, counter)

        results = {"mean": est.mean, "stderr": est.stderr, "n": est.n, "horizon": est.horizon, "seed": est.seed,
                   "estimate": self.estimate, "hits": est.hits}
        notes = []
        if est.flag:
            results["flag"] = est.flag
            notes.append("Acceptance is classified from the states of the final window only.")
        return {
            "results": results,
            "tables": {"Estimate": pd.DataFrame([{k: results[k] for k in ("estimate", "mean", "stderr", "n", "hits")}])},
            "notes": notes,
        }
