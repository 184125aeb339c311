"""Finiteness and approximation of conditional expected termination times E(p↓q)."""
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
import math
from typing import Dict, List, Optional, Set, Tuple

import numpy as np

from pocan.bounds import GrandCase, grand_bound, log2_of, perturbation_factor
from pocan.chain import BsccAnalysis, analyze_bsccs
from pocan.errors import ConvergenceError, InvariantViolationError, PrecisionInfeasibleError
from pocan.linalg import frac_array, identity, solve_exact, solve_float
from pocan.model import Poc
from pocan.newton import EXACT_MIN_REL, Backend, TermSolution, choose_backend, solve_termination
from pocan.reach import (ConfigSetInfo, config_set_info, intersect, ordered_pairs, positive_pairs,
                         post_from, pre_star, zero_automaton)

Pair = Tuple[str, str]

ADAPTIVE_ROUNDS = 8
ADAPTIVE_INITIAL_REL = 1e-4


class Verdict(str, Enum):
    FINITE = "FINITE"
    INFINITE = "INFINITE"


class Reason(str, Enum):
    Q_NOT_IN_BSCC = "Q_NOT_IN_BSCC"
    BSCC_TREND_NONZERO = "BSCC_TREND_NONZERO"
    TREND_ZERO_PREPOST_FINITE = "TREND_ZERO_PREPOST_FINITE"
    TREND_ZERO_PREPOST_INFINITE = "TREND_ZERO_PREPOST_INFINITE"


class Mode(str, Enum):
    RIGOROUS = "rigorous"
    ADAPTIVE = "adaptive"


@dataclass(frozen=True)
class PairVerdict:
    verdict: Verdict
    reason: Reason
    prepost: Optional[ConfigSetInfo] = None


@dataclass
class FinitenessReport:
    verdicts: Dict[Pair, PairVerdict]
    order: List[Pair]

    @property
    def finite_pairs(self) -> List[Pair]:
        return [pq for pq in self.order if self.verdicts[pq].verdict is Verdict.FINITE]

    @property
    def infinite_pairs(self) -> List[Pair]:
        return [pq for pq in self.order if self.verdicts[pq].verdict is Verdict.INFINITE]


@dataclass
class ExpLinSystem:
    pairs: List[Pair]
    g: np.ndarray
    rhs: np.ndarray
    exact: bool

    def solve(self) -> Dict[Pair, object]:
        n = len(self.pairs)
        if n == 0:
            return {}
        if self.exact:
            x = solve_exact(identity(n) - self.g, self.rhs)
        else:
            x = solve_float(np.eye(n) - self.g.astype(float), self.rhs.astype(float))
        return {pq: x[i] for i, pq in enumerate(self.pairs)}


@dataclass
class ErrorBudget:
    mode: Mode
    b: Optional[Fraction] = None
    b_log2: Optional[float] = None
    delta_log2: Optional[float] = None
    u: int = 3
    t_min: Optional[Fraction] = None
    term_rel_err: Optional[float] = None
    rounds: int = 0

    @property
    def v_norm(self) -> Optional[Fraction]:
        return self.b


@dataclass
class ExpTimeReport:
    values: Dict[Pair, float]
    finiteness: FinitenessReport
    eps: float
    mode: Mode
    budget: ErrorBudget
    terms: Optional[TermSolution] = None
    history: List[Dict[Pair, float]] = field(default_factory=list)

    def value(self, p: str, q: str) -> float:
        if (p, q) in self.values:
            return self.values[(p, q)]
        if (p, q) in self.finiteness.verdicts:
            return math.inf
        raise KeyError((p, q))


def _state_bscc(m: Poc) -> Dict[str, Optional[BsccAnalysis]]:
    _, scc, analyses = analyze_bsccs(m)
    by_members = {a.members: a for a in analyses}
    return {q: by_members.get(scc.bottom_of(q)) if scc.bottom_of(q) else None for q in m.states}


def classify_finiteness(m: Poc, tpos: Optional[Set[Pair]] = None) -> FinitenessReport:
    """
    Decides for every pair in T^{>0} whether E(p↓q) is finite.

    q outside every BSCC, or in a BSCC with non-zero trend, gives a finite value. With trend 0
    the value is finite iff Pre*({q(0)}) ∩ Post*({p(1)}) is a finite set.
    """
    tpos = positive_pairs(m) if tpos is None else tpos
    bscc_of = _state_bscc(m)
    pre_cache, post_cache = {}, {}
    verdicts: Dict[Pair, PairVerdict] = {}
    order = ordered_pairs(m, tpos)
    for p, q in order:
        analysis = bscc_of[q]
        if analysis is None:
            verdicts[(p, q)] = PairVerdict(Verdict.FINITE, Reason.Q_NOT_IN_BSCC)
            continue
        if analysis.trend != 0:
            verdicts[(p, q)] = PairVerdict(Verdict.FINITE, Reason.BSCC_TREND_NONZERO)
            continue
        info = _prepost(m, p, q, pre_cache, post_cache)
        if info.finite:
            verdicts[(p, q)] = PairVerdict(Verdict.FINITE, Reason.TREND_ZERO_PREPOST_FINITE, info)
        else:
            verdicts[(p, q)] = PairVerdict(Verdict.INFINITE, Reason.TREND_ZERO_PREPOST_INFINITE, info)
    return FinitenessReport(verdicts, order)


def _prepost(m: Poc, p: str, q: str, pre_cache: Dict, post_cache: Dict) -> ConfigSetInfo:
    if q not in pre_cache:
        pre_cache[q] = pre_star(m, zero_automaton(m, [q]))
    if p not in post_cache:
        post_cache[p] = post_from(m, p)
    return config_set_info(intersect(pre_cache[q], post_cache[p]), m.n_states)


def build_exp_system(m: Poc, finite_pairs: List[Pair], terms: TermSolution, exact: bool = False) -> ExpLinSystem:
    """
    Instantiates V(p↓q) = 1 + Σ G·V with the approximated termination probabilities as constants.

    Raises:
        InvariantViolationError: If an approximated [p↓q] of a variable is zero.
    """
    index = {pq: i for i, pq in enumerate(finite_pairs)}
    n = len(finite_pairs)
    conv = Fraction if exact else float
    g = np.array([[conv(0)] * n for _ in range(n)], dtype=object)

    def prob(a, b):
        return conv(terms.prob(a, b))

    for i, (p, q) in enumerate(finite_pairs):
        denom = prob(p, q)
        if denom == 0:
            raise InvariantViolationError(f"Approximated [{p}↓{q}] is zero; termination precision is too low")
        for r in m.pos_from[p]:
            weight = conv(r.prob)
            if r.delta == 0:
                j = index.get((r.dst, q))
                if j is not None:
                    g[i, j] += weight * prob(r.dst, q) / denom
            elif r.delta == 1:
                for mid in m.states:
                    c = weight * prob(r.dst, mid) * prob(mid, q)
                    if c == 0:
                        continue
                    c = c / denom
                    # both sub-pairs are finite whenever (p, q) is
                    for sub in ((r.dst, mid), (mid, q)):
                        j = index.get(sub)
                        if j is not None:
                            g[i, j] += c
    rhs = np.array([conv(1)] * n, dtype=object)
    if not exact:
        g = g.astype(float)
        rhs = rhs.astype(float)
    return ExpLinSystem(list(finite_pairs), g, rhs, exact)


def _pair_cases(m: Poc, report: FinitenessReport) -> Dict[Pair, List[Tuple[GrandCase, Optional[Fraction]]]]:
    bscc_of = _state_bscc(m)
    pre_cache, post_cache = {}, {}
    cases = {}
    for p, q in report.finite_pairs:
        applicable = []
        verdict = report.verdicts[(p, q)]
        info = verdict.prepost or _prepost(m, p, q, pre_cache, post_cache)
        if info.finite:
            applicable.append((GrandCase.PREPOST_FINITE, None))
        analysis = bscc_of[q]
        if analysis is None:
            applicable.append((GrandCase.NOT_IN_BSCC, None))
        elif analysis.trend != 0:
            applicable.append((GrandCase.TREND_NONZERO, analysis.trend))
        cases[(p, q)] = applicable
    return cases


def exp_upper_bound(m: Poc, report: Optional[FinitenessReport] = None) -> Fraction:
    """Largest per-pair bound on E(p↓q) over the finite pairs, each pair taking its smallest applicable case."""
    report = classify_finiteness(m) if report is None else report
    b = Fraction(1)
    for pq, applicable in _pair_cases(m, report).items():
        bounds = [grand_bound(case, m.n_states, m.x_min, t).value for case, t in applicable]
        b = max(b, min(bounds))
    return b


def min_nonzero_trend(m: Poc) -> Optional[Fraction]:
    _, _, analyses = analyze_bsccs(m)
    trends = [abs(a.trend) for a in analyses if a.trend != 0]
    return min(trends) if trends else None


def _finalise(values: Dict[Pair, object], eps: float) -> Dict[Pair, float]:
    out = {}
    for pq, v in values.items():
        v = float(v)
        if not math.isfinite(v) or v < 1 - eps:
            raise InvariantViolationError(f"Expected termination time of {pq} is {v}, below 1")
        out[pq] = max(v, 1.0)
    return out


def expected_times(m: Poc, eps, mode: Mode = Mode.ADAPTIVE, rounds: int = ADAPTIVE_ROUNDS,
                   initial_rel: float = ADAPTIVE_INITIAL_REL) -> ExpTimeReport:
    """
    Approximates E(p↓q) with absolute error `eps` for every finite pair of T^{>0}.

    RIGOROUS derives the termination precision from the grand bound b (coefficient accuracy
    eps/(12b²)). ADAPTIVE squares the termination precision until two successive solutions
    differ by less than eps/2.

    Raises:
        PrecisionInfeasibleError: If RIGOROUS needs a precision no backend provides.
        ConvergenceError: If ADAPTIVE does not stabilise within `rounds` rounds.
    """
    eps = float(eps)
    mode = Mode(mode)
    if not (0 < eps < 1):
        raise ValueError(f"Absolute error must lie in (0, 1), got {eps}")
    tpos = positive_pairs(m)
    report = classify_finiteness(m, tpos)
    finite = report.finite_pairs
    budget = ErrorBudget(mode=mode, t_min=min_nonzero_trend(m))

    if mode is Mode.RIGOROUS:
        b = exp_upper_bound(m, report)
        budget.b = b
        budget.b_log2 = log2_of(b)
        delta = Fraction(eps).limit_denominator(10 ** 18) / (12 * b * b)
        budget.delta_log2 = log2_of(delta)
        perturbation_factor(budget.u, b, delta)
        rel_log2 = budget.delta_log2 - 3
        if rel_log2 < math.log2(EXACT_MIN_REL):
            raise PrecisionInfeasibleError(
                f"Rigorous mode needs termination probabilities to relative error 2^{rel_log2:.1f}", rel_log2)
        rel = 2.0 ** rel_log2
        budget.term_rel_err = rel
        terms = solve_termination(m, rel, choose_backend(rel), tpos)
        exact = terms.backend is Backend.EXACT_RATIONAL
        values = build_exp_system(m, finite, terms, exact=exact).solve()
        budget.rounds = 1
        return ExpTimeReport(_finalise(values, eps), report, eps, mode, budget, terms)

    rel = min(initial_rel, eps)
    history: List[Dict[Pair, float]] = []
    terms = None
    for k in range(rounds):
        terms = solve_termination(m, rel, None, tpos)
        values = {pq: float(v) for pq, v in build_exp_system(m, finite, terms).solve().items()}
        history.append(values)
        budget.rounds = k + 1
        budget.term_rel_err = rel
        if k > 0:
            diff = max((abs(values[pq] - history[-2][pq]) for pq in finite), default=0.0)
            if diff < eps / 2:
                return ExpTimeReport(_finalise(values, eps), report, eps, mode, budget, terms, history)
        elif not finite:
            return ExpTimeReport({}, report, eps, mode, budget, terms, history)
        rel = max(rel * rel, EXACT_MIN_REL)
    raise ConvergenceError(f"Expected times did not stabilise within {rounds} precision rounds")
