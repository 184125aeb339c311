"""
Probability that a run satisfies an ω-regular property given as a deterministic Rabin automaton.

The model is synchronised with the automaton, diverging runs are split into accepting and
rejecting mass by freezing bottom components, and the question is reduced to reachability of
good bottom components in a finite chain over Q x {0, 1} plus two absorbing sinks.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
import math
from typing import Dict, FrozenSet, List, Optional, Set, Tuple

import networkx as nx
import numpy as np

from pocan.bounds import gap_bound, log2_of, visiting_delta
from pocan.chain import BsccAnalysis, analyze_bsccs
from pocan.errors import (ConvergenceError, InvariantViolationError, ModelValidationError,
                          PrecisionInfeasibleError, SingularSystemError)
from pocan.exptime import Mode
from pocan.linalg import solve_float
from pocan.model import Config, Dra, Poc, Rule, Valuation
from pocan.newton import EXACT_MIN_REL, TermSolution, solve_termination
from pocan.reach import positive_pairs, post_from, reach_positive, shortest_witness, sure_divergers
from pocan.utils import worker_count

ADAPTIVE_ROUNDS = 6
ADAPTIVE_INITIAL_REL = 1e-4
ACC = "acc"
REJ = "rej"


class Consistency(str, Enum):
    CONSISTENT = "CONSISTENT"
    INCONSISTENT = "INCONSISTENT"


class Witness(str, Enum):
    SURE_DIVERGER = "SURE_DIVERGER"
    POSITIVE_TREND_BSCC = "POSITIVE_TREND_BSCC"


@dataclass(frozen=True)
class RabinPoc:
    poc: Poc
    pairs: Tuple[Tuple[FrozenSet[str], FrozenSet[str]], ...]
    origin: Dict[str, Tuple[str, str]] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.pairs:
            raise ModelValidationError("A Rabin condition needs at least one pair")
        known = set(self.poc.states)
        for e, f in self.pairs:
            if not (e | f) <= known:
                raise ModelValidationError(f"Rabin pair names unknown state(s): {sorted((e | f) - known)}")

    def accepting_set(self, states) -> bool:
        """True iff some pair (E, F) has E disjoint from `states` and F meeting it."""
        s = set(states)
        return any(not (e & s) and bool(f & s) for e, f in self.pairs)


@dataclass(frozen=True)
class DivergenceInfo:
    state: str
    positive: bool
    witness: Optional[Witness] = None
    witness_state: Optional[str] = None
    bscc: Optional[Tuple[str, ...]] = None
    path_length: Optional[int] = None
    lower_bound: Optional[Fraction] = None

    @property
    def lower_bound_log2(self) -> Optional[float]:
        return log2_of(self.lower_bound) if self.lower_bound else None


@dataclass
class ChainG:
    states: List[str]
    trans: Dict[str, Dict[str, float]]
    edges: Set[Tuple[str, str]]
    control_of: Dict[str, Optional[str]]
    rabin: RabinPoc
    good: Set[str] = field(default_factory=set)
    g0: Set[str] = field(default_factory=set)
    g1: Set[str] = field(default_factory=set)
    g: List[str] = field(default_factory=list)
    reach: Dict[str, float] = field(default_factory=dict)

    def row_sum(self, s: str) -> float:
        return sum(self.trans[s].values())


def g_state(p: str, level: int) -> str:
    return f"{p}({level})"


def product_state(p: str, r: str) -> str:
    return f"{p}.{r}"


def product(m: Poc, val: Valuation, d: Dra) -> Tuple[RabinPoc, Dict[str, str]]:
    """
    Synchronises the model with the automaton over control states Q x R.

    The automaton reads the letter of the current configuration, so a product rule
    (p,r) -> (p',r') exists iff p -> p' is a rule and r' = trans(r, val(p, counter)).

    Returns:
        The product with pairs (Q x E_i, Q x F_i), and a map from each model state p to the
        product state (p, init).

    Raises:
        ModelValidationError: If the valuation uses letters outside the alphabet.
    """
    val.check(m.states, d.alphabet)
    origin: Dict[str, Tuple[str, str]] = {}
    states = []
    for p in m.states:
        for r in d.dra_states:
            name = product_state(p, r)
            origin[name] = (p, r)
            states.append(name)

    def synced(rules, counter):
        out = []
        for rule in rules:
            for r in d.dra_states:
                r2 = d.step(r, val.letter(rule.src, counter))
                out.append(Rule(product_state(rule.src, r), rule.delta, product_state(rule.dst, r2), rule.prob))
        return tuple(out)

    poc = Poc(tuple(states), synced(m.zero_rules, 0), synced(m.pos_rules, 1))
    pairs = tuple(
        (frozenset(product_state(p, r) for p in m.states for r in e),
         frozenset(product_state(p, r) for p in m.states for r in f))
        for e, f in d.pairs
    )
    return RabinPoc(poc, pairs, origin), {p: product_state(p, d.init) for p in m.states}


def consistency_partition(rp: RabinPoc) -> Dict[Tuple[str, ...], Consistency]:
    _, scc, _ = analyze_bsccs(rp.poc)
    return {
        b: Consistency.CONSISTENT if rp.accepting_set(b) else Consistency.INCONSISTENT
        for b in scc.bottoms()
    }


def freeze(rp: RabinPoc, which: Consistency) -> Poc:
    """Replaces the positive rules of every state in a BSCC flagged `which` by a certain decrement."""
    frozen = {q for b, flag in consistency_partition(rp).items() if flag is which for q in b}
    if not frozen:
        return rp.poc
    pos = [r for r in rp.poc.pos_rules if r.src not in frozen]
    pos.extend(Rule(q, -1, q, Fraction(1)) for q in rp.poc.states if q in frozen)
    order = rp.poc.index
    pos.sort(key=lambda r: order[r.src])
    return replace(rp.poc, pos_rules=tuple(pos))


class DivergenceOracle:
    """Caches the qualitative data shared by divergence queries on one model."""

    def __init__(self, m: Poc):
        self.m = m
        self.sure = sure_divergers(m)
        _, self.scc, analyses = analyze_bsccs(m)
        self.positive_trend: List[BsccAnalysis] = [a for a in analyses if a.trend > 0]
        self.cap = m.n_states * (m.n_states + 2) + 1
        self._cache: Dict[str, DivergenceInfo] = {}

    def info(self, p: str) -> DivergenceInfo:
        if p not in self._cache:
            self._cache[p] = self._compute(p)
        return self._cache[p]

    def _witness_length(self, p: str, goals: Set[str]) -> int:
        cap = self.cap
        while cap <= 1 << 20:
            path = shortest_witness(self.m, Config(p, 1), lambda c: c.state in goals, cap)
            if path is not None:
                return len(path) - 1
            cap *= 2
        raise InvariantViolationError(f"No witness path from {p}(1) to {sorted(goals)} found")

    def _compute(self, p: str) -> DivergenceInfo:
        m = self.m
        post = None
        reachable_sure = []
        for q in m.states:
            if q in self.sure:
                post = post or post_from(m, p)
                if reach_positive(m, p, q, post):
                    reachable_sure.append(q)
        if reachable_sure:
            length = self._witness_length(p, set(reachable_sure))
            return DivergenceInfo(p, True, Witness.SURE_DIVERGER, reachable_sure[0], None, length,
                                  m.x_min ** length)
        for analysis in self.positive_trend:
            q = analysis.argmax_potential()
            post = post or post_from(m, p)
            if reach_positive(m, p, q, post):
                length = self._witness_length(p, {q})
                bound = m.x_min ** length * gap_bound(analysis.trend, analysis.span).value
                return DivergenceInfo(p, True, Witness.POSITIVE_TREND_BSCC, q, analysis.members, length, bound)
        return DivergenceInfo(p, False)


def divergence(m: Poc, p: str) -> DivergenceInfo:
    """
    Decides whether [p↑] > 0 and certifies a lower bound.

    A reachable state q with [q↑] = 1 gives x_min^L; otherwise a reachable maximal-potential
    state of a positive-trend BSCC gives x_min^L · t³/(12(2·span+4)³), L being the length of a
    shortest witness path.
    """
    return DivergenceOracle(m).info(p)


def _nonterm_values(m: Poc, oracle: DivergenceOracle, rel: float, terms: Optional[TermSolution] = None,
                    tpos=None) -> Tuple[Dict[str, float], TermSolution]:
    terms = solve_termination(m, rel, None, tpos) if terms is None else terms
    out = {}
    for p in m.states:
        if not oracle.info(p).positive:
            out[p] = 0.0
            continue
        total = sum((Fraction(v) for (a, _), v in terms.values.items() if a == p), Fraction(0))
        out[p] = float(max(Fraction(0), 1 - total))
    return out, terms


def _rigorous_nonterm_rel(m: Poc, oracle: DivergenceOracle, eps: float) -> float:
    bounds = [oracle.info(p).lower_bound for p in m.states if oracle.info(p).positive]
    if not bounds:
        return eps
    rel = Fraction(eps).limit_denominator(10 ** 18) * min(bounds) / (2 * m.n_states)
    rel_log2 = log2_of(rel)
    if rel_log2 < math.log2(EXACT_MIN_REL):
        raise PrecisionInfeasibleError("Divergence lower bound is too small for the required precision", rel_log2)
    return float(rel)


def nonterm_probs(m: Poc, eps, mode: Mode = Mode.ADAPTIVE, oracle: Optional[DivergenceOracle] = None,
                  rounds: int = ADAPTIVE_ROUNDS) -> Dict[str, float]:
    """[p↑] for every state, exactly 0 where divergence is impossible, otherwise with relative error eps."""
    eps = float(eps)
    mode = Mode(mode)
    oracle = DivergenceOracle(m) if oracle is None else oracle
    if not any(oracle.info(p).positive for p in m.states):
        return {p: 0.0 for p in m.states}
    tpos = positive_pairs(m)
    if mode is Mode.RIGOROUS:
        return _nonterm_values(m, oracle, _rigorous_nonterm_rel(m, oracle, eps), tpos=tpos)[0]
    rel = min(ADAPTIVE_INITIAL_REL, eps)
    prev = None
    for _ in range(rounds):
        values, _ = _nonterm_values(m, oracle, rel, tpos=tpos)
        if prev is not None and all(
                abs(values[p] - prev[p]) <= eps / 2 * max(values[p], prev[p]) for p in m.states):
            return values
        prev = values
        rel = max(rel * rel, EXACT_MIN_REL)
    raise ConvergenceError(f"Non-termination probabilities did not stabilise within {rounds} rounds")


def nonterm_prob(m: Poc, p: str, eps, mode: Mode = Mode.ADAPTIVE) -> float:
    oracle = DivergenceOracle(m)
    if not oracle.info(p).positive:
        return 0.0
    return nonterm_probs(m, eps, mode, oracle)[p]


def _assemble(rp: RabinPoc, terms: TermSolution, tpos, acc: Dict[str, float], rej: Dict[str, float],
              acc_oracle: DivergenceOracle, rej_oracle: DivergenceOracle) -> ChainG:
    m = rp.poc
    states = [g_state(p, lvl) for lvl in (0, 1) for p in m.states] + [ACC, REJ]
    trans: Dict[str, Dict[str, float]] = {s: {} for s in states}
    edges: Set[Tuple[str, str]] = set()
    control_of: Dict[str, Optional[str]] = {ACC: None, REJ: None}

    def add(src, dst, w):
        trans[src][dst] = trans[src].get(dst, 0.0) + w
        edges.add((src, dst))

    for p in m.states:
        control_of[g_state(p, 0)] = p
        control_of[g_state(p, 1)] = p
        for r in m.zero_from[p]:
            add(g_state(p, 0), g_state(r.dst, r.delta), float(r.prob))
        for q in m.states:
            if (p, q) in tpos:
                add(g_state(p, 1), g_state(q, 0), float(terms.prob(p, q)))
        if acc_oracle.info(p).positive:
            add(g_state(p, 1), ACC, acc[p])
        if rej_oracle.info(p).positive:
            add(g_state(p, 1), REJ, rej[p])
    add(ACC, ACC, 1.0)
    add(REJ, REJ, 1.0)
    g = ChainG(states, trans, edges, control_of, rp)
    _partition(g)
    return g


def _partition(g: ChainG):
    graph = nx.DiGraph()
    graph.add_nodes_from(g.states)
    graph.add_edges_from(g.edges)
    good: Set[str] = set()
    for comp in nx.attracting_components(graph):
        if comp == {ACC}:
            good |= comp
        elif ACC not in comp and REJ not in comp:
            if g.rabin.accepting_set(g.control_of[s] for s in comp):
                good |= comp
    can_reach_good = set(good)
    for s in good:
        can_reach_good |= nx.ancestors(graph, s)
    g0 = set(g.states) - can_reach_good
    reaches_g0 = set(g0)
    for s in g0:
        reaches_g0 |= nx.ancestors(graph, s)
    g1 = set(g.states) - reaches_g0
    g.good, g.g0, g.g1 = good, g0, g1
    g.g = [s for s in g.states if s not in g0 and s not in g1]


def _chain_g_at(rp: RabinPoc, rel: float, nonterm_rel: Optional[Dict[str, float]] = None) -> ChainG:
    """Chain 𝒢 with termination probabilities at relative error `rel`."""
    m = rp.poc
    a_cons = freeze(rp, Consistency.INCONSISTENT)
    a_inco = freeze(rp, Consistency.CONSISTENT)
    tpos = positive_pairs(m)

    def side(model: Poc, key: str):
        oracle = DivergenceOracle(model)
        r = rel if nonterm_rel is None else nonterm_rel[key]
        values, _ = _nonterm_values(model, oracle, r) if any(
            oracle.info(p).positive for p in model.states) else ({p: 0.0 for p in model.states}, None)
        return values, oracle

    workers = min(2, worker_count())
    with ThreadPoolExecutor(max_workers=workers) as pool:
        cons_future = pool.submit(side, a_cons, "cons")
        inco_future = pool.submit(side, a_inco, "inco")
        terms = solve_termination(m, rel, None, tpos)
        (acc, acc_oracle), (rej, rej_oracle) = cons_future.result(), inco_future.result()
    return _assemble(rp, terms, tpos, acc, rej, acc_oracle, rej_oracle)


def build_chain_g(rp: RabinPoc, eps, mode: Mode = Mode.ADAPTIVE) -> ChainG:
    """
    Builds 𝒢 with every transition probability within relative error `eps`.

    p(0) rows copy the zero rules; p(1) moves to q(0) with [p↓q], to acc with the
    non-termination probability of the model with inconsistent BSCCs frozen, and to rej with
    that of the model with consistent BSCCs frozen.
    """
    eps = float(eps)
    mode = Mode(mode)
    if mode is Mode.ADAPTIVE:
        a_cons = freeze(rp, Consistency.INCONSISTENT)
        a_inco = freeze(rp, Consistency.CONSISTENT)
        acc_oracle, rej_oracle = DivergenceOracle(a_cons), DivergenceOracle(a_inco)
        acc = nonterm_probs(a_cons, eps, mode, acc_oracle)
        rej = nonterm_probs(a_inco, eps, mode, rej_oracle)
        tpos = positive_pairs(rp.poc)
        terms = solve_termination(rp.poc, eps, None, tpos)
        return _assemble(rp, terms, tpos, acc, rej, acc_oracle, rej_oracle)
    rels = {}
    for key, which in (("cons", Consistency.INCONSISTENT), ("inco", Consistency.CONSISTENT)):
        frozen = freeze(rp, which)
        rels[key] = _rigorous_nonterm_rel(frozen, DivergenceOracle(frozen), eps)
    return _chain_g_at(rp, eps, rels)


def good_bscc_reach(g: ChainG) -> Dict[str, float]:
    """
    Probability of reaching a good BSCC from every state of 𝒢.

    States in g1/g0 get exactly 1/0; the rest solve (I - A')V = b' over the in-between states.

    Raises:
        SingularSystemError: If the perturbed system is singular.
    """
    reach = {s: 1.0 for s in g.g1}
    reach.update({s: 0.0 for s in g.g0})
    if g.g:
        idx = {s: i for i, s in enumerate(g.g)}
        n = len(g.g)
        a = np.zeros((n, n))
        b = np.zeros(n)
        for s in g.g:
            for t, w in g.trans[s].items():
                if t in idx:
                    a[idx[s], idx[t]] += w
                elif t in g.g1:
                    b[idx[s]] += w
        try:
            v = solve_float(np.eye(n) - a, b)
        except SingularSystemError as e:
            raise SingularSystemError(f"Reachability system of chain G is singular: {e}") from e
        for s, i in idx.items():
            reach[s] = float(min(max(v[i], 0.0), 1.0))
    g.reach = reach
    return reach


def rigorous_delta(eps: float, m: Poc, oracles: Tuple[DivergenceOracle, DivergenceOracle]) -> float:
    """
    Relative precision eps·R³/(8(c+1)²) for the transitions of 𝒢, with c = 2|Q| and
    R bounded below by x_t^{|Q|-1}·x_n from certified lower bounds on the probabilities.

    Raises:
        PrecisionInfeasibleError: If the precision is below the exact backend's range.
    """
    nq = m.n_states
    term_floor_log2 = nq ** 3 * math.log2(m.x_min)
    x_t_log2 = min(math.log2(m.x_min), term_floor_log2)
    lows = [term_floor_log2]
    for oracle in oracles:
        lows.extend(oracle.info(p).lower_bound_log2 for p in m.states if oracle.info(p).positive)
    x_n_log2 = min(lows)
    r_log2 = (nq - 1) * x_t_log2 + x_n_log2
    c = 2 * nq
    if r_log2 > -1000:
        delta = visiting_delta(Fraction(eps).limit_denominator(10 ** 18), Fraction(2) ** math.floor(r_log2), c)
        delta_log2 = delta.log2
    else:
        delta_log2 = math.log2(eps) + 3 * r_log2 - 3 - 2 * math.log2(c + 1)
    if delta_log2 < math.log2(EXACT_MIN_REL):
        raise PrecisionInfeasibleError("Rigorous transition precision for chain G is out of range", delta_log2)
    return 2.0 ** delta_log2


@dataclass
class ModelCheckResult:
    probability: float
    rel_err: float
    mode: Mode
    product_states: int
    start: str
    chain: ChainG
    rounds: int = 1


def model_check(m: Poc, val: Optional[Valuation], d: Dra, p: str, eps, mode: Mode = Mode.ADAPTIVE,
                counter: int = 0, rounds: int = ADAPTIVE_ROUNDS) -> ModelCheckResult:
    """
    Probability that a run from p(counter) produces a word accepted by `d`.

    Args:
        m: The model.
        val: Valuation of configurations; the model's own labels are used when None.
        d: The deterministic Rabin automaton.
        p: Initial control state.
        eps: Relative error.
        mode: ADAPTIVE (default) or RIGOROUS.
        counter: Initial counter, 0 or 1.

    Raises:
        ModelValidationError: On a missing valuation, an unknown state or a counter outside {0, 1}.
        PrecisionInfeasibleError: If RIGOROUS needs a precision no backend provides.
    """
    eps = float(eps)
    mode = Mode(mode)
    val = m.labels if val is None else val
    if val is None:
        raise ModelValidationError("Model checking needs a valuation (label lines or an explicit one)")
    if p not in m.index:
        raise ModelValidationError(f"Unknown state '{p}'")
    if counter not in (0, 1):
        raise ModelValidationError(f"Initial counter must be 0 or 1, got {counter}")
    rp, init = product(m, val, d)
    start = g_state(init[p], counter)

    if mode is Mode.RIGOROUS:
        oracles = (DivergenceOracle(freeze(rp, Consistency.INCONSISTENT)),
                   DivergenceOracle(freeze(rp, Consistency.CONSISTENT)))
        delta = rigorous_delta(eps, rp.poc, oracles)
        rels = {"cons": _rigorous_nonterm_rel(oracles[0].m, oracles[0], delta),
                "inco": _rigorous_nonterm_rel(oracles[1].m, oracles[1], delta)}
        g = _chain_g_at(rp, delta, rels)
        reach = good_bscc_reach(g)
        return ModelCheckResult(reach[start], eps, mode, rp.poc.n_states, start, g)

    rel = min(ADAPTIVE_INITIAL_REL, eps)
    prev = None
    for k in range(rounds):
        g = _chain_g_at(rp, rel)
        value = good_bscc_reach(g)[start]
        if start in g.g0 or start in g.g1:
            return ModelCheckResult(value, eps, mode, rp.poc.n_states, start, g, k + 1)
        if prev is not None and abs(value - prev) <= eps / 2 * max(value, prev):
            return ModelCheckResult(value, eps, mode, rp.poc.n_states, start, g, k + 1)
        prev = value
        rel = max(rel * rel, EXACT_MIN_REL)
    raise ConvergenceError(f"Acceptance probability did not stabilise within {rounds} rounds")
