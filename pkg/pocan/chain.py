"""The finite Markov chain on control states that ignores the counter, and its BSCC quantities."""
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Dict, List, Tuple

import networkx as nx
import numpy as np

from pocan.errors import InvariantViolationError, SingularSystemError
from pocan.linalg import identity, inverse_exact, rank_exact, solve_exact
from pocan.model import Config, Poc, step_distribution


@dataclass(frozen=True, eq=False)
class UnderlyingChain:
    """Transition matrix `a` of the positive rules and expected counter change `s`, both exact."""

    states: Tuple[str, ...]
    a: np.ndarray
    s: np.ndarray

    @cached_property
    def index(self) -> Dict[str, int]:
        return {q: i for i, q in enumerate(self.states)}

    def graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.states)
        n = len(self.states)
        g.add_edges_from((self.states[i], self.states[j]) for i in range(n) for j in range(n) if self.a[i, j] != 0)
        return g


@dataclass(frozen=True)
class SccDecomposition:
    """Components in reverse topological order: a component only has edges into earlier ones."""

    components: Tuple[Tuple[str, ...], ...]
    is_bottom: Tuple[bool, ...]

    def bottoms(self) -> List[Tuple[str, ...]]:
        return [c for c, b in zip(self.components, self.is_bottom) if b]

    def component_of(self, state: str) -> Tuple[str, ...]:
        for c in self.components:
            if state in c:
                return c
        raise KeyError(state)

    def bottom_of(self, state: str):
        """The BSCC containing `state`, or None when the state is transient."""
        for c, b in zip(self.components, self.is_bottom):
            if state in c:
                return c if b else None
        raise KeyError(state)


@dataclass(frozen=True)
class BsccAnalysis:
    members: Tuple[str, ...]
    alpha: Dict[str, Fraction]
    trend: Fraction
    potential: Dict[str, Fraction]

    @property
    def v_max(self) -> Fraction:
        return max(self.potential.values())

    @property
    def v_min(self) -> Fraction:
        return min(self.potential.values())

    @property
    def span(self) -> Fraction:
        return self.v_max - self.v_min

    def argmax_potential(self) -> str:
        """First member (declaration order) whose potential equals v_max."""
        top = self.v_max
        return next(q for q in self.members if self.potential[q] == top)


def underlying_chain(m: Poc) -> UnderlyingChain:
    n = m.n_states
    a = np.array([[Fraction(0)] * n for _ in range(n)], dtype=object)
    s = np.array([Fraction(0)] * n, dtype=object)
    for r in m.pos_rules:
        i, j = m.index[r.src], m.index[r.dst]
        a[i, j] += r.prob
        s[i] += r.prob * r.delta
    return UnderlyingChain(m.states, a, s)


def scc_decompose(u: UnderlyingChain) -> SccDecomposition:
    g = u.graph()
    order = u.index
    sccs = [tuple(sorted(c, key=order.get)) for c in nx.strongly_connected_components(g)]
    condensed = nx.condensation(g, scc=[set(c) for c in sccs])
    members = {node: tuple(sorted(condensed.nodes[node]['members'], key=order.get)) for node in condensed.nodes}
    topo = list(nx.lexicographical_topological_sort(condensed, key=lambda node: order[members[node][0]]))
    components = []
    bottoms = []
    for node in reversed(topo):
        components.append(members[node])
        bottoms.append(condensed.out_degree(node) == 0)
    return SccDecomposition(tuple(components), tuple(bottoms))


def bscc_analysis(u: UnderlyingChain, b) -> BsccAnalysis:
    """
    Computes the invariant distribution, trend and potential of a bottom SCC in exact arithmetic.

    The potential v solves s + A v = v + t·1 and is normalised so that min(v) = 0.

    Raises:
        SingularSystemError: If `b` is not a bottom strongly connected component.
    """
    members = tuple(sorted(b, key=u.index.get))
    idx = [u.index[q] for q in members]
    n = len(idx)
    a_b = u.a[np.ix_(idx, idx)]
    s_b = u.s[idx]
    for k, i in enumerate(idx):
        if sum(a_b[k, :]) != 1:
            raise SingularSystemError(f"State '{u.states[i]}' leaves the component {{{', '.join(members)}}}")

    eye = identity(n)
    lap = eye - a_b
    if rank_exact(lap) != n - 1:
        raise SingularSystemError(f"Component {{{', '.join(members)}}} is not strongly connected")
    # alpha (I - A) = 0 with one equation replaced by sum(alpha) = 1
    system = lap.T.copy()
    system[n - 1, :] = Fraction(1)
    rhs = np.array([Fraction(0)] * (n - 1) + [Fraction(1)], dtype=object)
    alpha = solve_exact(system, rhs)
    if any(x <= 0 for x in alpha):
        raise InvariantViolationError(f"Invariant distribution has a non-positive entry: {list(alpha)}")
    trend = sum(alpha * s_b)

    w = np.array([list(alpha) for _ in range(n)], dtype=object)
    z = inverse_exact(lap + w)
    v = z.dot(s_b)
    v = v - min(v)

    check = s_b + a_b.dot(v) - v - trend
    if any(x != 0 for x in check):
        raise InvariantViolationError(f"Potential identity fails on {{{', '.join(members)}}}: {list(check)}")

    return BsccAnalysis(
        members=members,
        alpha={q: alpha[k] for k, q in enumerate(members)},
        trend=trend,
        potential={q: v[k] for k, q in enumerate(members)},
    )


def analyze_bsccs(m: Poc) -> Tuple[UnderlyingChain, SccDecomposition, List[BsccAnalysis]]:
    """Runs the underlying chain, its SCC decomposition and one BsccAnalysis per bottom component."""
    u = underlying_chain(m)
    scc = scc_decompose(u)
    return u, scc, [bscc_analysis(u, b) for b in scc.bottoms()]


def martingale_residual(m: Poc, analysis: BsccAnalysis, c: Config) -> Fraction:
    """E[counter' + v(state') - t] - (counter + v(state)) after one step from c; exactly zero inside a BSCC."""
    if c.state not in analysis.potential:
        raise ValueError(f"State '{c.state}' is not in the component")
    if c.counter < 1:
        raise ValueError("The martingale is defined for positive counters only")
    v = analysis.potential
    expected = sum(p * (nxt.counter + v[nxt.state] - analysis.trend) for nxt, p in step_distribution(m, c))
    return expected - (c.counter + v[c.state])
