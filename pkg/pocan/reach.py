"""
Regular sets of configurations and their backward (Pre*) and forward (Post*) closures.

A counter value n is encoded as the stack X^n over a single letter, so automaton edges carry no
label: p(n) is accepted iff some path of exactly n edges leads from control state p to an accepting
state. Only positive rules are used, hence every path found stays at counter >= 1 until its end.
"""
from collections import defaultdict, deque
from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, Hashable, Iterable, Iterator, List, Optional, Set, Tuple

import networkx as nx

from pocan.model import Config, Poc

AutoState = Hashable


@dataclass(frozen=True)
class PAutomaton:
    controls: Tuple[str, ...]
    states: FrozenSet[AutoState]
    edges: FrozenSet[Tuple[AutoState, AutoState]]
    accepting: FrozenSet[AutoState]

    def successors(self) -> Dict[AutoState, Set[AutoState]]:
        succ: Dict[AutoState, Set[AutoState]] = defaultdict(set)
        for a, b in self.edges:
            succ[a].add(b)
        return succ

    def graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.states)
        g.add_edges_from(self.edges)
        return g


@dataclass(frozen=True)
class ConfigSetInfo:
    automaton: PAutomaton
    finite: bool
    size_bound: Optional[int]


def config_automaton(m: Poc, configs: Iterable[Config]) -> PAutomaton:
    """Automaton accepting exactly the given finite set of configurations."""
    states: Set[AutoState] = set(m.states)
    edges: Set[Tuple[AutoState, AutoState]] = set()
    accepting: Set[AutoState] = set()
    for c in configs:
        if c.counter == 0:
            accepting.add(c.state)
            continue
        prev: AutoState = c.state
        for k in range(1, c.counter + 1):
            node = ('cfg', c.state, c.counter, k)
            states.add(node)
            edges.add((prev, node))
            prev = node
        accepting.add(prev)
    return PAutomaton(m.states, frozenset(states), frozenset(edges), frozenset(accepting))


def zero_automaton(m: Poc, targets: Optional[Iterable[str]] = None) -> PAutomaton:
    """Automaton for {q(0) : q in targets}; all control states when targets is None."""
    targets = m.states if targets is None else tuple(targets)
    return config_automaton(m, (Config(q, 0) for q in targets))


def universal_automaton(m: Poc) -> PAutomaton:
    top = ('all',)
    states = frozenset(m.states) | {top}
    edges = frozenset((p, top) for p in m.states) | {(top, top)}
    return PAutomaton(m.states, states, edges, states)


def _check_no_edges_into_controls(x: PAutomaton):
    controls = set(x.controls)
    bad = sorted({b for _, b in x.edges if b in controls}, key=repr)
    if bad:
        raise ValueError(f"Input automaton has edges into control state(s) {bad}")


def pre_star(m: Poc, target: PAutomaton) -> PAutomaton:
    """
    Saturates `target` backwards under the positive rules.

    Rule (p,-1,q) adds p->q, rule (p,0,q) adds p->s for every edge q->s, and rule (p,+1,q)
    adds p->s2 for every path q->s1->s2. Iterates until no edge is added.
    """
    _check_no_edges_into_controls(target)
    succ = target.successors()
    grew = True
    while grew:
        grew = False
        for r in m.pos_rules:
            if r.delta == -1:
                new = {r.dst}
            elif r.delta == 0:
                new = set(succ[r.dst])
            else:
                new = {s2 for s1 in succ[r.dst] for s2 in succ[s1]}
            added = new - succ[r.src]
            if added:
                succ[r.src] |= added
                grew = True
    edges = frozenset((a, b) for a, bs in succ.items() for b in bs)
    return PAutomaton(target.controls, target.states, edges, target.accepting)


def post_star(m: Poc, source: PAutomaton) -> PAutomaton:
    """
    Saturates `source` forwards under the positive rules.

    One auxiliary state per push target holds the pushed letter; pop rules create epsilon moves
    which are materialised as plain edges, and control states that reach an accepting state by
    an epsilon move become accepting.
    """
    _check_no_edges_into_controls(source)
    controls = set(m.states)
    rel: Dict[AutoState, Set[AutoState]] = defaultdict(set)
    eps: Dict[AutoState, Set[AutoState]] = defaultdict(set)
    eps_into: Dict[AutoState, Set[AutoState]] = defaultdict(set)
    aux_states: Set[AutoState] = set()
    work = deque(('x', a, b) for a, b in sorted(source.edges, key=repr))

    while work:
        kind, a, b = work.popleft()
        if kind == 'e':
            if b in eps[a]:
                continue
            eps[a].add(b)
            eps_into[b].add(a)
            work.extend(('x', a, c) for c in list(rel[b]))
            continue
        if b in rel[a]:
            continue
        rel[a].add(b)
        work.extend(('x', p, b) for p in list(eps_into[a]))
        if a not in controls:
            continue
        for r in m.pos_from[a]:
            if r.delta == -1:
                work.append(('e', r.dst, b))
            elif r.delta == 0:
                work.append(('x', r.dst, b))
            else:
                aux = ('push', r.dst)
                aux_states.add(aux)
                work.append(('x', r.dst, aux))
                if b not in rel[aux]:
                    rel[aux].add(b)
                    work.extend(('x', p, b) for p in list(eps_into[aux]))

    accepting = set(source.accepting)
    accepting |= {p for p in controls if eps[p] & source.accepting}
    edges = frozenset((a, b) for a, bs in rel.items() for b in bs)
    return PAutomaton(source.controls, source.states | aux_states, edges, frozenset(accepting))


def intersect(x: PAutomaton, y: PAutomaton) -> PAutomaton:
    """Product automaton restricted to pairs reachable from (p, p); the pair (p, p) is named p."""
    xs, ys = x.successors(), y.successors()
    controls = tuple(p for p in x.controls if p in set(y.controls))

    def name(pair):
        a, b = pair
        return a if a == b and a in controls else pair

    seen = {(p, p) for p in controls}
    queue = deque(sorted(seen, key=repr))
    edges = set()
    while queue:
        a, b = queue.popleft()
        for a2 in xs[a]:
            for b2 in ys[b]:
                nxt = (a2, b2)
                edges.add((name((a, b)), name(nxt)))
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
    accepting = {name(s) for s in seen if s[0] in x.accepting and s[1] in y.accepting}
    return PAutomaton(controls, frozenset(name(s) for s in seen), frozenset(edges), frozenset(accepting))


def trim(x: PAutomaton) -> PAutomaton:
    """Keeps only states reachable from a control state and co-reachable to an accepting state."""
    g = x.graph()
    reach: Set[AutoState] = set()
    for p in x.controls:
        if p in g:
            reach |= {p} | nx.descendants(g, p)
    coreach: Set[AutoState] = set()
    for f in x.accepting:
        if f in g:
            coreach |= {f} | nx.ancestors(g, f)
    keep = reach & coreach
    edges = frozenset((a, b) for a, b in x.edges if a in keep and b in keep)
    return PAutomaton(x.controls, frozenset(keep), edges, frozenset(x.accepting & keep))


def is_infinite(x: PAutomaton) -> bool:
    t = trim(x)
    if not t.states:
        return False
    return not nx.is_directed_acyclic_graph(t.graph())


def accepts(x: PAutomaton, state: str, counter: int, succ: Optional[Dict] = None) -> bool:
    succ = x.successors() if succ is None else succ
    current = {state}
    for _ in range(counter):
        current = {b for a in current for b in succ.get(a, ())}
        if not current:
            return False
    return bool(current & x.accepting)


def enumerate_configs(x: PAutomaton) -> Iterator[Config]:
    """
    Lists the accepted configurations of a finite language, per control state by increasing counter.

    Raises:
        ValueError: If the language is infinite.
    """
    if is_infinite(x):
        raise ValueError("Cannot enumerate an infinite configuration set")
    t = trim(x)
    succ = t.successors()
    for p in t.controls:
        if p not in t.states:
            continue
        current = {p}
        n = 0
        while current:
            if current & t.accepting:
                yield Config(p, n)
            current = {b for a in current for b in succ.get(a, ())}
            n += 1


def config_set_info(x: PAutomaton, nq: int) -> ConfigSetInfo:
    finite = not is_infinite(x)
    return ConfigSetInfo(x, finite, nq * nq * (nq + 2) if finite else None)


def positive_pairs(m: Poc) -> Set[Tuple[str, str]]:
    """All (p, q) with [p↓q] > 0, i.e. p(1) in Pre*({q(0)})."""
    pairs = set()
    for q in m.states:
        pre = pre_star(m, zero_automaton(m, [q]))
        succ = pre.successors()
        pairs |= {(p, q) for p in m.states if accepts(pre, p, 1, succ)}
    return pairs


def sure_divergers(m: Poc) -> Set[str]:
    """States q with [q↑] = 1: q(1) cannot reach any counter-0 configuration."""
    pre = pre_star(m, zero_automaton(m))
    succ = pre.successors()
    return {q for q in m.states if not accepts(pre, q, 1, succ)}


def post_from(m: Poc, p: str, counter: int = 1) -> PAutomaton:
    return post_star(m, config_automaton(m, [Config(p, counter)]))


def reach_positive(m: Poc, p: str, q: str, post: Optional[PAutomaton] = None) -> bool:
    """True iff some q(k) with k >= 1 is reachable from p(1) without the counter hitting 0."""
    post = post_from(m, p) if post is None else post
    succ = post.successors()
    frontier = set(succ.get(q, ()))
    seen = set(frontier)
    while frontier:
        if frontier & post.accepting:
            return True
        frontier = {b for a in frontier for b in succ.get(a, ())} - seen
        seen |= frontier
    return False


def ordered_pairs(m: Poc, pairs: Iterable[Tuple[str, str]]) -> List[Tuple[str, str]]:
    return sorted(pairs, key=lambda pq: (m.index[pq[0]], m.index[pq[1]]))


def shortest_witness(m: Poc, start: Config, is_goal: Callable[[Config], bool], cap: int) -> Optional[List[Config]]:
    """
    Breadth-first search for a shortest path of positive steps from `start` to a goal configuration.

    Counters are kept in [1, cap]; the search never passes through counter 0.
    """
    if is_goal(start):
        return [start]
    parent: Dict[Config, Optional[Config]] = {start: None}
    queue = deque([start])
    while queue:
        c = queue.popleft()
        for r in m.pos_from[c.state]:
            k = c.counter + r.delta
            if k < 1 or k > cap:
                continue
            nxt = Config(r.dst, k)
            if nxt in parent:
                continue
            parent[nxt] = c
            if is_goal(nxt):
                path = [nxt]
                while parent[path[-1]] is not None:
                    path.append(parent[path[-1]])
                return path[::-1]
            queue.append(nxt)
    return None
