"""
Model types for probabilistic one-counter automata (pOC) and deterministic Rabin automata (DRA),
together with the text formats they are read from and written to.
"""
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
import re
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

from pocan.errors import ModelSyntaxError, ModelValidationError

IDENT_RE = re.compile(r'^[A-Za-z_][A-Za-z0-9_]*$')
# product states join a model state and an automaton state with '.'
STATE_RE = re.compile(r'^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*$')
_PROB_RE = re.compile(r'^(\d+/\d+|\d+(\.\d+)?|\.\d+)$')
_DELTA_RE = re.compile(r'^[+-]?\d+$')

ZERO_DELTAS = (0, 1)
POS_DELTAS = (-1, 0, 1)


def to_fraction(value) -> Fraction:
    """Converts ints, strings, Fractions and floats (via their shortest decimal repr) to an exact Fraction."""
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


def format_delta(delta: int) -> str:
    return f"+{delta}" if delta > 0 else str(delta)


@dataclass(frozen=True)
class Rule:
    src: str
    delta: int
    dst: str
    prob: Fraction

    def __str__(self) -> str:
        return f"{self.src} -[{format_delta(self.delta)}, {self.prob}]-> {self.dst}"


@dataclass(frozen=True)
class Config:
    state: str
    counter: int

    def __post_init__(self):
        if self.counter < 0:
            raise ValueError(f"Counter must be non-negative, got {self.counter}")

    def __str__(self) -> str:
        return f"{self.state}({self.counter})"


@dataclass(frozen=True)
class Valuation:
    """Assigns a letter to each control state, separately for counter 0 and counter >= 1."""

    zero: Mapping[str, str]
    pos: Mapping[str, str]

    def letter(self, state: str, counter: int) -> str:
        return self.zero[state] if counter == 0 else self.pos[state]

    def letters(self) -> set:
        return set(self.zero.values()) | set(self.pos.values())

    def check(self, states: Sequence[str], alphabet: Optional[Sequence[str]] = None):
        """
        Checks totality over states x {0, >=1} and, if given, membership of every letter in the alphabet.

        Raises:
            ModelValidationError: On a missing state or an unknown letter.
        """
        for table, kind in ((self.zero, 'zero'), (self.pos, 'pos')):
            missing = [s for s in states if s not in table]
            if missing:
                raise ModelValidationError(f"Valuation has no {kind} letter for state(s): {', '.join(missing)}")
            extra = [s for s in table if s not in states]
            if extra:
                raise ModelValidationError(f"Valuation names unknown state(s): {', '.join(extra)}")
        if alphabet is not None:
            unknown = sorted(self.letters() - set(alphabet))
            if unknown:
                raise ModelValidationError(f"Valuation letter(s) not in the DRA alphabet: {', '.join(unknown)}")


@dataclass(frozen=True)
class Poc:
    """A probabilistic one-counter automaton. Instances are validated on construction."""

    states: Tuple[str, ...]
    zero_rules: Tuple[Rule, ...]
    pos_rules: Tuple[Rule, ...]
    labels: Optional[Valuation] = field(default=None, compare=True)

    def __post_init__(self):
        object.__setattr__(self, 'states', tuple(self.states))
        object.__setattr__(self, 'zero_rules', tuple(self.zero_rules))
        object.__setattr__(self, 'pos_rules', tuple(self.pos_rules))
        _validate_poc(self)

    @cached_property
    def index(self) -> Dict[str, int]:
        return {s: i for i, s in enumerate(self.states)}

    @cached_property
    def zero_from(self) -> Dict[str, Tuple[Rule, ...]]:
        return _group_by_src(self.states, self.zero_rules)

    @cached_property
    def pos_from(self) -> Dict[str, Tuple[Rule, ...]]:
        return _group_by_src(self.states, self.pos_rules)

    @cached_property
    def x_min(self) -> Fraction:
        return min(r.prob for r in self.zero_rules + self.pos_rules)

    @property
    def n_states(self) -> int:
        return len(self.states)


def _group_by_src(states: Sequence[str], rules: Sequence[Rule]) -> Dict[str, Tuple[Rule, ...]]:
    grouped: Dict[str, List[Rule]] = {s: [] for s in states}
    for r in rules:
        grouped[r.src].append(r)
    return {s: tuple(rs) for s, rs in grouped.items()}


def _validate_poc(m: Poc):
    if not m.states:
        raise ModelValidationError("Model declares no states")
    dupes = [s for s, n in Counter(m.states).items() if n > 1]
    if dupes:
        raise ModelValidationError(f"Duplicate state declaration(s): {', '.join(dupes)}")
    for s in m.states:
        if not STATE_RE.match(s):
            raise ModelValidationError(f"Invalid state identifier '{s}'")
    known = set(m.states)
    for kind, rules, deltas in (('zero', m.zero_rules, ZERO_DELTAS), ('pos', m.pos_rules, POS_DELTAS)):
        seen = set()
        sums: Dict[str, Fraction] = {s: Fraction(0) for s in m.states}
        for r in rules:
            for endpoint in (r.src, r.dst):
                if endpoint not in known:
                    raise ModelValidationError(f"Rule {r} uses undeclared state '{endpoint}'")
            if r.delta not in deltas:
                raise ModelValidationError(f"{kind} rule {r} has counter change {r.delta}; allowed: {deltas}")
            if not (0 < r.prob <= 1):
                raise ModelValidationError(f"{kind} rule {r} has probability {r.prob} outside (0, 1]")
            key = (r.src, r.delta, r.dst)
            if key in seen:
                raise ModelValidationError(f"Duplicate {kind} rule {r.src} {format_delta(r.delta)} {r.dst}")
            seen.add(key)
            sums[r.src] += r.prob
        for s, total in sums.items():
            if total == 0:
                raise ModelValidationError(f"State '{s}' has no {kind} rule")
            if total != 1:
                raise ModelValidationError(f"{kind} rule probabilities of state '{s}' sum to {total}, expected 1")
    if m.labels is not None:
        m.labels.check(m.states)


@dataclass(frozen=True)
class Dra:
    """A deterministic Rabin automaton with a total transition function."""

    alphabet: Tuple[str, ...]
    dra_states: Tuple[str, ...]
    init: str
    trans: Mapping[Tuple[str, str], str]
    pairs: Tuple[Tuple[frozenset, frozenset], ...]

    def __post_init__(self):
        object.__setattr__(self, 'pairs', tuple((frozenset(e), frozenset(f)) for e, f in self.pairs))
        dupes = [s for s, n in Counter(self.dra_states).items() if n > 1]
        if dupes:
            raise ModelValidationError(f"Duplicate DRA state declaration(s): {', '.join(dupes)}")
        for s in self.dra_states:
            if not IDENT_RE.match(s):
                raise ModelValidationError(f"Invalid DRA state identifier '{s}'")
        states = set(self.dra_states)
        if self.init not in states:
            raise ModelValidationError(f"Initial DRA state '{self.init}' is not declared")
        for (r, a), r2 in self.trans.items():
            if r not in states or r2 not in states:
                raise ModelValidationError(f"Transition {r} --{a}--> {r2} uses an undeclared state")
            if a not in self.alphabet:
                raise ModelValidationError(f"Transition {r} --{a}--> {r2} uses unknown letter '{a}'")
        for r in self.dra_states:
            for a in self.alphabet:
                if (r, a) not in self.trans:
                    raise ModelValidationError(f"Missing DRA transition for state '{r}' and letter '{a}'")
        if not self.pairs:
            raise ModelValidationError("DRA has no acceptance pair")
        for e, f in self.pairs:
            unknown = sorted((e | f) - states)
            if unknown:
                raise ModelValidationError(f"Acceptance pair names unknown state(s): {', '.join(unknown)}")

    def step(self, r: str, letter: str) -> str:
        return self.trans[(r, letter)]


def _tokens(line: str) -> List[Tuple[int, str]]:
    """Splits a line into (1-based column, token) pairs, dropping a trailing comment."""
    body = line.split('#', 1)[0]
    return [(m.start() + 1, m.group()) for m in re.finditer(r'\S+', body)]


def _content_lines(text: str) -> Iterator[Tuple[int, List[Tuple[int, str]]]]:
    for lineno, line in enumerate(text.splitlines(), start=1):
        toks = _tokens(line)
        if toks:
            yield lineno, toks


def _ident(tok: Tuple[int, str], lineno: int) -> str:
    col, value = tok
    if not IDENT_RE.match(value):
        raise ModelSyntaxError(f"invalid identifier '{value}'", lineno, col)
    return value


def _prob(tok: Tuple[int, str], lineno: int) -> Fraction:
    col, value = tok
    if not _PROB_RE.match(value):
        raise ModelSyntaxError(f"invalid probability '{value}' (expected INT/INT or a decimal)", lineno, col)
    if '/' in value and int(value.split('/')[1]) == 0:
        raise ModelSyntaxError(f"zero denominator in '{value}'", lineno, col)
    return Fraction(value)


def _delta(tok: Tuple[int, str], lineno: int) -> int:
    col, value = tok
    if not _DELTA_RE.match(value):
        raise ModelSyntaxError(f"invalid counter change '{value}'", lineno, col)
    return int(value)


def _header(lines: List[Tuple[int, List[Tuple[int, str]]]], expected: str):
    if not lines:
        raise ModelSyntaxError(f"empty input, expected header '{expected}'", 1)
    lineno, toks = lines[0]
    if [t for _, t in toks] != expected.split():
        raise ModelSyntaxError(f"expected header '{expected}'", lineno, toks[0][0])


def parse_poc(text: str) -> Poc:
    """
    Parses the line-oriented pOC model format.

    Args:
        text: The model text, starting with the header line `poc v1`.

    Returns:
        A validated Poc whose state order is the declaration order.

    Raises:
        ModelSyntaxError: If a line does not follow the grammar.
        ModelValidationError: If the model violates a structural invariant.
    """
    lines = list(_content_lines(text))
    _header(lines, 'poc v1')
    states: List[str] = []
    zero: List[Rule] = []
    pos: List[Rule] = []
    zero_labels: Dict[str, str] = {}
    pos_labels: Dict[str, str] = {}
    seen_rules: Dict[Tuple[str, str, int, str], int] = {}

    for lineno, toks in lines[1:]:
        keyword = toks[0][1]
        if keyword == 'state':
            if len(toks) < 2:
                raise ModelSyntaxError("'state' needs at least one identifier", lineno, toks[0][0])
            states.extend(_ident(t, lineno) for t in toks[1:])
        elif keyword in ('zero', 'pos'):
            if len(toks) != 5:
                raise ModelSyntaxError(f"'{keyword}' takes <src> <delta> <dst> <prob>", lineno, toks[0][0])
            src, delta, dst = _ident(toks[1], lineno), _delta(toks[2], lineno), _ident(toks[3], lineno)
            prob = _prob(toks[4], lineno)
            key = (keyword, src, delta, dst)
            if key in seen_rules:
                raise ModelValidationError(
                    f"line {lineno}: duplicate {keyword} rule {src} {format_delta(delta)} {dst} "
                    f"(first declared on line {seen_rules[key]})")
            seen_rules[key] = lineno
            (zero if keyword == 'zero' else pos).append(Rule(src, delta, dst, prob))
        elif keyword == 'label':
            if len(toks) != 4:
                raise ModelSyntaxError("'label' takes <state> zero=<letter> pos=<letter>", lineno, toks[0][0])
            state = _ident(toks[1], lineno)
            for col, assignment in toks[2:]:
                name, sep, letter = assignment.partition('=')
                if not sep or name not in ('zero', 'pos') or not IDENT_RE.match(letter):
                    raise ModelSyntaxError(f"invalid label assignment '{assignment}'", lineno, col)
                (zero_labels if name == 'zero' else pos_labels)[state] = letter
        else:
            raise ModelSyntaxError(f"unknown keyword '{keyword}'", lineno, toks[0][0])

    labels = Valuation(zero_labels, pos_labels) if (zero_labels or pos_labels) else None
    return Poc(tuple(states), tuple(zero), tuple(pos), labels)


def parse_dra(text: str) -> Dra:
    """
    Parses the DRA format (`dra v1`, `alphabet`, `state`, `init`, `trans` and `pair E ... ; F ...` lines).

    Raises:
        ModelSyntaxError: If a line does not follow the grammar.
        ModelValidationError: If the transition function is not total or names unknown letters or states.
    """
    lines = list(_content_lines(text))
    _header(lines, 'dra v1')
    alphabet: List[str] = []
    states: List[str] = []
    init: Optional[str] = None
    trans: Dict[Tuple[str, str], str] = {}
    pairs: List[Tuple[frozenset, frozenset]] = []

    for lineno, toks in lines[1:]:
        keyword = toks[0][1]
        if keyword == 'alphabet':
            alphabet.extend(_ident(t, lineno) for t in toks[1:])
        elif keyword == 'state':
            states.extend(_ident(t, lineno) for t in toks[1:])
        elif keyword == 'init':
            if len(toks) != 2:
                raise ModelSyntaxError("'init' takes exactly one state", lineno, toks[0][0])
            init = _ident(toks[1], lineno)
        elif keyword == 'trans':
            if len(toks) != 4:
                raise ModelSyntaxError("'trans' takes <state> <letter> <state>", lineno, toks[0][0])
            src, letter, dst = (_ident(t, lineno) for t in toks[1:])
            if (src, letter) in trans and trans[(src, letter)] != dst:
                raise ModelValidationError(f"line {lineno}: DRA transition for ({src}, {letter}) is not deterministic")
            trans[(src, letter)] = dst
        elif keyword == 'pair':
            pairs.append(_parse_pair(toks[1:], lineno, toks[0][0]))
        else:
            raise ModelSyntaxError(f"unknown keyword '{keyword}'", lineno, toks[0][0])

    if init is None:
        raise ModelValidationError("DRA declares no initial state")
    if not alphabet:
        raise ModelValidationError("DRA declares an empty alphabet")
    return Dra(tuple(alphabet), tuple(states), init, trans, tuple(pairs))


def _parse_pair(toks: List[Tuple[int, str]], lineno: int, col: int) -> Tuple[frozenset, frozenset]:
    # `;` may stand alone or be glued to a neighbouring token
    words: List[Tuple[int, str]] = []
    for c, t in toks:
        parts = re.split(r'(;)', t)
        offset = 0
        for p in parts:
            if p:
                words.append((c + offset, p))
            offset += len(p)
    values = [w for _, w in words]
    if values.count(';') != 1 or not values or values[0] != 'E':
        raise ModelSyntaxError("pair must read 'pair E <ids...> ; F <ids...>'", lineno, col)
    split = values.index(';')
    right = words[split + 1:]
    if not right or right[0][1] != 'F':
        raise ModelSyntaxError("pair must read 'pair E <ids...> ; F <ids...>'", lineno, col)
    e = frozenset(_ident(w, lineno) for w in words[1:split])
    f = frozenset(_ident(w, lineno) for w in right[1:])
    return e, f


def render_poc(m: Poc) -> str:
    """Renders the canonical text form; `parse_poc(render_poc(m)) == m`."""
    out = ["poc v1", "state " + " ".join(m.states)]
    for kind, rules in (('zero', m.zero_rules), ('pos', m.pos_rules)):
        out.extend(f"{kind} {r.src} {format_delta(r.delta)} {r.dst} {r.prob}" for r in rules)
    if m.labels is not None:
        out.extend(f"label {s} zero={m.labels.zero[s]} pos={m.labels.pos[s]}" for s in m.states)
    return "\n".join(out) + "\n"


def render_dra(d: Dra) -> str:
    out = ["dra v1", "alphabet " + " ".join(d.alphabet), "state " + " ".join(d.dra_states), f"init {d.init}"]
    out.extend(f"trans {r} {a} {d.trans[(r, a)]}" for r in d.dra_states for a in d.alphabet)
    for e, f in d.pairs:
        order = {r: i for i, r in enumerate(d.dra_states)}
        es = " ".join(sorted(e, key=order.get))
        fs = " ".join(sorted(f, key=order.get))
        out.append(f"pair E {es} ; F {fs}".replace("  ", " ").rstrip())
    return "\n".join(out) + "\n"


def step_distribution(m: Poc, c: Config) -> List[Tuple[Config, Fraction]]:
    """Successor distribution of configuration c in the induced Markov chain."""
    if c.state not in m.index:
        raise ModelValidationError(f"Unknown state '{c.state}'")
    rules = m.zero_from[c.state] if c.counter == 0 else m.pos_from[c.state]
    return [(Config(r.dst, c.counter + r.delta), r.prob) for r in rules]


AND_OR_STATES = ('and_init', 'and_ret0', 'and_ret1', 'or_init', 'or_ret0', 'or_ret1')


def and_or_model(z, y, x_a, x_o) -> Poc:
    """
    Builds the six-state AND-OR evaluation model.

    `and_*` states evaluate an AND node and `or_*` states an OR node; `*_init` explores a child
    (+1) or finishes the node (-1), and `*_ret0`/`*_ret1` receive the child's value. Every state
    also gets a probability-1 zero self-loop, so `or_ret0(0)` and `or_ret1(0)` are absorbing.

    Args:
        z: Probability that a leaf evaluates to 1.
        y: Probability that a node is a leaf.
        x_a: Probability that an AND node returns early after a child evaluated to 1.
        x_o: Probability that an OR node returns early after a child evaluated to 0.

    Raises:
        ModelValidationError: If a parameter is not strictly between 0 and 1.
    """
    params = {'z': z, 'y': y, 'x_a': x_a, 'x_o': x_o}
    values = {}
    for name, raw in params.items():
        v = to_fraction(raw)
        if not (0 < v < 1):
            raise ModelValidationError(f"Parameter {name} = {v} must lie strictly between 0 and 1")
        values[name] = v
    z, y, x_a, x_o = values['z'], values['y'], values['x_a'], values['x_o']
    one = Fraction(1)
    pos = (
        Rule('and_init', -1, 'or_ret1', y * z),
        Rule('and_init', -1, 'or_ret0', y * (1 - z)),
        Rule('and_init', +1, 'or_init', 1 - y),
        Rule('and_ret1', +1, 'or_init', 1 - x_a),
        Rule('and_ret1', -1, 'or_ret1', x_a),
        Rule('and_ret0', -1, 'or_ret0', one),
        Rule('or_init', -1, 'and_ret1', y * z),
        Rule('or_init', -1, 'and_ret0', y * (1 - z)),
        Rule('or_init', +1, 'and_init', 1 - y),
        Rule('or_ret0', +1, 'and_init', 1 - x_o),
        Rule('or_ret0', -1, 'and_ret0', x_o),
        Rule('or_ret1', -1, 'and_ret1', one),
    )
    zero = tuple(Rule(s, 0, s, one) for s in AND_OR_STATES)
    return Poc(AND_OR_STATES, zero, pos)
