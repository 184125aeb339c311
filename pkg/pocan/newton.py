"""
Termination probabilities [p↓q] as the least solution of a quadratic fixed-point system,
computed by Newton's method decomposed along the strongly connected components of the
variable dependency graph.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import cached_property
import math
from typing import Callable, Dict, List, Optional, Set, Tuple, Union

import mpmath
import networkx as nx
import numpy as np

from pocan.errors import ConvergenceError, PrecisionInfeasibleError, SingularSystemError
from pocan.linalg import min_singular_value, solve_float
from pocan.model import Poc
from pocan.reach import ordered_pairs, positive_pairs
from pocan.utils import worker_count

Pair = Tuple[str, str]
Number = Union[float, Fraction]

FLOAT64_MIN_REL = 2.0 ** -30
EXACT_MIN_REL = 2.0 ** -230
DENOMINATOR_BITS = 256
MAX_DENOMINATOR_BITS = 4096
_MACHINE_EPS = 2.0 ** -52


class Backend(str, Enum):
    EXACT_RATIONAL = "exact_rational"
    FLOAT64 = "float64"


@dataclass
class QuadraticSystem:
    """
    x_i = const_i + sum(c * x_j) + sum(c * x_j * x_k) for every pair i in T^{>0}.

    `dependency_sccs` lists variable blocks so that a block only depends on itself and on
    earlier blocks; `levels` groups block indices that can be solved independently.
    """

    pairs: List[Pair]
    const: List[Fraction]
    linear: List[Tuple[int, int, Fraction]]
    bilinear: List[Tuple[int, int, int, Fraction]]
    dependency_sccs: List[List[int]] = field(default_factory=list)
    levels: List[List[int]] = field(default_factory=list)

    @cached_property
    def index(self) -> Dict[Pair, int]:
        return {pq: i for i, pq in enumerate(self.pairs)}

    @property
    def size(self) -> int:
        return len(self.pairs)

    @cached_property
    def _arrays(self):
        lin = np.array(self.linear, dtype=object).reshape(-1, 3)
        bil = np.array(self.bilinear, dtype=object).reshape(-1, 4)
        return (
            np.array([float(c) for c in self.const], dtype=float),
            lin[:, 0].astype(np.int64), lin[:, 1].astype(np.int64), lin[:, 2].astype(float),
            bil[:, 0].astype(np.int64), bil[:, 1].astype(np.int64), bil[:, 2].astype(np.int64), bil[:, 3].astype(float),
        )

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        const, lr, lc, lw, br, b1, b2, bw = self._arrays
        n = self.size
        return (const
                + np.bincount(lr, weights=lw * x[lc], minlength=n)
                + np.bincount(br, weights=bw * x[b1] * x[b2], minlength=n))

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        _, lr, lc, lw, br, b1, b2, bw = self._arrays
        j = np.zeros((self.size, self.size))
        np.add.at(j, (lr, lc), lw)
        np.add.at(j, (br, b1), bw * x[b2])
        np.add.at(j, (br, b2), bw * x[b1])
        return j

    def evaluate_exact(self, x: List[Fraction], rows: Optional[List[int]] = None) -> Dict[int, Fraction]:
        rows = range(self.size) if rows is None else rows
        wanted = set(rows)
        out = {i: self.const[i] for i in rows}
        for i, j, c in self.linear:
            if i in wanted:
                out[i] += c * x[j]
        for i, j, k, c in self.bilinear:
            if i in wanted:
                out[i] += c * x[j] * x[k]
        return out

    def jacobian_exact(self, x: List[Fraction], block: List[int]) -> List[List[Fraction]]:
        pos = {v: k for k, v in enumerate(block)}
        j = [[Fraction(0)] * len(block) for _ in block]
        for i, a, c in self.linear:
            if i in pos and a in pos:
                j[pos[i]][pos[a]] += c
        for i, a, b, c in self.bilinear:
            if i in pos:
                if a in pos:
                    j[pos[i]][pos[a]] += c * x[b]
                if b in pos:
                    j[pos[i]][pos[b]] += c * x[a]
        return j


@dataclass
class TermSolution:
    values: Dict[Pair, Number]
    rel_err: float
    residual: float
    backend: Backend
    iterations: int = 0
    escalated_blocks: int = 0

    def prob(self, p: str, q: str) -> Number:
        return self.values.get((p, q), 0)

    def total_from(self, p: str) -> Number:
        return sum(v for (a, _), v in self.values.items() if a == p)


def build_term_system(m: Poc, tpos: Set[Pair]) -> QuadraticSystem:
    """Instantiates the termination equations over the variables in `tpos`, dropping terms with a zero variable."""
    pairs = ordered_pairs(m, tpos)
    index = {pq: i for i, pq in enumerate(pairs)}
    const = [Fraction(0)] * len(pairs)
    linear: Dict[Tuple[int, int], Fraction] = {}
    bilinear: Dict[Tuple[int, int, int], Fraction] = {}
    for i, (p, q) in enumerate(pairs):
        for r in m.pos_from[p]:
            if r.delta == -1:
                if r.dst == q:
                    const[i] += r.prob
            elif r.delta == 0:
                j = index.get((r.dst, q))
                if j is not None:
                    linear[(i, j)] = linear.get((i, j), Fraction(0)) + r.prob
            else:
                for mid in m.states:
                    j, k = index.get((r.dst, mid)), index.get((mid, q))
                    if j is not None and k is not None:
                        bilinear[(i, j, k)] = bilinear.get((i, j, k), Fraction(0)) + r.prob

    sys_ = QuadraticSystem(
        pairs=pairs,
        const=const,
        linear=[(i, j, c) for (i, j), c in linear.items()],
        bilinear=[(i, j, k, c) for (i, j, k), c in bilinear.items()],
    )
    _decompose(sys_)
    return sys_


def _decompose(sys_: QuadraticSystem):
    g = nx.DiGraph()
    g.add_nodes_from(range(sys_.size))
    g.add_edges_from((i, j) for i, j, _ in sys_.linear)
    g.add_edges_from((i, j) for i, j, _, _ in sys_.bilinear)
    g.add_edges_from((i, k) for i, _, k, _ in sys_.bilinear)
    condensed = nx.condensation(g)
    # dependencies point from a block to the blocks it reads, so solve sinks first
    generations = list(nx.topological_generations(condensed.reverse(copy=True)))
    blocks: List[List[int]] = []
    levels: List[List[int]] = []
    for gen in generations:
        level = []
        for node in sorted(gen, key=lambda c: min(condensed.nodes[c]['members'])):
            level.append(len(blocks))
            blocks.append(sorted(condensed.nodes[node]['members']))
        levels.append(level)
    sys_.dependency_sccs = blocks
    sys_.levels = levels


def residual(sys_: QuadraticSystem, vals: Dict[Pair, Number]) -> Fraction:
    """Exact max over equations of |rhs(vals) - vals|; float inputs are converted exactly."""
    x = [Fraction(vals[pq]) for pq in sys_.pairs]
    if not x:
        return Fraction(0)
    rhs = sys_.evaluate_exact(x)
    return max(abs(rhs[i] - x[i]) for i in range(sys_.size))


def choose_backend(eps: float) -> Backend:
    if eps >= FLOAT64_MIN_REL:
        return Backend.FLOAT64
    if eps >= EXACT_MIN_REL:
        return Backend.EXACT_RATIONAL
    raise PrecisionInfeasibleError("Relative error is below what the exact backend supports", math.log2(eps))


def iteration_cap(nq: int, eps: float) -> int:
    return max(64, int(math.ceil(64 * nq ** 3 * math.log2(1.0 / eps))))


def grid_bits(eps: float, bits: int = DENOMINATOR_BITS) -> int:
    """Dyadic grid size that resolves residuals of order eps², as met on critical blocks."""
    return max(bits, 2 * math.ceil(math.log2(1.0 / eps)) + 64)


def _floor_dyadic(v: Fraction, bits: int) -> Fraction:
    scale = 1 << bits
    return Fraction(math.floor(v * scale), scale)


def _float_below(v: Fraction) -> float:
    f = float(v)
    return float(np.nextafter(f, 0.0)) if Fraction(f) > v else f


def _positivity_floor(m: Poc) -> float:
    try:
        return float(m.x_min ** (m.n_states ** 3))
    except OverflowError:
        return 0.0


class _BlockSolver:
    """
    Shared state of one decomposed Newton solve.

    A block stops once the relative change drops below eps/4 and the residual is below
    eps/4 times a certified lower bound on its values (the positivity floor, or the smallest
    current iterate when that is larger). Float64 blocks whose Jacobian is too close to
    singular for that certificate to bound the error are re-solved on the exact path.
    """

    def __init__(self, sys_: QuadraticSystem, eps: float, floor: float, cap: int, backend: Backend, bits: int,
                 observer: Optional[Callable[[int, List[Number]], None]] = None):
        self.sys = sys_
        self.eps = eps
        self.floor = floor
        self.cap = cap
        self.backend = backend
        self.bits = bits
        self.observer = observer
        if backend is Backend.FLOAT64:
            self.x = np.zeros(sys_.size)
        else:
            self.x = [Fraction(0)] * sys_.size
        self.iterations: Dict[int, int] = {}
        self.escalated: List[int] = []

    def _threshold(self, low: float) -> float:
        return self.eps / 4 * max(self.floor, low)

    def _error_bound(self, idx: np.ndarray, x: np.ndarray, res: float) -> float:
        """First-order bound on the absolute error: (residual + rounding) / sigma_min(I - J)."""
        eye = np.eye(len(idx))
        sigma = min_singular_value(eye - self.sys.jacobian(x)[np.ix_(idx, idx)])
        if sigma <= 0:
            return math.inf
        noise = 16 * _MACHINE_EPS * max(1.0, float(np.max(np.abs(x[idx]))))
        return (res + noise) / sigma

    def solve_float(self, b: int):
        block = self.sys.dependency_sccs[b]
        idx = np.array(block)
        eye = np.eye(len(block))
        x = self.x
        res = math.inf
        for it in range(1, self.cap + 1):
            f = self.sys.evaluate(x)[idx]
            rhs = f - x[idx]
            try:
                delta = solve_float(eye - self.sys.jacobian(x)[np.ix_(idx, idx)], rhs)
            except SingularSystemError:
                delta = rhs
            old = x[idx].copy()
            new = np.minimum(np.maximum(old + delta, old), 1.0)
            x[idx] = new
            if self.observer is not None:
                self.observer(b, list(new))
            res = float(np.max(np.abs(self.sys.evaluate(x)[idx] - new)))
            change = float(np.max(np.abs(new - old) / np.maximum(new, np.finfo(float).tiny)))
            low = float(np.min(new))
            at_noise = res <= 64 * _MACHINE_EPS
            if change < self.eps / 4 and res < self._threshold(low):
                if low > 0 and self._error_bound(idx, x, res) <= self.eps / 4 * low:
                    self.iterations[b] = it
                    return
                return self._escalate(b, it)
            if at_noise and not (low > 0 and self._error_bound(idx, x, res) <= self.eps / 4 * low):
                return self._escalate(b, it)
        raise ConvergenceError(f"Newton iteration did not converge on block {b} within {self.cap} steps", res)

    def _escalate(self, b: int, spent: int):
        block = self.sys.dependency_sccs[b]
        exact = [Fraction(float(v)) for v in self.x]
        for i in block:
            exact[i] = Fraction(0)
        self._iterate_exact(b, exact, grid_bits(self.eps, self.bits))
        for i in block:
            self.x[i] = _float_below(exact[i])
        self.iterations[b] += spent
        self.escalated.append(b)

    def solve_exact(self, b: int):
        self._iterate_exact(b, self.x, self.bits)

    def _iterate_exact(self, b: int, x: List[Fraction], bits: int):
        block = self.sys.dependency_sccs[b]
        res = Fraction(1)
        quarter = Fraction(self.eps) / 4
        floor = Fraction(self.floor)
        for it in range(1, self.cap + 1):
            f = self.sys.evaluate_exact(x, block)
            rhs = [f[i] - x[i] for i in block]
            jac = self.sys.jacobian_exact(x, block)
            delta = self._mp_newton_step(jac, rhs, bits + 64)
            old = [x[i] for i in block]
            for k, i in enumerate(block):
                x[i] = min(max(_floor_dyadic(old[k] + delta[k], bits), old[k]), Fraction(1))
            if self.observer is not None:
                self.observer(b, [x[i] for i in block])
            after = self.sys.evaluate_exact(x, block)
            res = max(abs(after[i] - x[i]) for i in block)
            change = max(((x[i] - old[k]) / x[i] if x[i] > 0 else Fraction(0) for k, i in enumerate(block)))
            if change < quarter:
                if res < quarter * max(floor, min(x[i] for i in block)):
                    self.iterations[b] = it
                    return
                # the residual is stuck at the grid spacing: refine the grid
                if res <= Fraction(16, 1 << bits) and bits < MAX_DENOMINATOR_BITS:
                    bits *= 2
        raise ConvergenceError(f"Newton iteration did not converge on block {b} within {self.cap} steps", float(res))


    @staticmethod
    def _mp_newton_step(jac: List[List[Fraction]], rhs: List[Fraction], prec: int) -> List[Fraction]:
        """Solves (I - J) d = rhs at `prec` bits; falls back to d = rhs (one Kleene step) when singular."""
        n = len(rhs)
        with mpmath.workprec(prec):
            def mpf(v: Fraction):
                return mpmath.mpf(v.numerator) / v.denominator
            a = mpmath.matrix(n, n)
            for i in range(n):
                for j in range(n):
                    a[i, j] = (1 if i == j else 0) - mpf(jac[i][j])
            b = mpmath.matrix([mpf(v) for v in rhs])
            try:
                d = mpmath.lu_solve(a, b)
            except ZeroDivisionError:
                return list(rhs)
            scale = prec + 8
            return [Fraction(int(mpmath.floor(mpmath.ldexp(d[k], scale))), 1 << scale) for k in range(n)]

    def run(self, parallel: bool = True):
        solve = self.solve_float if self.backend is Backend.FLOAT64 else self.solve_exact
        workers = worker_count()
        for level in self.sys.levels:
            if parallel and workers > 1 and len(level) > 1:
                with ThreadPoolExecutor(max_workers=min(workers, len(level))) as pool:
                    list(pool.map(solve, level))
            else:
                for b in level:
                    solve(b)


def solve_system(sys_: QuadraticSystem, eps: float, m: Poc, backend: Optional[Backend] = None,
                 bits: int = DENOMINATOR_BITS,
                 observer: Optional[Callable[[int, List[Number]], None]] = None) -> TermSolution:
    eps = float(eps)
    if not (0 < eps < 1):
        raise ValueError(f"Relative error must lie in (0, 1), got {eps}")
    backend = choose_backend(eps) if backend is None else backend
    if backend is Backend.EXACT_RATIONAL:
        bits = grid_bits(eps, bits)
    solver = _BlockSolver(sys_, eps, _positivity_floor(m), iteration_cap(m.n_states, eps), backend, bits, observer)
    solver.run()
    if backend is Backend.FLOAT64:
        values: Dict[Pair, Number] = {pq: float(solver.x[i]) for i, pq in enumerate(sys_.pairs)}
    else:
        values = {pq: solver.x[i] for i, pq in enumerate(sys_.pairs)}
    # verification pass: the residual of the final iterate, computed exactly
    res = float(residual(sys_, values))
    return TermSolution(values, eps, res, backend, sum(solver.iterations.values()), len(solver.escalated))


def solve_termination(m: Poc, eps, backend: Optional[Backend] = None,
                      tpos: Optional[Set[Pair]] = None, bits: int = DENOMINATOR_BITS) -> TermSolution:
    """
    Approximates every [p↓q] from below with relative error at most `eps`.

    Args:
        m: The model.
        eps: Requested relative error in (0, 1).
        backend: Forces a numeric backend; chosen from `eps` when omitted.
        tpos: Precomputed positive pairs, to avoid recomputing Pre*.
        bits: Denominator bits of the dyadic grid used by the exact backend.

    Returns:
        A TermSolution; pairs outside T^{>0} are absent and read as 0 through `prob`.

    Raises:
        PrecisionInfeasibleError: If `eps` is below every backend's range.
        ConvergenceError: If the iteration cap is exceeded.
    """
    tpos = positive_pairs(m) if tpos is None else tpos
    return solve_system(build_term_system(m, tpos), eps, m, backend, bits)


def kleene_iterate(sys_: QuadraticSystem, tol: float = 1e-12, max_iter: int = 1_000_000) -> Dict[Pair, float]:
    """Plain value iteration x <- F(x) from 0 until the largest change drops below `tol`."""
    x = np.zeros(sys_.size)
    for _ in range(max_iter):
        nxt = sys_.evaluate(x)
        if np.max(np.abs(nxt - x), initial=0.0) < tol:
            x = nxt
            break
        x = nxt
    return {pq: float(x[i]) for i, pq in enumerate(sys_.pairs)}
