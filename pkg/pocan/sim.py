"""
Monte-Carlo simulation of the Markov chain induced by a pOC.

Samples are simulated in blocks of BLOCK_SIZE runs advancing in lockstep. Block b draws from
Philox seeded with SeedSequence(seed, spawn_key=(b,)), so results do not depend on how many
workers process the blocks.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math
import sys
from typing import List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from pocan.errors import DomainError, ModelValidationError, NoTerminatingSamplesError
from pocan.model import Config, Poc
from pocan.utils import worker_count

BLOCK_SIZE = 4096
HEURISTIC = "HEURISTIC"


@dataclass(frozen=True)
class RunTrace:
    configs: Tuple[Config, ...]
    terminated_at: Optional[Tuple[int, str]]

    @property
    def truncated(self) -> bool:
        return self.terminated_at is None


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n: int
    horizon: int
    seed: int
    flag: Optional[str] = None
    hits: Optional[int] = None

    def within(self, value: float, sigmas: float = 3.0, slack: float = 0.0) -> bool:
        return abs(self.mean - value) <= sigmas * self.stderr + slack


@dataclass
class BlockResult:
    zero_time: np.ndarray
    zero_state: np.ndarray
    max_counter: np.ndarray
    high_time: Optional[np.ndarray] = None
    last_seen: Optional[np.ndarray] = None


class RuleTables:
    """Inverse-CDF tables indexed by 2·state + (counter > 0)."""

    def __init__(self, m: Poc):
        self.m = m
        width = max(len(rules) for rules in list(m.zero_from.values()) + list(m.pos_from.values()))
        n = 2 * m.n_states
        self.cum = np.ones((n, width))
        self.dst = np.zeros((n, width), dtype=np.int64)
        self.delta = np.zeros((n, width), dtype=np.int64)
        for p in m.states:
            for level, rules in ((0, m.zero_from[p]), (1, m.pos_from[p])):
                row = 2 * m.index[p] + level
                acc = 0.0
                for k, r in enumerate(rules):
                    acc += float(r.prob)
                    self.cum[row, k] = acc
                    self.dst[row, k] = m.index[r.dst]
                    self.delta[row, k] = r.delta
                # residual bucket: the last rule absorbs rounding drift
                self.cum[row, len(rules) - 1:] = 1.0
                self.dst[row, len(rules):] = self.dst[row, len(rules) - 1]
                self.delta[row, len(rules):] = self.delta[row, len(rules) - 1]

    def choose(self, state: np.ndarray, counter: np.ndarray, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        row = 2 * state + (counter > 0)
        k = (u[:, None] >= self.cum[row]).sum(axis=1)
        return self.dst[row, k], self.delta[row, k]


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def _check_start(m: Poc, p: str, counter: int):
    if p not in m.index:
        raise ModelValidationError(f"Unknown state '{p}'")
    if counter < 0:
        raise DomainError(f"Initial counter must be non-negative, got {counter}")


def _check_sizes(n: int, horizon: int):
    if n < 1:
        raise DomainError(f"Sample count must be at least 1, got {n}")
    if horizon < 1:
        raise DomainError(f"Horizon must be at least 1, got {horizon}")


def sample_run(m: Poc, start: Config, horizon: int, rng: np.random.Generator) -> RunTrace:
    """
    Follows the step distribution for exactly `horizon` steps.

    Counter-0 configurations continue through the zero rules; `terminated_at` records the
    first step that reached counter 0.

    Raises:
        DomainError: If horizon < 1.
    """
    if horizon < 1:
        raise DomainError(f"Horizon must be at least 1, got {horizon}")
    _check_start(m, start.state, start.counter)
    tables = RuleTables(m)
    state = np.array([m.index[start.state]])
    counter = np.array([start.counter])
    configs = [start]
    terminated_at = (0, start.state) if start.counter == 0 else None
    for i in range(1, horizon + 1):
        dst, delta = tables.choose(state, counter, rng.random(1))
        state, counter = dst, counter + delta
        c = Config(m.states[int(state[0])], int(counter[0]))
        configs.append(c)
        if terminated_at is None and c.counter == 0:
            terminated_at = (i, c.state)
    return RunTrace(tuple(configs), terminated_at)


def _simulate_block(tables: RuleTables, start: int, counter0: int, size: int, horizon: int,
                    rng: np.random.Generator, until_zero: bool = True, high: Optional[int] = None,
                    track_states: bool = False) -> BlockResult:
    nq = tables.m.n_states
    state = np.full(size, start, dtype=np.int64)
    counter = np.full(size, counter0, dtype=np.int64)
    zero_time = np.where(counter == 0, 0, -1)
    zero_state = np.where(counter == 0, start, -1)
    max_counter = counter.copy()
    high_time = None
    if high is not None:
        high_time = np.where(counter >= high, 0, -1)
    last_seen = None
    if track_states:
        last_seen = np.full((size, nq), -1, dtype=np.int64)
        last_seen[np.arange(size), state] = 0
    for i in range(1, horizon + 1):
        u = rng.random(size)
        if until_zero and high is None and (zero_time >= 0).all():
            break
        if high is not None and ((zero_time >= 0) | (high_time >= 0)).all():
            break
        alive = zero_time < 0
        dst, delta = tables.choose(state, counter, u)
        state, counter = dst, counter + delta
        hit = (counter == 0) & (zero_time < 0)
        zero_time[hit] = i
        zero_state[hit] = state[hit]
        max_counter = np.where(alive, np.maximum(max_counter, counter), max_counter)
        if high is not None:
            up = (counter >= high) & (high_time < 0)
            high_time[up] = i
        if track_states:
            last_seen[np.arange(size), state] = i
    return BlockResult(zero_time, zero_state, max_counter, high_time, last_seen)


def _run_blocks(m: Poc, p: str, counter: int, n: int, horizon: int, seed: int, **kwargs) -> List[BlockResult]:
    _check_start(m, p, counter)
    _check_sizes(n, horizon)
    tables = RuleTables(m)
    start = m.index[p]
    sizes = [min(BLOCK_SIZE, n - b * BLOCK_SIZE) for b in range(math.ceil(n / BLOCK_SIZE))]

    def work(b: int) -> BlockResult:
        return _simulate_block(tables, start, counter, sizes[b], horizon, block_rng(seed, b), **kwargs)

    show = len(sizes) > 1 and sys.stderr.isatty()
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        results = list(tqdm(pool.map(work, range(len(sizes))), total=len(sizes), disable=not show,
                            desc="Simulating", unit="block", file=sys.stderr))
    return results


def _concat(results: List[BlockResult], name: str) -> np.ndarray:
    return np.concatenate([getattr(r, name) for r in results])


def _bernoulli(hits: np.ndarray, n: int, horizon: int, seed: int, flag: Optional[str] = None) -> Estimate:
    x = hits.astype(float)
    stderr = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(float(x.mean()), stderr, n, horizon, seed, flag, int(hits.sum()))


def estimate_termination(m: Poc, p: str, q: str, n: int, horizon: int, seed: int, counter: int = 1) -> Estimate:
    """Fraction of runs from p(counter) whose first counter-0 configuration within `horizon` is q(0)."""
    if q not in m.index:
        raise ModelValidationError(f"Unknown state '{q}'")
    if counter < 1:
        raise DomainError(f"Termination runs start with a positive counter, got {counter}")
    results = _run_blocks(m, p, counter, n, horizon, seed)
    hits = (_concat(results, "zero_state") == m.index[q]) & (_concat(results, "zero_time") >= 0)
    return _bernoulli(hits, n, horizon, seed)


def estimate_exp_time(m: Poc, p: str, q: str, n: int, horizon: int, seed: int, counter: int = 1) -> Estimate:
    """
    Conditional mean of the first counter-0 step over runs that terminate in q(0) within `horizon`.

    Raises:
        NoTerminatingSamplesError: If no sampled run terminates in q.
    """
    if q not in m.index:
        raise ModelValidationError(f"Unknown state '{q}'")
    results = _run_blocks(m, p, counter, n, horizon, seed)
    times = _concat(results, "zero_time")
    mask = (_concat(results, "zero_state") == m.index[q]) & (times >= 0)
    k = int(mask.sum())
    if k == 0:
        raise NoTerminatingSamplesError(
            f"None of {n} runs from {p}({counter}) terminated in {q} within {horizon} steps")
    t = times[mask].astype(float)
    stderr = float(t.std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0
    return Estimate(float(t.mean()), stderr, n, horizon, seed, None, k)


def first_zero_times(m: Poc, p: str, n: int, horizon: int, seed: int, counter: int = 1) -> np.ndarray:
    """First step with counter 0 per sample, -1 where the run survives the horizon."""
    return _concat(_run_blocks(m, p, counter, n, horizon, seed), "zero_time")


def max_counters(m: Poc, p: str, n: int, horizon: int, seed: int, counter: int = 1) -> np.ndarray:
    """Largest counter seen per sample before its first counter-0 configuration (or the horizon)."""
    return _concat(_run_blocks(m, p, counter, n, horizon, seed), "max_counter")


def estimate_reach_high(m: Poc, p: str, b: int, n: int, horizon: int, seed: int, counter: int = 1) -> Estimate:
    """Probability that a run from p(counter) reaches counter `b` before counter 0."""
    if b < 1:
        raise DomainError(f"Target counter must be at least 1, got {b}")
    results = _run_blocks(m, p, counter, n, horizon, seed, high=b)
    up, down = _concat(results, "high_time"), _concat(results, "zero_time")
    hits = (up >= 0) & ((down < 0) | (up < down))
    return _bernoulli(hits, n, horizon, seed)


def estimate_acceptance(rp, p: str, n: int, horizon: int, window: int, seed: int, counter: int = 1) -> Estimate:
    """
    Fraction of runs whose control states in the last `window` steps satisfy some Rabin pair.

    The finite window stands in for the set of states visited infinitely often, so the
    estimate carries the HEURISTIC flag.

    Raises:
        DomainError: If window >= horizon.
    """
    if not (1 <= window < horizon):
        raise DomainError(f"Window must satisfy 1 <= window < horizon (window={window}, horizon={horizon})")
    m = rp.poc
    results = _run_blocks(m, p, counter, n, horizon, seed, until_zero=False, track_states=True)
    recent = _concat(results, "last_seen") > horizon - window
    masks = []
    for e, f in rp.pairs:
        e_cols = np.array([s in e for s in m.states])
        f_cols = np.array([s in f for s in m.states])
        masks.append(~(recent & e_cols).any(axis=1) & (recent & f_cols).any(axis=1))
    hits = np.logical_or.reduce(masks)
    return _bernoulli(hits, n, horizon, seed, HEURISTIC)
