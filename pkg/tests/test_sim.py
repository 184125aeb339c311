from fractions import Fraction

import numpy as np
import pytest

from pocan.bounds import azuma_tail, divergence_tail, reach_high_bound
from pocan.errors import DomainError, NoTerminatingSamplesError
from pocan.model import Config
from pocan.omega import product
from pocan.sim import (BLOCK_SIZE, HEURISTIC, block_rng, estimate_acceptance, estimate_exp_time,
                       estimate_reach_high, estimate_termination, first_zero_times, max_counters, sample_run)
from pocan.utils import THREADS_ENV

N = 20000
HORIZON = 2000


def test_sample_run_of_down_only(down_only):
    trace = sample_run(down_only, Config("p", 3), 5, block_rng(1, 0))
    assert trace.terminated_at == (3, "p")
    assert [c.counter for c in trace.configs] == [3, 2, 1, 0, 0, 0]
    assert not trace.truncated


def test_sample_run_truncates(up_biased):
    trace = sample_run(up_biased, Config("p", 50), 10, block_rng(1, 0))
    assert trace.truncated
    assert len(trace.configs) == 11


def test_sample_run_needs_a_positive_horizon(down_only):
    with pytest.raises(DomainError):
        sample_run(down_only, Config("p", 1), 0, block_rng(1, 0))


def test_estimates_are_deterministic(up_biased):
    a = estimate_termination(up_biased, "p", "p", 5000, 500, seed=7)
    b = estimate_termination(up_biased, "p", "p", 5000, 500, seed=7)
    assert a == b
    other = first_zero_times(up_biased, "p", 5000, 500, seed=8)
    assert not np.array_equal(first_zero_times(up_biased, "p", 5000, 500, seed=7), other)


def test_estimates_do_not_depend_on_worker_count(up_biased, monkeypatch):
    n = 2 * BLOCK_SIZE + 100
    monkeypatch.setenv(THREADS_ENV, "1")
    serial = first_zero_times(up_biased, "p", n, 300, seed=11)
    monkeypatch.setenv(THREADS_ENV, "3")
    parallel = first_zero_times(up_biased, "p", n, 300, seed=11)
    assert np.array_equal(serial, parallel)


def test_termination_of_walks(biased_down, up_biased):
    down = estimate_termination(biased_down, "p", "p", N, HORIZON, seed=1)
    assert down.within(1.0, slack=1e-3)
    up = estimate_termination(up_biased, "p", "p", N, HORIZON, seed=2)
    assert up.within(2 / 3, sigmas=4)
    assert up.hits == round(up.mean * N)


@pytest.mark.slow
def test_expected_time_of_biased_walk(biased_down):
    est = estimate_exp_time(biased_down, "p", "p", N, HORIZON, seed=3)
    assert est.within(5.0, sigmas=4)


def test_expected_time_of_down_only(down_only):
    est = estimate_exp_time(down_only, "p", "p", 100, 10, seed=4)
    assert est.mean == 1.0
    assert est.stderr == 0.0
    assert est.hits == 100


def test_expected_time_without_terminating_samples(up_biased):
    with pytest.raises(NoTerminatingSamplesError):
        estimate_exp_time(up_biased, "p", "p", 50, 5, seed=5, counter=100)


def test_acceptance_of_trivial_automata(andor_row1, universal_dra, never_dra):
    rp, init = product(andor_row1, andor_row1.labels, universal_dra)
    est = estimate_acceptance(rp, init["and_init"], 1000, 200, 20, seed=6)
    assert est.mean == 1.0
    assert est.flag == HEURISTIC
    rp, init = product(andor_row1, andor_row1.labels, never_dra)
    assert estimate_acceptance(rp, init["and_init"], 1000, 200, 20, seed=6).mean == 0.0


@pytest.mark.slow
def test_acceptance_of_andor(andor_row1, eventually_or1):
    rp, init = product(andor_row1, andor_row1.labels, eventually_or1)
    est = estimate_acceptance(rp, init["and_init"], 8000, 500, 100, seed=9)
    assert est.within(0.300, sigmas=4, slack=5e-3)


def test_acceptance_window_must_fit(andor_row1, universal_dra):
    rp, init = product(andor_row1, andor_row1.labels, universal_dra)
    with pytest.raises(DomainError, match="window"):
        estimate_acceptance(rp, init["and_init"], 10, 20, 20, seed=1)


@pytest.mark.slow
def test_hitting_time_tail_below_azuma_bound(biased_down):
    times = first_zero_times(biased_down, "p", N, 200, seed=12)
    survived = lambda i: float(np.mean((times < 0) | (times > i)))
    for i in (10, 50, 150):
        bound = float(azuma_tail(Fraction(-1, 5), 0, 1, i).value)
        assert survived(i) <= bound + 3 * np.sqrt(bound * (1 - bound) / N) + 1e-3


def test_far_start_rarely_terminates(up_biased):
    c0 = 500
    bound = float(divergence_tail(Fraction(1, 5), 0, c0).value)
    est = estimate_termination(up_biased, "p", "p", BLOCK_SIZE, HORIZON, seed=13, counter=c0)
    assert est.mean <= bound + 3 * est.stderr


def test_reach_high_stays_above_lower_bound(symmetric):
    b = 5
    est = estimate_reach_high(symmetric, "p", b, N, HORIZON, seed=14)
    assert est.mean >= float(reach_high_bound(0, b).value) - 3 * est.stderr
    assert est.within(1 / b, sigmas=4)


def test_max_counters_respect_reach_high(symmetric):
    highs = max_counters(symmetric, "p", N, HORIZON, seed=14)
    est = estimate_reach_high(symmetric, "p", 5, N, HORIZON, seed=14)
    assert est.hits == int(np.sum(highs >= 5))


def test_longer_horizons_only_add_hits(symmetric):
    hits = [estimate_termination(symmetric, "p", "p", BLOCK_SIZE, h, seed=15).hits for h in (10, 100, 1000)]
    assert hits[0] <= hits[1] <= hits[2]
