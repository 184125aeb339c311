from dataclasses import replace
from fractions import Fraction

import pytest

from pocan.chain import analyze_bsccs
from pocan.errors import ModelValidationError
from pocan.exptime import Mode
from pocan.model import Dra, Poc, Rule, Valuation
from pocan.omega import (ACC, REJ, Consistency, RabinPoc, Witness, build_chain_g, consistency_partition,
                         divergence, freeze, good_bscc_reach, model_check, nonterm_prob, nonterm_probs, product)
from pocan.sim import first_zero_times, max_counters

from conftest import random_poc


def constant_valuation(m: Poc, letter: str = "a") -> Valuation:
    return Valuation({s: letter for s in m.states}, {s: letter for s in m.states})


def up_only() -> Poc:
    return Poc(("p",), (Rule("p", 0, "p", Fraction(1)),), (Rule("p", 1, "p", Fraction(1)),))


def test_product_with_universal_automaton_is_isomorphic(andor_row1, universal_dra):
    rp, init = product(andor_row1, andor_row1.labels, universal_dra)
    assert rp.poc.n_states == andor_row1.n_states
    assert len(rp.poc.pos_rules) == len(andor_row1.pos_rules)
    assert init["and_init"] == "and_init.q"
    assert rp.pairs == ((frozenset(), frozenset(rp.poc.states)),)


def test_product_tracks_letters(andor_row1, eventually_or1):
    rp, init = product(andor_row1, andor_row1.labels, eventually_or1)
    assert rp.poc.n_states == 12
    zero = {(r.src, r.dst) for r in rp.poc.zero_rules}
    assert ("or_ret1.qb", "or_ret1.qa") in zero
    assert ("or_ret0.qa", "or_ret0.qb") in zero
    assert all(r.dst.endswith(".qb") for r in rp.poc.pos_rules)


def test_product_rejects_unknown_letters(andor_row1, eventually_or1):
    val = constant_valuation(andor_row1, "c")
    with pytest.raises(ModelValidationError, match="not in the DRA alphabet"):
        product(andor_row1, val, eventually_or1)


def test_rabin_poc_needs_pairs(andor_row1):
    with pytest.raises(ModelValidationError):
        RabinPoc(andor_row1, ())


def test_consistency_and_freezing(andor_row1, eventually_or1):
    rp, _ = product(andor_row1, andor_row1.labels, eventually_or1)
    flags = consistency_partition(rp)
    assert set(flags.values()) == {Consistency.INCONSISTENT}
    frozen = freeze(rp, Consistency.INCONSISTENT)
    for b in flags:
        for q in b:
            assert frozen.pos_from[q] == (Rule(q, -1, q, Fraction(1)),)
    assert freeze(rp, Consistency.CONSISTENT) == rp.poc


def test_divergence_of_up_biased_walk(up_biased):
    info = divergence(up_biased, "p")
    assert info.positive
    assert info.witness is Witness.POSITIVE_TREND_BSCC
    assert info.path_length == 0
    assert info.lower_bound == Fraction(1, 5) ** 3 / (12 * 4 ** 3)
    assert nonterm_prob(up_biased, "p", 1e-6) == pytest.approx(1 / 3, rel=1e-6)


def test_divergence_of_sure_diverger():
    info = divergence(up_only(), "p")
    assert info.witness is Witness.SURE_DIVERGER
    assert info.lower_bound == 1
    assert info.lower_bound_log2 == 0


def test_no_divergence_for_recurrent_walks(symmetric, biased_down):
    for m in (symmetric, biased_down):
        info = divergence(m, "p")
        assert not info.positive
        assert nonterm_prob(m, "p", 1e-6) == 0.0


@pytest.mark.parametrize("mode", [Mode.ADAPTIVE, Mode.RIGOROUS])
def test_nonterm_probs_up_biased(up_biased, mode):
    assert nonterm_probs(up_biased, 1e-6, mode)["p"] == pytest.approx(1 / 3, rel=1e-6)


@pytest.mark.slow
def test_gap_bound_is_sound_on_random_models(rng):
    checked = 0
    for _ in range(20):
        m = random_poc(rng, int(rng.integers(1, 4)))
        probs = nonterm_probs(m, 1e-6)
        for p in m.states:
            info = divergence(m, p)
            if info.positive:
                checked += 1
                assert float(info.lower_bound) <= probs[p] * (1 + 1e-6)
            else:
                assert probs[p] == 0.0
    assert checked > 0


@pytest.mark.slow
def test_andor_acceptance_equals_termination_in_or_ret1(andor_row1, eventually_or1):
    res = model_check(andor_row1, None, eventually_or1, "and_init", 1e-4, counter=1)
    assert res.probability == pytest.approx(0.300, abs=5e-4)
    assert res.product_states == 12


def test_universal_automaton_accepts_surely(andor_row1, universal_dra):
    res = model_check(andor_row1, None, universal_dra, "and_init", 1e-6, counter=1)
    assert res.probability == 1.0
    assert res.start in res.chain.g1


def test_never_accepting_automaton(andor_row1, never_dra):
    res = model_check(andor_row1, None, never_dra, "and_init", 1e-6, counter=1)
    assert res.probability == 0.0
    assert res.start in res.chain.g0


def test_divergent_runs_split_into_acc_and_rej(up_biased, universal_dra):
    m = replace(up_biased, labels=constant_valuation(up_biased))
    rp, init = product(m, m.labels, universal_dra)
    g = build_chain_g(rp, 1e-6)
    start = f"{init['p']}(1)"
    assert g.trans[start][ACC] == pytest.approx(1 / 3, rel=1e-6)
    assert REJ not in g.trans[start]
    assert g.row_sum(start) == pytest.approx(1.0, abs=1e-6)
    assert good_bscc_reach(g)[start] == 1.0


def test_model_check_needs_a_valuation(symmetric, universal_dra):
    with pytest.raises(ModelValidationError, match="valuation"):
        model_check(symmetric, None, universal_dra, "p", 1e-6)


def test_model_check_counter_range(andor_row1, universal_dra):
    with pytest.raises(ModelValidationError, match="0 or 1"):
        model_check(andor_row1, None, universal_dra, "and_init", 1e-6, counter=2)


def up_biased_models(rng, count: int):
    models = []
    while len(models) < count:
        m = random_poc(rng, int(rng.integers(1, 4)))
        _, _, [analysis] = analyze_bsccs(m)
        if analysis.trend > 0:
            models.append(m)
    return models


@pytest.mark.slow
def test_gap_bound_on_up_biased_models(rng):
    survivors = 0
    for k, m in enumerate(up_biased_models(rng, 50)):
        probs = nonterm_probs(m, 1e-6)
        for p in m.states:
            info = divergence(m, p)
            assert info.positive
            assert float(info.lower_bound) <= probs[p] * (1 + 1e-6)
        p = m.states[0]
        alive = first_zero_times(m, p, 256, 10000, seed=k) < 0
        high = max_counters(m, p, 256, 10000, seed=k) > 100
        if (alive & high).any():
            survivors += 1
            assert divergence(m, p).positive
    assert survivors > 0


def test_surviving_samples_match_divergence_verdict(biased_down, up_biased):
    for m, survives in ((biased_down, False), (up_biased, True)):
        alive = first_zero_times(m, "p", 512, 5000, seed=3) < 0
        high = max_counters(m, "p", 512, 5000, seed=3) > 500
        assert bool((alive & high).any()) is survives
        assert divergence(m, "p").positive is survives


def infinitely_often_b(d: Dra) -> Dra:
    return replace(d, pairs=((frozenset(), frozenset({"qb"})),))


@pytest.mark.parametrize("zero, pos, expected", [("a", "b", 2 / 3), ("b", "a", 1 / 3)])
def test_complementary_properties_sum_to_one(up_biased, eventually_or1, zero, pos, expected):
    val = Valuation({"p": zero}, {"p": pos})
    eventually_a = model_check(up_biased, val, eventually_or1, "p", 1e-6, counter=1).probability
    often_b = model_check(up_biased, val, infinitely_often_b(eventually_or1), "p", 1e-6, counter=1).probability
    assert eventually_a == pytest.approx(expected, rel=1e-5)
    assert eventually_a + often_b == pytest.approx(1.0, abs=2e-5)


def test_product_state_names_are_unambiguous():
    one = Fraction(1)
    m = Poc(("a", "a__b"), tuple(Rule(s, 0, s, one) for s in ("a", "a__b")),
            tuple(Rule(s, -1, s, one) for s in ("a", "a__b")))
    d = Dra(("x",), ("c", "b__c"), "c", {("c", "x"): "c", ("b__c", "x"): "b__c"}, ((frozenset(), frozenset({"c"})),))
    rp, init = product(m, constant_valuation(m, "x"), d)
    assert len(set(rp.poc.states)) == 4
    assert rp.origin[init["a"]] == ("a", "c")
    assert rp.origin[init["a__b"]] == ("a__b", "c")
