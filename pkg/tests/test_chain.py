from fractions import Fraction

import pytest

from pocan.bounds import potential_span_bound
from pocan.chain import analyze_bsccs, bscc_analysis, martingale_residual, scc_decompose, underlying_chain
from pocan.errors import SingularSystemError
from pocan.model import Config, Poc, Rule

from conftest import random_poc, walk


@pytest.mark.parametrize("up, down", [("2/5", "3/5"), ("1/3", "2/3"), ("3/5", "2/5"), ("1/2", "1/2")])
def test_walk_trend_is_drift(up, down):
    _, _, [a] = analyze_bsccs(walk(up, down))
    assert a.trend == Fraction(up) - Fraction(down)
    assert a.potential == {"p": 0}
    assert a.span == 0


def test_andor_row1_trend_is_positive(andor_row1):
    _, scc, analyses = analyze_bsccs(andor_row1)
    assert len(analyses) == 1
    a = analyses[0]
    assert set(a.members) == set(andor_row1.states)
    assert a.trend == Fraction(1, 9)
    assert sum(a.alpha.values()) == 1
    assert a.v_min == 0


def test_underlying_chain_rows_sum_to_one(andor_row1):
    u = underlying_chain(andor_row1)
    for i in range(len(u.states)):
        assert sum(u.a[i, :]) == 1


def test_scc_order_puts_bottoms_before_their_predecessors():
    # t -> b0, b0 <-> b1 is bottom, c is its own bottom
    one, half = Fraction(1), Fraction(1, 2)
    m = Poc(("t", "b0", "b1", "c"),
            tuple(Rule(s, 0, s, one) for s in ("t", "b0", "b1", "c")),
            (Rule("t", -1, "b0", half), Rule("t", 1, "c", half),
             Rule("b0", 1, "b1", one), Rule("b1", -1, "b0", one), Rule("c", 0, "c", one)))
    scc = scc_decompose(underlying_chain(m))
    assert scc.components[-1] == ("t",)
    assert set(scc.bottoms()) == {("b0", "b1"), ("c",)}
    assert scc.bottom_of("t") is None
    assert scc.bottom_of("b1") == ("b0", "b1")
    _, _, analyses = analyze_bsccs(m)
    trends = {a.members: a.trend for a in analyses}
    assert trends == {("b0", "b1"): 0, ("c",): 0}


def test_non_bottom_component_is_rejected():
    half = Fraction(1, 2)
    m = Poc(("t", "b"), (Rule("t", 0, "t", Fraction(1)), Rule("b", 0, "b", Fraction(1))),
            (Rule("t", -1, "t", half), Rule("t", -1, "b", half), Rule("b", -1, "b", Fraction(1))))
    with pytest.raises(SingularSystemError, match="leaves the component"):
        bscc_analysis(underlying_chain(m), ("t",))


def test_martingale_residual_is_zero_on_random_models(rng):
    for _ in range(200):
        n = int(rng.integers(1, 7))
        m = random_poc(rng, n)
        _, scc, analyses = analyze_bsccs(m)
        assert len(analyses) == 1
        a = analyses[0]
        assert a.span <= potential_span_bound(n, m.x_min).value
        for q in a.members:
            for counter in range(1, 6):
                assert martingale_residual(m, a, Config(q, counter)) == 0


def test_martingale_residual_needs_positive_counter(andor_row1):
    _, _, [a] = analyze_bsccs(andor_row1)
    with pytest.raises(ValueError):
        martingale_residual(andor_row1, a, Config("and_init", 0))
