from fractions import Fraction

import pytest

from pocan.errors import ModelSyntaxError, ModelValidationError
from pocan.model import (AND_OR_STATES, Config, Valuation, and_or_model, parse_dra, parse_poc, render_dra,
                         render_poc, step_distribution, to_fraction)

from conftest import load_dra, load_model

BROKEN_SUM = """poc v1
state p q
zero p 0 p 1
zero q 0 q 1
pos p -1 q 1/2
pos p +1 p 1/3
pos q -1 q 1
"""


def test_parse_symmetric_walk(symmetric):
    assert symmetric.states == ("p",)
    assert [str(r) for r in symmetric.pos_rules] == ["p -[-1, 1/2]-> p", "p -[+1, 1/2]-> p"]
    assert symmetric.x_min == Fraction(1, 2)
    assert symmetric.labels is None


def test_parse_keeps_declaration_order(andor_row1):
    assert andor_row1.states == AND_OR_STATES
    assert andor_row1.index["and_init"] == 0


def test_labels_are_read(andor_row1):
    assert andor_row1.labels.letter("or_ret1", 0) == "a"
    assert andor_row1.labels.letter("or_ret1", 4) == "b"
    assert andor_row1.labels.letters() == {"a", "b"}


def test_render_then_parse_gives_same_model(andor_row1):
    assert parse_poc(render_poc(andor_row1)) == andor_row1


def test_render_dra_then_parse(eventually_or1):
    assert parse_dra(render_dra(eventually_or1)) == eventually_or1


def test_distribution_sum_error_names_state():
    with pytest.raises(ModelValidationError, match="pos rule probabilities of state 'p' sum to 5/6, expected 1"):
        parse_poc(BROKEN_SUM)


@pytest.mark.parametrize("text, line, column", [
    ("poc v2\nstate p\n", 1, 1),
    ("poc v1\nstate p\nzero p 0 p one\n", 3, 12),
    ("poc v1\nstate p\npos p +2x p 1\n", 3, 7),
    ("poc v1\nstate 9p\n", 2, 7),
    ("poc v1\nstate p\nfrobnicate p\n", 3, 1),
])
def test_syntax_errors_report_position(text, line, column):
    with pytest.raises(ModelSyntaxError) as info:
        parse_poc(text)
    assert (info.value.line, info.value.column) == (line, column)
    assert str(info.value).startswith(f"line {line}, column {column}:")


def test_duplicate_rule_is_rejected_with_line():
    text = "poc v1\nstate p\nzero p 0 p 1\npos p -1 p 1/2\npos p -1 p 1/2\n"
    with pytest.raises(ModelValidationError, match="line 5: duplicate pos rule p -1 p"):
        parse_poc(text)


@pytest.mark.parametrize("text, message", [
    ("poc v1\nstate p\npos p -1 p 1\n", "no zero rule"),
    ("poc v1\nstate p\nzero p -1 p 1\npos p -1 p 1\n", "counter change -1"),
    ("poc v1\nstate p\nzero p 0 q 1\npos p -1 p 1\n", "undeclared state 'q'"),
    ("poc v1\nstate p p\nzero p 0 p 1\npos p -1 p 1\n", "Duplicate state"),
])
def test_validation_errors(text, message):
    with pytest.raises(ModelValidationError, match=message):
        parse_poc(text)


def test_partial_labels_are_rejected():
    text = "poc v1\nstate p q\nzero p 0 p 1\nzero q 0 q 1\npos p -1 q 1\npos q -1 p 1\nlabel p zero=a pos=b\n"
    with pytest.raises(ModelValidationError, match="no zero letter for state"):
        parse_poc(text)


def test_dra_must_be_total():
    text = "dra v1\nalphabet a b\nstate q\ninit q\ntrans q a q\npair E ; F q\n"
    with pytest.raises(ModelValidationError, match="Missing DRA transition for state 'q' and letter 'b'"):
        parse_dra(text)


def test_dra_pair_parsing(universal_dra, never_dra):
    assert universal_dra.pairs == ((frozenset(), frozenset({"q"})),)
    assert never_dra.pairs == ((frozenset({"q"}), frozenset({"q"})),)


def test_dra_pair_with_glued_separator():
    d = parse_dra("dra v1\nalphabet a\nstate q r\ninit q\ntrans q a r\ntrans r a q\npair E q; F r\n")
    assert d.pairs == ((frozenset({"q"}), frozenset({"r"})),)
    assert d.step("q", "a") == "r"


def test_dra_rejects_duplicate_states():
    with pytest.raises(ModelValidationError, match=r"Duplicate DRA state declaration\(s\): q"):
        parse_dra("dra v1\nalphabet a\nstate q q\ninit q\ntrans q a q\npair E ; F q\n")


def test_dra_without_pairs_is_rejected():
    with pytest.raises(ModelValidationError, match="no acceptance pair"):
        parse_dra("dra v1\nalphabet a\nstate q\ninit q\ntrans q a q\n")


def test_valuation_letters_must_be_in_alphabet(eventually_or1):
    val = Valuation({"p": "a"}, {"p": "c"})
    with pytest.raises(ModelValidationError, match="not in the DRA alphabet: c"):
        val.check(["p"], eventually_or1.alphabet)


def test_step_distribution_uses_zero_rules_at_zero(andor_row1):
    assert step_distribution(andor_row1, Config("or_ret1", 0)) == [(Config("or_ret1", 0), 1)]
    succ = dict(step_distribution(andor_row1, Config("and_init", 2)))
    assert succ == {Config("or_ret1", 1): Fraction(1, 5), Config("or_ret0", 1): Fraction(1, 5),
                    Config("or_init", 3): Fraction(3, 5)}


def test_negative_counter_is_rejected():
    with pytest.raises(ValueError):
        Config("p", -1)


def test_and_or_model_matches_fixture(andor_row1):
    generated = and_or_model("1/2", "2/5", "1/5", "1/5")
    assert set(generated.pos_rules) == set(andor_row1.pos_rules)
    assert set(generated.zero_rules) == set(andor_row1.zero_rules)


@pytest.mark.parametrize("params", [(0, ".4", ".2", ".2"), (".5", "1", ".2", ".2"), (".5", ".4", "1.5", ".2")])
def test_and_or_model_rejects_out_of_range(params):
    with pytest.raises(ModelValidationError, match="strictly between 0 and 1"):
        and_or_model(*params)


def test_to_fraction_uses_shortest_decimal():
    assert to_fraction(0.1) == Fraction(1, 10)
    assert to_fraction("3/5") == Fraction(3, 5)


def test_fixtures_load():
    for name in ("biased_down.poc", "up_biased.poc", "down_only.poc"):
        assert load_model(name).n_states == 1
    assert load_dra("eventually_or1.dra").init == "qb"
