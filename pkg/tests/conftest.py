from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from pocan.model import Poc, Rule, and_or_model, parse_dra, parse_poc

MODELS_DIR = Path(__file__).resolve().parent.parent / "models"

# (z, y, x_a, x_o) -> [a↓], [a↓0], [a↓1], E[a↓0], E[a↓1], printed to three decimals
AND_OR_TABLE = [
    ((".5", ".4", ".2", ".2"), (.800, .500, .300, 11.000, 7.667)),
    ((".5", ".4", ".2", ".4"), (.967, .667, .300, 104.750, 38.917)),
    ((".5", ".4", ".2", ".6"), (1.000, .720, .280, 20.368, 5.489)),
    ((".5", ".4", ".2", ".8"), (1.000, .732, .268, 10.778, 2.758)),
    ((".5", ".5", ".1", ".1"), (.861, .556, .306, 11.400, 5.509)),
    ((".5", ".5", ".2", ".1"), (.931, .556, .375, 23.133, 20.644)),
    ((".5", ".5", ".3", ".1"), (1.000, .546, .454, 83.199, 111.801)),
    ((".5", ".5", ".4", ".1"), (1.000, .507, .493, 12.959, 21.555)),
    ((".2", ".4", ".2", ".2"), (.810, .696, .115, 7.827, 6.266)),
    ((".3", ".4", ".2", ".2"), (.811, .636, .175, 8.928, 6.783)),
    ((".4", ".4", ".2", ".2"), (.808, .571, .236, 10.005, 7.258)),
]


def load_model(name: str) -> Poc:
    return parse_poc((MODELS_DIR / name).read_text(encoding="utf-8"))


def load_dra(name: str):
    return parse_dra((MODELS_DIR / name).read_text(encoding="utf-8"))


def walk(up, down) -> Poc:
    """Single-state walk moving +1 with probability `up` and -1 with `down`."""
    up, down = Fraction(up), Fraction(down)
    pos = [Rule("p", -1, "p", down), Rule("p", 1, "p", up)]
    if up + down < 1:
        pos.append(Rule("p", 0, "p", 1 - up - down))
    return Poc(("p",), (Rule("p", 0, "p", Fraction(1)),), tuple(pos))


def random_poc(rng: np.random.Generator, n: int, strongly_connected: bool = True, denominator: int = 10) -> Poc:
    """
    A random model with n states and probabilities on the 1/denominator grid.

    With `strongly_connected`, every state i has a positive rule to state i+1 (mod n).
    """
    states = tuple(f"s{i}" for i in range(n))

    def distribution(src: int, deltas, forced=None):
        options = [(d, j) for d in deltas for j in range(n)]
        k = int(rng.integers(1, min(4, len(options)) + 1))
        picks = [options[i] for i in rng.choice(len(options), size=k, replace=False)]
        if forced is not None and not any(j == forced for _, j in picks):
            picks[0] = (int(rng.choice(deltas)), forced)
            picks = list(dict.fromkeys(picks))
        cuts = sorted(rng.choice(np.arange(1, denominator), size=len(picks) - 1, replace=False)) if len(picks) > 1 else []
        bounds = [0, *cuts, denominator]
        return [Rule(states[src], d, states[j], Fraction(int(bounds[i + 1] - bounds[i]), denominator))
                for i, (d, j) in enumerate(picks)]

    zero, pos = [], []
    for i in range(n):
        zero.extend(distribution(i, (0, 1)))
        pos.extend(distribution(i, (-1, 0, 1), (i + 1) % n if strongly_connected else None))
    return Poc(states, tuple(zero), tuple(pos))


@pytest.fixture
def andor_row1() -> Poc:
    return load_model("andor_row1.poc")


@pytest.fixture
def symmetric() -> Poc:
    return load_model("symmetric.poc")


@pytest.fixture
def biased_down() -> Poc:
    return load_model("biased_down.poc")


@pytest.fixture
def up_biased() -> Poc:
    return load_model("up_biased.poc")


@pytest.fixture
def down_only() -> Poc:
    return load_model("down_only.poc")


@pytest.fixture
def eventually_or1():
    return load_dra("eventually_or1.dra")


@pytest.fixture
def universal_dra():
    return load_dra("universal.dra")


@pytest.fixture
def never_dra():
    return load_dra("never.dra")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20100901)


@pytest.fixture(params=[row for row, _ in AND_OR_TABLE], ids=lambda r: "z{}-y{}-xa{}-xo{}".format(*r))
def andor_row(request):
    row = request.param
    expected = dict(AND_OR_TABLE)[row]
    return and_or_model(*row), expected
