"""
Closed-form bounds used for error budgeting and diagnostics.

Rational bounds are kept exact. Bounds involving exp() are evaluated with interval arithmetic
and the endpoint on the safe side is reported: the upper endpoint for tail (upper) bounds.
Every bound also carries its base-2 logarithm, which stays finite where a float would not.
"""
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
import math
from typing import Any, Dict, Optional, Union

import mpmath

from pocan.errors import DomainError
from pocan.model import to_fraction

IV_PREC = 113

BoundValue = Union[Fraction, int, mpmath.mpf]


class GrandCase(str, Enum):
    PREPOST_FINITE = "PREPOST_FINITE"
    NOT_IN_BSCC = "NOT_IN_BSCC"
    TREND_NONZERO = "TREND_NONZERO"


DETERMINISTIC_ZERO = "DETERMINISTIC_ZERO"
NOT_APPLICABLE = "NOT_APPLICABLE"


@dataclass(frozen=True)
class BoundReport:
    name: str
    inputs: Dict[str, Any]
    value: Optional[BoundValue]
    flag: Optional[str] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def log2(self) -> Optional[float]:
        return log2_of(self.value) if self.value is not None else None

    @property
    def float_value(self) -> Optional[float]:
        if self.value is None:
            return None
        try:
            return float(self.value)
        except OverflowError:
            return math.inf


def log2_of(value: BoundValue) -> float:
    """Base-2 logarithm that does not overflow for huge or tiny rationals."""
    if isinstance(value, (int, Fraction)):
        v = Fraction(value)
        if v <= 0:
            raise DomainError(f"log2 of non-positive value {v}")
        return math.log2(v.numerator) - math.log2(v.denominator)
    with mpmath.workprec(IV_PREC):
        return float(mpmath.log(value, 2))


def _iv(q: Fraction):
    return mpmath.iv.mpf(q.numerator) / q.denominator


def _upper(interval) -> mpmath.mpf:
    with mpmath.workprec(IV_PREC):
        return mpmath.mpf(interval.b)


def _upper_exp(neg_exponent: Fraction) -> mpmath.mpf:
    """Upper endpoint of exp(-neg_exponent)."""
    mpmath.iv.prec = IV_PREC
    return _upper(mpmath.iv.exp(-_iv(neg_exponent)))


def hitting_bound(n: int, x, k: int) -> BoundReport:
    """2·c^k with c = exp(-x^n/n): probability that a run of an n-state chain avoids a target for k steps."""
    x = to_fraction(x)
    if n < 1 or not (0 < x <= 1):
        raise DomainError(f"hitting_bound needs n >= 1 and 0 < x <= 1 (n={n}, x={x})")
    if k < n:
        raise DomainError(f"hitting_bound needs k >= n (k={k}, n={n})")
    c = _upper_exp(x ** n / n)
    value = 2 * _upper_exp(k * x ** n / n)
    flag = DETERMINISTIC_ZERO if x == 1 else None
    return BoundReport("hitting", {"n": n, "x": x, "k": k}, value, flag, {"c": c})


def azuma_tail(t, span, c0: int, i: int) -> BoundReport:
    """
    a^i with a = exp(-t²/(8(span+|t|+1)²)), valid for i >= h.

    h = 2(-span-c0)/t for t < 0 and 2(span-c0)/t for t > 0. Below h the flag is NOT_APPLICABLE.
    """
    t, span = to_fraction(t), to_fraction(span)
    if t == 0:
        raise DomainError("azuma_tail needs a non-zero trend")
    if span < 0:
        raise DomainError(f"azuma_tail needs span >= 0, got {span}")
    h = 2 * (-span - c0) / t if t < 0 else 2 * (span - c0) / t
    expo = t * t / (8 * (span + abs(t) + 1) ** 2)
    a = _upper_exp(expo)
    inputs = {"t": t, "span": span, "c0": c0, "i": i}
    if i < h:
        return BoundReport("azuma_tail", inputs, None, NOT_APPLICABLE, {"a": a, "h": h})
    return BoundReport("azuma_tail", inputs, _upper_exp(i * expo), None, {"a": a, "h": h})


def divergence_tail(t, span, c0: int) -> BoundReport:
    """a^c0/(1-a) with a = exp(-t²/(2(span+t+1)²)), an upper bound on [p(c0)↓] from a maximal-potential state."""
    t, span = to_fraction(t), to_fraction(span)
    if t <= 0:
        raise DomainError(f"divergence_tail needs a positive trend, got {t}")
    threshold = 6 * (span + t + 1) ** 3 / t ** 3
    inputs = {"t": t, "span": span, "c0": c0}
    expo = t * t / (2 * (span + t + 1) ** 2)
    mpmath.iv.prec = IV_PREC
    a = mpmath.iv.exp(-_iv(expo))
    extra = {"a": _upper(a), "threshold": threshold}
    if c0 < span:
        return BoundReport("divergence_tail", inputs, None, NOT_APPLICABLE, extra)
    value = _upper(a ** c0 / (1 - a))
    return BoundReport("divergence_tail", inputs, value, None, extra)


def reach_high_bound(span, b: int) -> BoundReport:
    span = to_fraction(span)
    if b < 1:
        raise DomainError(f"reach_high_bound needs b >= 1, got {b}")
    return BoundReport("reach_high", {"span": span, "b": b}, Fraction(1) / (b + 1 + span))


def gap_bound(t, span) -> BoundReport:
    """t³/(12(2·span+4)³): lower bound on [q↑] for a maximal-potential state of a positive-trend BSCC."""
    t, span = to_fraction(t), to_fraction(span)
    if t <= 0:
        raise DomainError(f"gap_bound needs a positive trend, got {t}")
    return BoundReport("gap", {"t": t, "span": span}, t ** 3 / (12 * (2 * span + 4) ** 3))


def potential_span_bound(nq: int, x_min) -> BoundReport:
    x_min = to_fraction(x_min)
    if nq < 1:
        raise DomainError(f"potential_span_bound needs nq >= 1, got {nq}")
    return BoundReport("potential_span", {"nq": nq, "x_min": x_min}, Fraction(2 * nq) / x_min ** nq)


def pumping_bound(nq: int) -> BoundReport:
    if nq < 1:
        raise DomainError(f"pumping_bound needs nq >= 1, got {nq}")
    return BoundReport("pumping", {"nq": nq}, nq * nq * (nq + 2))


def perturbation_factor(u, v, delta) -> BoundReport:
    u, v, delta = to_fraction(u), to_fraction(v), to_fraction(delta)
    factor = 4 * delta * u * v
    if factor >= 1:
        raise DomainError(f"Perturbation is too large: 4·delta·u·v = {factor} >= 1")
    return BoundReport("perturbation", {"u": u, "v": v, "delta": delta}, factor)


def visiting_delta(eps, r, c: int) -> BoundReport:
    eps, r = to_fraction(eps), to_fraction(r)
    if not (0 < r <= 1) or c < 1:
        raise DomainError(f"visiting_delta needs 0 < r <= 1 and c >= 1 (r={r}, c={c})")
    return BoundReport("visiting_delta", {"eps": eps, "r": r, "c": c}, eps * r ** 3 / (8 * (c + 1) ** 2))


def grand_bound(case: GrandCase, nq: int, x_min, t=None) -> BoundReport:
    """Upper bound on E(p↓q) for a pair whose finiteness follows from the given case."""
    x_min = to_fraction(x_min)
    case = GrandCase(case)
    if nq < 1 or not (0 < x_min <= 1):
        raise DomainError(f"grand_bound needs nq >= 1 and 0 < x_min <= 1 (nq={nq}, x_min={x_min})")
    cube = nq ** 3
    if case is GrandCase.PREPOST_FINITE:
        value = Fraction(15 * cube) / x_min ** (4 * cube)
    elif case is GrandCase.NOT_IN_BSCC:
        value = Fraction(5 * nq) / x_min ** (nq + cube)
    else:
        if t is None or to_fraction(t) == 0:
            raise DomainError("grand_bound for TREND_NONZERO needs a non-zero trend")
        t = to_fraction(t)
        value = Fraction(85000 * nq ** 6) / (x_min ** (5 * nq + cube) * t ** 4)
    inputs = {"case": case.value, "nq": nq, "x_min": x_min}
    if t is not None:
        inputs["t"] = to_fraction(t)
    return BoundReport(f"grand_{case.value.lower()}", inputs, value)


def uniform_grand_bound(nq: int, x_min, t_min) -> BoundReport:
    """85000·|Q|⁶/(x_min^{6|Q|³}·t_min⁴): one bound for every finite E(p↓q) of the model."""
    x_min, t_min = to_fraction(x_min), abs(to_fraction(t_min))
    if nq < 1 or t_min == 0:
        raise DomainError("uniform_grand_bound needs nq >= 1 and a non-zero minimal trend")
    value = Fraction(85000 * nq ** 6) / (x_min ** (6 * nq ** 3) * t_min ** 4)
    return BoundReport("grand_uniform", {"nq": nq, "x_min": x_min, "t_min": t_min}, value)
