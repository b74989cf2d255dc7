"""Scalar rate-of-return calculus.

A :class:`RateCurve` holds a piecewise-constant instantaneous rate ``r(t)``.
Utility factors are exponentials of its exact integral, so moving one unit
of capital from ``start`` to ``end`` multiplies it by::

    exp( integral_{start}^{end} r(s) ds )

Reversing the span gives the reciprocal (discounting instead of growth).
Discrete-period rates come in two flavours: the *lower* rate ``U - 1`` is
quoted on the opening balance, the *upper* rate ``1 - 1/U`` on the closing
balance, and they are linked by ``(1 + lower) * (1 - upper) == 1``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import CompositionError, DomainError, SingularRateError

__all__ = [
    "RateCurve",
    "UtilityFactor",
    "RangeRate",
    "DiscreteRatePair",
    "utility_from_rate",
    "range_rate",
    "utility_from_range_rate",
    "compose_utility",
    "lower_rate",
    "upper_rate",
    "lower_to_upper",
    "upper_to_lower",
    "compound_lower",
    "compound_upper",
]


@dataclass(frozen=True)
class RateCurve:
    """Piecewise-constant rate on ``[breakpoints[0], breakpoints[-1]]``.

    ``rates[i]`` applies on ``[breakpoints[i], breakpoints[i+1])``; the last
    interval is closed on the right.
    """

    breakpoints: tuple[float, ...]
    rates: tuple[float, ...]

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        rs = tuple(float(r) for r in self.rates)
        if len(bp) < 2:
            raise DomainError("a rate curve needs at least two breakpoints")
        if len(rs) != len(bp) - 1:
            raise DomainError(
                f"expected {len(bp) - 1} rates for {len(bp)} breakpoints, got {len(rs)}"
            )
        if not all(math.isfinite(b) for b in bp):
            raise DomainError("breakpoints must be finite")
        if any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])):
            raise DomainError("breakpoints must be strictly increasing")
        if not all(math.isfinite(r) for r in rs):
            raise DomainError("rates must be finite")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "rates", rs)

    @classmethod
    def flat(cls, rate: float, start: float = 0.0, end: float = 1.0) -> "RateCurve":
        return cls((start, end), (rate,))

    @classmethod
    def from_dict(cls, data: dict) -> "RateCurve":
        return cls(tuple(data["breakpoints"]), tuple(data["rates"]))

    def to_dict(self) -> dict:
        return {"breakpoints": list(self.breakpoints), "rates": list(self.rates)}

    @property
    def start(self) -> float:
        return self.breakpoints[0]

    @property
    def end(self) -> float:
        return self.breakpoints[-1]

    @property
    def intervals(self) -> list[tuple[float, float, float]]:
        """``(left, right, rate)`` for each piece."""
        return [
            (a, b, r) for a, b, r in zip(self.breakpoints, self.breakpoints[1:], self.rates)
        ]

    def check_domain(self, *instants: float) -> None:
        for t in instants:
            if not (self.start <= t <= self.end):
                raise DomainError(
                    f"instant {t!r} outside curve domain [{self.start}, {self.end}]"
                )

    def index(self, t: float) -> int:
        self.check_domain(t)
        return min(bisect.bisect_right(self.breakpoints, t) - 1, len(self.rates) - 1)

    def rate_at(self, t: float) -> float:
        return self.rates[self.index(t)]

    def integral(self, a: float, b: float) -> float:
        """Exact signed integral of the rate from ``a`` to ``b``."""
        self.check_domain(a, b)
        if a == b:
            return 0.0
        if a > b:
            return -self.integral(b, a)
        parts = []
        for left, right, r in self.intervals:
            lo, hi = max(left, a), min(right, b)
            if hi > lo:
                parts.append(r * (hi - lo))
        return math.fsum(parts)

    def is_zero(self) -> bool:
        return all(r == 0.0 for r in self.rates)


@dataclass(frozen=True)
class UtilityFactor:
    """Growth factor carrying capital valued at ``start`` to ``end``."""

    start: float
    end: float
    factor: float

    def __post_init__(self):
        if not (self.factor > 0 and math.isfinite(self.factor)):
            raise DomainError(f"utility factor must be positive and finite, got {self.factor!r}")
        if self.start == self.end and self.factor != 1.0:
            raise DomainError("a utility over an empty span must equal 1")

    def inverse(self) -> "UtilityFactor":
        return UtilityFactor(self.end, self.start, 1.0 / self.factor)


@dataclass(frozen=True)
class RangeRate:
    start: float
    end: float
    value: float


@dataclass(frozen=True)
class DiscreteRatePair:
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower > -1.0:
            raise SingularRateError(f"lower rate must exceed -1, got {self.lower!r}")
        if not self.upper < 1.0:
            raise SingularRateError(f"upper rate must be below 1, got {self.upper!r}")
        if abs((1.0 + self.lower) * (1.0 - self.upper) - 1.0) > 1e-12:
            raise DomainError("lower and upper rates are not dual")

    @classmethod
    def from_utility(cls, u: UtilityFactor) -> "DiscreteRatePair":
        return cls(lower_rate(u), upper_rate(u))


def utility_from_rate(curve: RateCurve, start: float, end: float) -> UtilityFactor:
    """Utility factor ``exp(integral of r from start to end)``.

    >>> utility_from_rate(RateCurve.flat(0.05, 0, 10), 0, 2).factor
    1.1051709180756477
    """
    if start == end:
        curve.check_domain(start)
        return UtilityFactor(start, end, 1.0)
    return UtilityFactor(start, end, math.exp(curve.integral(start, end)))


def range_rate(u: UtilityFactor) -> RangeRate:
    return RangeRate(u.start, u.end, math.log(u.factor))


def utility_from_range_rate(r: RangeRate) -> UtilityFactor:
    if r.start == r.end:
        return UtilityFactor(r.start, r.end, 1.0)
    return UtilityFactor(r.start, r.end, math.exp(r.value))


def compose_utility(u1: UtilityFactor, u2: UtilityFactor) -> UtilityFactor:
    """Chain ``u1`` (start -> junction) with ``u2`` (junction -> end)."""
    if u1.end != u2.start:
        raise CompositionError(
            f"cannot compose: first span ends at {u1.end!r}, second starts at {u2.start!r}"
        )
    factor = u1.factor * u2.factor
    if u1.start == u2.end:
        # round trip; rounding in the product must not break the empty-span invariant
        factor = 1.0
    return UtilityFactor(u1.start, u2.end, factor)


def lower_rate(u: UtilityFactor) -> float:
    return u.factor - 1.0


def upper_rate(u: UtilityFactor) -> float:
    return 1.0 - 1.0 / u.factor


def lower_to_upper(lower: float) -> float:
    if not lower > -1.0:
        raise SingularRateError(f"lower rate must exceed -1, got {lower!r}")
    return 1.0 - 1.0 / (1.0 + lower)


def upper_to_lower(upper: float) -> float:
    if not upper < 1.0:
        raise SingularRateError(f"upper rate must be below 1, got {upper!r}")
    return 1.0 / (1.0 - upper) - 1.0


def compound_lower(rates: Iterable[float], p0: float) -> float:
    """Grow ``p0`` through consecutive periods quoted as lower rates."""
    p = float(p0)
    for r in rates:
        if not r > -1.0:
            raise SingularRateError(f"lower rate must exceed -1, got {r!r}")
        p *= 1.0 + r
    return p


def compound_upper(rates: Sequence[float], p0: float) -> float:
    """Grow ``p0`` through consecutive periods quoted as upper rates."""
    p = float(p0)
    for r in rates:
        if not r < 1.0:
            raise SingularRateError(f"upper rate must be below 1, got {r!r}")
        p /= 1.0 - r
    return p
