"""Credit schedules and their deterministic risk.

A loan paid out at ``t_0`` is repaid by instalments at ``t_1 < ... < t_N``.
Every amount is compared in the capital units of a reference instant ``tau``
by multiplying with the utility factor carrying ``t_k`` to ``tau``.

Two constructors are provided:

* :func:`minmax_schedule` makes every discounted instalment equal, which
  minimises the largest single exposure for a lender with minmax
  preferences ("really fixed" instalments);
* :func:`nominally_fixed_schedule` makes every face value equal, the usual
  commercial credit.

Both produce balanced schedules. :func:`risk_report` summarises a
discounted schedule by its maximum, mean and population variance over the
repayments (the loan entry is excluded).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .cashflow import FlowImpulse, FlowProfile
from .errors import ArityError, DomainError, SignError
from .rates import RateCurve, utility_from_rate

__all__ = [
    "InstalmentSchedule",
    "DiscountedSchedule",
    "RiskReport",
    "discount_factor",
    "discount_schedule",
    "minmax_schedule",
    "nominally_fixed_schedule",
    "risk_report",
    "risk_rows",
]


@dataclass(frozen=True)
class InstalmentSchedule:
    reference: float
    loan: FlowImpulse
    instalments: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.loan.amount < 0:
            raise SignError(f"loan amount must be negative, got {self.loan.amount!r}")
        inst = tuple((float(t), float(face)) for t, face in self.instalments)
        if not inst:
            raise ArityError("a schedule needs at least one instalment")
        times = [t for t, _ in inst]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise DomainError("instalment times must be strictly increasing")
        if times[0] <= self.loan.at:
            raise DomainError("instalments must fall after the loan")
        if not all(math.isfinite(f) for _, f in inst):
            raise DomainError("instalment face amounts must be finite")
        object.__setattr__(self, "instalments", inst)

    @property
    def n(self) -> int:
        return len(self.instalments)

    @property
    def times(self) -> list[float]:
        return [t for t, _ in self.instalments]

    @property
    def faces(self) -> list[float]:
        return [f for _, f in self.instalments]

    @classmethod
    def from_dict(cls, data: Mapping) -> "InstalmentSchedule":
        loan = data["loan"]
        return cls(
            float(data["reference"]),
            FlowImpulse(float(loan["t"]), float(loan["amount"])),
            tuple((float(i["t"]), float(i["face"])) for i in data["instalments"]),
        )

    def to_dict(self) -> dict:
        return {
            "reference": self.reference,
            "loan": {"t": self.loan.at, "amount": self.loan.amount},
            "instalments": [{"t": t, "face": f} for t, f in self.instalments],
        }

    def face_flow(self) -> FlowProfile:
        """Undiscounted impulse flow of the contract."""
        imps = (self.loan,) + tuple(FlowImpulse(t, f) for t, f in self.instalments)
        return FlowProfile((self.loan.at, self.instalments[-1][0]), imps)


@dataclass(frozen=True)
class DiscountedSchedule:
    """Entries ``(t_k, discounted amount)``; entry 0 is the loan."""

    reference: float
    entries: tuple[tuple[float, float], ...]

    @property
    def repayments(self) -> list[float]:
        return [v for _, v in self.entries[1:]]

    def total(self) -> float:
        return math.fsum(v for _, v in self.entries)

    def flow(self) -> FlowProfile:
        imps = tuple(FlowImpulse(t, v) for t, v in self.entries)
        return FlowProfile((self.entries[0][0], self.entries[-1][0]), imps)


@dataclass(frozen=True)
class RiskReport:
    max_discounted: float
    mean_discounted: float
    variance_risk: float
    argmax: int


def discount_factor(curve: RateCurve, tau: float, t: float) -> float:
    """Factor converting a unit paid at ``t`` into units of ``tau``."""
    return utility_from_rate(curve, t, tau).factor


def discount_schedule(s: InstalmentSchedule, curve: RateCurve) -> DiscountedSchedule:
    tau = s.reference
    entries = [(s.loan.at, discount_factor(curve, tau, s.loan.at) * s.loan.amount)]
    entries += [(t, discount_factor(curve, tau, t) * face) for t, face in s.instalments]
    return DiscountedSchedule(tau, tuple(entries))


def _check_inputs(loan: float, times: Sequence[float], curve: RateCurve, tau: float, loan_time: float):
    if not loan < 0:
        raise SignError(f"loan must be negative, got {loan!r}")
    if len(times) == 0:
        raise ArityError("at least one repayment time is required")
    curve.check_domain(tau, loan_time, *times)


def minmax_schedule(
    loan: float,
    times: Sequence[float],
    curve: RateCurve,
    tau: float,
    *,
    loan_time: float | None = None,
) -> InstalmentSchedule:
    """Schedule whose discounted repayments are all equal.

    ``loan`` is the (negative) face amount paid out at ``loan_time``, which
    defaults to the start of ``curve``. Face values come out independent
    of ``tau``: changing it rescales every discounted entry by one factor.
    """
    loan_time = curve.start if loan_time is None else float(loan_time)
    _check_inputs(loan, times, curve, tau, loan_time)
    share = -discount_factor(curve, tau, loan_time) * loan / len(times)
    faces = [share / discount_factor(curve, tau, t) for t in times]
    return InstalmentSchedule(tau, FlowImpulse(loan_time, loan), tuple(zip(times, faces)))


def nominally_fixed_schedule(
    loan: float,
    times: Sequence[float],
    curve: RateCurve,
    tau: float,
    *,
    loan_time: float | None = None,
) -> InstalmentSchedule:
    """Schedule whose face values are all equal."""
    loan_time = curve.start if loan_time is None else float(loan_time)
    _check_inputs(loan, times, curve, tau, loan_time)
    weight = math.fsum(discount_factor(curve, tau, t) for t in times)
    if not weight > 0:
        raise DomainError("sum of discount factors must be positive")
    face = -discount_factor(curve, tau, loan_time) * loan / weight
    return InstalmentSchedule(
        tau, FlowImpulse(loan_time, loan), tuple((t, face) for t in times)
    )


def risk_report(d: DiscountedSchedule) -> RiskReport:
    reps = d.repayments
    if not reps:
        raise ArityError("no repayment entries to measure")
    n = len(reps)
    # exact rationals keep min <= mean <= max after rounding
    exact = [Fraction(v) for v in reps]
    mean = sum(exact, Fraction(0)) / n
    variance = sum(((v - mean) ** 2 for v in exact), Fraction(0)) / n
    # first index wins ties
    k = max(range(n), key=lambda i: (reps[i], -i))
    return RiskReport(reps[k], float(mean), float(variance), k + 1)


def risk_rows(s: InstalmentSchedule, d: DiscountedSchedule) -> list[tuple[int, float, float, float, float]]:
    """``(k, t_k, face, discounted, deviation)`` for k = 1..N."""
    mean = risk_report(d).mean_discounted
    return [
        (k, t, face, disc, disc - mean)
        for k, ((t, face), (_, disc)) in enumerate(zip(s.instalments, d.entries[1:]), start=1)
    ]
