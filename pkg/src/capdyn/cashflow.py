"""Flow intensities, balance integration and paired transfers.

An account balance changes only through the flows that pass through it.
Flows are either dated impulses (a Dirac comb of instalments) or a
piecewise-constant density, and both are integrated exactly.

The mean/peak helpers cover the bridge-loading argument: for a nonnegative
density the time average can never exceed the maximum, so a flat profile
carries the load at the smallest possible peak.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Iterable, Mapping, Sequence

from .errors import DomainError, SelfTransferError, UndefinedPeakError
from .rates import RateCurve

__all__ = [
    "FlowImpulse",
    "FlowProfile",
    "BalanceTrajectory",
    "PairedTransfer",
    "integrate_flow",
    "is_balanced",
    "make_paired_transfer",
    "ledger_trajectories",
    "exact_mean",
    "mean_intensity",
    "peak_intensity",
    "transport_risk_distance",
]


@dataclass(frozen=True)
class FlowImpulse:
    at: float
    amount: float

    def __post_init__(self):
        if not (math.isfinite(self.at) and math.isfinite(self.amount)):
            raise DomainError("impulse time and amount must be finite")


@dataclass(frozen=True)
class FlowProfile:
    """Capital flow over ``horizon``: impulses plus an optional density.

    The density reuses :class:`RateCurve` as a piecewise-constant intensity
    in capital units per unit time.
    """

    horizon: tuple[float, float]
    impulses: tuple[FlowImpulse, ...] = ()
    density: RateCurve | None = None

    def __post_init__(self):
        t0, t1 = (float(h) for h in self.horizon)
        if not t1 >= t0:
            raise DomainError(f"horizon end {t1} precedes start {t0}")
        object.__setattr__(self, "horizon", (t0, t1))
        imps = tuple(sorted(self.impulses, key=lambda i: i.at))
        for imp in imps:
            if not (t0 <= imp.at <= t1):
                raise DomainError(f"impulse at {imp.at} outside horizon [{t0}, {t1}]")
        object.__setattr__(self, "impulses", imps)
        if self.density is not None and not (
            self.density.start <= t0 and self.density.end >= t1
        ):
            raise DomainError("density does not cover the horizon")

    @classmethod
    def from_density(cls, breakpoints: Sequence[float], values: Sequence[float]) -> "FlowProfile":
        curve = RateCurve(tuple(breakpoints), tuple(values))
        return cls((curve.start, curve.end), (), curve)

    @classmethod
    def from_impulses(
        cls, impulses: Iterable[tuple[float, float]], horizon: tuple[float, float] | None = None
    ) -> "FlowProfile":
        imps = tuple(FlowImpulse(float(t), float(a)) for t, a in impulses)
        if horizon is None:
            times = [i.at for i in imps] or [0.0]
            horizon = (min(times), max(times))
        return cls(horizon, imps)

    @classmethod
    def from_dict(cls, data: Mapping) -> "FlowProfile":
        imps = tuple(FlowImpulse(float(i["t"]), float(i["amount"])) for i in data.get("impulses", []))
        density = data.get("density")
        curve = RateCurve.from_dict(density) if density else None
        if "horizon" in data:
            horizon = tuple(data["horizon"])
        elif curve is not None:
            horizon = (curve.start, curve.end)
        else:
            raise KeyError("horizon")
        return cls(horizon, imps, curve)

    def to_dict(self) -> dict:
        out = {
            "impulses": [{"t": i.at, "amount": i.amount} for i in self.impulses],
            "horizon": list(self.horizon),
        }
        if self.density is not None:
            out["density"] = self.density.to_dict()
        return out

    @property
    def length(self) -> float:
        return self.horizon[1] - self.horizon[0]

    def negated(self) -> "FlowProfile":
        imps = tuple(FlowImpulse(i.at, -i.amount) for i in self.impulses)
        dens = None
        if self.density is not None:
            dens = RateCurve(self.density.breakpoints, tuple(-r for r in self.density.rates))
        return FlowProfile(self.horizon, imps, dens)

    def check_horizon(self, *instants: float) -> None:
        t0, t1 = self.horizon
        for t in instants:
            if not (t0 <= t <= t1):
                raise DomainError(f"instant {t!r} outside horizon [{t0}, {t1}]")

    def density_integral(self, a: float, b: float) -> float:
        if self.density is None or a == b:
            return 0.0
        return self.density.integral(a, b)

    def change(self, a: float, b: float) -> float:
        """Balance change over ``(a, b]``: impulses in the span plus density."""
        self.check_horizon(a, b)
        jumps = [i.amount for i in self.impulses if a < i.at <= b]
        return math.fsum(jumps + [self.density_integral(a, b)])

    def total(self) -> float:
        """Net flow over the whole horizon, impulses at either end included."""
        t0, t1 = self.horizon
        return math.fsum([i.amount for i in self.impulses] + [self.density_integral(t0, t1)])


@dataclass(frozen=True)
class BalanceTrajectory:
    reference: float
    times: tuple[float, ...]
    balances: tuple[float, ...]

    def __post_init__(self):
        if len(self.times) != len(self.balances) or not self.times:
            raise DomainError("trajectory needs matching, non-empty times and balances")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise DomainError("trajectory times must be strictly increasing")

    @property
    def initial(self) -> float:
        return self.balances[0]

    @property
    def final(self) -> float:
        return self.balances[-1]

    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.times, self.balances))


def integrate_flow(
    flow: FlowProfile,
    p0: float,
    t1: float,
    t2: float,
    *,
    reference: float = 0.0,
    times: Iterable[float] = (),
) -> BalanceTrajectory:
    """Integrate ``dp/dt = f`` from ``t1`` to ``t2`` starting at ``p0``.

    The balance is right-continuous: an impulse at ``t`` is already included
    in the sample at ``t``. Samples are taken at the span ends, at every
    impulse and density breakpoint inside the span, and at any extra
    ``times`` requested.
    """
    flow.check_horizon(t1, t2)
    if t2 < t1:
        raise DomainError(f"t2={t2} precedes t1={t1}")
    grid = {t1, t2}
    grid.update(i.at for i in flow.impulses if t1 < i.at <= t2)
    if flow.density is not None:
        grid.update(b for b in flow.density.breakpoints if t1 < b < t2)
    for t in times:
        flow.check_horizon(t)
        if t1 <= t <= t2:
            grid.add(float(t))
    ts = sorted(grid)
    balances = [float(p0)]
    for a, b in zip(ts, ts[1:]):
        balances.append(balances[-1] + flow.change(a, b))
    return BalanceTrajectory(reference, tuple(ts), tuple(balances))


def is_balanced(flow: FlowProfile, tol: float = 1e-10) -> bool:
    return abs(flow.total()) <= tol


@dataclass(frozen=True)
class PairedTransfer:
    """A flow leaving ``from_account`` and arriving at ``to_account``."""

    from_account: Hashable
    to_account: Hashable
    flow: FlowProfile

    def induced(self, account: Hashable) -> FlowProfile | None:
        if account == self.to_account:
            return self.flow
        if account == self.from_account:
            return self.flow.negated()
        return None


def make_paired_transfer(from_account: Hashable, to_account: Hashable, flow: FlowProfile) -> PairedTransfer:
    if from_account == to_account:
        raise SelfTransferError(f"account {from_account!r} cannot transfer to itself")
    return PairedTransfer(from_account, to_account, flow)


def ledger_trajectories(
    transfers: Sequence[PairedTransfer],
    opening: Mapping[Hashable, float],
    times: Sequence[float],
) -> dict[Hashable, list[float]]:
    """Balance of every account at each of ``times`` (ascending).

    Accounts not in ``opening`` start from zero. Each transfer contributes
    its signed change since ``times[0]`` to both legs.
    """
    times = list(times)
    balances: dict[Hashable, list[float]] = defaultdict(lambda: [0.0] * len(times))
    for acct, p in opening.items():
        balances[acct] = [float(p)] * len(times)
    for tr in transfers:
        for acct in (tr.from_account, tr.to_account):
            leg = tr.induced(acct)
            row = balances[acct]
            for j, t in enumerate(times[1:], start=1):
                row[j] += leg.change(times[0], t)
    return dict(balances)


def _require_pure_density(flow: FlowProfile) -> RateCurve:
    if flow.impulses:
        raise UndefinedPeakError("impulse flows have no finite peak intensity")
    if flow.density is None:
        raise UndefinedPeakError("flow has no density")
    return flow.density


def _pieces(flow: FlowProfile) -> list[tuple[float, float, float]]:
    t0, t1 = flow.horizon
    out = []
    for a, b, v in _require_pure_density(flow).intervals:
        lo, hi = max(a, t0), min(b, t1)
        if hi > lo:
            out.append((lo, hi, v))
    return out


def _dyadic(xs: Sequence[float]) -> tuple[list[int], int]:
    """Write floats exactly as ``ints[i] / 2**shift`` with one shared shift."""
    ratios = [float(x).as_integer_ratio() for x in xs]
    shift = max(d.bit_length() - 1 for _, d in ratios)
    return [n << (shift - d.bit_length() + 1) for n, d in ratios], shift


def exact_mean(flow: FlowProfile) -> Fraction:
    """Time-averaged density as an exact rational."""
    if not flow.length > 0:
        raise DomainError("mean intensity needs a horizon of positive length")
    pieces = _pieces(flow)
    ends, _ = _dyadic([x for lo, hi, _ in pieces for x in (lo, hi)] + list(flow.horizon))
    vals, vshift = _dyadic([v for _, _, v in pieces])
    total = sum(v * (ends[2 * i + 1] - ends[2 * i]) for i, v in enumerate(vals))
    return Fraction(total, (ends[-1] - ends[-2]) << vshift)


def mean_intensity(flow: FlowProfile) -> float:
    """``(1/T) * integral of f``; correctly rounded from the exact value."""
    return float(exact_mean(flow))


def peak_intensity(flow: FlowProfile) -> float:
    pieces = _pieces(flow)
    if not pieces:
        raise DomainError("peak intensity needs a horizon of positive length")
    return max(v for _, _, v in pieces)


def transport_risk_distance(f1: FlowProfile, f2: FlowProfile) -> float:
    """``|peak(f1) - peak(f2)|``.

    A pseudometric only: differently shaped profiles with the same peak are
    at distance zero.
    """
    return abs(peak_intensity(f1) - peak_intensity(f2))
