"""Multidimensional capital evolution under matrix rates of return.

A vector of account balances evolves as ``dp/dt = R(t) p`` with ``R``
piecewise constant. Its propagator is the time-ordered exponential, built
here two independent ways:

* :func:`ordered_exp` multiplies exact per-interval exponentials, later
  factors on the left;
* :func:`volterra_series` sums the truncated iterated-integral series
  using nested midpoint quadrature.

Discrete-time evolution uses matrix lower rates ``U - I`` (applied
chronologically) and upper rates ``I - U^-1`` (applied antichronologically
to recover the starting balance). For a constant diagonalizable generator
:func:`eigen_evolve` decouples the dynamics into independent complex
growth modes.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DomainError,
    NonDiagonalizableError,
    NumericalResidueError,
    SingularStepError,
    SingularUtilityError,
)
from .expm import expm

__all__ = [
    "MatrixRateCurve",
    "UtilityMatrix",
    "MatrixRatePair",
    "EigenEvolution",
    "ordered_exp",
    "unordered_exp",
    "volterra_series",
    "volterra_bound",
    "matrix_lower_rate",
    "matrix_upper_rate",
    "lower_to_upper_matrix",
    "upper_to_lower_matrix",
    "discrete_evolve_lower",
    "discrete_evolve_upper",
    "lower_trajectory",
    "commutes",
    "eigen_decompose",
    "eigen_evolve",
]

SINGULAR_COND = 1e12
EIGEN_COND_CAP = 1e8
IMAG_RESIDUE = 1e-9


@dataclass(frozen=True, eq=False)
class MatrixRateCurve:
    """Piecewise-constant ``n x n`` generator.

    ``generators[i]`` applies on ``[breakpoints[i], breakpoints[i+1])``,
    last interval closed.
    """

    breakpoints: tuple[float, ...]
    generators: np.ndarray

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        gens = np.array(self.generators, dtype=float)
        if gens.ndim == 2:
            gens = gens[None]
        if len(bp) < 2 or any(b <= a for a, b in zip(bp, bp[1:])):
            raise DomainError("breakpoints must be at least two strictly increasing instants")
        if not np.all(np.isfinite(bp)):
            raise DomainError("breakpoints must be finite")
        if gens.ndim != 3 or gens.shape[1] != gens.shape[2] or gens.shape[1] < 1:
            raise DomainError("generators must be a list of square matrices")
        if gens.shape[0] != len(bp) - 1:
            raise DomainError(f"expected {len(bp) - 1} generators, got {gens.shape[0]}")
        if not np.all(np.isfinite(gens)):
            raise DomainError("generator entries must be finite")
        gens.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "generators", gens)

    @classmethod
    def constant(cls, R, start: float = 0.0, end: float = 1.0) -> "MatrixRateCurve":
        return cls((start, end), np.asarray(R, dtype=float)[None])

    @classmethod
    def from_dict(cls, data: Mapping) -> "MatrixRateCurve":
        curve = cls(tuple(data["breakpoints"]), np.asarray(data["generators"], dtype=float))
        if "dimension" in data and int(data["dimension"]) != curve.dimension:
            raise DomainError(
                f"declared dimension {data['dimension']} does not match generators ({curve.dimension})"
            )
        return curve

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "breakpoints": list(self.breakpoints),
            "generators": self.generators.tolist(),
        }

    @property
    def dimension(self) -> int:
        return self.generators.shape[1]

    @property
    def start(self) -> float:
        return self.breakpoints[0]

    @property
    def end(self) -> float:
        return self.breakpoints[-1]

    def check_domain(self, *instants: float) -> None:
        for t in instants:
            if not (self.start <= t <= self.end):
                raise DomainError(f"instant {t!r} outside curve domain [{self.start}, {self.end}]")

    def rate_at(self, t: float) -> np.ndarray:
        self.check_domain(t)
        i = min(bisect.bisect_right(self.breakpoints, t) - 1, len(self.generators) - 1)
        return self.generators[i]

    def pieces(self, a: float, b: float) -> list[tuple[float, float, np.ndarray]]:
        """Generator pieces overlapping ``[a, b]``, clipped, in time order."""
        self.check_domain(a, b)
        out = []
        for left, right, R in zip(self.breakpoints, self.breakpoints[1:], self.generators):
            lo, hi = max(left, a), min(right, b)
            if hi > lo:
                out.append((lo, hi, R))
        return out


@dataclass(frozen=True, eq=False)
class UtilityMatrix:
    start: float
    end: float
    matrix: np.ndarray

    def apply(self, p) -> np.ndarray:
        return self.matrix @ np.asarray(p, dtype=float)


@dataclass(frozen=True, eq=False)
class MatrixRatePair:
    lower: np.ndarray
    upper: np.ndarray

    def residual(self) -> float:
        n = self.lower.shape[0]
        ident = np.eye(n)
        return float(np.linalg.norm((ident + self.lower) @ (ident - self.upper) - ident))

    @classmethod
    def from_utility(cls, u: UtilityMatrix) -> "MatrixRatePair":
        return cls(matrix_lower_rate(u), matrix_upper_rate(u))


def ordered_exp(
    curve: MatrixRateCurve, start: float, end: float, substeps_per_interval: int = 1
) -> UtilityMatrix:
    """Time-ordered exponential of ``curve`` from ``start`` to ``end``."""
    if substeps_per_interval < 1:
        raise ValueError("substeps_per_interval must be positive")
    curve.check_domain(start, end)
    if end < start:
        raise DomainError(f"end={end} precedes start={start}")
    U = np.eye(curve.dimension)
    for lo, hi, R in curve.pieces(start, end):
        step = expm(R * ((hi - lo) / substeps_per_interval))
        for _ in range(substeps_per_interval):
            U = step @ U
    return UtilityMatrix(start, end, U)


def unordered_exp(curve: MatrixRateCurve, start: float, end: float) -> np.ndarray:
    """``exp(sum R_i * dt_i)``; equals :func:`ordered_exp` only for commuting pieces."""
    total = np.zeros((curve.dimension, curve.dimension))
    for lo, hi, R in curve.pieces(start, end):
        total += R * (hi - lo)
    return expm(total)


def volterra_series(
    curve: MatrixRateCurve, start: float, end: float, order: int, quad_points: int = 2000
) -> UtilityMatrix:
    """Truncated iterated-integral series for the ordered exponential.

    Term ``k`` is ``V_k(t) = int_start^t R(s) V_{k-1}(s) ds`` with
    ``V_0 = I``. Each generator piece is split into ``quad_points`` cells;
    ``R`` is sampled at cell midpoints and ``V_{k-1}`` at the midpoint by
    averaging the cell's end nodes, so the rule is second order.
    """
    if order < 1:
        raise ValueError("order must be at least 1")
    if quad_points < 1:
        raise ValueError("quad_points must be positive")
    curve.check_domain(start, end)
    if end < start:
        raise DomainError(f"end={end} precedes start={start}")
    n = curve.dimension
    pieces = curve.pieces(start, end)
    if not pieces:
        return UtilityMatrix(start, end, np.eye(n))

    widths = np.concatenate([np.full(quad_points, (hi - lo) / quad_points) for lo, hi, _ in pieces])
    gens = np.concatenate([np.broadcast_to(R, (quad_points, n, n)) for _, _, R in pieces])
    hR = widths[:, None, None] * gens

    prev = np.broadcast_to(np.eye(n), (len(widths) + 1, n, n))
    total = np.eye(n)
    for _ in range(order):
        mid = 0.5 * (prev[:-1] + prev[1:])
        incr = np.einsum("kij,kjl->kil", hR, mid)
        term = np.zeros_like(prev)
        term[1:] = np.cumsum(incr, axis=0)
        total = total + term[-1]
        prev = term
    return UtilityMatrix(start, end, total)


def volterra_bound(curve: MatrixRateCurve, start: float, end: float, order: int) -> float:
    """Tail bound ``sum_{j > order} M**j / j!`` with ``M = int ||R||_2 dt``."""
    M = sum(np.linalg.norm(R, 2) * (hi - lo) for lo, hi, R in curve.pieces(start, end))
    term, tail, j = 1.0, 0.0, 0
    while True:
        j += 1
        term *= M / j
        if j > order:
            tail += term
            if term < 1e-18 * max(tail, 1e-300):
                return tail


def _inv_and_cond(A: np.ndarray) -> tuple[np.ndarray | None, float]:
    """Inverse and 1-norm condition number; ``(None, inf)`` when singular."""
    try:
        inv = np.linalg.inv(A)
    except np.linalg.LinAlgError:
        return None, np.inf
    c = float(np.abs(A).sum(axis=0).max() * np.abs(inv).sum(axis=0).max())
    return inv, c if np.isfinite(c) else np.inf


def _cond(A: np.ndarray) -> float:
    return _inv_and_cond(A)[1]


def matrix_lower_rate(u: UtilityMatrix) -> np.ndarray:
    U = np.asarray(u.matrix, dtype=float)
    return U - np.eye(U.shape[0])


def matrix_upper_rate(u: UtilityMatrix, cond_limit: float = SINGULAR_COND) -> np.ndarray:
    U = np.asarray(u.matrix, dtype=float)
    inv, c = _inv_and_cond(U)
    if c > cond_limit:
        raise SingularUtilityError("utility matrix is singular or too ill-conditioned to invert")
    return np.eye(U.shape[0]) - inv


def lower_to_upper_matrix(lower, cond_limit: float = SINGULAR_COND) -> np.ndarray:
    """Dual upper rate of a single-step lower rate."""
    L = np.asarray(lower, dtype=float)
    return matrix_upper_rate(UtilityMatrix(0.0, 1.0, np.eye(L.shape[0]) + L), cond_limit)


def upper_to_lower_matrix(upper, cond_limit: float = SINGULAR_COND) -> np.ndarray:
    """Dual lower rate of a single-step upper rate."""
    R = np.asarray(upper, dtype=float)
    F = np.eye(R.shape[0]) - R
    inv, c = _inv_and_cond(F)
    if c > cond_limit:
        raise SingularUtilityError("I - upper rate is singular or too ill-conditioned to invert")
    return inv - np.eye(R.shape[0])


def _step_factor(M: np.ndarray, n: int, cond_limit: float, k: int) -> np.ndarray:
    if M.shape != (n, n):
        raise DomainError(f"step {k} has shape {M.shape}, expected {(n, n)}")
    if _cond(M) > cond_limit:
        raise SingularStepError(f"step {k} factor is singular (condition estimate above {cond_limit:g})")
    return M


def lower_trajectory(rates: Sequence, p0, cond_limit: float = SINGULAR_COND) -> list[np.ndarray]:
    """Balances after each chronological lower-rate step, ``p0`` first."""
    p = np.asarray(p0, dtype=float)
    n = p.shape[0]
    path = [p]
    for k, R in enumerate(rates):
        F = _step_factor(np.eye(n) + np.asarray(R, dtype=float), n, cond_limit, k)
        p = F @ p
        path.append(p)
    return path


def discrete_evolve_lower(rates: Sequence, p0, cond_limit: float = SINGULAR_COND) -> np.ndarray:
    """``(I + L_last) ... (I + L_first) p0``."""
    return lower_trajectory(rates, p0, cond_limit)[-1]


def discrete_evolve_upper(rates: Sequence, p_final, cond_limit: float = SINGULAR_COND) -> np.ndarray:
    """Recover the opening balance: ``(I - R_first) ... (I - R_last) p_final``.

    ``rates`` are given in chronological order; the last one is applied first.
    """
    p = np.asarray(p_final, dtype=float)
    n = p.shape[0]
    for k in range(len(rates) - 1, -1, -1):
        F = _step_factor(np.eye(n) - np.asarray(rates[k], dtype=float), n, cond_limit, k)
        p = F @ p
    return p


def commutes(curve: MatrixRateCurve, tol: float = 1e-12) -> bool:
    gens = curve.generators
    norms = [np.linalg.norm(R) for R in gens]
    for i in range(len(gens)):
        for j in range(i + 1, len(gens)):
            comm = gens[i] @ gens[j] - gens[j] @ gens[i]
            if np.linalg.norm(comm) > tol * norms[i] * norms[j]:
                return False
    return True


@dataclass(frozen=True, eq=False)
class EigenEvolution:
    """Constant generator written as ``basis @ diag(eigenvalues) @ basis_inverse``."""

    eigenvalues: np.ndarray
    basis: np.ndarray
    basis_inverse: np.ndarray

    def propagator(self, dt: float) -> np.ndarray:
        return (self.basis * np.exp(self.eigenvalues * dt)) @ self.basis_inverse

    def modes(self, p0) -> np.ndarray:
        """Coordinates of ``p0`` in the eigenbasis."""
        return self.basis_inverse @ np.asarray(p0, dtype=complex)

    def evolve_complex(self, p0, dt: float) -> np.ndarray:
        return self.basis @ (np.exp(self.eigenvalues * dt) * self.modes(p0))


def eigen_decompose(generator, cond_cap: float = EIGEN_COND_CAP) -> EigenEvolution:
    R = np.asarray(generator, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise DomainError("generator must be a square matrix")
    lam, V = np.linalg.eig(R)
    if _cond(V) > cond_cap:
        raise NonDiagonalizableError(
            "generator is defective or too close to defective; use ordered_exp instead"
        )
    Vinv = np.linalg.inv(V)
    scale = max(1.0, float(np.abs(R).max()))
    if np.abs((V * lam) @ Vinv - R).max() > 1e-9 * scale:
        raise NonDiagonalizableError("eigendecomposition does not reproduce the generator")
    return EigenEvolution(lam, V, Vinv)


def eigen_evolve(
    generator,
    p0,
    dt: float,
    cond_cap: float = EIGEN_COND_CAP,
    imag_tol: float = IMAG_RESIDUE,
) -> np.ndarray:
    """Evolve ``p0`` by ``exp(generator * dt)`` through independent eigenmodes.

    The imaginary part of the result must vanish to ``imag_tol`` relative to
    its norm; it is then discarded.
    """
    eig = eigen_decompose(generator, cond_cap)
    z = eig.evolve_complex(p0, dt)
    scale = max(np.linalg.norm(z), np.finfo(float).tiny)
    if np.linalg.norm(z.imag) > imag_tol * scale:
        raise NumericalResidueError(
            f"imaginary residue {np.linalg.norm(z.imag) / scale:.3g} exceeds {imag_tol:g}"
        )
    return z.real.copy()
