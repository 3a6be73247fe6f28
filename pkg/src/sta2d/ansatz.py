"""Smooth scalar functions of time used as design ansatze.

Two families are provided: plain polynomials in the scaled time s = t/t_f and
truncated cosine series over cos(k*pi*t/t_f).  Both support solving for the
coefficients from linear boundary constraints on values and derivatives at
t = 0 and t = t_f.  Working in s keeps the linear systems well scaled for any
duration; derivative constraints are rescaled by powers of t_f.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import AnsatzError

logger = logging.getLogger(__name__)

#: Highest derivative order accepted by :func:`evaluate`.
MAX_DERIVATIVE_ORDER = 4

_COND_WARN = 1e10
_RESIDUAL_TOL = 1e-12
_TIME_SLACK = 1e-9


def _cospi_scalar(x: float) -> float:
    """cos(pi*x) with exact zeros at half-integers and exact +-1 at integers."""
    n = round(x)
    r = x - n
    if r == 0.0:
        c = 1.0
    elif abs(r) == 0.5:
        c = 0.0
    else:
        c = math.cos(math.pi * r)
    return c if n % 2 == 0 else -c


def _sinpi_scalar(x: float) -> float:
    """sin(pi*x) with exact zeros at integers."""
    n = round(x)
    r = x - n
    s = 0.0 if r == 0.0 else math.sin(math.pi * r)
    return s if n % 2 == 0 else -s


_cospi = np.vectorize(_cospi_scalar, otypes=[float])
_sinpi = np.vectorize(_sinpi_scalar, otypes=[float])


def _scaled_time(t, t_f: float):
    """Map t in [0, t_f] (with a small slack) to s in [0, 1]."""
    s = np.asarray(t, dtype=float) / t_f
    if np.any(s < -_TIME_SLACK) or np.any(s > 1.0 + _TIME_SLACK):
        raise ValueError(f"time outside [0, t_f]: t={t!r}, t_f={t_f}")
    s = np.clip(s, 0.0, 1.0)
    return s if s.ndim else float(s)


@dataclass(frozen=True)
class BoundaryConstraint:
    """d^n f / dt^n (time) = value, with time equal to 0 or t_f."""

    time: float
    derivative_order: int
    value: float

    def __post_init__(self):
        if self.derivative_order < 0:
            raise AnsatzError("derivative_order must be nonnegative")

    def describe(self) -> str:
        return (f"f^({self.derivative_order})({self.time:g}) = {self.value:g}")


@dataclass(frozen=True, eq=False)
class PolynomialAnsatz:
    """f(t) = sum_k coefficients[k] * (t/t_f)**k."""

    coefficients: tuple
    t_f: float

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if not self.t_f > 0:
            raise AnsatzError("t_f must be positive")

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @cached_property
    def _deriv_coeffs(self) -> list:
        """Coefficient arrays of d^n/ds^n for n = 0..MAX_DERIVATIVE_ORDER."""
        out = [np.asarray(self.coefficients, dtype=float)]
        for _ in range(MAX_DERIVATIVE_ORDER):
            prev = out[-1]
            out.append(npoly.polyder(prev) if prev.size > 1 else np.zeros(1))
        return out

    def evaluate(self, t, order: int = 0):
        """Analytic value of the order-th time derivative at t."""
        _check_order(order)
        c = self._deriv_coeffs[order]
        if np.ndim(t) == 0:
            # scalar fast path (integrator right-hand sides)
            s = float(t) / self.t_f
            if not -_TIME_SLACK <= s <= 1.0 + _TIME_SLACK:
                raise ValueError(f"time outside [0, t_f]: t={t!r}, t_f={self.t_f}")
            s = min(max(s, 0.0), 1.0)
            acc = 0.0
            for coef in c[::-1]:
                acc = acc * s + coef
            return acc / self.t_f ** order
        s = _scaled_time(t, self.t_f)
        return npoly.polyval(s, c) / self.t_f ** order


@dataclass(frozen=True, eq=False)
class CosineAnsatz:
    """f(t) = sum_k coefficients[k] * cos(k*pi*t/t_f).

    Odd-order derivatives carry a sin(k*pi*t/t_f) factor and therefore vanish
    identically at t = 0 and t = t_f.
    """

    coefficients: tuple
    t_f: float

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if not self.t_f > 0:
            raise AnsatzError("t_f must be positive")

    @property
    def num_terms(self) -> int:
        return len(self.coefficients)

    @cached_property
    def _omegas(self) -> tuple:
        return tuple(k * math.pi / self.t_f for k in range(self.num_terms))

    def evaluate(self, t, order: int = 0):
        """Analytic value of the order-th time derivative at t."""
        _check_order(order)
        return self.derivative(t, order)

    def derivative(self, t, order: int):
        """Like :meth:`evaluate` but without the public order cap."""
        if np.ndim(t) == 0:
            # scalar fast path (integrator right-hand sides)
            s = float(t) / self.t_f
            if not -_TIME_SLACK <= s <= 1.0 + _TIME_SLACK:
                raise ValueError(f"time outside [0, t_f]: t={t!r}, t_f={self.t_f}")
            s = min(max(s, 0.0), 1.0)
            phase = order % 4
            total = 0.0
            for k, (a, w) in enumerate(zip(self.coefficients, self._omegas)):
                if a == 0.0:
                    continue
                x = k * s
                if phase == 0:
                    basis = _cospi_scalar(x)
                elif phase == 1:
                    basis = -_sinpi_scalar(x)
                elif phase == 2:
                    basis = -_cospi_scalar(x)
                else:
                    basis = _sinpi_scalar(x)
                total += a * w ** order * basis
            return total
        s = _scaled_time(t, self.t_f)
        k = np.arange(self.num_terms, dtype=float)
        a = np.asarray(self.coefficients, dtype=float)
        scale = (k * math.pi / self.t_f) ** order if order else np.ones_like(k)
        phase = order % 4
        x = np.multiply.outer(k, s)  # shape (K,) or (K, N)
        if phase == 0:
            basis = _cospi(x)
        elif phase == 1:
            basis = -_sinpi(x)
        elif phase == 2:
            basis = -_cospi(x)
        else:
            basis = _sinpi(x)
        return np.tensordot(a * scale, basis, axes=(0, 0))

    def boundary_derivatives(self, boundary: str, max_order: int) -> np.ndarray:
        """Exact derivatives f^(n)(t_b) for n = 0..max_order at a boundary."""
        k = np.arange(self.num_terms, dtype=float)
        a = np.asarray(self.coefficients, dtype=float)
        sign = np.ones_like(k) if boundary == "start" else (-1.0) ** k
        out = np.zeros(max_order + 1)
        for n in range(0, max_order + 1, 2):
            cos_n = 1.0 if n % 4 == 0 else -1.0
            out[n] = cos_n * np.sum(a * sign * (k * math.pi / self.t_f) ** n)
        return out


@dataclass(frozen=True, eq=False)
class CosineFamily:
    """Affine family of cosine ansatze: the constraints hold for any value of
    the free coefficients.

    coefficients(values) = particular + sum_j values[j] * directions[j]
    """

    t_f: float
    num_terms: int
    free_indices: tuple
    particular: tuple
    directions: tuple  # one coefficient tuple per free index

    def coefficients(self, free_values: Sequence[float]) -> np.ndarray:
        free_values = np.atleast_1d(np.asarray(free_values, dtype=float))
        if free_values.shape != (len(self.free_indices),):
            raise AnsatzError(
                f"expected {len(self.free_indices)} free values, got {free_values.shape}")
        c = np.asarray(self.particular, dtype=float).copy()
        for v, d in zip(free_values, self.directions):
            c += v * np.asarray(d)
        return c

    def ansatz(self, *free_values: float) -> CosineAnsatz:
        return CosineAnsatz(tuple(self.coefficients(free_values)), self.t_f)


def _check_order(order: int):
    if not 0 <= order <= MAX_DERIVATIVE_ORDER:
        raise AnsatzError(
            f"derivative order {order} unsupported (max {MAX_DERIVATIVE_ORDER})")


def evaluate(ansatz, t, order: int = 0):
    """Evaluate a solved ansatz (or its analytic derivative) at time t."""
    return ansatz.evaluate(t, order)


def _infer_t_f(constraints: Iterable[BoundaryConstraint], t_f) -> float:
    if t_f is None:
        times = {c.time for c in constraints if c.time > 0}
        if len(times) != 1:
            raise AnsatzError(
                "cannot infer t_f from constraints; pass t_f explicitly")
        (t_f,) = times
    t_f = float(t_f)
    if not t_f > 0:
        raise AnsatzError("t_f must be positive")
    return t_f


def _boundary_side(c: BoundaryConstraint, t_f: float) -> str:
    if abs(c.time) <= _TIME_SLACK * t_f:
        return "start"
    if abs(c.time - t_f) <= _TIME_SLACK * t_f:
        return "end"
    raise AnsatzError(f"constraint time must be 0 or t_f={t_f:g}: {c.describe()}")


def _named_rows(constraints) -> str:
    return "; ".join(c.describe() for c in constraints)


def _refine_solve(matrix: np.ndarray, rhs: np.ndarray, constraints) -> np.ndarray:
    """Dense solve with one step of iterative refinement and a condition check."""
    cond = np.linalg.cond(matrix)
    logger.debug("constraint matrix condition number %.3e", cond)
    if cond > _COND_WARN:
        logger.warning(
            "ill-conditioned constraint system (cond=%.3e); residuals may "
            "exceed the %.0e target", cond, _RESIDUAL_TOL)
    try:
        x = np.linalg.solve(matrix, rhs)
        x = x + np.linalg.solve(matrix, rhs - matrix @ x)
    except np.linalg.LinAlgError as exc:
        dupes = _duplicate_rows(matrix)
        detail = f" (coincident rows {dupes})" if dupes else ""
        raise AnsatzError(
            f"unsolvable constraints{detail}: {_named_rows(constraints)}") from exc
    return x


def _duplicate_rows(matrix: np.ndarray) -> list:
    dupes = []
    for i in range(len(matrix)):
        for j in range(i + 1, len(matrix)):
            if np.allclose(matrix[i], matrix[j], rtol=1e-12, atol=1e-12):
                dupes.append((i, j))
    return dupes


def solve_polynomial(constraints: Sequence[BoundaryConstraint], degree: int,
                     t_f: float | None = None) -> PolynomialAnsatz:
    """Solve for the degree+1 polynomial coefficients from degree+1 constraints."""
    constraints = list(constraints)
    n = degree + 1
    if len(constraints) != n:
        raise AnsatzError(
            f"degree {degree} needs exactly {n} constraints, got {len(constraints)}")
    t_f = _infer_t_f(constraints, t_f)

    matrix = np.zeros((n, n))
    rhs = np.zeros(n)
    for i, c in enumerate(constraints):
        if c.derivative_order > MAX_DERIVATIVE_ORDER:
            raise AnsatzError(f"constraint order too high: {c.describe()}")
        side = _boundary_side(c, t_f)
        o = c.derivative_order
        for k in range(o, n):
            fall = math.perm(k, o)  # k! / (k-o)!
            matrix[i, k] = fall if side == "end" else (fall if k == o else 0.0)
        # rescale so the unknowns are the s-space coefficients
        rhs[i] = c.value * t_f ** o

    coeffs = _refine_solve(matrix, rhs, constraints)
    ansatz = PolynomialAnsatz(tuple(coeffs), t_f)
    _verify(ansatz, constraints)
    return ansatz


def solve_cosine(constraints: Sequence[BoundaryConstraint], num_terms: int,
                 free_indices: Iterable[int], zero_indices: Iterable[int] = (),
                 t_f: float | None = None) -> CosineFamily:
    """Solve a cosine series for the non-free coefficients, leaving the free
    ones as parameters of an affine family.

    Coefficients listed in zero_indices are pinned to zero; they count as
    constraints, so num_terms - len(free) - len(zero) must equal the number of
    boundary constraints.
    """
    constraints = list(constraints)
    free = tuple(sorted(set(int(i) for i in free_indices)))
    zero = tuple(sorted(set(int(i) for i in zero_indices)))
    if set(free) & set(zero):
        raise AnsatzError("free and zero coefficient indices overlap")
    for idx in free + zero:
        if not 0 <= idx < num_terms:
            raise AnsatzError(f"coefficient index {idx} out of range")
    if num_terms - len(free) - len(zero) != len(constraints):
        raise AnsatzError(
            f"{num_terms} terms with {len(free)} free and {len(zero)} pinned "
            f"coefficients need {num_terms - len(free) - len(zero)} constraints, "
            f"got {len(constraints)}")
    t_f = _infer_t_f(constraints, t_f) if constraints else float(t_f or 1.0)

    solved = [i for i in range(num_terms) if i not in free and i not in zero]
    m = len(solved)
    k = np.arange(num_terms, dtype=float)

    full = np.zeros((len(constraints), num_terms))
    rhs = np.zeros(len(constraints))
    for i, c in enumerate(constraints):
        o = c.derivative_order
        if o % 2:
            raise AnsatzError(
                f"odd-order cosine constraint is identically zero at the "
                f"boundaries: {c.describe()}")
        if o > MAX_DERIVATIVE_ORDER:
            raise AnsatzError(f"constraint order too high: {c.describe()}")
        side = _boundary_side(c, t_f)
        sign = np.ones(num_terms) if side == "start" else (-1.0) ** k
        cos_n = 1.0 if o % 4 == 0 else -1.0
        full[i] = cos_n * sign * (k * math.pi) ** o  # s-space scaling
        rhs[i] = c.value * t_f ** o

    matrix = full[:, solved] if constraints else np.zeros((0, 0))
    coeffs = np.zeros(num_terms)
    if m:
        coeffs[solved] = _refine_solve(matrix, rhs, constraints)

    directions = []
    for f in free:
        d = np.zeros(num_terms)
        d[f] = 1.0
        if m:
            d[solved] = _refine_solve(matrix, -full[:, f], constraints)
        directions.append(tuple(d))

    family = CosineFamily(t_f=t_f, num_terms=num_terms, free_indices=free,
                          particular=tuple(coeffs), directions=tuple(directions))
    _verify(family.ansatz(*([0.0] * len(free))), constraints)
    if free:
        probe = family.ansatz(*([0.7371] * len(free)))
        _verify(probe, constraints)
    return family


def _verify(ansatz, constraints):
    for c in constraints:
        got = ansatz.evaluate(c.time, c.derivative_order)
        scale = max(1.0, abs(c.value))
        if abs(got - c.value) > _RESIDUAL_TOL * scale:
            raise AnsatzError(
                f"constraint residual {abs(got - c.value):.3e} exceeds "
                f"{_RESIDUAL_TOL:g}: {c.describe()}")
