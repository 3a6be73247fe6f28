"""Hamiltonian parameters, rotated-frame transform, and waveguide geometry.

The system is two coupled harmonic oscillators (unit masses, hbar = 1):

    H = p1^2/2 + p2^2/2 + w1(t)^2 q1^2/2 + w2(t)^2 q2^2/2 - gamma(t) q1 q2

The potential is instantaneously diagonalized by rotating (q1, q2) and
(p1, p2) by an angle theta(t); the rotated axes are called longitudinal (l)
and transversal (t).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .ansatz import CosineAnsatz, PolynomialAnsatz

#: registry used to round-trip control serializations (kind tag -> class)
CONTROL_REGISTRY: dict = {}


def register_control(kind: str):
    def wrap(cls):
        CONTROL_REGISTRY[kind] = cls
        cls.kind = kind
        return cls
    return wrap


def control_from_dict(data: dict):
    cls = CONTROL_REGISTRY[data["kind"]]
    return cls.from_dict(data)


@dataclass(frozen=True)
class NormalModeFrame:
    """Instantaneous normal-mode data of the quadratic potential."""

    theta: float
    Omega_l_sq: float
    Omega_t_sq: float
    Lambda: float

    @property
    def Omega_t(self) -> float:
        if self.Omega_t_sq < 0:
            raise ValueError("transversal mode is inverted; Omega_t undefined")
        return math.sqrt(self.Omega_t_sq)


def normal_modes(omega1_sq: float, omega2_sq: float, gamma: float) -> NormalModeFrame:
    """Rotation angle and squared normal-mode frequencies.

    theta = atan2(2*gamma, omega2_sq - omega1_sq) / 2, so theta lies in
    (-pi/2, pi/2]; along a schedule use :meth:`ControlSchedule.theta_profile`
    for the branch-continuous angle.
    """
    diff = omega2_sq - omega1_sq
    lam = math.hypot(2.0 * gamma, diff)
    theta = 0.5 * math.atan2(2.0 * gamma, diff)
    half_sum = 0.5 * (omega1_sq + omega2_sq)
    return NormalModeFrame(theta=theta, Omega_l_sq=half_sum - 0.5 * lam,
                           Omega_t_sq=half_sum + 0.5 * lam, Lambda=lam)


def rotation_matrix(theta: float) -> np.ndarray:
    """Block-diagonal rotation acting on (q1, q2, p1, p2)."""
    c, s = math.cos(theta), math.sin(theta)
    a = np.array([[c, s], [-s, c]])
    out = np.zeros((4, 4))
    out[:2, :2] = a
    out[2:, 2:] = a
    return out


def rotate(theta: float, lab_vector) -> np.ndarray:
    """Map a lab phase-space 4-vector to rotated coordinates (q_l,q_t,p_l,p_t)."""
    return rotation_matrix(theta) @ np.asarray(lab_vector, dtype=float)


def rotate_covariance(theta: float, cov) -> np.ndarray:
    r = rotation_matrix(theta)
    return r @ np.asarray(cov, dtype=float) @ r.T


@dataclass(frozen=True)
class WaveguideBoundary:
    """Boundary-time waveguide: gamma = w1*w2 makes the longitudinal normal
    mode free (Omega_l = 0) so the potential is a harmonic channel."""

    omega1: float
    omega2: float

    def __post_init__(self):
        if not (self.omega1 > 0 and self.omega2 > 0):
            raise ValueError("waveguide frequencies must be positive")

    @property
    def gamma(self) -> float:
        return self.omega1 * self.omega2

    @property
    def theta(self) -> float:
        return math.atan2(self.omega1, self.omega2)

    @property
    def Omega_t(self) -> float:
        return math.hypot(self.omega1, self.omega2)

    @property
    def omega1_sq(self) -> float:
        return self.omega1 ** 2

    @property
    def omega2_sq(self) -> float:
        return self.omega2 ** 2

    def frame(self) -> NormalModeFrame:
        return normal_modes(self.omega1_sq, self.omega2_sq, self.gamma)


def waveguide_boundary(omega1: float, omega2: float) -> WaveguideBoundary:
    return WaveguideBoundary(float(omega1), float(omega2))


def table1_targets(initial: WaveguideBoundary, kind: str) -> WaveguideBoundary:
    """Final waveguide after a deflection that interchanges the frequency roles.

    gamma_const swaps omega1 and omega2 (the transversal frequency is
    preserved); omega2_const keeps omega2 and compresses the guide so that
    Omega_t scales by omega2/omega1.
    """
    if kind == "gamma_const":
        return WaveguideBoundary(initial.omega2, initial.omega1)
    if kind == "omega2_const":
        return WaveguideBoundary(initial.omega2 ** 2 / initial.omega1, initial.omega2)
    raise ValueError(f"unknown deflection closure {kind!r}")


# ---------------------------------------------------------------------------
# Control components


@register_control("constant")
@dataclass(frozen=True)
class ConstantControl:
    value: float

    def __call__(self, t):
        if np.ndim(t) == 0:
            return self.value
        return np.full(np.shape(t), self.value)

    def to_dict(self):
        return {"kind": self.kind, "value": self.value}

    @classmethod
    def from_dict(cls, data):
        return cls(float(data["value"]))


@register_control("ramp_squared")
@dataclass(frozen=True)
class RampSquaredControl:
    """Squared value of a frequency that ramps linearly from f0 to f1."""

    f0: float
    f1: float
    t_f: float

    def __call__(self, t):
        f = self.f0 + (self.f1 - self.f0) * np.asarray(t, dtype=float) / self.t_f
        out = f * f
        return float(out) if np.ndim(out) == 0 else out

    def to_dict(self):
        return {"kind": self.kind, "f0": self.f0, "f1": self.f1, "t_f": self.t_f}

    @classmethod
    def from_dict(cls, data):
        return cls(float(data["f0"]), float(data["f1"]), float(data["t_f"]))


@register_control("ramp_product")
@dataclass(frozen=True)
class RampProductControl:
    """Product of two linearly ramped frequencies (keeps gamma = w1*w2)."""

    a0: float
    a1: float
    b0: float
    b1: float
    t_f: float

    def __call__(self, t):
        s = np.asarray(t, dtype=float) / self.t_f
        out = (self.a0 + (self.a1 - self.a0) * s) * (self.b0 + (self.b1 - self.b0) * s)
        return float(out) if np.ndim(out) == 0 else out

    def to_dict(self):
        return {"kind": self.kind, "a0": self.a0, "a1": self.a1,
                "b0": self.b0, "b1": self.b1, "t_f": self.t_f}

    @classmethod
    def from_dict(cls, data):
        return cls(*(float(data[k]) for k in ("a0", "a1", "b0", "b1", "t_f")))


@register_control("cosine_series")
@dataclass(frozen=True, eq=False)
class CosineControl:
    ansatz: CosineAnsatz

    def __call__(self, t):
        return self.ansatz.evaluate(t, 0)

    def to_dict(self):
        return {"kind": self.kind, "coefficients": list(self.ansatz.coefficients),
                "t_f": self.ansatz.t_f}

    @classmethod
    def from_dict(cls, data):
        return cls(CosineAnsatz(tuple(data["coefficients"]), float(data["t_f"])))


@register_control("tabulated")
class TabulatedControl:
    """Cubic interpolation through sampled control values."""

    def __init__(self, times, values):
        from scipy.interpolate import CubicSpline
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self._spline = CubicSpline(self.times, self.values)

    def __call__(self, t):
        out = self._spline(t)
        return float(out) if np.ndim(out) == 0 else out

    def to_dict(self):
        return {"kind": self.kind, "times": self.times.tolist(),
                "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(data["times"], data["values"])


# ---------------------------------------------------------------------------
# Control schedule


_DEGENERATE_LAMBDA = 1e-14


@dataclass(frozen=True, eq=False)
class ControlSchedule:
    """The three time-dependent controls of the Hamiltonian.

    omega1_sq and omega2_sq may go negative mid-protocol (transiently
    inverted potentials are allowed); gamma is unrestricted in sign.
    """

    omega1_sq: Callable
    omega2_sq: Callable
    gamma: Callable
    t_f: float

    def values(self, t):
        return self.omega1_sq(t), self.omega2_sq(t), self.gamma(t)

    def frame(self, t) -> NormalModeFrame:
        w1s, w2s, g = self.values(t)
        return normal_modes(w1s, w2s, g)

    def theta_profile(self, times) -> np.ndarray:
        """Branch-continuous rotation angle along the schedule.

        Uses unwrapping of 2*theta; at degenerate points (Lambda ~ 0, where
        theta is undefined) the previous sample is carried over.
        """
        times = np.asarray(times, dtype=float)
        w1s = np.asarray(self.omega1_sq(times), dtype=float)
        w2s = np.asarray(self.omega2_sq(times), dtype=float)
        g = np.asarray(self.gamma(times), dtype=float)
        diff = w2s - w1s
        lam = np.hypot(2.0 * g, diff)
        scale = np.maximum(np.abs(w1s) + np.abs(w2s), 1e-300)
        two_theta = np.arctan2(2.0 * g, diff)
        degenerate = lam <= _DEGENERATE_LAMBDA * scale
        for i in range(len(times)):
            if degenerate[i]:
                two_theta[i] = two_theta[i - 1] if i else 0.0
        return 0.5 * np.unwrap(two_theta)

    def sample(self, n: int = 2001) -> dict:
        ts = np.linspace(0.0, self.t_f, n)
        return {
            "t": ts,
            "omega1_sq": np.asarray(self.omega1_sq(ts), dtype=float),
            "omega2_sq": np.asarray(self.omega2_sq(ts), dtype=float),
            "gamma": np.asarray(self.gamma(ts), dtype=float),
        }

    def boundary(self, end: str = "initial") -> WaveguideBoundary:
        t = 0.0 if end == "initial" else self.t_f
        w1s, w2s, _ = self.values(t)
        if w1s <= 0 or w2s <= 0:
            raise ValueError(f"{end} boundary is not a confining potential")
        return WaveguideBoundary(math.sqrt(w1s), math.sqrt(w2s))

    def to_dict(self) -> dict:
        return {
            "t_f": self.t_f,
            "omega1_sq": self.omega1_sq.to_dict(),
            "omega2_sq": self.omega2_sq.to_dict(),
            "gamma": self.gamma.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ControlSchedule":
        return cls(
            omega1_sq=control_from_dict(data["omega1_sq"]),
            omega2_sq=control_from_dict(data["omega2_sq"]),
            gamma=control_from_dict(data["gamma"]),
            t_f=float(data["t_f"]),
        )


def constant_schedule(omega1_sq: float, omega2_sq: float, gamma: float,
                      t_f: float) -> ControlSchedule:
    return ControlSchedule(ConstantControl(omega1_sq), ConstantControl(omega2_sq),
                           ConstantControl(gamma), t_f)


def linear_ramp_schedule(initial: WaveguideBoundary, final: WaveguideBoundary,
                         t_f: float) -> ControlSchedule:
    """Baseline non-shortcut protocol: ramp both frequencies linearly and keep
    gamma = omega1(t)*omega2(t), so the guide remains a perfect waveguide
    (Omega_l = 0) while it rotates."""
    if not t_f > 0:
        raise ValueError("t_f must be positive")
    return ControlSchedule(
        omega1_sq=RampSquaredControl(initial.omega1, final.omega1, t_f),
        omega2_sq=RampSquaredControl(initial.omega2, final.omega2, t_f),
        gamma=RampProductControl(initial.omega1, final.omega1,
                                 initial.omega2, final.omega2, t_f),
        t_f=t_f,
    )
