"""Inverse engineering of waveguide deflection protocols.

The reference trajectories u1, u2 are degree-5 polynomials pinned at both
ends (values from the waveguide boundary relation u1 w1 = u2 w2, vanishing
first and second derivatives).  Feeding them back through the classical
equations of motion yields the controls: with gamma held constant,

    omega_i(t)^2 = (gamma u_j(t) - ddot(u_i)(t)) / u_i(t),

and with omega2 held constant the coupling is recovered first from the second
oscillator's equation.  The input/output longitudinal momentum scaling is
F = [u2(0)/u2(t_f)] [sin theta(t_f)/sin theta(0)]; longitudinal energies scale
as F^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .ansatz import BoundaryConstraint, PolynomialAnsatz, solve_polynomial
from .errors import DesignError
from .invariant import ReferenceSolution
from .model import (ConstantControl, ControlSchedule, WaveguideBoundary,
                    register_control, table1_targets)

#: protocols whose reference dips below this fraction of its peak are rejected
SINGULARITY_FLOOR = 1e-6
_SCAN_POINTS = 4001
_BOUNDARY_TOL = 1e-10

CLOSURES = ("gamma_const", "omega2_const")


@register_control("inverted_frequency")
@dataclass(frozen=True, eq=False)
class InvertedFrequencyControl:
    """omega_i^2(t) = (gamma(t) u_other(t) - ddot(u_self)(t)) / u_self(t)."""

    u_self: PolynomialAnsatz
    u_other: PolynomialAnsatz
    gamma: object

    def __call__(self, t):
        u = self.u_self.evaluate(t, 0)
        ddu = self.u_self.evaluate(t, 2)
        return (self.gamma(t) * self.u_other.evaluate(t, 0) - ddu) / u

    def to_dict(self):
        return {"kind": self.kind,
                "u_self": list(self.u_self.coefficients),
                "u_other": list(self.u_other.coefficients),
                "t_f": self.u_self.t_f,
                "gamma": self.gamma.to_dict()}

    @classmethod
    def from_dict(cls, data):
        from .model import control_from_dict
        t_f = float(data["t_f"])
        return cls(PolynomialAnsatz(tuple(data["u_self"]), t_f),
                   PolynomialAnsatz(tuple(data["u_other"]), t_f),
                   control_from_dict(data["gamma"]))


@register_control("coupling_from_reference")
@dataclass(frozen=True, eq=False)
class CouplingFromReferenceControl:
    """gamma(t) = (ddot(u2)(t) + omega2^2 u2(t)) / u1(t) for constant omega2."""

    u1: PolynomialAnsatz
    u2: PolynomialAnsatz
    omega2_sq: float

    def __call__(self, t):
        return ((self.u2.evaluate(t, 2) + self.omega2_sq * self.u2.evaluate(t, 0))
                / self.u1.evaluate(t, 0))

    def to_dict(self):
        return {"kind": self.kind, "u1": list(self.u1.coefficients),
                "u2": list(self.u2.coefficients), "t_f": self.u1.t_f,
                "omega2_sq": self.omega2_sq}

    @classmethod
    def from_dict(cls, data):
        t_f = float(data["t_f"])
        return cls(PolynomialAnsatz(tuple(data["u1"]), t_f),
                   PolynomialAnsatz(tuple(data["u2"]), t_f),
                   float(data["omega2_sq"]))


@dataclass(frozen=True)
class DeflectionSpec:
    """What to design: initial guide, target (angle or explicit final guide),
    closure, and the momentum scaling (F or the ratio u2(0)/u2(t_f))."""

    initial: WaveguideBoundary
    t_f: float
    closure: str = "gamma_const"
    delta_theta: float | None = None
    final: WaveguideBoundary | None = None
    scaling_F: float | None = None
    u2_ratio: float | None = None

    def __post_init__(self):
        if self.closure not in CLOSURES:
            raise DesignError(f"unknown closure {self.closure!r}")
        if not self.t_f > 0:
            raise DesignError("t_f must be positive")
        if (self.delta_theta is None) == (self.final is None):
            raise DesignError("specify exactly one of delta_theta or final")
        if self.delta_theta is not None and not 0.0 < self.delta_theta < math.pi / 2:
            raise DesignError("delta_theta must lie in (0, pi/2)")
        if (self.scaling_F is None) == (self.u2_ratio is None):
            raise DesignError("specify exactly one of scaling_F or u2_ratio")
        if self.scaling_F is not None and not self.scaling_F > 0:
            raise DesignError("scaling factor F must be positive")
        if self.u2_ratio is not None and not self.u2_ratio > 0:
            raise DesignError("u2 ratio must be positive")

    def resolve_final(self) -> WaveguideBoundary:
        if self.final is not None:
            return self.final
        theta_f = self.initial.theta + self.delta_theta
        if not theta_f < math.pi / 2:
            raise DesignError("final angle reaches pi/2; guide degenerates")
        tan_f = math.tan(theta_f)
        if self.closure == "gamma_const":
            gamma = self.initial.gamma
            return WaveguideBoundary(math.sqrt(gamma * tan_f), math.sqrt(gamma / tan_f))
        return WaveguideBoundary(self.initial.omega2 * tan_f, self.initial.omega2)

    def resolve_ratio(self) -> float:
        """u2(0)/u2(t_f) realizing the requested momentum scaling."""
        if self.u2_ratio is not None:
            return self.u2_ratio
        final = self.resolve_final()
        return self.scaling_F * math.sin(self.initial.theta) / math.sin(final.theta)


@dataclass(frozen=True, eq=False)
class DeflectionProtocol:
    """A designed deflection: controls, real reference, and diagnostics."""

    spec: DeflectionSpec
    schedule: ControlSchedule
    u1: PolynomialAnsatz
    u2: PolynomialAnsatz
    final: WaveguideBoundary
    F: float
    singularity_report: dict

    @cached_property
    def reference(self) -> ReferenceSolution:
        ts = np.linspace(0.0, self.spec.t_f, 2001)
        u = np.stack([self.u1.evaluate(ts, 0), self.u2.evaluate(ts, 0)], axis=1)
        du = np.stack([self.u1.evaluate(ts, 1), self.u2.evaluate(ts, 1)], axis=1)
        ddu = np.stack([self.u1.evaluate(ts, 2), self.u2.evaluate(ts, 2)], axis=1)

        def evaluator(t):
            return (np.array([self.u1.evaluate(t, 0), self.u2.evaluate(t, 0)],
                             dtype=complex),
                    np.array([self.u1.evaluate(t, 1), self.u2.evaluate(t, 1)],
                             dtype=complex))

        return ReferenceSolution(ts, u, du, self.schedule, evaluator=evaluator,
                                 is_real=True, analytic_ddu=ddu)

    def theta_profile(self, times) -> np.ndarray:
        return self.schedule.theta_profile(times)


def scaling_factor(u2_0: float, u2_tf: float, theta_0: float, theta_tf: float) -> float:
    """Momentum scaling F = [u2(0)/u2(t_f)] [sin theta(t_f)/sin theta(0)];
    the longitudinal energy ratio is F^2."""
    if u2_tf == 0.0 or math.sin(theta_0) == 0.0:
        raise ZeroDivisionError("scaling factor undefined: vanishing u2(t_f) or sin theta(0)")
    return (u2_0 / u2_tf) * (math.sin(theta_tf) / math.sin(theta_0))


def _endpoint_constraints(t_b: float, value: float, ddot: float = 0.0) -> list:
    return [BoundaryConstraint(t_b, 0, value),
            BoundaryConstraint(t_b, 1, 0.0),
            BoundaryConstraint(t_b, 2, ddot)]


def _solve_reference(value_0: float, value_f: float, t_f: float,
                     ddot_0: float = 0.0, ddot_f: float = 0.0) -> PolynomialAnsatz:
    constraints = (_endpoint_constraints(0.0, value_0, ddot_0)
                   + _endpoint_constraints(t_f, value_f, ddot_f))
    return solve_polynomial(constraints, degree=5, t_f=t_f)


def _scan_singularity(ansatz: PolynomialAnsatz, name: str, t_f: float) -> dict:
    ts = np.linspace(0.0, t_f, _SCAN_POINTS)
    vals = np.abs(np.asarray(ansatz.evaluate(ts, 0)))
    peak = float(np.max(vals))
    floor = SINGULARITY_FLOOR * peak
    min_val = float(np.min(vals))
    if min_val < floor:
        t_bad = float(ts[int(np.argmin(vals))])
        raise DesignError(
            f"reference trajectory crosses zero: |{name}| reaches {min_val:.3e} "
            f"near t={t_bad:.4g} (floor {floor:.3e}); try a different scaling "
            f"factor or duration")
    return {"name": name, "min_abs": min_val, "peak_abs": peak, "floor": floor}


def _build_schedule(u1, u2, initial: WaveguideBoundary, closure: str,
                    t_f: float) -> ControlSchedule:
    if closure == "gamma_const":
        gamma = ConstantControl(initial.gamma)
        w1 = InvertedFrequencyControl(u1, u2, gamma)
        w2 = InvertedFrequencyControl(u2, u1, gamma)
        return ControlSchedule(w1, w2, gamma, t_f)
    gamma = CouplingFromReferenceControl(u1, u2, initial.omega2_sq)
    w1 = InvertedFrequencyControl(u1, u2, gamma)
    w2 = ConstantControl(initial.omega2_sq)
    return ControlSchedule(w1, w2, gamma, t_f)


def _check_boundaries(protocol: DeflectionProtocol):
    spec = protocol.spec
    for t_b, guide in ((0.0, spec.initial), (spec.t_f, protocol.final)):
        w1s, w2s, g = protocol.schedule.values(t_b)
        scale = max(1.0, guide.gamma)
        if abs(g - guide.gamma) > _BOUNDARY_TOL * scale:
            raise DesignError(f"waveguide condition violated at t={t_b:g}")
        if abs(w1s - guide.omega1_sq) > _BOUNDARY_TOL * scale or \
           abs(w2s - guide.omega2_sq) > _BOUNDARY_TOL * scale:
            raise DesignError(f"boundary frequencies not reproduced at t={t_b:g}")
        for u, omega in ((protocol.u1, guide.omega1), (protocol.u2, guide.omega2)):
            if abs(u.evaluate(t_b, 1)) > _BOUNDARY_TOL or \
               abs(u.evaluate(t_b, 2)) > _BOUNDARY_TOL:
                raise DesignError(f"reference derivatives nonzero at t={t_b:g}")
        eq9 = (protocol.u1.evaluate(t_b, 0) * guide.omega1
               - protocol.u2.evaluate(t_b, 0) * guide.omega2)
        if abs(eq9) > _BOUNDARY_TOL * scale:
            raise DesignError(f"boundary relation u1 w1 = u2 w2 violated at t={t_b:g}")


def design_deflection(spec: DeflectionSpec) -> DeflectionProtocol:
    """Build the polynomial references from the boundary data and invert the
    classical equations of motion for the controls."""
    initial = spec.initial
    final = spec.resolve_final()
    ratio = spec.resolve_ratio()

    u1_0 = 1.0  # normalization: the boundary relation fixes only ratios
    u2_0 = u1_0 * initial.omega1 / initial.omega2
    u2_f = u2_0 / ratio
    u1_f = u2_f * final.omega2 / final.omega1

    u1 = _solve_reference(u1_0, u1_f, spec.t_f)
    u2 = _solve_reference(u2_0, u2_f, spec.t_f)
    report = {"u1": _scan_singularity(u1, "u1", spec.t_f),
              "u2": _scan_singularity(u2, "u2", spec.t_f)}

    schedule = _build_schedule(u1, u2, initial, spec.closure, spec.t_f)
    achieved_f = scaling_factor(u2_0, u2_f, initial.theta, final.theta)
    protocol = DeflectionProtocol(spec=spec, schedule=schedule, u1=u1, u2=u2,
                                  final=final, F=achieved_f,
                                  singularity_report=report)
    _check_boundaries(protocol)
    return protocol


# ---------------------------------------------------------------------------
# Alternative boundary conditions (invariant forms at the boundary times)


#: kind -> (uses_derivatives, prefactor component/trig, observable label)
_BOUNDARY_FORMS = {
    "longitudinal_momentum": (False, "sin", "p_l^2/2"),
    "transversal_momentum": (False, "cos", "p_t^2/2"),
    "longitudinal_position": (True, "sin", "q_l^2/2"),
    "transversal_position": (True, "cos", "q_t^2/2"),
}

_FORM_TOL = 1e-8


@dataclass(frozen=True)
class BoundaryInvariantForm:
    kind: str
    prefactor: float
    observable: str


def boundary_invariant_form(kind: str, u, udot, theta: float) -> BoundaryInvariantForm:
    """Classify which quadratic observable I(t_b) is proportional to.

    u and udot are the (real) boundary values (u1, u2) and (du1, du2); theta
    is the guide angle there.  The boundary conditions of the requested kind
    are checked to 1e-8 and a violation raises.
    """
    if kind not in _BOUNDARY_FORMS:
        raise ValueError(f"unknown boundary form {kind!r}")
    uses_derivatives, trig, label = _BOUNDARY_FORMS[kind]
    u = np.asarray(u, dtype=float)
    udot = np.asarray(udot, dtype=float)
    fixed, active = (u, udot) if uses_derivatives else (udot, u)
    scale = max(1.0, float(np.max(np.abs(active))))
    if np.max(np.abs(fixed)) > _FORM_TOL * scale:
        which = "u_i(t_b)" if uses_derivatives else "du_i(t_b)"
        raise ValueError(f"boundary conditions for {kind} require {which} = 0")
    c, s = math.cos(theta), math.sin(theta)
    if trig == "sin":
        # frequency-matched pairing: active_1 sin(theta) = active_2 cos(theta)
        residual = active[0] * s - active[1] * c
        denom = s
    else:
        # sign-flipped pairing: active_1 cos(theta) = -active_2 sin(theta)
        residual = active[0] * c + active[1] * s
        denom = c
    if abs(residual) > _FORM_TOL * scale:
        raise ValueError(
            f"boundary conditions for {kind} violated (residual {residual:.3e})")
    return BoundaryInvariantForm(kind, (active[1] / denom) ** 2, label)


def design_boundary_variant(initial: WaveguideBoundary, final: WaveguideBoundary,
                            t_f: float, start_kind: str, end_kind: str,
                            closure: str = "gamma_const",
                            start_scale: float = 1.0,
                            end_scale: float = 1.0) -> DeflectionProtocol:
    """Deflection-style design with independently chosen boundary invariant
    forms at t = 0 and t = t_f.

    Only the momentum forms are designable here: the position forms require
    u_i(t_b) = 0, which makes the pointwise control inversion singular at the
    boundary itself.
    """
    for kind in (start_kind, end_kind):
        if kind not in ("longitudinal_momentum", "transversal_momentum"):
            raise DesignError(
                f"boundary form {kind!r} is not designable by the polynomial "
                "inversion (reference must vanish at the boundary)")
    if closure == "gamma_const" and not math.isclose(initial.gamma, final.gamma,
                                                     rel_tol=1e-12):
        raise DesignError("gamma_const closure needs matching boundary couplings")
    if closure == "omega2_const" and not math.isclose(initial.omega2, final.omega2,
                                                      rel_tol=1e-12):
        raise DesignError("omega2_const closure needs matching omega2 boundaries")

    def endpoint(guide: WaveguideBoundary, kind: str, scale: float):
        th = guide.theta
        if kind == "longitudinal_momentum":
            u = np.array([scale * math.cos(th), scale * math.sin(th)])
        else:
            u = np.array([-scale * math.sin(th), scale * math.cos(th)])
        # second derivatives consistent with the equations of motion
        dd1 = -guide.omega1_sq * u[0] + guide.gamma * u[1]
        dd2 = -guide.omega2_sq * u[1] + guide.gamma * u[0]
        return u, np.array([dd1, dd2])

    u_start, dd_start = endpoint(initial, start_kind, start_scale)
    u_end, dd_end = endpoint(final, end_kind, end_scale)
    u1 = _solve_reference(u_start[0], u_end[0], t_f, dd_start[0], dd_end[0])
    u2 = _solve_reference(u_start[1], u_end[1], t_f, dd_start[1], dd_end[1])

    # the inversion only divides by references it actually uses
    if closure == "gamma_const":
        report = {"u1": _scan_singularity(u1, "u1", t_f),
                  "u2": _scan_singularity(u2, "u2", t_f)}
    else:
        report = {"u1": _scan_singularity(u1, "u1", t_f)}
    schedule = _build_schedule(u1, u2, initial, closure, t_f)
    spec = DeflectionSpec(initial=initial, t_f=t_f, closure=closure,
                          final=final, u2_ratio=1.0)
    return DeflectionProtocol(spec=spec, schedule=schedule, u1=u1, u2=u2,
                              final=final, F=math.nan, singularity_report=report)


# ---------------------------------------------------------------------------
# Uncoupled limit: 1D expansion/compression via the scaling function


@register_control("ermakov_expansion")
@dataclass(frozen=True, eq=False)
class ErmakovFrequencyControl:
    """omega^2(t) = K^2 / rho^4 - ddot(rho)/rho from the scaling function."""

    rho: PolynomialAnsatz
    K: float

    def __call__(self, t):
        r = self.rho.evaluate(t, 0)
        return self.K ** 2 / r ** 4 - self.rho.evaluate(t, 2) / r

    def to_dict(self):
        return {"kind": self.kind, "rho": list(self.rho.coefficients),
                "t_f": self.rho.t_f, "K": self.K}

    @classmethod
    def from_dict(cls, data):
        return cls(PolynomialAnsatz(tuple(data["rho"]), float(data["t_f"])),
                   float(data["K"]))


@dataclass(frozen=True, eq=False)
class Expansion1DProtocol:
    """1D frequency schedule for oscillator 2 (oscillator 1 is a static
    spectator so the pair can run through the 2D engines with gamma = 0)."""

    schedule: ControlSchedule
    rho: PolynomialAnsatz
    K: float
    omega_initial: float
    omega_final: float


def design_1d_expansion(omega_initial: float, omega_final: float, t_f: float,
                        spectator_omega1: float = 1.0) -> Expansion1DProtocol:
    """Shortcut expansion/compression of a single oscillator.

    The scaling function rho interpolates from 1 to (w(0)/w(t_f))^(1/2) with
    vanishing first and second derivatives at both ends, which pins the
    boundary frequencies and leaves no final excitation.
    """
    if not (omega_initial > 0 and omega_final > 0):
        raise DesignError("frequencies must be positive")
    rho_f = math.sqrt(omega_initial / omega_final)
    rho = _solve_reference(1.0, rho_f, t_f)
    _scan_singularity(rho, "rho", t_f)  # cannot fail for monotone data; asserted anyway
    control = ErmakovFrequencyControl(rho, omega_initial)
    schedule = ControlSchedule(ConstantControl(spectator_omega1 ** 2), control,
                               ConstantControl(0.0), t_f)
    return Expansion1DProtocol(schedule=schedule, rho=rho, K=omega_initial,
                               omega_initial=omega_initial, omega_final=omega_final)
