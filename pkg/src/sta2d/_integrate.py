"""Integrator wrappers shared by the reference and moment propagators."""
from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp

from .errors import SimulationError


def integrate_adaptive(rhs, t_span, y0, t_eval=None, rtol=1e-12, atol=1e-13,
                       dense_output=True):
    """Adaptive 8th-order Runge-Kutta (DOP853) with dense output."""
    sol = solve_ivp(rhs, t_span, np.asarray(y0, dtype=float), method="DOP853",
                    t_eval=t_eval, rtol=rtol, atol=atol,
                    dense_output=dense_output)
    if not sol.success:
        t_fail = sol.t[-1] if sol.t.size else t_span[0]
        raise SimulationError(
            f"integration failed at t={t_fail:.6g}: {sol.message}")
    return sol


def integrate_rk4(rhs, t_span, y0, steps: int):
    """Classic fixed-step RK4; returns (times, states) at the step boundaries."""
    t0, t1 = t_span
    h = (t1 - t0) / steps
    ts = t0 + h * np.arange(steps + 1)
    ts[-1] = t1
    y = np.asarray(y0, dtype=float).copy()
    ys = np.empty((steps + 1, y.size))
    ys[0] = y
    for i in range(steps):
        t = ts[i]
        k1 = np.asarray(rhs(t, y))
        k2 = np.asarray(rhs(t + 0.5 * h, y + 0.5 * h * k1))
        k3 = np.asarray(rhs(t + 0.5 * h, y + 0.5 * h * k2))
        k4 = np.asarray(rhs(t + h, y + h * k3))
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        ys[i + 1] = y
    return ts, ys
