"""Quantum propagation engines and observables.

Two independent engines are provided:

* an exact Gaussian-moment propagator (means follow the classical equations,
  the covariance follows the linearized flow), and
* a grid split-step (Strang) propagator, used as a cross-validation oracle.

Both report the observables through one shared moment-based route, so any
disagreement points at the propagation itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import invariant as inv
from ._integrate import integrate_adaptive
from .errors import SimulationError, StateError
from .model import ControlSchedule, normal_modes, rotation_matrix

#: symplectic form over (q1, q2, p1, p2): [z_a, z_b] = i * SYMPLECTIC_FORM[a, b]
SYMPLECTIC_FORM = np.array([
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    [-1.0, 0.0, 0.0, 0.0],
    [0.0, -1.0, 0.0, 0.0],
])

MOMENTS_RTOL = 1e-11
MOMENTS_ATOL = 1e-12
DEFAULT_SAMPLES = 201
NORM_DRIFT_LIMIT = 1e-8
BOUNDARY_PROBABILITY_LIMIT = 1e-6


@dataclass(frozen=True, eq=False)
class GaussianState:
    """First moments <(q1,q2,p1,p2)> and symmetric covariance of the
    second central moments (hbar = 1 units)."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(4)
        cov = np.asarray(self.cov, dtype=float).reshape(4, 4)
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(cov)):
            raise StateError("non-finite Gaussian moments")
        if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-12):
            raise StateError("covariance must be symmetric")
        cov = 0.5 * (cov + cov.T)
        if np.min(np.linalg.eigvalsh(cov)) < -1e-10:
            raise StateError("covariance must be positive semidefinite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    def symplectic_eigenvalues(self) -> np.ndarray:
        ev = np.linalg.eigvals(SYMPLECTIC_FORM @ self.cov)
        return np.sort(np.abs(ev))[::2]

    def purity_defect(self) -> float:
        """Max deviation of the symplectic eigenvalues from 1/2."""
        return float(np.max(np.abs(self.symplectic_eigenvalues() - 0.5)))


def drift_matrix(omega1_sq: float, omega2_sq: float, gamma: float) -> np.ndarray:
    """Matrix M of the classical flow dz/dt = M z for z = (q1,q2,p1,p2)."""
    return np.array([
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [-omega1_sq, gamma, 0.0, 0.0],
        [gamma, -omega2_sq, 0.0, 0.0],
    ])


class MomentTrajectory:
    """Time series of Gaussian moments, exact for quadratic Hamiltonians.

    Internally stores the classical transition matrices Phi(t), so one
    propagation serves any initial state via means = Phi m0 and
    cov = Phi Sigma0 Phi^T.
    """

    def __init__(self, times, transitions, initial: GaussianState, dense=None):
        self.times = np.asarray(times, dtype=float)
        self.transitions = np.asarray(transitions, dtype=float)
        self.initial = initial
        self._dense = dense

    @cached_property
    def means(self) -> np.ndarray:
        return np.einsum("nij,j->ni", self.transitions, self.initial.mean)

    @cached_property
    def covs(self) -> np.ndarray:
        s0 = self.initial.cov
        return np.einsum("nij,jk,nlk->nil", self.transitions, s0, self.transitions)

    def state(self, index: int) -> GaussianState:
        return GaussianState(self.means[index], self.covs[index])

    def moments(self) -> list:
        return [self.state(i) for i in range(len(self.times))]

    def at(self, t: float) -> GaussianState:
        if self._dense is None:
            raise SimulationError("dense output unavailable for this trajectory")
        phi = self._dense(t).reshape(4, 4)
        return GaussianState(phi @ self.initial.mean, phi @ self.initial.cov @ phi.T)

    def with_initial(self, initial: GaussianState) -> "MomentTrajectory":
        """Reuse the propagated flow for a different initial Gaussian state."""
        return MomentTrajectory(self.times, self.transitions, initial, self._dense)


def propagate_moments(schedule: ControlSchedule, initial: GaussianState,
                      times=None, *, rtol: float = MOMENTS_RTOL,
                      atol: float = MOMENTS_ATOL) -> MomentTrajectory:
    """Propagate a Gaussian state by integrating the classical transition
    matrix dPhi/dt = M(t) Phi."""
    if times is None:
        times = np.linspace(0.0, schedule.t_f, DEFAULT_SAMPLES)

    def rhs(t, y):
        w1s, w2s, g = schedule.values(t)
        phi = y.reshape(4, 4)
        out = np.empty((4, 4))
        out[0] = phi[2]
        out[1] = phi[3]
        out[2] = -w1s * phi[0] + g * phi[1]
        out[3] = g * phi[0] - w2s * phi[1]
        return out.ravel()

    sol = integrate_adaptive(rhs, (0.0, schedule.t_f), np.eye(4).ravel(),
                             t_eval=times, rtol=rtol, atol=atol)
    transitions = sol.y.T.reshape(-1, 4, 4)
    return MomentTrajectory(times, transitions, initial, dense=sol.sol)


# ---------------------------------------------------------------------------
# Initial states


def waveguide_packet_state(schedule: ControlSchedule, q_l0: float, p_l0: float,
                           sigma: float) -> GaussianState:
    """Product of the transversal ground state and a minimum-uncertainty
    longitudinal Gaussian centered at q_l0 with momentum p_l0, expressed in
    lab coordinates."""
    frame = schedule.frame(0.0)
    scale = max(1.0, abs(frame.Omega_t_sq))
    if abs(frame.Omega_l_sq) > 1e-8 * scale:
        raise StateError(
            f"schedule does not start on a waveguide (Omega_l^2 = {frame.Omega_l_sq:.3e})")
    omega_t = frame.Omega_t
    mean_rot = np.array([q_l0, 0.0, p_l0, 0.0])
    cov_rot = np.diag([sigma ** 2, 0.5 / omega_t, 0.25 / sigma ** 2, 0.5 * omega_t])
    r_inv = rotation_matrix(-frame.theta)
    return GaussianState(r_inv @ mean_rot, r_inv @ cov_rot @ r_inv.T)


def product_ground_state(schedule: ControlSchedule) -> GaussianState:
    """Ground state of both uncoupled oscillators at t = 0 (not an eigenstate
    of the full Hamiltonian when gamma(0) != 0)."""
    w1s, w2s, _ = schedule.values(0.0)
    if w1s <= 0 or w2s <= 0:
        raise StateError("uncoupled ground state needs positive initial omega^2")
    w1, w2 = math.sqrt(w1s), math.sqrt(w2s)
    cov = np.diag([0.5 / w1, 0.5 / w2, 0.5 * w1, 0.5 * w2])
    return GaussianState(np.zeros(4), cov)


def coherent_mode1_state(schedule: ControlSchedule, alpha: complex) -> GaussianState:
    """Coherent state of oscillator 1 (vacuum covariance, displaced mean),
    oscillator 2 in its ground state."""
    base = product_ground_state(schedule)
    w1 = math.sqrt(schedule.values(0.0)[0])
    alpha = complex(alpha)
    mean = np.array([math.sqrt(2.0 / w1) * alpha.real, 0.0,
                     math.sqrt(2.0 * w1) * alpha.imag, 0.0])
    return GaussianState(mean, base.cov)


def make_initial_state(kind: str, schedule: ControlSchedule, **params) -> GaussianState:
    if kind == "waveguide_packet":
        return waveguide_packet_state(schedule, params.get("q_l0", 0.0),
                                      params.get("p_l0", 0.0),
                                      params.get("sigma", 2.0 ** -0.5))
    if kind == "uncoupled_product_ground":
        return product_ground_state(schedule)
    if kind == "coherent_mode1":
        return coherent_mode1_state(schedule, params.get("alpha", 1.0))
    raise StateError(f"unknown initial state kind {kind!r}")


# ---------------------------------------------------------------------------
# Grid engine


class GridWavefunction:
    """Complex amplitudes on a uniform 2D position grid.

    x1/x2 are the 1D coordinate arrays; axis 0 of psi runs along q1.
    """

    def __init__(self, psi, x1, x2):
        self.psi = np.asarray(psi, dtype=complex)
        self.x1 = np.asarray(x1, dtype=float)
        self.x2 = np.asarray(x2, dtype=float)
        if self.psi.shape != (self.x1.size, self.x2.size):
            raise ValueError("psi shape does not match the coordinate arrays")

    @property
    def dx1(self) -> float:
        return float(self.x1[1] - self.x1[0])

    @property
    def dx2(self) -> float:
        return float(self.x2[1] - self.x2[0])

    @property
    def cell(self) -> float:
        return self.dx1 * self.dx2

    def norm(self) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * self.cell)

    def normalized(self) -> "GridWavefunction":
        return GridWavefunction(self.psi / math.sqrt(self.norm()), self.x1, self.x2)

    def overlap(self, other: "GridWavefunction") -> complex:
        return complex(np.sum(np.conj(self.psi) * other.psi) * self.cell)

    def boundary_probability(self, width: int = 2) -> float:
        prob = np.abs(self.psi) ** 2 * self.cell
        edge = (prob[:width].sum() + prob[-width:].sum()
                + prob[width:-width, :width].sum() + prob[width:-width, -width:].sum())
        return float(edge)

    @classmethod
    def from_gaussian(cls, state: GaussianState, x1, x2) -> "GridWavefunction":
        """Wavefunction of a pure Gaussian state.

        psi(q) = N exp[-(q-q0)^T (A_R + i A_I)(q-q0)/2 + i p0.(q-q0)] with
        A_R = inv(Sigma_qq)/2 and A_I = -inv(Sigma_qq) Sigma_qp.
        """
        if state.purity_defect() > 1e-6:
            raise StateError("grid initialization requires a pure Gaussian state")
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        s_qq = state.cov[:2, :2]
        s_qp = state.cov[:2, 2:]
        a_r = 0.5 * np.linalg.inv(s_qq)
        a_i = -np.linalg.inv(s_qq) @ s_qp
        a_i = 0.5 * (a_i + a_i.T)
        a = a_r + 1j * a_i
        z1 = x1[:, None] - state.mean[0]
        z2 = x2[None, :] - state.mean[1]
        quad = (a[0, 0] * z1 ** 2 + a[1, 1] * z2 ** 2 + 2.0 * a[0, 1] * z1 * z2)
        phase = state.mean[2] * z1 + state.mean[3] * z2
        psi = np.exp(-0.5 * quad + 1j * phase)
        return cls(psi, x1, x2).normalized()

    def moments(self) -> GaussianState:
        """Means and symmetrized covariance extracted by quadrature (position)
        and FFT (momentum and mixed terms)."""
        prob = np.abs(self.psi) ** 2
        prob /= prob.sum()
        q1 = prob.sum(axis=1) @ self.x1
        q2 = prob.sum(axis=0) @ self.x2
        z1 = self.x1[:, None] - q1
        z2 = self.x2[None, :] - q2
        qq11 = float(np.sum(prob * z1 ** 2))
        qq22 = float(np.sum(prob * z2 ** 2))
        qq12 = float(np.sum(prob * z1 * z2))

        k1 = 2.0 * math.pi * np.fft.fftfreq(self.x1.size, d=self.dx1)
        k2 = 2.0 * math.pi * np.fft.fftfreq(self.x2.size, d=self.dx2)
        psi_k = np.fft.fft2(self.psi)
        pk = np.abs(psi_k) ** 2
        pk /= pk.sum()
        p1 = pk.sum(axis=1) @ k1
        p2 = pk.sum(axis=0) @ k2
        w1 = k1[:, None] - p1
        w2 = k2[None, :] - p2
        pp11 = float(np.sum(pk * w1 ** 2))
        pp22 = float(np.sum(pk * w2 ** 2))
        pp12 = float(np.sum(pk * w1 * w2))

        # Re <q_a p_b> gives the symmetrized mixed moments; the fft pair makes
        # ifft2(k * fft2(psi)) equal to the momentum operator applied to psi
        p1_psi = np.fft.ifft2(k1[:, None] * psi_k)
        p2_psi = np.fft.ifft2(k2[None, :] * psi_k)
        conj_psi = np.conj(self.psi)
        norm = np.sum(np.abs(self.psi) ** 2)
        qp11 = float(np.real(np.sum(conj_psi * self.x1[:, None] * p1_psi)) / norm) - q1 * p1
        qp12 = float(np.real(np.sum(conj_psi * self.x1[:, None] * p2_psi)) / norm) - q1 * p2
        qp21 = float(np.real(np.sum(conj_psi * self.x2[None, :] * p1_psi)) / norm) - q2 * p1
        qp22 = float(np.real(np.sum(conj_psi * self.x2[None, :] * p2_psi)) / norm) - q2 * p2

        mean = np.array([q1, q2, p1, p2])
        cov = np.array([
            [qq11, qq12, qp11, qp12],
            [qq12, qq22, qp21, qp22],
            [qp11, qp21, pp11, pp12],
            [qp12, qp22, pp12, pp22],
        ])
        return GaussianState(mean, cov)


def default_box(schedule: ControlSchedule, initial: GaussianState, *,
                n1: int = 256, n2: int = 256, margin: float = 1.25,
                trajectory: MomentTrajectory | None = None):
    """Box sized so the 6-sigma ellipse plus the classical mean excursion of a
    prior moment run fits with the requested margin."""
    if trajectory is None:
        trajectory = propagate_moments(schedule, initial)
    else:
        trajectory = trajectory.with_initial(initial)
    means, covs = trajectory.means, trajectory.covs
    reach1 = np.max(np.abs(means[:, 0]) + 6.0 * np.sqrt(covs[:, 0, 0]))
    reach2 = np.max(np.abs(means[:, 1]) + 6.0 * np.sqrt(covs[:, 1, 1]))
    l1 = margin * reach1
    l2 = margin * reach2
    x1 = np.linspace(-l1, l1, n1, endpoint=False)
    x2 = np.linspace(-l2, l2, n2, endpoint=False)
    return x1, x2


def default_time_step(schedule: ControlSchedule, max_phase: float = 1e-3) -> float:
    """dt such that max|omega_i^2| dt^2 stays below max_phase."""
    sample = schedule.sample(1001)
    strength = max(1.0, np.max(np.abs(sample["omega1_sq"])),
                   np.max(np.abs(sample["omega2_sq"])),
                   np.max(np.abs(sample["gamma"])))
    return math.sqrt(max_phase / strength)


class GridTrajectory:
    """Samples collected along a split-step run."""

    def __init__(self, times, moments, norms, boundary_probs, overlaps,
                 psi_initial: GridWavefunction, psi_final: GridWavefunction):
        self.times = np.asarray(times, dtype=float)
        self._moments = list(moments)
        self.norms = np.asarray(norms, dtype=float)
        self.boundary_probs = np.asarray(boundary_probs, dtype=float)
        self.overlaps = np.asarray(overlaps, dtype=complex)
        self.psi_initial = psi_initial
        self.psi_final = psi_final
        self.boundary_leak = bool(np.max(self.boundary_probs) > BOUNDARY_PROBABILITY_LIMIT)

    @property
    def means(self) -> np.ndarray:
        return np.array([m.mean for m in self._moments])

    def moments(self) -> list:
        return self._moments

    def state(self, index: int) -> GaussianState:
        return self._moments[index]

    def norm_drift(self) -> float:
        return float(np.max(np.abs(self.norms - self.norms[0])))


def propagate_grid(schedule: ControlSchedule, initial: GridWavefunction, *,
                   n_samples: int = DEFAULT_SAMPLES, max_phase: float = 1e-3,
                   dt: float | None = None) -> GridTrajectory:
    """Second-order Strang splitting with the schedule sampled at half steps.

    The kinetic factor is exact in momentum space and the potential factor in
    position space, so the norm is conserved to roundoff; norm drift beyond
    NORM_DRIFT_LIMIT raises.  Probability in the outermost two rows/columns is
    monitored and flags the run invalid above BOUNDARY_PROBABILITY_LIMIT.
    """
    t_f = schedule.t_f
    n_intervals = n_samples - 1
    if dt is None:
        dt = default_time_step(schedule, max_phase)
    steps_per_sample = max(1, math.ceil((t_f / n_intervals) / dt))
    dt = t_f / (n_intervals * steps_per_sample)

    x1, x2 = initial.x1, initial.x2
    k1 = 2.0 * math.pi * np.fft.fftfreq(x1.size, d=initial.dx1)
    k2 = 2.0 * math.pi * np.fft.fftfreq(x2.size, d=initial.dx2)
    kinetic = np.exp(-0.5j * dt * (k1[:, None] ** 2 + k2[None, :] ** 2))
    sq1 = x1[:, None] ** 2
    sq2 = x2[None, :] ** 2
    cross = x1[:, None] * x2[None, :]

    psi = initial.psi.astype(complex).copy()
    times = [0.0]
    wf = GridWavefunction(psi, x1, x2)
    moments = [wf.moments()]
    norms = [wf.norm()]
    boundary = [wf.boundary_probability()]
    overlaps = [wf.overlap(wf)]
    psi0 = GridWavefunction(psi.copy(), x1, x2)

    step = 0
    for sample in range(n_intervals):
        for _ in range(steps_per_sample):
            t_mid = (step + 0.5) * dt
            w1s, w2s, g = schedule.values(t_mid)
            v = 0.5 * w1s * sq1 + 0.5 * w2s * sq2 - g * cross
            half = np.exp(-0.5j * dt * v)
            psi *= half
            psi = np.fft.ifft2(np.fft.fft2(psi) * kinetic)
            psi *= half
            step += 1
        t_now = step * dt
        wf = GridWavefunction(psi, x1, x2)
        times.append(t_now)
        moments.append(wf.moments())
        norms.append(wf.norm())
        boundary.append(wf.boundary_probability())
        overlaps.append(psi0.overlap(wf))
        if abs(norms[-1] - norms[0]) > NORM_DRIFT_LIMIT:
            raise SimulationError(
                f"grid norm drift {abs(norms[-1] - norms[0]):.3e} at t={t_now:.6g}")

    return GridTrajectory(times, moments, norms, boundary, overlaps,
                          psi0, GridWavefunction(psi, x1, x2))


# ---------------------------------------------------------------------------
# Observables


@dataclass(frozen=True, eq=False)
class ObservableRecord:
    """Scalar observables at one time along a run; entries are None when the
    quantity is undefined there (e.g. H_j for a transiently inverted mode)."""

    t: float
    theta: float
    Omega_l_sq: float
    Omega_t_sq: float
    E_l: float
    E_t: float | None
    H1: float | None
    H2: float | None
    H_total: float
    I_exp: float | None
    G: complex | None
    R_t: float | None
    norm: float | None = None


def observables(state, schedule: ControlSchedule, t: float, reference=None,
                theta: float | None = None, norm: float | None = None) -> ObservableRecord:
    """Observable record for a Gaussian state or a grid wavefunction.

    The rotated-frame energies use theta(t) (pass theta to override with an
    unwrapped profile value); H_j subtracts the zero-point energy so the
    vacuum reads zero, and is reported absent when omega_j^2 <= 0.
    """
    if isinstance(state, GridWavefunction):
        if norm is None:
            norm = state.norm()
        state = state.moments()
    w1s, w2s, g = schedule.values(t)
    frame = normal_modes(w1s, w2s, g)
    if theta is None:
        theta = frame.theta

    r = rotation_matrix(theta)
    mean_rot = r @ state.mean
    cov_rot = r @ state.cov @ r.T
    pl_sq = mean_rot[2] ** 2 + cov_rot[2, 2]
    pt_sq = mean_rot[3] ** 2 + cov_rot[3, 3]
    qt_sq = mean_rot[1] ** 2 + cov_rot[1, 1]
    e_l = 0.5 * pl_sq

    e_t = r_t = None
    if frame.Omega_t_sq > 0:
        omega_t = math.sqrt(frame.Omega_t_sq)
        e_t = 0.5 * pt_sq + 0.5 * frame.Omega_t_sq * qt_sq
        r_t = (e_t - 0.5 * omega_t) / omega_t

    q1_sq = state.mean[0] ** 2 + state.cov[0, 0]
    q2_sq = state.mean[1] ** 2 + state.cov[1, 1]
    p1_sq = state.mean[2] ** 2 + state.cov[2, 2]
    p2_sq = state.mean[3] ** 2 + state.cov[3, 3]
    q1q2 = state.mean[0] * state.mean[1] + state.cov[0, 1]
    h_total = 0.5 * (p1_sq + p2_sq) + 0.5 * w1s * q1_sq + 0.5 * w2s * q2_sq - g * q1q2

    h1 = h2 = None
    if w1s > 0:
        w1 = math.sqrt(w1s)
        h1 = 0.5 * p1_sq + 0.5 * w1s * q1_sq - 0.5 * w1
    if w2s > 0:
        w2 = math.sqrt(w2s)
        h2 = 0.5 * p2_sq + 0.5 * w2s * q2_sq - 0.5 * w2

    i_exp = g_exp = None
    if reference is not None:
        i_exp = inv.quadratic_invariant_expectation(state, reference, t)
        g_exp = inv.linear_invariant_expectation(state, reference, t)

    return ObservableRecord(t=float(t), theta=float(theta),
                            Omega_l_sq=frame.Omega_l_sq, Omega_t_sq=frame.Omega_t_sq,
                            E_l=float(e_l), E_t=e_t, H1=h1, H2=h2,
                            H_total=float(h_total), I_exp=i_exp, G=g_exp,
                            R_t=r_t, norm=norm)


def observable_series(trajectory, schedule: ControlSchedule,
                      reference=None) -> list:
    """Records along a moment or grid trajectory, with the rotation angle
    unwrapped to a continuous branch."""
    times = trajectory.times
    thetas = schedule.theta_profile(times)
    norms = getattr(trajectory, "norms", None)
    states = trajectory.moments()
    out = []
    for i, t in enumerate(times):
        out.append(observables(states[i], schedule, t, reference=reference,
                               theta=float(thetas[i]),
                               norm=None if norms is None else float(norms[i])))
    return out
