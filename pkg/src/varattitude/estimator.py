"""Variational attitude and gyro-bias estimator.

The filter state is ``(R_hat, omega, beta_hat)`` where ``omega`` is the
angular-velocity measurement residual ``Omega_m - Omega_hat - beta_hat``.
The estimated body rate is derived, never stored::

    Omega_hat = Omega_m - omega - beta_hat

Continuous-time dynamics (:func:`continuous_rhs`)::

    dR_hat/dt    = R_hat hat(Omega_hat)
    m domega/dt  = -m Omega_hat x omega + Phi'(U0) S_L(R_hat) - D omega
    dbeta_hat/dt = Phi'(U0) P^-1 S_L(R_hat)

The discrete estimator (:func:`discrete_step`, :func:`run_discrete`) is the
first-order Lie group variational integrator of these equations; its rate
update is implicit and solved by Newton-Raphson.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from ._kernels._lgvi_py import lgvi_step, newton_omega, wahba_gradient
from .errors import ConfigError
from .measurement import MeasurementFrame, compute_SL
from .so3 import exp_so3, hat, is_rotation

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 100


@dataclass(frozen=True)
class PhiFunction:
    """Shaping function applied to the Wahba cost.

    ``linear_scale`` is set for ``Phi(x) = s x``; the compiled kernel only
    handles that family.
    """

    value: Callable[[float], float]
    derivative: Callable[[float], float]
    name: str = "custom"
    linear_scale: float | None = None

    @classmethod
    def linear(cls, scale: float = 1.0) -> PhiFunction:
        if scale <= 0.0:
            raise ConfigError("phi", "linear scale must be positive")
        return cls(lambda x: scale * x, lambda x: scale, f"linear({scale:g})", scale)

    def check(self, grid=None) -> None:
        if abs(self.value(0.0)) > 1e-15:
            raise ConfigError("phi", "Phi(0) must be 0")
        grid = np.linspace(0.0, 50.0, 101) if grid is None else grid
        if any(not self.derivative(float(x)) > 0.0 for x in grid):
            raise ConfigError("phi", "Phi' must be positive on [0, inf)")


def _check_spd(name: str, A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.shape != (3, 3) or not np.all(np.isfinite(A)):
        raise ConfigError(name, "must be a finite 3x3 matrix")
    if np.max(np.abs(A - A.T)) > 1e-12 * max(1.0, np.max(np.abs(A))):
        raise ConfigError(name, "must be symmetric")
    if np.min(np.linalg.eigvalsh(A)) <= 0.0:
        raise ConfigError(name, "must be positive definite")
    return A


@dataclass(frozen=True, eq=False)
class EstimatorGains:
    """Tuning constants ``(m, D, P, h, Phi)``.

    Construction validates ``m > 0``, ``D`` and ``P`` symmetric positive
    definite and ``m I - h D`` positive definite.
    """

    m: float
    D: np.ndarray
    P: np.ndarray
    h: float
    phi: PhiFunction = field(default_factory=PhiFunction.linear)

    def __post_init__(self):
        if not self.m > 0.0:
            raise ConfigError("gains.m", "must be positive")
        if not self.h >= 0.0:
            raise ConfigError("gains.h", "must be non-negative")
        object.__setattr__(self, "D", _check_spd("gains.D", self.D))
        object.__setattr__(self, "P", _check_spd("gains.P", self.P))
        if np.min(np.linalg.eigvalsh(self.m * np.eye(3) - self.h * self.D)) <= 0.0:
            raise ConfigError("gains.D", "m*I - h*D must be positive definite")
        self.phi.check()
        P = self.P
        if np.count_nonzero(P - np.diag(np.diag(P))) == 0:
            P_inv = np.diag(1.0 / np.diag(P))
        else:
            P_inv = np.linalg.inv(P)
        object.__setattr__(self, "P_inv", P_inv)

    @classmethod
    def reference(cls, h: float = 0.01) -> EstimatorGains:
        return cls(m=5.0, D=np.diag([17.4, 18.85, 20.3]), P=2e3 * np.eye(3), h=h)

    def with_step(self, h: float) -> EstimatorGains:
        return EstimatorGains(self.m, self.D, self.P, h, self.phi)


@dataclass(frozen=True, eq=False)
class EstimatorState:
    R_hat: np.ndarray
    omega: np.ndarray
    beta_hat: np.ndarray

    def Omega_hat(self, Omega_m) -> np.ndarray:
        return np.asarray(Omega_m) - self.omega - self.beta_hat


def initial_state(R_hat0, Omega_hat0, beta_hat0, Omega_m0) -> EstimatorState:
    """Start the filter from an attitude, rate and bias guess.

    The residual is initialised as ``Omega_m0 - Omega_hat0 - beta_hat0``.
    """
    Omega_hat0 = np.asarray(Omega_hat0, dtype=float)
    beta_hat0 = np.asarray(beta_hat0, dtype=float)
    omega0 = np.asarray(Omega_m0, dtype=float) - Omega_hat0 - beta_hat0
    return EstimatorState(np.asarray(R_hat0, dtype=float), omega0, beta_hat0.copy())


def potential_U0(R_hat, frame: MeasurementFrame) -> float:
    """Generalized Wahba cost ``0.5 <E - R_hat U_m, (E - R_hat U_m) W>``."""
    A = frame.E - np.asarray(R_hat) @ frame.U_m
    return 0.5 * float(np.sum(A * (A @ frame.W)))


def continuous_rhs(state: EstimatorState, frame: MeasurementFrame, gains: EstimatorGains):
    """Time derivatives ``(dR_hat/dt, domega/dt, dbeta_hat/dt)``."""
    Omega_hat = state.Omega_hat(frame.Omega_m)
    dphi = gains.phi.derivative(potential_U0(state.R_hat, frame))
    S = dphi * compute_SL(state.R_hat, frame.L)
    R_dot = state.R_hat @ hat(Omega_hat)
    omega_dot = (-gains.m * np.cross(Omega_hat, state.omega) + S - gains.D @ state.omega) / gains.m
    beta_dot = gains.P_inv @ S
    return R_dot, omega_dot, beta_dot


def _dexp_inv_right(sigma, v):
    theta = np.linalg.norm(sigma)
    c1 = np.cross(sigma, v)
    if theta < 1e-4:
        coef = 1.0 / 12.0 + theta * theta / 720.0
    else:
        coef = 1.0 / theta**2 - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))
    return v + 0.5 * c1 + coef * np.cross(sigma, c1)


def continuous_step(
    state: EstimatorState,
    t: float,
    frame_at: Callable[[float], MeasurementFrame],
    gains: EstimatorGains,
    h: float,
) -> EstimatorState:
    """One RK4 step of the continuous filter.

    ``frame_at(t)`` must give measurements at arbitrary times. The attitude
    is advanced in exponential coordinates (Munthe-Kaas RK4), so it stays on
    SO(3) to rounding.
    """
    R0 = state.R_hat

    def stage(sigma, omega, beta, tau):
        s = EstimatorState(R0 @ exp_so3(sigma), omega, beta)
        frame = frame_at(tau)
        _, w_dot, b_dot = continuous_rhs(s, frame, gains)
        return _dexp_inv_right(sigma, s.Omega_hat(frame.Omega_m)), w_dot, b_dot

    z = np.zeros(3)
    k1 = stage(z, state.omega, state.beta_hat, t)
    k2 = stage(0.5 * h * k1[0], state.omega + 0.5 * h * k1[1], state.beta_hat + 0.5 * h * k1[2], t + 0.5 * h)
    k3 = stage(0.5 * h * k2[0], state.omega + 0.5 * h * k2[1], state.beta_hat + 0.5 * h * k2[2], t + 0.5 * h)
    k4 = stage(h * k3[0], state.omega + h * k3[1], state.beta_hat + h * k3[2], t + h)
    inc = [h / 6.0 * (a + 2.0 * b + 2.0 * c + d) for a, b, c, d in zip(k1, k2, k3, k4)]
    return EstimatorState(R0 @ exp_so3(inc[0]), state.omega + inc[1], state.beta_hat + inc[2])


def newton_solve_omega(
    c,
    omega_guess,
    Omega_m_next,
    beta_hat_next,
    gains: EstimatorGains,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
    fd_jacobian: bool = False,
    full_output: bool = False,
):
    """Solve ``m w = exp(-h hat(Omega_hat(w))) c`` with ``Omega_hat(w) = Omega_m - w - beta_hat``.

    Newton-Raphson from ``omega_guess`` with the analytic Jacobian
    ``m I + h exp(hat(phi)) hat(c) Jr(phi)``, ``phi = h (w - Omega_m + beta_hat)``.
    ``fd_jacobian=True`` swaps in a central-difference Jacobian.

    Returns ``w``, or ``(w, iterations, residual)`` when ``full_output``.

    Raises
    ------
    NewtonDivergence
        Residual norm still above ``tol`` after ``max_iter`` iterations.
    """
    a = np.asarray(Omega_m_next, dtype=float) - np.asarray(beta_hat_next, dtype=float)
    w, it, res = newton_omega(
        np.asarray(c, dtype=float), omega_guess, a, gains.m, gains.h, tol, max_iter, fd_jacobian
    )
    return (w, it, res) if full_output else w


def discrete_step(
    state: EstimatorState,
    frame_i: MeasurementFrame,
    frame_ip1: MeasurementFrame,
    gains: EstimatorGains,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
    fd_jacobian: bool = False,
) -> EstimatorState:
    """Advance the estimator one sample using frames ``i`` and ``i + 1``."""
    R, w, b, _ = lgvi_step(
        state.R_hat, state.omega, state.beta_hat,
        frame_i.L, frame_i.offset, frame_i.Omega_m,
        frame_ip1.L, frame_ip1.offset, frame_ip1.Omega_m,
        gains.m, gains.D, gains.P_inv, gains.h, gains.phi.derivative,
        tol, max_iter, fd_jacobian,
    )
    return EstimatorState(R, w, b)


@dataclass(frozen=True, eq=False)
class FrameBatch:
    """Per-sample reductions of a frame sequence, as consumed by the loop kernels."""

    t: np.ndarray
    L: np.ndarray
    offset: np.ndarray
    Omega_m: np.ndarray

    @classmethod
    def from_frames(cls, frames) -> FrameBatch:
        return cls(
            np.array([f.t for f in frames]),
            np.array([f.L for f in frames]),
            np.array([f.offset for f in frames]),
            np.array([f.Omega_m for f in frames]),
        )

    def __len__(self) -> int:
        return len(self.t)


@dataclass(frozen=True, eq=False)
class EstimatorTrace:
    t: np.ndarray
    R_hat: np.ndarray
    omega: np.ndarray
    beta_hat: np.ndarray
    newton_iterations: np.ndarray
    backend: str

    def __len__(self) -> int:
        return len(self.t)

    def state(self, i: int) -> EstimatorState:
        return EstimatorState(self.R_hat[i], self.omega[i], self.beta_hat[i])


def run_discrete(
    state0: EstimatorState,
    batch: FrameBatch,
    gains: EstimatorGains,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
    backend: str = "auto",
) -> EstimatorTrace:
    """Run the discrete estimator over every sample in ``batch``.

    ``backend`` is ``"auto"``, ``"cython"`` or ``"python"``. The compiled
    loop needs a linear ``Phi``; anything else runs in Python.
    """
    if not is_rotation(state0.R_hat):
        raise ConfigError("R_hat0", "initial attitude estimate is not a rotation")
    linear = gains.phi.linear_scale is not None
    if backend == "auto":
        backend = "cython" if (_kernels.HAVE_COMPILED and linear) else "python"
    if backend == "cython":
        if not _kernels.HAVE_COMPILED:
            raise RuntimeError("compiled kernel is not available")
        if not linear:
            raise ValueError("compiled kernel supports only linear Phi")
        out = _kernels.compiled_run_lgvi(
            state0.R_hat, state0.omega, state0.beta_hat,
            batch.L, batch.offset, batch.Omega_m,
            gains.m, gains.D, gains.P_inv, gains.h, gains.phi.linear_scale, tol, max_iter,
        )
    elif backend == "python":
        out = _kernels.python_run_lgvi(
            state0.R_hat, state0.omega, state0.beta_hat,
            batch.L, batch.offset, batch.Omega_m,
            gains.m, gains.D, gains.P_inv, gains.h,
            tol=tol, max_iter=max_iter, phi_prime=gains.phi.derivative,
        )
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return EstimatorTrace(batch.t, *out, backend=backend)


def lyapunov_V(state: EstimatorState, frame: MeasurementFrame, gains: EstimatorGains, beta_true) -> float:
    """Total energy from measurements: kinetic residual + Phi(Wahba cost) + bias term."""
    bt = np.asarray(beta_true) - state.beta_hat
    return (
        0.5 * gains.m * float(state.omega @ state.omega)
        + gains.phi.value(potential_U0(state.R_hat, frame))
        + 0.5 * float(bt @ gains.P @ bt)
    )


def lyapunov_V_error(Q, omega, beta_tilde, K, gains: EstimatorGains) -> float:
    """Same energy written in the error coordinates ``(Q, omega, beta_tilde)``."""
    omega = np.asarray(omega)
    beta_tilde = np.asarray(beta_tilde)
    return (
        0.5 * gains.m * float(omega @ omega)
        + gains.phi.value(float(np.sum((np.eye(3) - Q) * K)))
        + 0.5 * float(beta_tilde @ gains.P @ beta_tilde)
    )


__all__ = [
    "EstimatorGains",
    "EstimatorState",
    "EstimatorTrace",
    "FrameBatch",
    "PhiFunction",
    "continuous_rhs",
    "continuous_step",
    "discrete_step",
    "initial_state",
    "lyapunov_V",
    "lyapunov_V_error",
    "newton_solve_omega",
    "potential_U0",
    "run_discrete",
    "wahba_gradient",
]
