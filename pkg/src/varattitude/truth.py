"""Ground-truth rigid-body attitude trajectories.

Euler's equations ``J dOmega/dt = (J Omega) x Omega + tau(t)`` drive the body
rate; attitude follows ``dR/dt = R hat(Omega)``. The integrator is a
Munthe-Kaas RK4 (classical RK4 in the exponential coordinates around the
current attitude), so both ``R`` and ``Omega`` are fourth order accurate,
and ``R`` is re-projected onto SO(3) after every step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError
from .so3 import exp_so3, hat, project_to_so3

REF_INERTIA = np.diag([2.56, 3.01, 2.98])


@dataclass(frozen=True, eq=False)
class TruthState:
    t: float
    R: np.ndarray
    Omega: np.ndarray


@dataclass(frozen=True)
class TorqueProfile:
    """Body-frame torque ``amplitude * sin(frequency t + phase)`` on one axis."""

    amplitude: float = 0.0
    frequency: float = 0.0
    phase: float = 0.0
    axis: int = 1

    def __post_init__(self):
        if not all(np.isfinite([self.amplitude, self.frequency, self.phase])):
            raise ConfigError("torque", "parameters must be finite")
        if self.axis not in (0, 1, 2):
            raise ConfigError("torque.axis", "must be 0, 1 or 2")

    @classmethod
    def reference(cls) -> TorqueProfile:
        return cls(amplitude=0.028, frequency=2.7, phase=-np.pi / 7.0, axis=1)

    def __call__(self, t: float) -> np.ndarray:
        tau = np.zeros(3)
        tau[self.axis] = self.amplitude * np.sin(self.frequency * t + self.phase)
        return tau


def check_inertia(J) -> np.ndarray:
    J = np.asarray(J, dtype=float)
    if J.shape != (3, 3) or not np.all(np.isfinite(J)):
        raise ConfigError("inertia", "must be a finite 3x3 matrix")
    if np.max(np.abs(J - J.T)) > 1e-12:
        raise ConfigError("inertia", "must be symmetric")
    if np.min(np.linalg.eigvalsh(J)) <= 0.0:
        raise ConfigError("inertia", "must be positive definite")
    return J


def _omega_dot(t, Omega, J, J_inv, tau):
    return J_inv @ (np.cross(J @ Omega, Omega) + tau(t))


def dynamics_rhs(s: TruthState, J, tau: TorqueProfile):
    """Return ``(dR/dt, dOmega/dt)`` at state ``s``."""
    J = np.asarray(J, dtype=float)
    return s.R @ hat(s.Omega), _omega_dot(s.t, s.Omega, J, np.linalg.inv(J), tau)


def _dexp_inv_right(sigma, v):
    # inverse right Jacobian of exp applied to v
    theta = np.linalg.norm(sigma)
    c1 = np.cross(sigma, v)
    c2 = np.cross(sigma, c1)
    if theta < 1e-4:
        coef = 1.0 / 12.0 + theta * theta / 720.0
    else:
        coef = 1.0 / theta**2 - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))
    return v + 0.5 * c1 + coef * c2


def rkmk4_step(t, R, Omega, h, J, J_inv, tau):
    """One RK4 step of the coupled attitude/rate system."""
    k1w = _omega_dot(t, Omega, J, J_inv, tau)
    k1s = Omega

    O2 = Omega + 0.5 * h * k1w
    s2 = 0.5 * h * k1s
    k2w = _omega_dot(t + 0.5 * h, O2, J, J_inv, tau)
    k2s = _dexp_inv_right(s2, O2)

    O3 = Omega + 0.5 * h * k2w
    s3 = 0.5 * h * k2s
    k3w = _omega_dot(t + 0.5 * h, O3, J, J_inv, tau)
    k3s = _dexp_inv_right(s3, O3)

    O4 = Omega + h * k3w
    s4 = h * k3s
    k4w = _omega_dot(t + h, O4, J, J_inv, tau)
    k4s = _dexp_inv_right(s4, O4)

    Omega_next = Omega + h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
    sigma = h / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s)
    return R @ exp_so3(sigma), Omega_next


class TruthTrajectory:
    """Samples of a truth run at ``t = t0 + i h``; indexing yields :class:`TruthState`."""

    def __init__(self, t: np.ndarray, R: np.ndarray, Omega: np.ndarray):
        self.t = t
        self.R = R
        self.Omega = Omega

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i) -> TruthState:
        return TruthState(float(self.t[i]), self.R[i], self.Omega[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def n_steps(h: float, T: float) -> int:
    n = int(round(T / h))
    if n < 1 or abs(n * h - T) > 1e-9 * max(1.0, T):
        raise ConfigError("duration", f"T={T} is not an integer multiple of h={h}")
    return n


def propagate_truth(
    s0: TruthState,
    J,
    tau: TorqueProfile,
    h: float,
    T: float,
    backend: str = "auto",
    attitude_update: str = "rkmk4",
) -> TruthTrajectory:
    """Integrate from ``s0`` for ``T`` seconds with step ``h``.

    ``backend`` picks the compiled loop (``"cython"``), the numpy loop
    (``"python"``) or whichever is available (``"auto"``).

    ``attitude_update="lie_euler"`` rebuilds the attitude samples as
    ``R[i+1] = R[i] exp(h Omega[i])`` from the RK4 rates. That is the
    estimator's own sampled kinematics, under which a perfect estimate is
    an exact fixed point; use it only for such consistency checks.
    """
    traj = _propagate(s0, J, tau, h, T, backend)
    if attitude_update == "rkmk4":
        return traj
    if attitude_update != "lie_euler":
        raise ConfigError("truth.attitude_update", f"unknown update {attitude_update!r}")
    R = traj.R
    for i in range(len(traj) - 1):
        R[i + 1] = R[i] @ exp_so3(h * traj.Omega[i])
    return traj


def _propagate(s0, J, tau, h, T, backend):
    if not h > 0.0:
        raise ConfigError("h", "step must be positive")
    if T < h:
        raise ConfigError("duration", "must be at least one step")
    J = check_inertia(J)
    J_inv = np.linalg.inv(J)
    n = n_steps(h, T)

    t = s0.t + h * np.arange(n + 1)
    if backend == "auto":
        backend = "cython" if _kernels.HAVE_COMPILED else "python"
    if backend == "cython":
        if not _kernels.HAVE_COMPILED:
            raise RuntimeError("compiled kernel is not available")
        R, Om = _kernels.compiled_run_truth(
            project_to_so3(s0.R), np.asarray(s0.Omega, dtype=float), J, float(s0.t), h, n,
            tau.amplitude, tau.frequency, tau.phase, tau.axis,
        )
        return TruthTrajectory(t, R, Om)
    if backend != "python":
        raise ValueError(f"unknown backend {backend!r}")

    R = np.empty((n + 1, 3, 3))
    Om = np.empty((n + 1, 3))
    R[0] = project_to_so3(s0.R)
    Om[0] = s0.Omega
    for i in range(n):
        Rn, Om[i + 1] = rkmk4_step(t[i], R[i], Om[i], h, J, J_inv, tau)
        R[i + 1] = project_to_so3(Rn)
    return TruthTrajectory(t, R, Om)


def kinetic_energy(Omega, J) -> np.ndarray:
    """``0.5 Omega^T J Omega``; broadcasts over leading axes."""
    Omega = np.asarray(Omega)
    return 0.5 * np.einsum("...i,ij,...j->...", Omega, np.asarray(J), Omega)
