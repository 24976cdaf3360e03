"""Estimation errors and energy bookkeeping against ground truth.

The true bias is only ever seen here; the estimator never receives it.

Error conventions::

    Q         = R R_hat^T
    beta_err  = beta - beta_hat
    omega_err = Omega - Omega_hat + beta_err

``omega_err`` equals the estimator's internal residual ``omega`` whenever
the gyro is noise-free (``Omega_m = Omega + beta``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TimestampMismatch
from .estimator import EstimatorGains, EstimatorState, EstimatorTrace, potential_U0
from .measurement import MeasurementFrame, MeasurementSeries
from .so3 import principal_angle
from .truth import TruthState, TruthTrajectory

TIME_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ErrorSample:
    t: float
    principal_angle: float
    omega_err: np.ndarray
    beta_err: np.ndarray
    V: float
    U_pot: float
    T_kin: float


def compute_errors(
    truth: TruthState,
    est: EstimatorState,
    beta_true,
    gains: EstimatorGains,
    frame: MeasurementFrame,
) -> ErrorSample:
    if abs(truth.t - frame.t) > TIME_TOL:
        raise TimestampMismatch(f"truth at t={truth.t} but frame at t={frame.t}")
    Q = truth.R @ est.R_hat.T
    beta_err = np.asarray(beta_true, dtype=float) - est.beta_hat
    Omega_hat = est.Omega_hat(frame.Omega_m)
    omega_err = truth.Omega - Omega_hat + beta_err
    U_pot = gains.phi.value(potential_U0(est.R_hat, frame))
    T_kin = 0.5 * gains.m * float(est.omega @ est.omega)
    V = T_kin + U_pot + 0.5 * float(beta_err @ gains.P @ beta_err)
    return ErrorSample(truth.t, principal_angle(Q), omega_err, beta_err, V, U_pot, T_kin)


def principal_angles(Q: np.ndarray) -> np.ndarray:
    """Vectorised principal angle for a stack ``(n, 3, 3)``."""
    ax = np.stack(
        [Q[:, 2, 1] - Q[:, 1, 2], Q[:, 0, 2] - Q[:, 2, 0], Q[:, 1, 0] - Q[:, 0, 1]], axis=1
    )
    s = 0.5 * np.linalg.norm(ax, axis=1)
    c = 0.5 * (np.trace(Q, axis1=1, axis2=2) - 1.0)
    return np.arctan2(s, c)


@dataclass(frozen=True, eq=False)
class ErrorTrace:
    """Column-wise stack of :class:`ErrorSample` over a run."""

    t: np.ndarray
    principal_angle: np.ndarray
    omega_err: np.ndarray
    beta_err: np.ndarray
    V: np.ndarray
    U_pot: np.ndarray
    T_kin: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i) -> ErrorSample:
        return ErrorSample(
            float(self.t[i]),
            float(self.principal_angle[i]),
            self.omega_err[i],
            self.beta_err[i],
            float(self.V[i]),
            float(self.U_pot[i]),
            float(self.T_kin[i]),
        )

    def as_array(self) -> np.ndarray:
        """``(n, 11)`` table in CSV column order."""
        return np.column_stack(
            [self.t, self.principal_angle, self.omega_err, self.beta_err, self.V, self.U_pot, self.T_kin]
        )

    def summary(self, tail_fraction: float = 0.25) -> dict:
        """Terminal and tail statistics of the error traces."""
        n0 = int(len(self) * (1.0 - tail_fraction))
        tail = slice(n0, None)
        w_norm = np.linalg.norm(self.omega_err, axis=1)
        b_norm = np.linalg.norm(self.beta_err, axis=1)
        return {
            "samples": len(self),
            "t_final": float(self.t[-1]),
            "principal_angle_final": float(self.principal_angle[-1]),
            "omega_err_norm_final": float(w_norm[-1]),
            "beta_err_norm_final": float(b_norm[-1]),
            "principal_angle_tail_max": float(self.principal_angle[tail].max()),
            "principal_angle_tail_mean": float(self.principal_angle[tail].mean()),
            "omega_err_norm_tail_max": float(w_norm[tail].max()),
            "beta_err_norm_tail_max": float(b_norm[tail].max()),
            "V_initial": float(self.V[0]),
            "V_final": float(self.V[-1]),
        }


def error_trace(
    truth: TruthTrajectory,
    est: EstimatorTrace,
    series: MeasurementSeries,
    beta_true,
    gains: EstimatorGains,
) -> ErrorTrace:
    """Vectorised :func:`compute_errors` over a whole run."""
    if not (len(truth) == len(est) == len(series)):
        raise TimestampMismatch("truth, estimate and measurement lengths differ")
    if np.max(np.abs(truth.t - series.t)) > TIME_TOL or np.max(np.abs(est.t - series.t)) > TIME_TOL:
        raise TimestampMismatch("truth, estimate and measurement timestamps differ")
    Q = np.einsum("nij,nkj->nik", truth.R, est.R_hat)
    beta_err = np.asarray(beta_true, dtype=float) - est.beta_hat
    Omega_hat = series.Omega_m - est.omega - est.beta_hat
    omega_err = truth.Omega - Omega_hat + beta_err
    U0 = series.wahba_cost(est.R_hat)
    U_pot = np.array([gains.phi.value(u) for u in U0]) if gains.phi.linear_scale is None else gains.phi.linear_scale * U0
    T_kin = 0.5 * gains.m * np.sum(est.omega**2, axis=1)
    bias = 0.5 * np.einsum("ni,ij,nj->n", beta_err, gains.P, beta_err)
    return ErrorTrace(truth.t.copy(), principal_angles(Q), omega_err, beta_err, T_kin + U_pot + bias, U_pot, T_kin)
