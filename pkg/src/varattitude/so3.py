"""Rotation-group primitives on 3x3 numpy arrays.

Rotations are plain ``(3, 3)`` float arrays; vectors are ``(3,)`` arrays.
Nothing here mutates its inputs.
"""

from __future__ import annotations

import numpy as np

from .errors import Degenerate, NotSkewSymmetric

SKEW_TOL = 1e-9
ROTATION_TOL = 1e-9
EXP_SERIES_THRESHOLD = 1e-6
LOG_SMALL_THRESHOLD = 1e-6
LOG_PI_THRESHOLD = np.pi - 1e-6

_I3 = np.eye(3)


def hat(v) -> np.ndarray:
    """Cross-product matrix: ``hat(v) @ u == np.cross(v, u)``."""
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vex(M, tol: float = SKEW_TOL) -> np.ndarray:
    """Inverse of :func:`hat`.

    Raises
    ------
    NotSkewSymmetric
        If the symmetric part of ``M`` has an entry larger than ``tol``.
    """
    M = np.asarray(M, dtype=float)
    sym = 0.5 * (M + M.T)
    if np.max(np.abs(sym)) > tol:
        raise NotSkewSymmetric(
            f"symmetric part has magnitude {np.max(np.abs(sym)):.3e} > {tol:.1e}"
        )
    return 0.5 * np.array([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]])


def exp_so3(v) -> np.ndarray:
    """Rodrigues exponential of the rotation vector ``v``."""
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v)
    V = hat(v)
    if theta < EXP_SERIES_THRESHOLD:
        return _I3 + V + 0.5 * (V @ V)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return _I3 + a * V + b * (V @ V)


def _rotation_angle(R: np.ndarray) -> tuple[float, np.ndarray]:
    # atan2 keeps full precision near 0 and pi, unlike arccos of the trace
    axis2 = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    s = 0.5 * np.linalg.norm(axis2)
    c = 0.5 * (np.trace(R) - 1.0)
    return float(np.arctan2(s, c)), axis2


def log_so3(R) -> np.ndarray:
    """Principal-branch logarithm; the result has norm in ``[0, pi]``."""
    R = np.asarray(R, dtype=float)
    theta, axis2 = _rotation_angle(R)
    if theta < LOG_SMALL_THRESHOLD:
        # theta/sin(theta) = 1 + theta^2/6 + ...
        return 0.5 * (1.0 + theta * theta / 6.0) * axis2
    if theta > LOG_PI_THRESHOLD:
        # antisymmetric part vanishes; read the axis off (R + R^T)/2 - cos I
        B = 0.5 * (R + R.T) - np.cos(theta) * _I3
        j = int(np.argmax(np.diag(B)))
        axis = B[:, j] / np.linalg.norm(B[:, j])
        if axis @ axis2 < 0.0:
            axis = -axis
        return theta * axis
    return theta / (2.0 * np.sin(theta)) * axis2


def principal_angle(Q) -> float:
    """Rotation angle of ``Q`` in ``[0, pi]``."""
    return _rotation_angle(np.asarray(Q, dtype=float))[0]


def project_to_so3(M) -> np.ndarray:
    """Nearest rotation to ``M`` in the Frobenius norm (polar factor)."""
    M = np.asarray(M, dtype=float)
    if np.linalg.det(M) <= 0.0:
        raise Degenerate("cannot project a matrix with non-positive determinant")
    U, _, Vt = np.linalg.svd(M)
    return U @ Vt


def right_jacobian(v) -> np.ndarray:
    """Right Jacobian of the exponential map.

    ``exp(hat(v + d)) ~= exp(hat(v)) @ exp(hat(right_jacobian(v) @ d))``.
    """
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v)
    V = hat(v)
    if theta < EXP_SERIES_THRESHOLD:
        return _I3 - 0.5 * V + (V @ V) / 6.0
    t2 = theta * theta
    return _I3 - (1.0 - np.cos(theta)) / t2 * V + (theta - np.sin(theta)) / (t2 * theta) * (V @ V)


def rotation_defect(R) -> float:
    """``||R^T R - I||_F``."""
    R = np.asarray(R, dtype=float)
    return float(np.linalg.norm(R.T @ R - _I3))


def is_rotation(R, tol: float = ROTATION_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return rotation_defect(R) <= tol and abs(np.linalg.det(R) - 1.0) <= tol
