"""Pure-Python discrete estimator loop (fallback for the compiled kernel).

Frames are passed pre-reduced: for each sample ``L = E W U_m^T``, the
scalar offset with ``U0(R_hat) = offset - tr(L^T R_hat)`` and the gyro
reading ``Omega_m``. Only those three enter the update.
"""

import numpy as np

from ..errors import NewtonDivergence
from ..so3 import exp_so3, hat, right_jacobian

_I3 = np.eye(3)


def wahba_gradient(R_hat, L):
    A = L.T @ R_hat
    return np.array([A[2, 1] - A[1, 2], A[0, 2] - A[2, 0], A[1, 0] - A[0, 1]])


def newton_omega(c, guess, a, m, h, tol, max_iter, fd_jacobian=False):
    """Solve ``m w - exp(-h hat(a - w)) c = 0`` for ``w``.

    Returns ``(w, iterations, residual_norm)``; raises on non-convergence.
    """
    w = np.array(guess, dtype=float)
    for it in range(max_iter + 1):
        phi = h * (w - a)
        G = exp_so3(phi)
        F = m * w - G @ c
        res = float(np.linalg.norm(F))
        if res <= tol:
            return w, it, res
        if it == max_iter:
            break
        if fd_jacobian:
            JF = np.empty((3, 3))
            eps = 1e-7
            for j in range(3):
                dw = np.zeros(3)
                dw[j] = eps
                Fp = m * (w + dw) - exp_so3(h * (w + dw - a)) @ c
                Fm = m * (w - dw) - exp_so3(h * (w - dw - a)) @ c
                JF[:, j] = (Fp - Fm) / (2.0 * eps)
        else:
            JF = m * _I3 + h * (G @ hat(c) @ right_jacobian(phi))
        w = w - np.linalg.solve(JF, F)
    raise NewtonDivergence(
        f"Newton solve stalled at residual {res:.3e} after {max_iter} iterations",
        residual=res,
    )


def lgvi_step(R_hat, omega, beta_hat, L0, off0, Om0, L1, off1, Om1,
              m, D, Pinv, h, phi_prime, tol, max_iter, fd_jacobian=False):
    """Advance ``(R_hat, omega, beta_hat)`` from sample ``i`` to ``i + 1``."""
    R_next = R_hat @ exp_so3(h * (Om0 - omega - beta_hat))
    g0 = phi_prime(off0 - np.trace(L0.T @ R_hat)) * wahba_gradient(R_hat, L0)
    beta_next = beta_hat + h * (Pinv @ g0)
    g1 = phi_prime(off1 - np.trace(L1.T @ R_next)) * wahba_gradient(R_next, L1)
    c = (m * _I3 - h * D) @ omega + h * g1
    w, iters, _ = newton_omega(c, omega, Om1 - beta_next, m, h, tol, max_iter, fd_jacobian)
    return R_next, w, beta_next, iters


def _linear(scale):
    return lambda x: scale


def run_lgvi(R0, w0, b0, L, offset, Om, m, D, Pinv, h, phi_scale=1.0,
             tol=1e-12, max_iter=100, phi_prime=None, fd_jacobian=False):
    """Run the estimator over ``n`` frames; row 0 of each output is the initial state."""
    n = len(offset)
    D = np.asarray(D, dtype=float)
    Pinv = np.asarray(Pinv, dtype=float)
    if phi_prime is None:
        phi_prime = _linear(phi_scale)
    R_out = np.empty((n, 3, 3))
    w_out = np.empty((n, 3))
    b_out = np.empty((n, 3))
    iters = np.zeros(n, dtype=np.int64)
    R_out[0], w_out[0], b_out[0] = R0, w0, b0
    for i in range(n - 1):
        try:
            R_out[i + 1], w_out[i + 1], b_out[i + 1], iters[i + 1] = lgvi_step(
                R_out[i], w_out[i], b_out[i],
                L[i], offset[i], Om[i], L[i + 1], offset[i + 1], Om[i + 1],
                m, D, Pinv, h, phi_prime, tol, max_iter, fd_jacobian,
            )
        except NewtonDivergence as exc:
            exc.step = i + 1
            raise
    return R_out, w_out, b_out, iters
