# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled discrete estimator loop.

Same contract as ``_lgvi_py.run_lgvi`` restricted to linear ``Phi``
(``Phi'`` constant). All 3x3 matrices are row-major ``double[9]``.
"""

import numpy as np

from libc.math cimport cos, sin, sqrt

from ..errors import NewtonDivergence

cdef double EXP_SERIES = 1e-6


cdef inline void hat3(const double* v, double* V) noexcept nogil:
    V[0] = 0.0;   V[1] = -v[2]; V[2] = v[1]
    V[3] = v[2];  V[4] = 0.0;   V[5] = -v[0]
    V[6] = -v[1]; V[7] = v[0];  V[8] = 0.0


cdef inline void matmul3(const double* A, const double* B, double* C) noexcept nogil:
    cdef int i, j
    for i in range(3):
        for j in range(3):
            C[3 * i + j] = A[3 * i] * B[j] + A[3 * i + 1] * B[3 + j] + A[3 * i + 2] * B[6 + j]


cdef inline void matvec3(const double* A, const double* x, double* y) noexcept nogil:
    cdef int i
    for i in range(3):
        y[i] = A[3 * i] * x[0] + A[3 * i + 1] * x[1] + A[3 * i + 2] * x[2]


cdef inline void expm3(const double* v, double* R) noexcept nogil:
    cdef double V[9]
    cdef double VV[9]
    cdef double theta = sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    cdef double a, b
    cdef int i
    hat3(v, V)
    matmul3(V, V, VV)
    if theta < EXP_SERIES:
        a = 1.0
        b = 0.5
    else:
        a = sin(theta) / theta
        b = (1.0 - cos(theta)) / (theta * theta)
    for i in range(9):
        R[i] = a * V[i] + b * VV[i]
    R[0] += 1.0
    R[4] += 1.0
    R[8] += 1.0


cdef inline void rjac3(const double* v, double* J) noexcept nogil:
    cdef double V[9]
    cdef double VV[9]
    cdef double theta = sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    cdef double a, b, t2
    cdef int i
    hat3(v, V)
    matmul3(V, V, VV)
    if theta < EXP_SERIES:
        a = 0.5
        b = 1.0 / 6.0
    else:
        t2 = theta * theta
        a = (1.0 - cos(theta)) / t2
        b = (theta - sin(theta)) / (t2 * theta)
    for i in range(9):
        J[i] = -a * V[i] + b * VV[i]
    J[0] += 1.0
    J[4] += 1.0
    J[8] += 1.0


cdef inline void wahba_grad(const double* L, const double* R, double* g) noexcept nogil:
    # vex(A - A^T) with A = L^T R
    cdef double A[9]
    cdef int i, j
    for i in range(3):
        for j in range(3):
            A[3 * i + j] = L[i] * R[j] + L[3 + i] * R[3 + j] + L[6 + i] * R[6 + j]
    g[0] = A[7] - A[5]
    g[1] = A[2] - A[6]
    g[2] = A[3] - A[1]


cdef inline int solve3(const double* A, const double* b, double* x) noexcept nogil:
    # adjugate inverse; the Newton Jacobian is close to m*I so this is well conditioned
    cdef double inv[9]
    inv[0] = A[4] * A[8] - A[5] * A[7]
    inv[1] = A[2] * A[7] - A[1] * A[8]
    inv[2] = A[1] * A[5] - A[2] * A[4]
    inv[3] = A[5] * A[6] - A[3] * A[8]
    inv[4] = A[0] * A[8] - A[2] * A[6]
    inv[5] = A[2] * A[3] - A[0] * A[5]
    inv[6] = A[3] * A[7] - A[4] * A[6]
    inv[7] = A[1] * A[6] - A[0] * A[7]
    inv[8] = A[0] * A[4] - A[1] * A[3]
    cdef double det = A[0] * inv[0] + A[1] * inv[3] + A[2] * inv[6]
    if det == 0.0:
        return -1
    matvec3(inv, b, x)
    x[0] /= det
    x[1] /= det
    x[2] /= det
    return 0


cdef int newton3(const double* c, double* w, const double* a, double m, double h,
                 double tol, int max_iter, double* res_out) noexcept nogil:
    cdef double phi[3]
    cdef double G[9]
    cdef double C[9]
    cdef double Jr[9]
    cdef double T[9]
    cdef double JF[9]
    cdef double Gc[3]
    cdef double F[3]
    cdef double dw[3]
    cdef double res
    cdef int it, i
    for it in range(max_iter + 1):
        for i in range(3):
            phi[i] = h * (w[i] - a[i])
        expm3(phi, G)
        matvec3(G, c, Gc)
        for i in range(3):
            F[i] = m * w[i] - Gc[i]
        res = sqrt(F[0] * F[0] + F[1] * F[1] + F[2] * F[2])
        res_out[0] = res
        if res <= tol:
            return it
        if it == max_iter:
            break
        hat3(c, C)
        rjac3(phi, Jr)
        matmul3(G, C, T)
        matmul3(T, Jr, JF)
        for i in range(9):
            JF[i] *= h
        JF[0] += m
        JF[4] += m
        JF[8] += m
        if solve3(JF, F, dw) != 0:
            return -1
        for i in range(3):
            w[i] -= dw[i]
    return -1


def run_lgvi(R0, w0, b0, L, offset, Om, double m, D, Pinv, double h,
             double phi_scale=1.0, double tol=1e-12, int max_iter=100):
    """Run the estimator over ``n`` frames; row 0 of each output is the initial state."""
    cdef double[:, :, ::1] Lv = np.ascontiguousarray(L, dtype=np.float64)
    cdef double[:, ::1] Omv = np.ascontiguousarray(Om, dtype=np.float64)
    cdef double[::1] Dv = np.ascontiguousarray(D, dtype=np.float64).ravel()
    cdef double[::1] Pv = np.ascontiguousarray(Pinv, dtype=np.float64).ravel()
    cdef Py_ssize_t n = Lv.shape[0]

    R_np = np.empty((n, 3, 3))
    w_np = np.empty((n, 3))
    b_np = np.empty((n, 3))
    it_np = np.zeros(n, dtype=np.int64)
    R_np[0] = R0
    w_np[0] = w0
    b_np[0] = b0
    cdef double[:, :, ::1] Rv = R_np
    cdef double[:, ::1] wv = w_np
    cdef double[:, ::1] bv = b_np
    cdef long long[::1] itv = it_np

    cdef double MhD[9]
    cdef double v[3]
    cdef double E[9]
    cdef double g[3]
    cdef double Pg[3]
    cdef double cvec[3]
    cdef double a[3]
    cdef double w[3]
    cdef double res = 0.0
    cdef Py_ssize_t i
    cdef int j, iters = 0
    cdef Py_ssize_t failed = -1

    for j in range(9):
        MhD[j] = -h * Dv[j]
    MhD[0] += m
    MhD[4] += m
    MhD[8] += m

    with nogil:
        for i in range(n - 1):
            # attitude: R_{i+1} = R_i exp(h (Om_i - w_i - b_i))
            for j in range(3):
                v[j] = h * (Omv[i, j] - wv[i, j] - bv[i, j])
            expm3(v, E)
            matmul3(&Rv[i, 0, 0], E, &Rv[i + 1, 0, 0])
            # bias: b_{i+1} = b_i + h Phi' P^-1 S_L(R_i)
            wahba_grad(&Lv[i, 0, 0], &Rv[i, 0, 0], g)
            matvec3(&Pv[0], g, Pg)
            for j in range(3):
                bv[i + 1, j] = bv[i, j] + h * phi_scale * Pg[j]
            # implicit rate update with the next frame
            wahba_grad(&Lv[i + 1, 0, 0], &Rv[i + 1, 0, 0], g)
            matvec3(MhD, &wv[i, 0], cvec)
            for j in range(3):
                cvec[j] += h * phi_scale * g[j]
                a[j] = Omv[i + 1, j] - bv[i + 1, j]
                w[j] = wv[i, j]
            iters = newton3(cvec, w, a, m, h, tol, max_iter, &res)
            if iters < 0:
                failed = i + 1
                break
            for j in range(3):
                wv[i + 1, j] = w[j]
            itv[i + 1] = iters

    if failed >= 0:
        raise NewtonDivergence(
            f"Newton solve stalled at residual {res:.3e} after {max_iter} iterations",
            residual=res,
            step=failed,
        )
    return R_np, w_np, b_np, it_np


cdef inline void cross3(const double* a, const double* b, double* c) noexcept nogil:
    c[0] = a[1] * b[2] - a[2] * b[1]
    c[1] = a[2] * b[0] - a[0] * b[2]
    c[2] = a[0] * b[1] - a[1] * b[0]


cdef inline void euler_rate(double t, const double* w, const double* J, const double* Jinv,
                            double amp, double freq, double phase, int axis,
                            double* out) noexcept nogil:
    cdef double Jw[3]
    cdef double rhs[3]
    matvec3(J, w, Jw)
    cross3(Jw, w, rhs)
    rhs[axis] += amp * sin(freq * t + phase)
    matvec3(Jinv, rhs, out)


cdef inline void dexpinv_right(const double* s, const double* v, double* out) noexcept nogil:
    cdef double c1[3]
    cdef double c2[3]
    cdef double theta = sqrt(s[0] * s[0] + s[1] * s[1] + s[2] * s[2])
    cdef double coef
    cdef int i
    cross3(s, v, c1)
    cross3(s, c1, c2)
    if theta < 1e-4:
        coef = 1.0 / 12.0 + theta * theta / 720.0
    else:
        coef = 1.0 / (theta * theta) - (1.0 + cos(theta)) / (2.0 * theta * sin(theta))
    for i in range(3):
        out[i] = v[i] + 0.5 * c1[i] + coef * c2[i]


cdef inline void polar3(double* X) noexcept nogil:
    # Newton polar iteration X <- (X + X^-T) / 2; X is already near-orthogonal
    cdef double C[9]
    cdef double det, d
    cdef int it, i
    for it in range(6):
        C[0] = X[4] * X[8] - X[5] * X[7]
        C[1] = X[5] * X[6] - X[3] * X[8]
        C[2] = X[3] * X[7] - X[4] * X[6]
        C[3] = X[2] * X[7] - X[1] * X[8]
        C[4] = X[0] * X[8] - X[2] * X[6]
        C[5] = X[1] * X[6] - X[0] * X[7]
        C[6] = X[1] * X[5] - X[2] * X[4]
        C[7] = X[2] * X[3] - X[0] * X[5]
        C[8] = X[0] * X[4] - X[1] * X[3]
        # C is the cofactor matrix, X^-T = C / det
        det = X[0] * C[0] + X[1] * C[1] + X[2] * C[2]
        d = 0.0
        for i in range(9):
            C[i] = 0.5 * (X[i] + C[i] / det)
            d = max(d, abs(C[i] - X[i]))
            X[i] = C[i]
        if d < 1e-15:
            break


def run_truth(R0, Om0, J, double t0, double h, Py_ssize_t n_steps,
              double amp, double freq, double phase, int axis):
    """Munthe-Kaas RK4 truth integration with per-step polar re-projection."""
    cdef double[::1] Jv = np.ascontiguousarray(J, dtype=np.float64).ravel()
    cdef double[::1] Jiv = np.ascontiguousarray(np.linalg.inv(J), dtype=np.float64).ravel()
    R_np = np.empty((n_steps + 1, 3, 3))
    w_np = np.empty((n_steps + 1, 3))
    R_np[0] = R0
    w_np[0] = Om0
    cdef double[:, :, ::1] Rv = R_np
    cdef double[:, ::1] wv = w_np
    cdef double k1w[3]
    cdef double k2w[3]
    cdef double k3w[3]
    cdef double k4w[3]
    cdef double k2s[3]
    cdef double k3s[3]
    cdef double k4s[3]
    cdef double O[3]
    cdef double s[3]
    cdef double sig[3]
    cdef double E[9]
    cdef double t
    cdef Py_ssize_t i
    cdef int j
    with nogil:
        for i in range(n_steps):
            t = t0 + i * h
            euler_rate(t, &wv[i, 0], &Jv[0], &Jiv[0], amp, freq, phase, axis, k1w)
            for j in range(3):
                O[j] = wv[i, j] + 0.5 * h * k1w[j]
                s[j] = 0.5 * h * wv[i, j]
            euler_rate(t + 0.5 * h, O, &Jv[0], &Jiv[0], amp, freq, phase, axis, k2w)
            dexpinv_right(s, O, k2s)
            for j in range(3):
                O[j] = wv[i, j] + 0.5 * h * k2w[j]
                s[j] = 0.5 * h * k2s[j]
            euler_rate(t + 0.5 * h, O, &Jv[0], &Jiv[0], amp, freq, phase, axis, k3w)
            dexpinv_right(s, O, k3s)
            for j in range(3):
                O[j] = wv[i, j] + h * k3w[j]
                s[j] = h * k3s[j]
            euler_rate(t + h, O, &Jv[0], &Jiv[0], amp, freq, phase, axis, k4w)
            dexpinv_right(s, O, k4s)
            for j in range(3):
                wv[i + 1, j] = wv[i, j] + h / 6.0 * (k1w[j] + 2.0 * k2w[j] + 2.0 * k3w[j] + k4w[j])
                sig[j] = h / 6.0 * (wv[i, j] + 2.0 * k2s[j] + 2.0 * k3s[j] + k4s[j])
            expm3(sig, E)
            matmul3(&Rv[i, 0, 0], E, &Rv[i + 1, 0, 0])
            polar3(&Rv[i + 1, 0, 0])
    return R_np, w_np
