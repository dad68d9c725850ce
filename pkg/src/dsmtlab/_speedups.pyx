# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled window kernel: advances any optimizer variant many steps per call.

Every update expression mirrors ``optimizers._advance`` exactly, including
the operation grouping that keeps the single-agent variant reductions exact
(augmented mixing as ``Wt + eta*(Wt - bottom)``, tracker updates as
``(y - z_old) + z_new``).  The Python window runner stays the reference
implementation; parity tests compare the two backends.

Sample indices are pre-drawn per agent for the whole window.  Each agent's
generator produces the same sequence whether consumed stepwise or in one
batched call, so trajectories do not depend on the window size.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, isfinite
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

VARIANT_CODES = {"DSMT": 0, "DSMT_noLCA": 1, "DSGT": 2, "DSGD": 3,
                 "ED": 4, "DSGT_HB": 5, "CSGD": 6, "CSGDM": 7}
KIND_CODES = {"quadratic": (0, 0), "logistic_l2": (1, 1),
              "logistic_nonconvex": (1, 2)}


cdef inline double _expit_neg(double t) noexcept nogil:
    # expit(-t), stable for large |t|
    cdef double e
    if t >= 0.0:
        e = exp(-t)
        return e / (1.0 + e)
    return 1.0 / (1.0 + exp(t))


cdef void _mix(double[:, ::1] W, double[:, ::1] A, double[:, ::1] out) noexcept nogil:
    # out = W @ A; row-major product via the column-major duality
    # C^T = A^T W^T with the buffers reinterpreted as their transposes.
    cdef int n = <int> A.shape[0]
    cdef int p = <int> A.shape[1]
    cdef char trans = b'N'
    cdef double one = 1.0, zero = 0.0
    dgemm(&trans, &trans, &p, &n, &n, &one, &A[0, 0], &p, &W[0, 0], &n,
          &zero, &out[0, 0], &p)


cdef bint _all_finite(double[:, ::1] A) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(A.shape[0]):
        for j in range(A.shape[1]):
            if not isfinite(A[i, j]):
                return 0
    return 1


cdef void _gradients(int kind, int reg, double reg_w,
                     double[:, ::1] M, double[::1] aux, double[::1] wt,
                     long long[::1] ptr, double[:, ::1] X,
                     long long[:, :, ::1] idx, Py_ssize_t s, Py_ssize_t B,
                     double[:, ::1] G) noexcept nogil:
    # Row i of G gets agent i's batch-mean data gradient at X[i] plus the
    # regularizer gradient.  B == 0 means the full shard (deterministic).
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t p = X.shape[1]
    cdef Py_ssize_t i, b, j, q, lo, hi
    cdef double t, coef, cnt, xq, d
    cdef bint weighted = wt.shape[0] > 0
    for i in range(n):
        for q in range(p):
            G[i, q] = 0.0
        if B > 0:
            lo = ptr[i]
            for b in range(B):
                j = lo + idx[i, s, b]
                t = 0.0
                for q in range(p):
                    t += M[j, q] * X[i, q]
                if kind == 0:
                    coef = t - aux[j]
                else:
                    coef = -_expit_neg(t)
                if weighted:
                    for q in range(p):
                        G[i, q] += (coef * M[j, q]) * wt[j]
                else:
                    for q in range(p):
                        G[i, q] += coef * M[j, q]
            cnt = <double> B
        else:
            lo = ptr[i]
            hi = ptr[i + 1]
            for j in range(lo, hi):
                t = 0.0
                for q in range(p):
                    t += M[j, q] * X[i, q]
                if kind == 0:
                    coef = t - aux[j]
                else:
                    coef = -_expit_neg(t)
                if weighted:
                    for q in range(p):
                        G[i, q] += (coef * M[j, q]) * wt[j]
                else:
                    for q in range(p):
                        G[i, q] += coef * M[j, q]
            cnt = <double> (hi - lo)
        for q in range(p):
            G[i, q] /= cnt
        if reg == 1:
            for q in range(p):
                G[i, q] += reg_w * X[i, q]
        elif reg == 2:
            for q in range(p):
                xq = X[i, q]
                d = 1.0 + xq * xq
                G[i, q] += (reg_w * xq) / (d * d)


cdef void _means(double[:, ::1] A, double[:, ::1] out, Py_ssize_t s) noexcept nogil:
    cdef Py_ssize_t n = A.shape[0], p = A.shape[1]
    cdef Py_ssize_t i, q
    cdef double inv = 1.0 / <double> n
    for q in range(p):
        out[s, q] = 0.0
    for i in range(n):
        for q in range(p):
            out[s, q] += A[i, q]
    for q in range(p):
        out[s, q] *= inv


def run_window(int variant, long long k0,
               double[:, ::1] x, double[:, ::1] x_l,
               double[:, ::1] y, double[:, ::1] y_l,
               double[:, ::1] z, double[:, ::1] z_prev,
               double[:, ::1] x_prev, double[:, ::1] g_last,
               double[:, ::1] g_prev,
               double[:, ::1] W, double eta, double alpha, double beta,
               double hb_beta,
               int kind, int reg, double reg_w,
               double[:, ::1] M, double[::1] aux, double[::1] wt,
               long long[::1] ptr,
               long long[:, :, ::1] idx, Py_ssize_t B,
               double[:, ::1] xbar, double[:, ::1] gbar):
    """Advance ``xbar.shape[0]`` steps in place.

    State arrays are mutated; ``xbar``/``gbar`` receive one row per step.
    Returns 0 on success, else the 1-based step index (within this window)
    at which an iterate went non-finite.
    """
    cdef Py_ssize_t steps = xbar.shape[0]
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t p = x.shape[1]
    cdef Py_ssize_t s, i, q
    cdef Py_ssize_t bad = 0
    cdef double omb = 1.0 - beta
    ah_buf = np.empty((n, p))
    bh_buf = np.empty((n, p))
    mx_buf = np.empty((n, p))
    g_buf = np.empty((n, p))
    cdef double[:, ::1] ah = ah_buf
    cdef double[:, ::1] bh = bh_buf
    cdef double[:, ::1] mx = mx_buf
    cdef double[:, ::1] g = g_buf

    with nogil:
        for s in range(steps):
            if variant == 0:  # DSMT
                for i in range(n):
                    for q in range(p):
                        ah[i, q] = x[i, q] - alpha * y[i, q]
                        bh[i, q] = x_l[i, q] - alpha * y[i, q]
                _mix(W, ah, mx)
                for i in range(n):
                    for q in range(p):
                        x[i, q] = mx[i, q] + eta * (mx[i, q] - bh[i, q])
                        x_l[i, q] = ah[i, q]
                if not _all_finite(x):
                    bad = s + 1
                    break
                _gradients(kind, reg, reg_w, M, aux, wt, ptr, x, idx, s, B, g)
                for i in range(n):
                    for q in range(p):
                        z_prev[i, q] = z[i, q]
                        z[i, q] = beta * z_prev[i, q] + omb * g[i, q]
                        ah[i, q] = (y[i, q] - z_prev[i, q]) + z[i, q]
                        bh[i, q] = (y_l[i, q] - z_prev[i, q]) + z[i, q]
                _mix(W, ah, mx)
                for i in range(n):
                    for q in range(p):
                        y[i, q] = mx[i, q] + eta * (mx[i, q] - bh[i, q])
                        y_l[i, q] = ah[i, q]
                if not _all_finite(y):
                    bad = s + 1
                    break
            elif variant == 1:  # DSMT_noLCA
                for i in range(n):
                    for q in range(p):
                        ah[i, q] = x[i, q] - alpha * y[i, q]
                _mix(W, ah, x)
                if not _all_finite(x):
                    bad = s + 1
                    break
                _gradients(kind, reg, reg_w, M, aux, wt, ptr, x, idx, s, B, g)
                for i in range(n):
                    for q in range(p):
                        z_prev[i, q] = z[i, q]
                        z[i, q] = beta * z_prev[i, q] + omb * g[i, q]
                        ah[i, q] = (y[i, q] - z_prev[i, q]) + z[i, q]
                _mix(W, ah, y)
                if not _all_finite(y):
                    bad = s + 1
                    break
            elif variant == 2:  # DSGT
                for i in range(n):
                    for q in range(p):
                        ah[i, q] = x[i, q] - alpha * y[i, q]
                _mix(W, ah, x)
                if not _all_finite(x):
                    bad = s + 1
                    break
                _gradients(kind, reg, reg_w, M, aux, wt, ptr, x, idx, s, B, g)
                for i in range(n):
                    for q in range(p):
                        ah[i, q] = (y[i, q] - g_last[i, q]) + g[i, q]
                        g_last[i, q] = g[i, q]
                _mix(W, ah, y)
                if not _all_finite(y):
                    bad = s + 1
                    break
            elif variant == 3:  # DSGD
                for i in range(n):
                    for q in range(p):
                        ah[i, q] = x[i, q] - alpha * g_last[i, q]
                _mix(W, ah, x)
                if not _all_finite(x):
                    bad = s + 1
                    break
                _gradients(kind, reg, reg_w, M, aux, wt, ptr, x, idx, s, B, g)
                for i in range(n):
                    for q in range(p):
                        g_last[i, q] = g[i, q]
            elif variant == 4:  # ED
                if k0 + s == 0:
                    for i in range(n):
                        for q in range(p):
                            ah[i, q] = x[i, q] - alpha * g_last[i, q]
                else:
                    for i in range(n):
                        for q in range(p):
                            ah[i, q] = ((2.0 * x[i, q] - x_prev[i, q])
                                        - alpha * (g_last[i, q] - g_prev[i, q]))
                _mix(W, ah, mx)
                for i in range(n):
                    for q in range(p):
                        x_prev[i, q] = x[i, q]
                        x[i, q] = mx[i, q]
                if not _all_finite(x):
                    bad = s + 1
                    break
                _gradients(kind, reg, reg_w, M, aux, wt, ptr, x, idx, s, B, g)
                for i in range(n):
                    for q in range(p):
                        g_prev[i, q] = g_last[i, q]
                        g_last[i, q] = g[i, q]
            elif variant == 5:  # DSGT_HB
                for i in range(n):
                    for q in range(p):
                        ah[i, q] = x[i, q] - alpha * y[i, q]
                _mix(W, ah, mx)
                for i in range(n):
                    for q in range(p):
                        bh[i, q] = mx[i, q] + hb_beta * (x[i, q] - x_prev[i, q])
                        x_prev[i, q] = x[i, q]
                        x[i, q] = bh[i, q]
                if not _all_finite(x):
                    bad = s + 1
                    break
                _gradients(kind, reg, reg_w, M, aux, wt, ptr, x, idx, s, B, g)
                for i in range(n):
                    for q in range(p):
                        ah[i, q] = (y[i, q] - g_last[i, q]) + g[i, q]
                        g_last[i, q] = g[i, q]
                _mix(W, ah, y)
                if not _all_finite(y):
                    bad = s + 1
                    break
            elif variant == 6:  # CSGD
                for i in range(n):
                    for q in range(p):
                        x[i, q] = x[i, q] - alpha * g_last[i, q]
                if not _all_finite(x):
                    bad = s + 1
                    break
                _gradients(kind, reg, reg_w, M, aux, wt, ptr, x, idx, s, B, g)
                for i in range(n):
                    for q in range(p):
                        g_last[i, q] = g[i, q]
            else:  # CSGDM
                for i in range(n):
                    for q in range(p):
                        x[i, q] = x[i, q] - alpha * z[i, q]
                if not _all_finite(x):
                    bad = s + 1
                    break
                _gradients(kind, reg, reg_w, M, aux, wt, ptr, x, idx, s, B, g)
                for i in range(n):
                    for q in range(p):
                        z_prev[i, q] = z[i, q]
                        z[i, q] = beta * z_prev[i, q] + omb * g[i, q]
            _means(x, xbar, s)
            _means(g, gbar, s)
    return bad
