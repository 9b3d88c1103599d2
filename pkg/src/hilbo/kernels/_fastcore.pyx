# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled implementation of the hot numerical kernels.

Same contract as `hilbo.kernels.reference`; selected at import time when the
extension built. All inputs must be C-contiguous float64 arrays.
"""

import numpy as np

from libc.math cimport exp, log, sqrt

cdef double SQRT5 = sqrt(5.0)
cdef double LOG_2PI = log(6.283185307179586476925286766559)


def pairwise_dists(double[:, ::1] X):
    cdef Py_ssize_t t = X.shape[0], n = X.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double s, d
    out = np.zeros((t, t))
    cdef double[:, ::1] D = out
    for i in range(t):
        for j in range(i + 1, t):
            s = 0.0
            for k in range(n):
                d = X[i, k] - X[j, k]
                s += d * d
            d = sqrt(s)
            D[i, j] = d
            D[j, i] = d
    return out


def cross_dists(double[:, ::1] A, double[:, ::1] B):
    cdef Py_ssize_t na = A.shape[0], nb = B.shape[0], n = A.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double s, d
    out = np.empty((na, nb))
    cdef double[:, ::1] D = out
    for i in range(na):
        for j in range(nb):
            s = 0.0
            for k in range(n):
                d = A[i, k] - B[j, k]
                s += d * d
            D[i, j] = sqrt(s)
    return out


def matern52_from_dists(double[:, ::1] D, double ell, double sf2):
    cdef Py_ssize_t r = D.shape[0], c = D.shape[1]
    cdef Py_ssize_t i, j
    cdef double a, scale = SQRT5 / ell
    out = np.empty((r, c))
    cdef double[:, ::1] K = out
    for i in range(r):
        for j in range(c):
            a = scale * D[i, j]
            K[i, j] = sf2 * (1.0 + a + a * a / 3.0) * exp(-a)
    return out


def matern52_dlogell_from_dists(double[:, ::1] D, double ell, double sf2):
    cdef Py_ssize_t r = D.shape[0], c = D.shape[1]
    cdef Py_ssize_t i, j
    cdef double a, scale = SQRT5 / ell
    out = np.empty((r, c))
    cdef double[:, ::1] G = out
    for i in range(r):
        for j in range(c):
            a = scale * D[i, j]
            G[i, j] = sf2 * exp(-a) * a * a * (1.0 + a) / 3.0
    return out


cdef int _chol_inplace(double[:, ::1] A, Py_ssize_t t) nogil:
    """Lower Cholesky of A in place (upper triangle left stale). 0 ok, 1 fail."""
    cdef Py_ssize_t i, j, k
    cdef double s
    for j in range(t):
        s = A[j, j]
        for k in range(j):
            s -= A[j, k] * A[j, k]
        if s <= 0.0:
            return 1
        A[j, j] = sqrt(s)
        for i in range(j + 1, t):
            s = A[i, j]
            for k in range(j):
                s -= A[i, k] * A[j, k]
            A[i, j] = s / A[j, j]
    return 0


def cholesky_lower(double[:, ::1] M, double jitter):
    cdef Py_ssize_t t = M.shape[0]
    cdef Py_ssize_t i, j
    out = np.empty((t, t))
    cdef double[:, ::1] L = out
    for i in range(t):
        for j in range(t):
            L[i, j] = M[i, j]
        L[i, i] += jitter
    if _chol_inplace(L, t) != 0:
        return None
    for i in range(t):
        for j in range(i + 1, t):
            L[i, j] = 0.0
    return out


def lml_from_dists(double[:, ::1] D, double[::1] y_centered,
                   double ell, double sf2, double sn2, double jitter):
    cdef Py_ssize_t t = y_centered.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double a, e, s, value, g_ell, g_sf2, g_sn2, aij
    cdef double scale = SQRT5 / ell

    K_arr = np.empty((t, t))
    G_arr = np.empty((t, t))
    L_arr = np.empty((t, t))
    cdef double[:, ::1] K = K_arr
    cdef double[:, ::1] G = G_arr  # dK/dlog(ell)
    cdef double[:, ::1] L = L_arr
    for i in range(t):
        K[i, i] = sf2
        G[i, i] = 0.0
        for j in range(i + 1, t):
            a = scale * D[i, j]
            e = sf2 * exp(-a)
            s = e * (1.0 + a + a * a / 3.0)
            K[i, j] = s
            K[j, i] = s
            s = e * a * a * (1.0 + a) / 3.0
            G[i, j] = s
            G[j, i] = s
    for i in range(t):
        for j in range(t):
            L[i, j] = K[i, j]
        L[i, i] += sn2 + jitter
    if _chol_inplace(L, t) != 0:
        return None

    # alpha = (K + sn2 I)^-1 y via forward/back substitution
    alpha_arr = np.empty(t)
    cdef double[::1] alpha = alpha_arr
    for i in range(t):
        s = y_centered[i]
        for k in range(i):
            s -= L[i, k] * alpha[k]
        alpha[i] = s / L[i, i]
    for i in range(t - 1, -1, -1):
        s = alpha[i]
        for k in range(i + 1, t):
            s -= L[k, i] * alpha[k]
        alpha[i] = s / L[i, i]

    value = 0.0
    for i in range(t):
        value += y_centered[i] * alpha[i]
    value *= -0.5
    for i in range(t):
        value -= log(L[i, i])
    value -= 0.5 * t * LOG_2PI

    # invert L in place (lower triangular), then Kinv = Linv^T Linv
    cdef double[:, ::1] Linv = L
    for j in range(t):
        Linv[j, j] = 1.0 / L[j, j]
        for i in range(j + 1, t):
            s = 0.0
            for k in range(j, i):
                s -= L[i, k] * Linv[k, j]
            Linv[i, j] = s / L[i, i]

    # A = alpha alpha^T - Kinv, accumulated into the three gradient sums;
    # A, K and G are symmetric so off-diagonal terms are doubled
    g_ell = 0.0
    g_sf2 = 0.0
    g_sn2 = 0.0
    for i in range(t):
        s = 0.0
        for k in range(i, t):
            s += Linv[k, i] * Linv[k, i]
        aij = alpha[i] * alpha[i] - s
        g_sf2 += aij * sf2
        g_sn2 += aij
        for j in range(i + 1, t):
            s = 0.0
            for k in range(j, t):
                s += Linv[k, i] * Linv[k, j]
            aij = 2.0 * (alpha[i] * alpha[j] - s)
            g_ell += aij * G[i, j]
            g_sf2 += aij * K[i, j]
    return value, 0.5 * g_ell, 0.5 * g_sf2, 0.5 * sn2 * g_sn2


def variability_many(double[:, ::1] flat_pop, double[::1] anchor,
                     Py_ssize_t n_rows, Py_ssize_t n_cols,
                     double ell, double sf2,
                     double dup_tol, double sentinel, double[::1] jitters):
    """Log-determinant of the anchored kernel matrix per candidate row-block.

    Candidates with any pairwise distance <= dup_tol (or failing Cholesky at
    every jitter rung) get the sentinel.
    """
    cdef Py_ssize_t N = flat_pop.shape[0], p = n_rows + 1
    cdef Py_ssize_t c, i, j, k, r, jit
    cdef double s, d, a, val
    cdef double scale = SQRT5 / ell
    cdef bint dup
    out = np.empty(N)
    cdef double[::1] res = out
    X_arr = np.empty((p, n_cols))
    D_arr = np.empty((p, p))
    K_arr = np.empty((p, p))
    L_arr = np.empty((p, p))
    cdef double[:, ::1] X = X_arr
    cdef double[:, ::1] D = D_arr
    cdef double[:, ::1] K = K_arr
    cdef double[:, ::1] L = L_arr
    for c in range(N):
        for r in range(n_rows):
            for k in range(n_cols):
                X[r, k] = flat_pop[c, r * n_cols + k]
        for k in range(n_cols):
            X[n_rows, k] = anchor[k]
        dup = False
        for i in range(p):
            D[i, i] = 0.0
            for j in range(i + 1, p):
                s = 0.0
                for k in range(n_cols):
                    d = X[i, k] - X[j, k]
                    s += d * d
                d = sqrt(s)
                if d <= dup_tol:
                    dup = True
                D[i, j] = d
                D[j, i] = d
        if dup:
            res[c] = sentinel
            continue
        for i in range(p):
            K[i, i] = sf2
            for j in range(i + 1, p):
                a = scale * D[i, j]
                s = sf2 * (1.0 + a + a * a / 3.0) * exp(-a)
                K[i, j] = s
                K[j, i] = s
        val = sentinel
        for jit in range(jitters.shape[0]):
            for i in range(p):
                for j in range(p):
                    L[i, j] = K[i, j]
                L[i, i] += jitters[jit]
            if _chol_inplace(L, p) == 0:
                val = 0.0
                for i in range(p):
                    val += log(L[i, i])
                val *= 2.0
                break
        res[c] = val
    return out


def posterior_mean_var(double[:, ::1] L, double[::1] alpha, double[:, ::1] Kq,
                       double sf2, double mean_offset):
    cdef Py_ssize_t t = L.shape[0], m = Kq.shape[1]
    cdef Py_ssize_t i, k, q
    cdef double s, acc
    mean_arr = np.empty(m)
    var_arr = np.empty(m)
    cdef double[::1] mean = mean_arr
    cdef double[::1] var = var_arr
    v_arr = np.empty(t)
    cdef double[::1] v = v_arr
    for q in range(m):
        acc = 0.0
        for i in range(t):
            acc += Kq[i, q] * alpha[i]
        mean[q] = mean_offset + acc
        acc = 0.0
        for i in range(t):
            s = Kq[i, q]
            for k in range(i):
                s -= L[i, k] * v[k]
            v[i] = s / L[i, i]
            acc += v[i] * v[i]
        s = sf2 - acc
        var[q] = s if s > 0.0 else 0.0
    return mean_arr, var_arr
