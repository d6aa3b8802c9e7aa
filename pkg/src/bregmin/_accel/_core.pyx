# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: the scalar cubic root and the PDHG inner loop.

Must stay behaviourally in sync with bregmin._accel.pure.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, isfinite, sqrt

cnp.import_array()

REG_NONE, REG_L1, REG_L2 = 0, 1, 2
KERNEL_EUCLIDEAN, KERNEL_QUARTIC = 0, 1


cpdef double cubic_scale(double s):
    """Positive root of s*t^3 + t - 1 = 0 for s >= 0 (safeguarded Newton)."""
    cdef double lo = 0.0, hi = 1.0, t = 1.0, phi, tn
    cdef int i
    if s <= 0.0:
        return 1.0
    for i in range(200):
        phi = s * t * t * t + t - 1.0
        if fabs(phi) <= 1e-14:
            return t
        if phi > 0.0:
            hi = t
        else:
            lo = t
        tn = t - phi / (3.0 * s * t * t + 1.0)
        if tn <= lo or tn >= hi:
            tn = 0.5 * (lo + hi)
        t = tn
    return t


def cubic_scale_batch(s):
    cdef cnp.ndarray[double, ndim=1] arr = np.ascontiguousarray(s, dtype=np.float64).ravel()
    cdef cnp.ndarray[double, ndim=1] out = np.empty_like(arr)
    cdef Py_ssize_t i, n = arr.shape[0]
    for i in range(n):
        out[i] = cubic_scale(arr[i])
    return out.reshape(np.shape(s))


cdef inline double _soft1(double v, double g) noexcept:
    if v > g:
        return v - g
    if v < -g:
        return v + g
    return 0.0


def pdhg(double[:, ::1] K, double[::1] offs, double box,
         double[::1] xbar, double tau, int reg, double lam, int kernel,
         double sigma_p, double sigma_d, double tol, int max_iters,
         double[::1] x0, double[::1] y0):
    """See bregmin._accel.pure.pdhg; identical contract."""
    cdef Py_ssize_t M = K.shape[0], N = K.shape[1]
    cdef cnp.ndarray[double, ndim=1] x_arr = np.array(x0, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] y_arr = np.array(y0, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] hist_arr = np.empty(max_iters, dtype=np.float64)
    cdef double[::1] x = x_arr
    cdef double[::1] y = y_arr
    cdef double[::1] hist = hist_arr
    cdef double[::1] xt = np.array(x0, dtype=np.float64)
    cdef double[::1] ynew = np.empty(M)
    cdef double[::1] z = np.empty(N)
    cdef double[::1] xnew = np.empty(N)
    cdef double[::1] gbar = np.empty(N)
    cdef double[::1] q = np.empty(N)

    cdef double inv_tau = 1.0 / tau
    cdef double inv_sp = 1.0 / sigma_p
    cdef double sq = 0.0
    cdef Py_ssize_t i, j, m
    cdef int n = 0
    cdef double res = np.inf
    cdef double acc, c, ab, pres, dres, acoef, bcoef, t, dxi, dyi

    if kernel == KERNEL_QUARTIC:
        sq = 0.0
        for j in range(N):
            sq += xbar[j] * xbar[j]
        for j in range(N):
            gbar[j] = (sq + 1.0) * xbar[j]

    for n in range(1, max_iters + 1):
        # dual ascent + box projection
        for m in range(M):
            acc = offs[m]
            for j in range(N):
                acc += K[m, j] * xt[j]
            acc = y[m] + sigma_d * acc
            if acc > box:
                acc = box
            elif acc < -box:
                acc = -box
            ynew[m] = acc
        # primal point before prox: z = x - sigma_p * K^T ynew
        for j in range(N):
            z[j] = x[j]
        for m in range(M):
            c = sigma_p * ynew[m]
            for j in range(N):
                z[j] -= c * K[m, j]
        # prox of R + D_h/tau
        if kernel == KERNEL_EUCLIDEAN:
            ab = inv_tau + inv_sp
            if reg == REG_L2:
                for j in range(N):
                    xnew[j] = (inv_tau * xbar[j] + inv_sp * z[j]) / (ab + lam)
            elif reg == REG_L1:
                for j in range(N):
                    xnew[j] = _soft1((inv_tau * xbar[j] + inv_sp * z[j]) / ab, lam / ab)
            else:
                for j in range(N):
                    xnew[j] = (inv_tau * xbar[j] + inv_sp * z[j]) / ab
        else:
            bcoef = inv_tau + inv_sp
            if reg == REG_L2:
                bcoef += lam
            acoef = 0.0
            if reg == REG_L1:
                for j in range(N):
                    q[j] = _soft1(inv_tau * gbar[j] + inv_sp * z[j], lam)
                    acoef += q[j] * q[j]
            else:
                for j in range(N):
                    q[j] = inv_tau * gbar[j] + inv_sp * z[j]
                    acoef += q[j] * q[j]
            acoef *= inv_tau
            t = cubic_scale(acoef / (bcoef * bcoef * bcoef)) / bcoef
            for j in range(N):
                xnew[j] = t * q[j]
        # combined primal-dual residual
        dres = 0.0
        for m in range(M):
            dyi = y[m] - ynew[m]
            acc = dyi / sigma_d
            for j in range(N):
                acc -= K[m, j] * (x[j] - xnew[j])
            dres += acc * acc
        pres = 0.0
        for j in range(N):
            dxi = (x[j] - xnew[j]) * inv_sp
            for m in range(M):
                dxi -= K[m, j] * (y[m] - ynew[m])
            pres += dxi * dxi
        res = sqrt(pres) + sqrt(dres)
        hist[n - 1] = res
        # over-relaxation (theta = 1) and state swap
        for j in range(N):
            xt[j] = 2.0 * xnew[j] - x[j]
            x[j] = xnew[j]
        for m in range(M):
            y[m] = ynew[m]
        if not isfinite(res):
            break
        if res <= tol:
            break
    return x_arr, y_arr, res, n, hist_arr[:n].copy()
