"""Numpy reference implementation of the hot kernels.

Mirrors the compiled extension in bregmin._accel._core: same update order,
same formulas, so the two backends agree to floating-point accumulation
error.  Keep the two files in sync.
"""

from __future__ import annotations

import numpy as np

REG_NONE, REG_L1, REG_L2 = 0, 1, 2
KERNEL_EUCLIDEAN, KERNEL_QUARTIC = 0, 1


def cubic_scale(s: float) -> float:
    """Positive root of s*t^3 + t - 1 = 0 for s >= 0 (safeguarded Newton)."""
    if s <= 0.0:
        return 1.0
    lo, hi, t = 0.0, 1.0, 1.0
    for _ in range(200):
        phi = s * t * t * t + t - 1.0
        if abs(phi) <= 1e-14:
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


def cubic_scale_batch(s) -> np.ndarray:
    """Vectorized cubic_scale (bracketed Newton, elementwise)."""
    s = np.asarray(s, dtype=float)
    t = np.ones_like(s)
    lo = np.zeros_like(s)
    hi = np.ones_like(s)
    for _ in range(200):
        phi = s * t * t * t + t - 1.0
        if np.all(np.abs(phi) <= 1e-14):
            break
        hi = np.where(phi > 0.0, t, hi)
        lo = np.where(phi < 0.0, t, lo)
        tn = t - phi / (3.0 * s * t * t + 1.0)
        bisect = (tn <= lo) | (tn >= hi)
        t = np.where(bisect, 0.5 * (lo + hi), tn)
    return t


def _soft(v: np.ndarray, g: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - g, 0.0)


def _prox_g(z, xbar, grad_h_bar, tau, sigma_p, reg, lam, kernel):
    """Prox of R(x) + (1/tau) D_h(x, xbar) with weight 1/(2 sigma_p) on ||x-z||^2."""
    inv_tau = 1.0 / tau
    inv_sp = 1.0 / sigma_p
    if kernel == KERNEL_EUCLIDEAN:
        ab = inv_tau + inv_sp
        w = (inv_tau * xbar + inv_sp * z) / ab
        if reg == REG_NONE:
            return w
        if reg == REG_L1:
            return _soft(w, lam / ab)
        return w * (ab / (ab + lam))
    # Quartic kernel: stationarity reduces to a radial cubic in the scale t.
    q = inv_tau * grad_h_bar + inv_sp * z
    bcoef = inv_tau + inv_sp
    if reg == REG_L1:
        p = _soft(q, lam)
    else:
        p = q
        if reg == REG_L2:
            bcoef += lam
    acoef = inv_tau * float(p @ p)
    t = cubic_scale(acoef / (bcoef * bcoef * bcoef)) / bcoef
    return t * p


def pdhg(
    K,
    offs,
    box,
    xbar,
    tau,
    reg,
    lam,
    kernel,
    sigma_p,
    sigma_d,
    tol,
    max_iters,
    x0,
    y0,
):
    """Primal-dual iteration for min (1/M)||Kx + offs||_1 + R(x) + D_h(x, xbar)/tau.

    The dual variable is projected onto the box [-box, box]^M each step;
    the primal update applies the prox of the remaining terms; theta = 1
    over-relaxation.  Returns (x, y, residual, iters, residual_history).
    """
    K = np.ascontiguousarray(K, dtype=float)
    offs = np.asarray(offs, dtype=float)
    xbar = np.asarray(xbar, dtype=float)
    x = np.array(x0, dtype=float, copy=True)
    y = np.array(y0, dtype=float, copy=True)
    xt = x.copy()
    grad_h_bar = None
    if kernel == KERNEL_QUARTIC:
        grad_h_bar = (float(xbar @ xbar) + 1.0) * xbar
    hist = np.empty(max_iters)
    res = np.inf
    n = 0
    for n in range(1, max_iters + 1):
        y_new = np.clip(y + sigma_d * (K @ xt + offs), -box, box)
        z = x - sigma_p * (K.T @ y_new)
        x_new = _prox_g(z, xbar, grad_h_bar, tau, sigma_p, reg, lam, kernel)
        dx = x - x_new
        dy = y - y_new
        pres = float(np.linalg.norm(dx / sigma_p - K.T @ dy))
        dres = float(np.linalg.norm(dy / sigma_d - K @ dx))
        res = pres + dres
        hist[n - 1] = res
        xt = 2.0 * x_new - x
        x = x_new
        y = y_new
        if not np.isfinite(res):
            break
        if res <= tol:
            break
    return x, y, res, n, hist[:n].copy()
