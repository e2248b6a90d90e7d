"""Shared numerical kernels.

Gauss-Legendre rules, a per-element adaptive panel integrator, and a
vectorized safeguarded root solver for strictly increasing maps.  All
routines are deterministic: identical inputs give identical bits.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


class RootError(RuntimeError):
    """Monotone root solve failed (bad bracket or no convergence)."""


@lru_cache(maxsize=None)
def gauss_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0, 1], weights summing to 1."""
    x, w = np.polynomial.legendre.leggauss(order)
    nodes = 0.5 * (x + 1.0)
    weights = 0.5 * w
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


def _panel(fn, idx, lo, hi, order):
    nodes, weights = gauss_rule(order)
    theta = lo[:, None] + (hi - lo)[:, None] * nodes
    vals = fn(theta, idx)
    return (hi - lo) * (vals @ weights)


def adaptive_gauss(fn, a, b, tol: float = 1e-10, max_depth: int = 24):
    """Integrate fn element-wise from a[i] to b[i].

    fn(theta, idx) evaluates the integrand on a (m, G) abscissa array where
    idx maps rows to original elements (so closures can gather per-element
    parameters).  Panels are accepted when an embedded 8/16 point pair
    agrees to tol (absolute plus relative) and bisected otherwise.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    total = np.zeros(a.shape[0])
    live = np.nonzero(a != b)[0]
    idx = live
    lo = a[live].copy()
    hi = b[live].copy()
    for depth in range(max_depth + 1):
        if idx.size == 0:
            break
        coarse = _panel(fn, idx, lo, hi, 8)
        fine = _panel(fn, idx, lo, hi, 16)
        err = np.abs(fine - coarse)
        ok = err <= tol * np.maximum(1.0, np.abs(fine))
        if depth == max_depth:
            ok = np.ones_like(ok, dtype=bool)
        np.add.at(total, idx[ok], fine[ok])
        rest = ~ok
        if not rest.any():
            break
        idx = np.concatenate([idx[rest], idx[rest]])
        mid = 0.5 * (lo[rest] + hi[rest])
        lo = np.concatenate([lo[rest], mid])
        hi = np.concatenate([mid, hi[rest]])
    return total


def solve_increasing(eval_fd, x0, target, tol: float = 1e-12,
                     max_expand: int = 200, max_iter: int = 120):
    """Solve F(x) = target element-wise for strictly increasing F.

    eval_fd(x) returns (F(x), F'(x)) for an array x.  Starts from x0,
    expands an outward bracket by doubling steps, then iterates Newton
    safeguarded by bisection (a Newton candidate outside the bracket is
    replaced by the midpoint).  Stops when |F(x) - target| falls below
    tol * (1 + |target|).  Elements already converged at x0 are returned
    bit-identical to x0.
    """
    x = np.array(x0, dtype=float, copy=True)
    target = np.asarray(target, dtype=float)
    tolv = tol * (1.0 + np.abs(target))

    F, dF = eval_fd(x)
    res = F - target

    lo = x.copy()
    hi = x.copy()
    need_hi = res < -tolv
    need_lo = res > tolv
    step = 1.0 + 0.1 * np.abs(x)
    for _ in range(max_expand):
        open_mask = need_hi | need_lo
        if not open_mask.any():
            break
        hi = np.where(need_hi, hi + step, hi)
        lo = np.where(need_lo, lo - step, lo)
        probe = np.where(need_hi, hi, lo)
        Fp, _ = eval_fd(probe)
        rp = Fp - target
        # an upward probe with F >= target closes the bracket; same downward
        need_hi = need_hi & (rp < 0.0)
        need_lo = need_lo & (rp > 0.0)
        step = np.where(open_mask, 2.0 * step, step)
    else:
        raise RootError("bracket expansion exceeded configured range; "
                        "model may not be strictly increasing")

    active = np.abs(res) > tolv
    for _ in range(max_iter):
        if not active.any():
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = x - res / dF
        inside = (newton > lo) & (newton < hi) & np.isfinite(newton)
        cand = np.where(inside, newton, 0.5 * (lo + hi))
        x_new = np.where(active, cand, x)
        F, dF = eval_fd(x_new)
        res_new = F - target
        res = np.where(active, res_new, res)
        below = active & (res < 0.0)
        above = active & (res > 0.0)
        lo = np.where(below, x_new, lo)
        hi = np.where(above, x_new, hi)
        x = x_new
        # a collapsed bracket means tol is below attainable precision; accept
        width_floor = 4.0 * np.finfo(float).eps * (1.0 + np.abs(x))
        active = (np.abs(res) > tolv) & ((hi - lo) > width_floor)
    if active.any():
        raise RootError("monotone solve failed to reach tolerance")
    return x
