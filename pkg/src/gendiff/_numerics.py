"""Small numerical kernels shared by the characteristics and simulator code."""

from __future__ import annotations

import numpy as np

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def gauss_legendre(f, a, b, panels=1):
    """Composite 16-point Gauss-Legendre rule of ``f`` over ``[a, b]``.

    ``f`` must accept and return arrays.
    """
    if b <= a:
        return 0.0
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    pts = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = np.asarray(f(pts.ravel()), dtype=float).reshape(pts.shape)
    return float(np.sum(half[:, None] * _GL_WEIGHTS[None, :] * vals))


def adaptive_integrate(f, a, b, tol=1e-10, max_panels=4096):
    """Integrate ``f`` over ``[a, b]`` by panel doubling until two successive
    composite Gauss-Legendre estimates agree to ``tol``.

    Returns ``(value, error_estimate)``.
    """
    if b <= a:
        return 0.0, 0.0
    panels = 1
    prev = gauss_legendre(f, a, b, panels)
    while panels < max_panels:
        panels *= 2
        cur = gauss_legendre(f, a, b, panels)
        err = abs(cur - prev)
        if err <= tol:
            return cur, err
        prev = cur
    return prev, err


def cell_gauss_points(lo, hi):
    """Gauss points and weights for many cells at once.

    Returns arrays of shape ``(len(lo), 16)``.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    pts = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    wts = half[:, None] * _GL_WEIGHTS[None, :]
    return pts, wts


def bisect_increasing(f, y, lo, hi, xtol=0.0, maxiter=200):
    """Vectorised bisection for ``f(x) = y`` with ``f`` strictly increasing.

    ``lo`` and ``hi`` must bracket every target. Iterates until the bracket
    width is below ``xtol`` or stops shrinking in floating point.
    """
    y = np.asarray(y, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), y.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), y.shape).copy()
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        stuck = (mid <= lo) | (mid >= hi)
        if np.all(stuck | (hi - lo <= xtol)):
            break
        below = np.asarray(f(mid)) < y
        lo = np.where(below & ~stuck, mid, lo)
        hi = np.where(~below & ~stuck, mid, hi)
    return 0.5 * (lo + hi)


def richardson_one_sided(g, x, side, h0, levels=8, rtol=1e-7):
    """One-sided difference quotient of ``g`` at ``x`` with Richardson
    extrapolation on step halving.

    Returns ``(value, error_estimate, converged)``.
    """
    sign = 1.0 if side == "right" else -1.0
    gx = g(x)
    table = []
    best, best_err = np.nan, np.inf
    h = h0
    for i in range(levels):
        d = (g(x + sign * h) - gx) / (sign * h)
        row = [d]
        for j in range(1, i + 1):
            fac = 2.0**j
            row.append(row[j - 1] + (row[j - 1] - table[i - 1][j - 1]) / (fac - 1.0))
        if i > 0:
            err = abs(row[-1] - table[i - 1][-1])
            if err < best_err:
                best, best_err = row[-1], err
        table.append(row)
        h /= 2.0
    scale = max(abs(best), 1e-300)
    converged = bool(np.isfinite(best) and best_err <= rtol * max(scale, 1.0))
    return float(best), float(best_err), converged
