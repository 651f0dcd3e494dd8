"""The degree-l radial Green operator H_l for piecewise-linear densities.

For g on [0, R],

    H_l g (r) = 1/(2l+1) [ r^{-l-1} int_0^r g s^{l+2} ds + r^l int_r^R g s^{1-l} ds ],

which solves -(1/r^2)(r^2 H')' + l(l+1) H / r^2 = g with H regular at 0 and
H = H(R) (R/r)^{l+1} outside. For a P1 density the integrals are done
exactly: closed form on cells touching the origin, 8-point Gauss elsewhere
(the integrand is then a smooth low-degree function of s).
"""

from __future__ import annotations

import numpy as np

from .discretization import RadialGrid

_GX, _GW = np.polynomial.legendre.leggauss(8)


def _power_moment(a, b, k):
    """int_a^b s^k ds for scalar integer k and arrays a <= b."""
    if k == -1:
        with np.errstate(divide="ignore"):
            return np.log(b / a)
    return (b ** (k + 1) - a ** (k + 1)) / (k + 1)


def _p1_weights(x0, x1, a, b, k):
    """Coefficients (cL, cR): int_a^b g s^k ds = cL g(x0) + cR g(x1) for g
    linear on [x0, x1] and [a, b] inside that cell."""
    h = x1 - x0
    near = a < 0.5 * b
    cL = np.empty_like(a)
    cR = np.empty_like(a)
    if np.any(near):
        an, bn, x0n, x1n, hn = a[near], b[near], x0[near], x1[near], h[near]
        j0 = _power_moment(an, bn, k)
        j1 = _power_moment(an, bn, k + 1)
        cL[near] = (x1n * j0 - j1) / hn
        cR[near] = (j1 - x0n * j0) / hn
    far = ~near
    if np.any(far):
        af, bf = a[far, None], b[far, None]
        s = 0.5 * (bf - af) * _GX + 0.5 * (af + bf)
        w = 0.5 * (bf - af) * _GW * s**k
        t = (s - x0[far, None]) / h[far, None]
        cL[far] = np.sum(w * (1.0 - t), axis=1)
        cR[far] = np.sum(w * t, axis=1)
    return cL, cR


def _cell_totals(grid: RadialGrid, k: int, V: np.ndarray) -> np.ndarray:
    x0, x1 = grid.nodes[:-1], grid.nodes[1:]
    cL, cR = _p1_weights(x0, x1, x0.copy(), x1.copy(), k)
    return cL[:, None] * V[:-1] + cR[:, None] * V[1:]


def green_eval(grid: RadialGrid, l: int, V, r, cells):
    """H_l and dH_l/dr of P1 densities at points r lying in ``cells``.

    V has shape (N+1,) or (N+1, m); the result has shape r.shape (+ (m,)).
    """
    V = np.asarray(V, dtype=float)
    squeeze = V.ndim == 1
    if squeeze:
        V = V[:, None]
    r = np.asarray(r, dtype=float)
    shape = r.shape
    r = r.ravel()
    cells = np.asarray(cells).ravel()
    lo_tot = _cell_totals(grid, l + 2, V)
    hi_tot = _cell_totals(grid, 1 - l, V) if l <= 1 else None
    n = grid.N
    zero = np.zeros((1, V.shape[1]))
    lo_cum = np.vstack([zero, np.cumsum(lo_tot, axis=0)])  # int_0^{x_c}
    x0, x1 = grid.nodes[cells], grid.nodes[cells + 1]
    # partial cell pieces [x0, r] and [r, x1]
    pL, pR = _p1_weights(x0, x1, x0.copy(), r.copy(), l + 2)
    I_lo = lo_cum[cells] + pL[:, None] * V[cells] + pR[:, None] * V[cells + 1]
    rs = np.where(r > 0, r, 1.0)
    qL, qR = _p1_weights(x0, x1, rs, x1.copy(), 1 - l)
    part_hi = qL[:, None] * V[cells] + qR[:, None] * V[cells + 1]
    if hi_tot is None:
        # negative powers: cells touching 0 are never summed whole because
        # every evaluation point lies strictly inside or right of them
        x0a, x1a = grid.nodes[:-1], grid.nodes[1:]
        safe0 = np.where(x0a > 0, x0a, x1a * 0.5)
        cL, cR = _p1_weights(x0a, x1a, safe0, x1a.copy(), 1 - l)
        hi_tot = cL[:, None] * V[:-1] + cR[:, None] * V[1:]
    hi_cum = np.vstack([np.cumsum(hi_tot[::-1], axis=0)[::-1], zero])
    I_hi = hi_cum[cells + 1] + part_hi
    c = 1.0 / (2 * l + 1)
    rr = rs[:, None]
    H = c * (rr ** (-l - 1) * I_lo + rr**l * I_hi)
    dH = c * (-(l + 1) * rr ** (-l - 2) * I_lo + l * rr ** (l - 1) * I_hi)
    at0 = r == 0
    if np.any(at0):
        # regular limits at the centre
        if l == 0:
            H[at0] = hi_cum[0]
        else:
            H[at0] = 0.0
        dH[at0] = 0.0
    if squeeze:
        H, dH = H[:, 0], dH[:, 0]
        return H.reshape(shape), dH.reshape(shape)
    return H.reshape(shape + (V.shape[1],)), dH.reshape(shape + (V.shape[1],))


def green_at_gauss(grid: RadialGrid, l: int, V):
    pts, _ = grid.quadrature()
    cells = np.repeat(np.arange(grid.N), pts.shape[1]).reshape(pts.shape)
    return green_eval(grid, l, V, pts, cells)


def green_at_nodes(grid: RadialGrid, l: int, V):
    cells = np.minimum(np.arange(grid.N + 1), grid.N - 1)
    return green_eval(grid, l, V, grid.nodes, cells)
