"""Quadrature rules: simplex rules for fiber integration, box rules for pairings.

The simplex rule is the classical recursively-constructed family with
negative weights (odd exactness degree d = 2s+1): on the unit p-simplex
{t_i >= 0, sum t_i <= 1} the nodes are the points whose barycentric
coordinates are (2 beta_j + 1)/(d + p - 2i) over nonnegative integer
tuples beta summing to s - i, with weights

    (-1)^i 2^(-2s) (d + p - 2i)^d / (i! (d + p - i)!).

Weights sum to the simplex volume 1/p!, and polynomials of total degree
<= d integrate exactly.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np


def _compositions(total: int, slots: int):
    if slots == 1:
        yield (total,)
        return
    for head in range(total, -1, -1):
        for tail in _compositions(total - head, slots - 1):
            yield (head,) + tail


@lru_cache(maxsize=None)
def simplex_rule(p: int, degree: int = 7):
    """Nodes (Q, p) and weights (Q,) integrating over the unit p-simplex."""
    if p == 0:
        return np.zeros((1, 0)), np.ones(1)
    s = degree // 2
    d = 2 * s + 1
    acc: dict[tuple, float] = {}
    for i in range(s + 1):
        denom = d + p - 2 * i
        w = ((-1.0) ** i) * (2.0 ** (-2 * s)) * (denom ** d) / (
            math.factorial(i) * math.factorial(d + p - i))
        for beta in _compositions(s - i, p + 1):
            bary = [(2 * b + 1) / denom for b in beta]
            t = tuple(round(c, 14) for c in bary[1:])
            acc[t] = acc.get(t, 0.0) + w
    pts = np.array(sorted(acc.keys()), dtype=float)
    wts = np.array([acc[tuple(row)] for row in pts.round(14)], dtype=float)
    return pts, wts


def simplex_volume(p: int) -> float:
    return 1.0 / math.factorial(p)


@lru_cache(maxsize=None)
def gauss_legendre(npts: int):
    x, w = np.polynomial.legendre.leggauss(npts)
    return x, w


def box_rule(lo, hi, npts: int):
    """Tensor Gauss-Legendre rule over the box prod [lo_k, hi_k]."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    dim = lo.size
    x, w = gauss_legendre(npts)
    axes_x, axes_w = [], []
    for k in range(dim):
        half = 0.5 * (hi[k] - lo[k])
        mid = 0.5 * (hi[k] + lo[k])
        axes_x.append(mid + half * x)
        axes_w.append(half * w)
    grids = np.meshgrid(*axes_x, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wts = axes_w[0]
    for k in range(1, dim):
        wts = np.multiply.outer(wts, axes_w[k])
    return pts, wts.ravel()


def box_corners(lo, hi):
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    dim = lo.size
    out = np.empty((2 ** dim, dim))
    for k in range(2 ** dim):
        for a in range(dim):
            out[k, a] = hi[a] if (k >> a) & 1 else lo[a]
    return out
