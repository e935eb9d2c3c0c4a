"""Truncated multivariate Taylor (jet) arithmetic over batches of points.

A ``Jet`` stores the coefficients f_alpha = (d^alpha f / dx^alpha) / alpha!
for all multi-indices with |alpha| <= order in ``nvars`` real variables.
Each coefficient is a complex numpy array over a batch of evaluation points,
so one jet carries the value and all partial derivatives of a scalar field
at every point of the batch simultaneously.

Coefficients may be ``None``, meaning an exact structural zero; arithmetic
skips those, which matters because most fields depend on few variables.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

MAX_ORDER = 6


class DerivativeOrderError(Exception):
    """Raised when a jet of higher order than the supported cap is requested."""


def _check_order(order: int) -> None:
    if order > MAX_ORDER:
        raise DerivativeOrderError(
            f"jet order {order} exceeds the supported maximum {MAX_ORDER}; "
            "lower the number of nested derivatives"
        )
    if order < 0:
        raise ValueError("jet order must be >= 0")


@lru_cache(maxsize=None)
def indices(nvars: int, order: int) -> tuple[tuple[int, ...], ...]:
    """All multi-indices with |alpha| <= order, graded lexicographic."""

    def comps(total: int, slots: int):
        if slots == 1:
            yield (total,)
            return
        for head in range(total, -1, -1):
            for tail in comps(total - head, slots - 1):
                yield (head,) + tail

    out: list[tuple[int, ...]] = []
    for deg in range(order + 1):
        out.extend(comps(deg, nvars))
    return tuple(out)


@lru_cache(maxsize=None)
def positions(nvars: int, order: int) -> dict[tuple[int, ...], int]:
    return {idx: k for k, idx in enumerate(indices(nvars, order))}


@lru_cache(maxsize=None)
def _pair_table(nvars: int, order: int) -> tuple[tuple[int, int, int], ...]:
    """Triples (pa, pb, pout) with idx[pa] + idx[pb] = idx[pout]."""
    idxs = indices(nvars, order)
    pos = positions(nvars, order)
    triples = []
    for pa, a in enumerate(idxs):
        da = sum(a)
        for pb, b in enumerate(idxs):
            if da + sum(b) > order:
                continue
            c = tuple(x + y for x, y in zip(a, b))
            triples.append((pa, pb, pos[c]))
    return tuple(triples)


@lru_cache(maxsize=None)
def _deriv_table(nvars: int, order: int, var: int) -> tuple[tuple[int, int, int], ...]:
    """(pos_out, pos_in, factor) mapping coefficients of f to those of df/dx_var.

    Output jet has order-1; coefficient beta of the derivative equals
    (beta_var + 1) times coefficient (beta + e_var) of f.
    """
    out = []
    pos_in = positions(nvars, order)
    for po, beta in enumerate(indices(nvars, order - 1)):
        shifted = list(beta)
        shifted[var] += 1
        out.append((po, pos_in[tuple(shifted)], beta[var] + 1))
    return tuple(out)


@lru_cache(maxsize=None)
def _embed_table(nvars_small: int, nvars_big: int, order: int) -> tuple[tuple[int, int], ...]:
    pos_big = positions(nvars_big, order)
    pad = (0,) * (nvars_big - nvars_small)
    return tuple(
        (pos_big[idx + pad], ps)
        for ps, idx in enumerate(indices(nvars_small, order))
    )


@lru_cache(maxsize=None)
def _project_table(nvars_big: int, nvars_small: int, order: int) -> tuple[tuple[int, int], ...]:
    pos_small = positions(nvars_small, order)
    out = []
    for pb, idx in enumerate(indices(nvars_big, order)):
        if all(v == 0 for v in idx[nvars_small:]):
            out.append((pos_small[idx[:nvars_small]], pb))
    return tuple(out)


class Jet:
    __slots__ = ("nvars", "order", "coeffs")

    def __init__(self, nvars: int, order: int, coeffs: list):
        self.nvars = nvars
        self.order = order
        self.coeffs = coeffs

    # -- constructors -------------------------------------------------

    @staticmethod
    def const(values: np.ndarray, nvars: int, order: int) -> "Jet":
        _check_order(order)
        coeffs: list = [None] * len(indices(nvars, order))
        coeffs[0] = np.asarray(values, dtype=np.complex128)
        return Jet(nvars, order, coeffs)

    @staticmethod
    def variable(values: np.ndarray, var: int, nvars: int, order: int) -> "Jet":
        _check_order(order)
        idxs = indices(nvars, order)
        coeffs: list = [None] * len(idxs)
        vals = np.asarray(values, dtype=np.complex128)
        coeffs[0] = vals
        if order >= 1:
            e = tuple(1 if k == var else 0 for k in range(nvars))
            coeffs[positions(nvars, order)[e]] = np.ones_like(vals)
        return Jet(nvars, order, coeffs)

    @staticmethod
    def zero(nvars: int, order: int, batch: int) -> "Jet":
        coeffs: list = [None] * len(indices(nvars, order))
        coeffs[0] = np.zeros(batch, dtype=np.complex128)
        return Jet(nvars, order, coeffs)

    # -- basic accessors ----------------------------------------------

    @property
    def value(self) -> np.ndarray:
        c = self.coeffs[0]
        if c is None:
            return np.zeros(self.batch, dtype=np.complex128)
        return c

    @property
    def batch(self) -> int:
        for c in self.coeffs:
            if c is not None:
                return c.shape[0]
        return 0

    def coeff(self, alpha: tuple[int, ...]) -> np.ndarray:
        p = positions(self.nvars, self.order).get(tuple(alpha))
        if p is None:
            raise KeyError(f"multi-index {alpha} out of range for order {self.order}")
        c = self.coeffs[p]
        return c if c is not None else np.zeros(self.batch, dtype=np.complex128)

    def copy(self) -> "Jet":
        return Jet(self.nvars, self.order, list(self.coeffs))

    # -- ring operations ----------------------------------------------

    def __add__(self, other: "Jet") -> "Jet":
        out = list(self.coeffs)
        for k, c in enumerate(other.coeffs):
            if c is None:
                continue
            out[k] = c if out[k] is None else out[k] + c
        return Jet(self.nvars, self.order, out)

    def __sub__(self, other: "Jet") -> "Jet":
        return self + other.scale(-1.0)

    def __neg__(self) -> "Jet":
        return self.scale(-1.0)

    def scale(self, c: complex) -> "Jet":
        return Jet(
            self.nvars,
            self.order,
            [None if a is None else a * c for a in self.coeffs],
        )

    def shift(self, values: np.ndarray) -> "Jet":
        out = list(self.coeffs)
        out[0] = values if out[0] is None else out[0] + values
        return Jet(self.nvars, self.order, out)

    def __mul__(self, other: "Jet") -> "Jet":
        a, b = self.coeffs, other.coeffs
        out: list = [None] * len(a)
        for pa, pb, po in _pair_table(self.nvars, self.order):
            ca = a[pa]
            if ca is None:
                continue
            cb = b[pb]
            if cb is None:
                continue
            prod = ca * cb
            cur = out[po]
            out[po] = prod if cur is None else cur + prod
        return Jet(self.nvars, self.order, out)

    # -- conjugation and parts (valid because all jet variables are real) --

    def conj(self) -> "Jet":
        return Jet(
            self.nvars,
            self.order,
            [None if c is None else np.conj(c) for c in self.coeffs],
        )

    def real(self) -> "Jet":
        return Jet(
            self.nvars,
            self.order,
            [None if c is None else np.real(c) + 0j for c in self.coeffs],
        )

    def imag(self) -> "Jet":
        return Jet(
            self.nvars,
            self.order,
            [None if c is None else np.imag(c) + 0j for c in self.coeffs],
        )

    # -- composition with a univariate function ------------------------

    def compose(self, derivs: list[np.ndarray]) -> "Jet":
        """Jet of g(u) where u = self and derivs[k] = g^(k) at u's value.

        Chain rule through truncated Horner evaluation of the Taylor
        polynomial of g around the value of u.
        """
        m = self.order
        w = self.copy()
        w.coeffs = list(w.coeffs)
        w.coeffs[0] = None
        acc = Jet.const(np.asarray(derivs[m], dtype=np.complex128) / math.factorial(m),
                        self.nvars, self.order)
        for k in range(m - 1, -1, -1):
            acc = acc * w
            acc = acc.shift(np.asarray(derivs[k], dtype=np.complex128) / math.factorial(k))
        return acc

    def recip(self) -> "Jet":
        u0 = self.value
        derivs = []
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            inv = 1.0 / u0
            for k in range(self.order + 1):
                derivs.append(math.factorial(k) * ((-1.0) ** k) * inv ** (k + 1))
        return self.compose(derivs)

    def exp(self) -> "Jet":
        with np.errstate(over="ignore"):
            e = np.exp(self.value)
        return self.compose([e] * (self.order + 1))

    def sqrt(self) -> "Jet":
        u0 = self.value
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.sqrt(u0)
            derivs = [r]
            coef = 0.5
            for k in range(1, self.order + 1):
                derivs.append(coef * r / u0 ** k)
                coef *= 0.5 - k
        return self.compose(derivs)

    # -- calculus -------------------------------------------------------

    def deriv(self, var: int) -> "Jet":
        """Jet of order-1 holding the partial derivative along variable var."""
        if self.order == 0:
            raise DerivativeOrderError(
                "cannot extract a derivative from an order-0 jet"
            )
        out: list = [None] * len(indices(self.nvars, self.order - 1))
        for po, pi, fac in _deriv_table(self.nvars, self.order, var):
            c = self.coeffs[pi]
            if c is not None:
                out[po] = fac * c
        return Jet(self.nvars, self.order - 1, out)

    # -- variable-space plumbing ----------------------------------------

    def embed(self, nvars_big: int) -> "Jet":
        """View in a larger variable space (new variables appended, flat)."""
        out: list = [None] * len(indices(nvars_big, self.order))
        for pb, ps in _embed_table(self.nvars, nvars_big, self.order):
            out[pb] = self.coeffs[ps]
        return Jet(nvars_big, self.order, out)

    def project(self, nvars_small: int) -> "Jet":
        """Drop trailing variables, keeping coefficients flat in them."""
        out: list = [None] * len(indices(nvars_small, self.order))
        for ps, pb in _project_table(self.nvars, nvars_small, self.order):
            out[ps] = self.coeffs[pb]
        return Jet(nvars_small, self.order, out)

    def mask_where(self, mask: np.ndarray) -> "Jet":
        """Zero every coefficient at batch positions where mask is True."""
        out = []
        for c in self.coeffs:
            if c is None:
                out.append(None)
            else:
                out.append(np.where(mask, 0.0 + 0j, c))
        return Jet(self.nvars, self.order, out)
