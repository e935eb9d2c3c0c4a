"""Scalar fields as expression DAGs evaluated through jet arithmetic.

Fields are built once (cheap, symbolic) and evaluated on batches of points
through an :class:`EvalContext`. Evaluation returns a :class:`~.jets.Jet`,
so any field can be differentiated to bounded order in the chart variables
x_1, y_1, ..., x_n, y_n (z_k = x_k + i y_k) and, where active, in simplex
variables t_1..t_p.

Node identity (``id``) keys the per-context cache: shared sub-DAGs are
evaluated once per batch and order.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .jets import Jet, DerivativeOrderError  # noqa: F401  (re-exported)
from . import quadrature


class SingularPointError(Exception):
    """A minimal inverse was evaluated at a rank-drop point in strict mode."""


# ---------------------------------------------------------------------------
# evaluation context


def as_chart(z: np.ndarray) -> np.ndarray:
    """Complex points (m, n) -> interleaved real chart coordinates (m, 2n)."""
    z = np.atleast_2d(np.asarray(z, dtype=np.complex128))
    m, n = z.shape
    chart = np.empty((m, 2 * n), dtype=np.float64)
    chart[:, 0::2] = z.real
    chart[:, 1::2] = z.imag
    return chart


class EvalContext:
    """One batch of evaluation points plus caches.

    chart: (m, 2n) real coordinates.
    simplex: (m, p) simplex coordinates t_1..t_p, or None.
    eps: regularization parameter available to EpsPow leaves.
    strict: raise SingularPointError at rank drops instead of masking.
    """

    __slots__ = (
        "chart", "n", "simplex", "p", "eps", "strict",
        "cache", "chart_ctx", "_fibers",
    )

    def __init__(self, chart, n, simplex=None, eps=None, strict=False,
                 chart_ctx=None):
        self.chart = np.asarray(chart, dtype=np.float64)
        if self.chart.ndim != 2 or self.chart.shape[1] != 2 * n:
            raise ValueError("chart array must have shape (m, 2n)")
        self.n = n
        self.simplex = None if simplex is None else np.asarray(simplex, float)
        self.p = 0 if self.simplex is None else self.simplex.shape[1]
        self.eps = eps
        self.strict = strict
        self.cache: dict = {}
        self._fibers: dict = {}
        if self.p > 0:
            self.chart_ctx = chart_ctx or EvalContext(
                self.chart, n, None, eps=eps, strict=strict)
        else:
            self.chart_ctx = self

    @staticmethod
    def from_points(z, n=None, eps=None, strict=False) -> "EvalContext":
        z = np.asarray(z, dtype=np.complex128)
        if n is not None and z.ndim == 1:
            z = z.reshape(-1, n)
        z = np.atleast_2d(z)
        return EvalContext(as_chart(z), n if n is not None else z.shape[1],
                           eps=eps, strict=strict)

    @property
    def nvars(self) -> int:
        return 2 * self.n + self.p

    @property
    def batch(self) -> int:
        return self.chart.shape[0]

    def fiber(self, tvals: tuple) -> "EvalContext":
        """Sub-context over the same chart batch at fixed simplex point."""
        if self.p != 0:
            raise ValueError("nested simplex contexts are not supported")
        key = tvals
        sub = self._fibers.get(key)
        if sub is None:
            m = self.batch
            tarr = np.broadcast_to(
                np.asarray(tvals, float), (m, len(tvals))).copy()
            sub = EvalContext(self.chart, self.n, tarr, eps=self.eps,
                              strict=self.strict, chart_ctx=self)
            self._fibers[key] = sub
        return sub


# ---------------------------------------------------------------------------
# base node


class Field:
    __slots__ = ("uses_t", "_deriv_memo")

    def __init__(self, uses_t: bool):
        self.uses_t = uses_t
        self._deriv_memo: dict = {}

    def ev(self, ctx: EvalContext, order: int) -> Jet:
        # the node itself keys the cache; identity hash, and the strong
        # reference prevents id reuse of collected temporaries
        key = (self, order)
        hit = ctx.cache.get(key)
        if hit is not None:
            return hit
        if ctx.p > 0 and not self.uses_t:
            jet = self.ev(ctx.chart_ctx, order).embed(ctx.nvars)
        else:
            jet = self._ev(ctx, order)
        ctx.cache[key] = jet
        return jet

    def _ev(self, ctx: EvalContext, order: int) -> Jet:
        raise NotImplementedError

    def values(self, ctx: EvalContext) -> np.ndarray:
        return self.ev(ctx, 0).value

    # derivative field construction (memoized per node and direction)

    def d(self, var) -> "Field":
        memo = self._deriv_memo
        out = memo.get(var)
        if out is None:
            if var[0] == "t" and not self.uses_t:
                out = ZERO
            else:
                out = self._d(var)
            memo[var] = out
        return out

    def _d(self, var) -> "Field":
        return DerivNode(self, var)


def _var_index(var, ctx: EvalContext) -> int:
    kind, k = var
    if kind == "chart":
        return k
    if kind == "t":
        if ctx.p == 0:
            raise ValueError("simplex derivative outside a simplex context")
        return 2 * ctx.n + (k - 1)
    raise ValueError(f"unknown variable tag {var!r}")


# ---------------------------------------------------------------------------
# leaves


class Const(Field):
    __slots__ = ("val",)

    def __init__(self, val):
        super().__init__(False)
        self.val = complex(val)

    def _ev(self, ctx, order):
        return Jet.const(np.full(ctx.batch, self.val), ctx.nvars, order)

    def _d(self, var):
        return ZERO

    def __repr__(self):
        return f"Const({self.val})"


ZERO = Const(0.0)
ONE = Const(1.0)


class Coord(Field):
    """Real chart coordinate by flat index (0 -> x_1, 1 -> y_1, ...)."""

    __slots__ = ("i",)

    def __init__(self, i: int):
        super().__init__(False)
        self.i = i

    def _ev(self, ctx, order):
        return Jet.variable(ctx.chart[:, self.i], self.i, ctx.nvars, order)

    def _d(self, var):
        return ONE if var == ("chart", self.i) else ZERO


class ZVar(Field):
    """Complex coordinate z_{i+1} = x + i y (i is 0-based)."""

    __slots__ = ("i",)

    def __init__(self, i: int):
        super().__init__(False)
        self.i = i

    def _ev(self, ctx, order):
        from .jets import indices, positions
        x = ctx.chart[:, 2 * self.i]
        y = ctx.chart[:, 2 * self.i + 1]
        coeffs: list = [None] * len(indices(ctx.nvars, order))
        coeffs[0] = x + 1j * y
        if order >= 1:
            pos = positions(ctx.nvars, order)
            ex = tuple(1 if k == 2 * self.i else 0 for k in range(ctx.nvars))
            ey = tuple(1 if k == 2 * self.i + 1 else 0 for k in range(ctx.nvars))
            one = np.ones(ctx.batch, dtype=np.complex128)
            coeffs[pos[ex]] = one
            coeffs[pos[ey]] = 1j * one
        return Jet(ctx.nvars, order, coeffs)

    def _d(self, var):
        if var == ("chart", 2 * self.i):
            return ONE
        if var == ("chart", 2 * self.i + 1):
            return Const(1j)
        return ZERO


class ZBarVar(Field):
    __slots__ = ("i",)

    def __init__(self, i: int):
        super().__init__(False)
        self.i = i

    def _ev(self, ctx, order):
        return ZVar(self.i)._ev(ctx, order).conj()

    def _d(self, var):
        if var == ("chart", 2 * self.i):
            return ONE
        if var == ("chart", 2 * self.i + 1):
            return Const(-1j)
        return ZERO


class SimplexCoord(Field):
    """Barycentric-interior simplex coordinate t_j, j = 1..p (1-based)."""

    __slots__ = ("j",)

    def __init__(self, j: int):
        super().__init__(True)
        self.j = j

    def _ev(self, ctx, order):
        if ctx.p < self.j:
            raise ValueError(
                f"t_{self.j} evaluated in a context with p = {ctx.p}")
        var = 2 * ctx.n + (self.j - 1)
        return Jet.variable(ctx.simplex[:, self.j - 1], var, ctx.nvars, order)

    def _d(self, var):
        return ONE if var == ("t", self.j) else ZERO


class EpsPow(Field):
    """eps^k as a non-differentiated parameter from the context."""

    __slots__ = ("k",)

    def __init__(self, k: int):
        super().__init__(False)
        self.k = k

    def _ev(self, ctx, order):
        if ctx.eps is None:
            raise ValueError("field depends on eps but the context has none")
        return Jet.const(np.full(ctx.batch, ctx.eps ** self.k), ctx.nvars, order)

    def _d(self, var):
        return ZERO


# ---------------------------------------------------------------------------
# composite nodes


class Add(Field):
    __slots__ = ("children",)

    def __init__(self, children: tuple):
        super().__init__(any(c.uses_t for c in children))
        self.children = children

    def _ev(self, ctx, order):
        jets = [c.ev(ctx, order) for c in self.children]
        acc = jets[0]
        for j in jets[1:]:
            acc = acc + j
        return acc

    def _d(self, var):
        return fadd(*[c.d(var) for c in self.children])


class Mul(Field):
    __slots__ = ("a", "b")

    def __init__(self, a: Field, b: Field):
        super().__init__(a.uses_t or b.uses_t)
        self.a = a
        self.b = b

    def _ev(self, ctx, order):
        return self.a.ev(ctx, order) * self.b.ev(ctx, order)

    def _d(self, var):
        return fadd(fmul(self.a.d(var), self.b), fmul(self.a, self.b.d(var)))


class Scale(Field):
    __slots__ = ("c", "child")

    def __init__(self, c: complex, child: Field):
        super().__init__(child.uses_t)
        self.c = complex(c)
        self.child = child

    def _ev(self, ctx, order):
        return self.child.ev(ctx, order).scale(self.c)

    def _d(self, var):
        return fscale(self.c, self.child.d(var))


class ConjF(Field):
    __slots__ = ("child",)

    def __init__(self, child: Field):
        super().__init__(child.uses_t)
        self.child = child

    def _ev(self, ctx, order):
        return self.child.ev(ctx, order).conj()

    def _d(self, var):
        return fconj(self.child.d(var))


class RealF(Field):
    __slots__ = ("child",)

    def __init__(self, child: Field):
        super().__init__(child.uses_t)
        self.child = child

    def _ev(self, ctx, order):
        return self.child.ev(ctx, order).real()

    def _d(self, var):
        return RealF(self.child.d(var))


class Recip(Field):
    __slots__ = ("child",)

    def __init__(self, child: Field):
        super().__init__(child.uses_t)
        self.child = child

    def _ev(self, ctx, order):
        with np.errstate(all="ignore"):
            return self.child.ev(ctx, order).recip()

    # d(1/u) = -u' / u^2, sharing this node for 1/u

    def _d(self, var):
        return fscale(-1.0, fmul(self.child.d(var), fmul(self, self)))


class ExpF(Field):
    __slots__ = ("child",)

    def __init__(self, child: Field):
        super().__init__(child.uses_t)
        self.child = child

    def _ev(self, ctx, order):
        return self.child.ev(ctx, order).exp()

    def _d(self, var):
        return fmul(self.child.d(var), self)


class DerivNode(Field):
    """Fallback derivative: evaluate the child one order deeper."""

    __slots__ = ("child", "var")

    def __init__(self, child: Field, var):
        super().__init__(child.uses_t)
        self.child = child
        self.var = var

    def _ev(self, ctx, order):
        inner = self.child.ev(ctx, order + 1)
        return inner.deriv(_var_index(self.var, ctx))


class ZeroGate(Field):
    """payload masked to exactly 0 wherever switch evaluates to exactly 0.

    Used for products like chi * a and psi * gamma in which the left factor
    is identically zero (with all derivatives) on the closure of a region
    where the right factor may be singular. Masking the jet coefficients is
    exact there, so the generic derivative fallback stays valid.
    """

    __slots__ = ("switch", "payload")

    def __init__(self, switch: Field, payload: Field):
        super().__init__(switch.uses_t or payload.uses_t)
        self.switch = switch
        self.payload = payload

    def _ev(self, ctx, order):
        sval = self.switch.ev(ctx, 0).value
        mask = np.abs(sval) == 0.0
        with np.errstate(all="ignore"):
            jet = self.payload.ev(ctx, order)
        out = jet.mask_where(mask)
        bad = ~np.isfinite(out.value)
        if bad.any() and ctx.strict:
            raise SingularPointError(
                "gated product is non-finite at an unmasked point")
        return out


class SmoothStep(Field):
    """C^infinity step in (child - lo)/(hi - lo): 0 below lo, 1 above hi.

    Exactly 0 / exactly 1 outside the transition window, including all
    derivatives, which is what the support bookkeeping relies on.
    """

    __slots__ = ("child", "lo", "hi")

    def __init__(self, child: Field, lo: float, hi: float):
        super().__init__(child.uses_t)
        if not hi > lo:
            raise ValueError("smooth step needs hi > lo")
        self.child = child
        self.lo = float(lo)
        self.hi = float(hi)

    def _ev(self, ctx, order):
        u = self.child.ev(ctx, order).real()
        scale = 1.0 / (self.hi - self.lo)
        arg = (u.value.real - self.lo) * scale
        sd = _step_derivs(arg, order)
        derivs = [sd[k] * scale ** k for k in range(order + 1)]
        return u.compose(derivs)


def _step_derivs(x: np.ndarray, order: int) -> list:
    """Derivatives 0..order of the exp-based unit step at the points x."""
    x = np.asarray(x, dtype=np.float64)
    lo = x <= 0.0
    hi = x >= 1.0
    # clip so exp(-1/x) stays a normal float; the discarded tail is below
    # 1e-200 and indistinguishable from the exact 0/1 plateaus
    xm = np.clip(x, 0.002, 0.998)
    u = Jet.variable(xm.astype(np.complex128), 0, 1, order)
    r1 = u.recip().scale(-1.0).exp()
    r2 = (Jet.const(np.ones_like(xm, dtype=np.complex128), 1, order) - u)
    r2 = r2.recip().scale(-1.0).exp()
    s = r1 * (r1 + r2).recip()
    out = []
    for k in range(order + 1):
        c = s.coeffs[k]
        arr = (math.factorial(k) * c) if c is not None else np.zeros_like(xm, dtype=np.complex128)
        arr = np.where(lo, 0.0, arr)
        arr = np.where(hi, 1.0 if k == 0 else 0.0, arr)
        out.append(arr)
    return out


# ---------------------------------------------------------------------------
# folding constructors


def is_zero(f: Field) -> bool:
    return isinstance(f, Const) and f.val == 0


def is_one(f: Field) -> bool:
    return isinstance(f, Const) and f.val == 1


def fadd(*fs: Field) -> Field:
    flat: list[Field] = []
    const_acc = 0.0 + 0j
    for f in fs:
        if isinstance(f, Add):
            flat.extend(f.children)
        elif isinstance(f, Const):
            const_acc += f.val
        else:
            flat.append(f)
    if const_acc != 0:
        flat.append(Const(const_acc))
    if not flat:
        return ZERO
    if len(flat) == 1:
        return flat[0]
    return Add(tuple(flat))


def fmul(*fs: Field) -> Field:
    out: list[Field] = []
    const_acc = 1.0 + 0j
    for f in fs:
        if is_zero(f):
            return ZERO
        if isinstance(f, Const):
            const_acc *= f.val
        else:
            out.append(f)
    if not out:
        return Const(const_acc)
    acc = out[0]
    for f in out[1:]:
        acc = Mul(acc, f)
    if const_acc != 1:
        acc = fscale(const_acc, acc)
    return acc


def fscale(c: complex, f: Field) -> Field:
    c = complex(c)
    if c == 0 or is_zero(f):
        return ZERO
    if c == 1:
        return f
    if isinstance(f, Const):
        return Const(c * f.val)
    if isinstance(f, Scale):
        return fscale(c * f.c, f.child)
    return Scale(c, f)


def fneg(f: Field) -> Field:
    return fscale(-1.0, f)


def fsub(a: Field, b: Field) -> Field:
    return fadd(a, fneg(b))


def fconj(f: Field) -> Field:
    if isinstance(f, Const):
        return Const(np.conj(f.val))
    if isinstance(f, ConjF):
        return f.child
    if is_zero(f):
        return ZERO
    return ConjF(f)


def frecip(f: Field) -> Field:
    if isinstance(f, Const):
        return Const(1.0 / f.val)
    return Recip(f)


def gated_mul(switch: Field, payload: Field) -> Field:
    """switch * payload, forced to exact 0 wherever switch == 0."""
    if is_zero(switch) or is_zero(payload):
        return ZERO
    return ZeroGate(switch, fmul(switch, payload))


def gated_by(switch: Field, payload: Field) -> Field:
    """payload masked (not multiplied) by the vanishing locus of switch."""
    if is_zero(payload):
        return ZERO
    return ZeroGate(switch, payload)


def d_dz(f: Field, i: int) -> Field:
    """Holomorphic derivative d/dz_{i+1} (i is 0-based)."""
    dx = f.d(("chart", 2 * i))
    dy = f.d(("chart", 2 * i + 1))
    return fscale(0.5, fadd(dx, fscale(-1j, dy)))


def d_dzbar(f: Field, i: int) -> Field:
    dx = f.d(("chart", 2 * i))
    dy = f.d(("chart", 2 * i + 1))
    return fscale(0.5, fadd(dx, fscale(1j, dy)))


def d_dt(f: Field, j: int) -> Field:
    """Simplex derivative d/dt_j (j is 1-based)."""
    return f.d(("t", j))


def abs2(f: Field) -> Field:
    return RealF(fmul(f, fconj(f)))


# ---------------------------------------------------------------------------
# jet-matrix helpers (lists of lists of Jet)


def jm_shape(A):
    return len(A), len(A[0])


def jm_mul(A, B):
    ra, ca = jm_shape(A)
    rb, cb = jm_shape(B)
    if ca != rb:
        raise ValueError("jet matrix shape mismatch")
    out = []
    for i in range(ra):
        row = []
        for j in range(cb):
            acc = A[i][0] * B[0][j]
            for k in range(1, ca):
                acc = acc + A[i][k] * B[k][j]
            row.append(acc)
        out.append(row)
    return out


def jm_add(A, B):
    return [[a + b for a, b in zip(ra, rb)] for ra, rb in zip(A, B)]


def jm_scale(c, A):
    return [[a.scale(c) for a in row] for row in A]


def jm_conjT(A):
    r, c = jm_shape(A)
    return [[A[i][j].conj() for i in range(r)] for j in range(c)]


def jm_trace(A):
    acc = A[0][0]
    for k in range(1, len(A)):
        acc = acc + A[k][k]
    return acc


def jm_eye(size, ctx, order):
    one = Jet.const(np.ones(ctx.batch, dtype=np.complex128), ctx.nvars, order)
    zero = Jet.const(np.zeros(ctx.batch, dtype=np.complex128), ctx.nvars, order)
    return [[one if i == j else zero for j in range(size)] for i in range(size)]


def jm_inv(A, ctx, order):
    """Gauss-Jordan inverse of a small jet matrix.

    The pivot row is chosen once per column to maximize the worst-case
    magnitude over the batch; per-point pivoting is impossible with shared
    jet structure, which is fine for the well-conditioned metric and
    gluing matrices this is used on.
    """
    size = len(A)
    work = [list(row) for row in A]
    inv = jm_eye(size, ctx, order)
    with np.errstate(all="ignore"):
        for col in range(size):
            best, best_score = col, -1.0
            for r in range(col, size):
                score = float(np.min(np.abs(work[r][col].value)))
                if score > best_score:
                    best, best_score = r, score
            if best != col:
                work[col], work[best] = work[best], work[col]
                inv[col], inv[best] = inv[best], inv[col]
            piv = work[col][col].recip()
            work[col] = [piv * e for e in work[col]]
            inv[col] = [piv * e for e in inv[col]]
            for r in range(size):
                if r == col:
                    continue
                f = work[r][col]
                work[r] = [e - f * g for e, g in zip(work[r], work[col])]
                inv[r] = [e - f * g for e, g in zip(inv[r], inv[col])]
    return inv


# ---------------------------------------------------------------------------
# matrix-valued nodes


class MatrixNode:
    """Base for nodes that produce a whole jet matrix per evaluation."""

    def ev_mat(self, ctx: EvalContext, order: int):
        key = (self, order, "mat")
        hit = ctx.cache.get(key)
        if hit is None:
            hit = self._ev_mat(ctx, order)
            ctx.cache[key] = hit
        return hit

    def _ev_mat(self, ctx, order):
        raise NotImplementedError

    def entry(self, i: int, j: int) -> "MatrixEntry":
        return MatrixEntry(self, i, j)

    def entries(self):
        r, c = self.shape
        return [[self.entry(i, j) for j in range(c)] for i in range(r)]


class MatrixEntry(Field):
    __slots__ = ("node", "i", "j")

    def __init__(self, node: MatrixNode, i: int, j: int):
        super().__init__(getattr(node, "uses_t", False))
        self.node = node
        self.i = i
        self.j = j

    def _ev(self, ctx, order):
        return self.node.ev_mat(ctx, order)[self.i][self.j]


class FieldMatrixNode(MatrixNode):
    """Wrap a matrix of fields so matrix consumers can evaluate it."""

    def __init__(self, entries):
        self.fields = entries
        self.shape = (len(entries), len(entries[0]))

    def _ev_mat(self, ctx, order):
        return [[f.ev(ctx, order) for f in row] for row in self.fields]


class MatInverse(MatrixNode):
    def __init__(self, base: MatrixNode):
        self.base = base
        self.shape = base.shape
        self.uses_t = getattr(base, "uses_t", False)

    def _ev_mat(self, ctx, order):
        return jm_inv(self.base.ev_mat(ctx, order), ctx, order)


def _newton_elementary(traces, rho):
    """Elementary symmetric functions e_1..e_rho from power traces p_1..p_rho."""
    e = [None] * (rho + 1)
    for j in range(1, rho + 1):
        acc = None
        for i in range(1, j + 1):
            term = traces[i - 1] if j == i else e[j - i] * traces[i - 1]
            term = term.scale((-1.0) ** (i - 1))
            acc = term if acc is None else acc + term
        e[j] = acc.scale(1.0 / j)
    return e


class MinimalInverse(MatrixNode):
    """Metric minimal inverse sigma of a bundle map phi of generic rank rho.

    phi maps a rank-c trivial bundle into a rank-r one (matrix r x c of
    scalar fields); h_tgt and h_src are the hermitian metric matrices on
    target and source (None = standard). sigma = phi^* (phi phi^*)^+ with
    phi^* the metric adjoint; the pseudoinverse is evaluated through the
    rank-rho Cayley-Hamilton identity, so the whole node is smooth away
    from rank drops and jet-differentiable.
    """

    RANK_TOL = 1e-8

    def __init__(self, phi, rank: int, h_tgt=None, h_src=None):
        self.phi = phi  # matrix of fields, r x c
        self.rank = rank
        self.h_tgt = h_tgt
        self.h_src = h_src
        r, c = len(phi), len(phi[0])
        self.shape = (c, r)
        self.uses_t = any(f.uses_t for row in phi for f in row) or any(
            f.uses_t for h in (h_tgt, h_src) if h is not None
            for row in h.fields for f in row)

    def _ev_mat(self, ctx, order):
        r, c = len(self.phi), len(self.phi[0])
        if self.rank == 0:
            zero = Jet.const(np.zeros(ctx.batch, np.complex128), ctx.nvars, order)
            return [[zero for _ in range(r)] for _ in range(c)]
        with np.errstate(all="ignore"):
            A = [[f.ev(ctx, order) for f in row] for row in self.phi]
            Astar = jm_conjT(A)
            if self.h_tgt is not None:
                Astar = jm_mul(Astar, self.h_tgt.ev_mat(ctx, order))
            if self.h_src is not None:
                hs_inv = jm_inv(self.h_src.ev_mat(ctx, order), ctx, order)
                Astar = jm_mul(hs_inv, Astar)
            if r <= c:
                B = jm_mul(A, Astar)
            else:
                B = jm_mul(Astar, A)
            Bplus = self._pseudo(B, ctx, order)
            if r <= c:
                sigma = jm_mul(Astar, Bplus)
            else:
                sigma = jm_mul(Bplus, Astar)
        if ctx.strict:
            self._rank_check(A, ctx)
        return sigma

    def _pseudo(self, B, ctx, order):
        rho = self.rank
        size = len(B)
        powers = [B]
        for _ in range(rho - 1):
            powers.append(jm_mul(powers[-1], B))
        traces = [jm_trace(P) for P in powers]
        e = _newton_elementary(traces, rho)
        # C = (-1)^(rho+1) (sum_{i=0}^{rho-1} (-1)^i e_i B^{rho-1-i}) / e_rho
        acc = None
        for i in range(rho):
            k = rho - 1 - i
            mat = jm_eye(size, ctx, order) if k == 0 else powers[k - 1]
            if i > 0:
                mat = [[m * e[i] for m in row] for row in mat]
            if i % 2 == 1:
                mat = jm_scale(-1.0, mat)
            acc = mat if acc is None else jm_add(acc, mat)
        inv_erho = e[rho].recip()
        C = [[m * inv_erho for m in row] for row in acc]
        if rho % 2 == 0:
            C = jm_scale(-1.0, C)
        BC = jm_mul(B, C)
        return jm_mul(BC, C)

    def _rank_check(self, A, ctx):
        vals = np.stack(
            [np.stack([a.value for a in row], axis=-1) for row in A], axis=-2)
        s = np.linalg.svd(vals, compute_uv=False)
        top = s[..., 0]
        kept = s[..., self.rank - 1]
        bad = ~((kept > self.RANK_TOL * np.maximum(top, 1e-300)) & np.isfinite(top))
        if bad.any():
            k = int(np.argmax(bad))
            raise SingularPointError(
                f"bundle map drops below generic rank {self.rank} at batch "
                f"index {k} (singular values {s[k]})")


class SimplexIntegral(Field):
    """Integral over the standard p-simplex of a field in chart and t vars.

    Evaluates the child at the Grundmann-Moeller nodes of the simplex
    (t active as jet variables at fixed values, so d_t inside the child
    works) and accumulates weights; the result is a chart-only field.
    """

    __slots__ = ("child", "pdim", "degree")

    def __init__(self, child: Field, pdim: int, degree: int = 7):
        super().__init__(False)
        self.child = child
        self.pdim = pdim
        self.degree = degree

    def _ev(self, ctx, order):
        if ctx.p != 0:
            ctx = ctx.chart_ctx
        pts, wts = quadrature.simplex_rule(self.pdim, self.degree)
        acc = None
        for q in range(len(wts)):
            sub = ctx.fiber(tuple(pts[q]))
            jet = self.child.ev(sub, order).project(2 * ctx.n)
            jet = jet.scale(wts[q])
            acc = jet if acc is None else acc + jet
        return acc
