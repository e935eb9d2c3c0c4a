"""Graded differential forms on a chart domain times a standard simplex.

A form is a sum of terms  c * dz_I ^ dzbar_J ^ dt_K  with I, J, K strictly
increasing index tuples (1-based; I, J over chart directions 1..n, K over
simplex directions 1..p) and c a scalar field in the chart and simplex
variables. Terms are stored in exactly that block order; all signs for
wedge products, exterior derivatives and fiber integration are generated
against it.

Fiber integration moves the full dt block leftmost (sign
(-1)^{p (|I|+|J|)}), integrates the coefficient over the unit simplex and
drops terms that do not contain every dt factor.
"""

from __future__ import annotations

from bisect import insort

import numpy as np

from . import fields as F
from .fields import Field, SimplexIntegral, fadd, fmul, fscale, is_zero


Key = tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]


def _merge_signed(a: tuple, b: tuple):
    """Merge sorted index tuples; sign = parity of crossings; None if dup."""
    out = []
    sign = 1
    i = j = 0
    while i < len(a) and j < len(b):
        if a[i] == b[j]:
            return None, 0
        if a[i] < b[j]:
            out.append(a[i])
            i += 1
        else:
            # b[j] jumps over the remaining entries of a
            if (len(a) - i) % 2 == 1:
                sign = -sign
            out.append(b[j])
            j += 1
    out.extend(a[i:])
    out.extend(b[j:])
    return tuple(out), sign


class GradedForm:
    __slots__ = ("n", "p", "terms")

    def __init__(self, n: int, p: int = 0, terms: dict | None = None):
        self.n = n
        self.p = p
        self.terms: dict[Key, Field] = {}
        if terms:
            for key, c in terms.items():
                self._accum(key, c)

    # -- construction helpers -----------------------------------------

    @staticmethod
    def scalar(field: Field, n: int, p: int = 0) -> "GradedForm":
        return GradedForm(n, p, {((), (), ()): field})

    @staticmethod
    def zero(n: int, p: int = 0) -> "GradedForm":
        return GradedForm(n, p)

    def _accum(self, key: Key, c: Field) -> None:
        if is_zero(c):
            return
        cur = self.terms.get(key)
        total = c if cur is None else fadd(cur, c)
        if is_zero(total):
            self.terms.pop(key, None)
        else:
            self.terms[key] = total

    # -- linear structure ----------------------------------------------

    def __add__(self, other: "GradedForm") -> "GradedForm":
        self._check(other)
        out = GradedForm(self.n, self.p, dict(self.terms))
        for key, c in other.terms.items():
            out._accum(key, c)
        return out

    def __sub__(self, other: "GradedForm") -> "GradedForm":
        return self + other.scale(-1.0)

    def scale(self, c: complex) -> "GradedForm":
        return GradedForm(self.n, self.p,
                          {k: fscale(c, v) for k, v in self.terms.items()})

    def mul_field(self, f: Field) -> "GradedForm":
        return GradedForm(self.n, self.p,
                          {k: fmul(f, v) for k, v in self.terms.items()})

    def gated_mul_field(self, switch: Field) -> "GradedForm":
        """switch * form with exact-zero masking where switch vanishes."""
        return GradedForm(self.n, self.p,
                          {k: F.gated_mul(switch, v)
                           for k, v in self.terms.items()})

    def gate_by(self, switch: Field) -> "GradedForm":
        return GradedForm(self.n, self.p,
                          {k: F.gated_by(switch, v)
                           for k, v in self.terms.items()})

    def _check(self, other: "GradedForm") -> None:
        if self.n != other.n or self.p != other.p:
            raise ValueError("forms live on different chart/simplex spaces")

    # -- multiplication --------------------------------------------------

    def wedge(self, other: "GradedForm") -> "GradedForm":
        self._check(other)
        out = GradedForm(self.n, self.p)
        for (i1, j1, k1), c1 in self.terms.items():
            w1 = len(j1) + len(k1)
            for (i2, j2, k2), c2 in other.terms.items():
                mi, si = _merge_signed(i1, i2)
                if mi is None:
                    continue
                mj, sj = _merge_signed(j1, j2)
                if mj is None:
                    continue
                mk, sk = _merge_signed(k1, k2)
                if mk is None:
                    continue
                # move dz_{i2} block past dzbar_{j1} dt_{k1}, then
                # dzbar_{j2} past dt_{k1}
                cross = len(i2) * w1 + len(j2) * len(k1)
                sign = si * sj * sk * ((-1) ** cross)
                out._accum((mi, mj, mk), fscale(sign, fmul(c1, c2)))
        return out

    # -- degrees ----------------------------------------------------------

    def degrees(self) -> set[int]:
        return {len(i) + len(j) + len(k) for i, j, k in self.terms}

    def bidegrees(self) -> set[tuple[int, int, int]]:
        return {(len(i), len(j), len(k)) for i, j, k in self.terms}

    def is_structurally_zero(self) -> bool:
        return not self.terms

    # -- calculus ----------------------------------------------------------

    def exterior_d(self, part: str = "all") -> "GradedForm":
        """Exterior derivative; part in {'all', 'dz', 'dzbar', 'dt'}."""
        out = GradedForm(self.n, self.p)
        for (I, J, K), c in self.terms.items():
            if part in ("all", "dz"):
                for i in range(1, self.n + 1):
                    if i in I:
                        continue
                    ci = F.d_dz(c, i - 1)
                    if is_zero(ci):
                        continue
                    before = sum(1 for x in I if x < i)
                    newI = list(I)
                    insort(newI, i)
                    out._accum((tuple(newI), J, K),
                               fscale((-1) ** before, ci))
            if part in ("all", "dzbar"):
                for j in range(1, self.n + 1):
                    if j in J:
                        continue
                    cj = F.d_dzbar(c, j - 1)
                    if is_zero(cj):
                        continue
                    before = sum(1 for x in J if x < j)
                    newJ = list(J)
                    insort(newJ, j)
                    out._accum((I, tuple(newJ), K),
                               fscale((-1) ** (len(I) + before), cj))
            if part in ("all", "dt") and self.p > 0:
                for k in range(1, self.p + 1):
                    if k in K:
                        continue
                    ck = c.d(("t", k))
                    if is_zero(ck):
                        continue
                    before = sum(1 for x in K if x < k)
                    newK = list(K)
                    insort(newK, k)
                    out._accum((I, J, tuple(newK)),
                               fscale((-1) ** (len(I) + len(J) + before), ck))
        return out

    def fiber_integrate(self, degree: int = 7) -> "GradedForm":
        """Integrate over the simplex factor; result is a chart form (p=0).

        Only terms containing the complete dt block survive. The dt block
        is moved leftmost, so a term c dz_I dzbar_J dt_{1..p} contributes
        (-1)^{p(|I|+|J|)} (int c dt) dz_I dzbar_J.
        """
        if self.p == 0:
            raise ValueError("form has no simplex factor")
        full = tuple(range(1, self.p + 1))
        out = GradedForm(self.n, 0)
        for (I, J, K), c in self.terms.items():
            if K != full:
                continue
            sign = (-1) ** (self.p * (len(I) + len(J)))
            out._accum((I, J, ()),
                       fscale(sign, SimplexIntegral(c, self.p, degree)))
        return out

    def with_simplex(self, p: int) -> "GradedForm":
        """Reinterpret a chart form on the chart-times-simplex space."""
        if self.p == p:
            return self
        if self.p != 0:
            raise ValueError("form already carries a different simplex factor")
        return GradedForm(self.n, p,
                          {(i, j, ()): c for (i, j, _), c in self.terms.items()})

    def drop_simplex(self) -> "GradedForm":
        """Forget an unused simplex factor (no dt terms may be present)."""
        if self.p == 0:
            return self
        out = GradedForm(self.n, 0)
        for (I, J, K), c in self.terms.items():
            if K:
                raise ValueError("form has dt components; integrate instead")
            if c.uses_t:
                raise ValueError("coefficient still depends on t")
            out._accum((I, J, ()), c)
        return out

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, ctx: F.EvalContext, order: int = 0) -> dict:
        return {key: c.ev(ctx, order).value for key, c in self.terms.items()}

    def coefficient(self, key: Key) -> Field:
        return self.terms.get(tuple(tuple(x) for x in key), F.ZERO)

    def top_density(self) -> Field:
        """Coefficient of the full volume key dz_1..n ^ dzbar_1..n, scaled to
        the real measure dx_1 dy_1 ... dx_n dy_n."""
        full = tuple(range(1, self.n + 1))
        c = self.terms.get((full, full, ()))
        if c is None:
            return F.ZERO
        return fscale(volume_factor(self.n), c)

    def max_abs(self, ctx: F.EvalContext) -> float:
        """Largest coefficient magnitude over the batch, all terms."""
        best = 0.0
        for c in self.terms.values():
            v = np.abs(c.ev(ctx, 0).value)
            if v.size:
                best = max(best, float(v.max()))
        return best

    def __repr__(self):
        keys = ", ".join(str(k) for k in list(self.terms)[:4])
        more = "..." if len(self.terms) > 4 else ""
        return f"GradedForm(n={self.n}, p={self.p}, terms=[{keys}{more}])"


def volume_factor(n: int) -> complex:
    """dz_1..dz_n ^ dzbar_1..dzbar_n = volume_factor * dx_1 dy_1 .. dx_n dy_n."""
    return ((-1) ** (n * (n - 1) // 2)) * (-2j) ** n


def dz(i: int, n: int, p: int = 0, coeff: Field = F.ONE) -> GradedForm:
    return GradedForm(n, p, {((i,), (), ()): coeff})


def dzbar(j: int, n: int, p: int = 0, coeff: Field = F.ONE) -> GradedForm:
    return GradedForm(n, p, {((), (j,), ()): coeff})


def dt(k: int, n: int, p: int = 0, coeff: Field = F.ONE) -> GradedForm:
    return GradedForm(n, p, {((), (), (k,)): coeff})


def d_of_field(f: Field, n: int, p: int = 0, part: str = "all") -> GradedForm:
    return GradedForm.scalar(f, n, p).exterior_d(part)


# ---------------------------------------------------------------------------
# matrices of forms (connection/curvature blocks, naive products)


def fm_zero(rows: int, cols: int, n: int, p: int = 0):
    return [[GradedForm.zero(n, p) for _ in range(cols)] for _ in range(rows)]


def fm_eye(rank: int, n: int, p: int = 0):
    out = fm_zero(rank, rank, n, p)
    for k in range(rank):
        out[k][k] = GradedForm.scalar(F.ONE, n, p)
    return out


def fm_from_fields(mat, n: int, p: int = 0):
    return [[GradedForm.scalar(f, n, p) for f in row] for row in mat]


def fm_shape(A):
    return len(A), len(A[0])


def fm_add(A, B):
    return [[a + b for a, b in zip(ra, rb)] for ra, rb in zip(A, B)]


def fm_sub(A, B):
    return [[a - b for a, b in zip(ra, rb)] for ra, rb in zip(A, B)]


def fm_scale(c, A):
    return [[a.scale(c) for a in row] for row in A]


def fm_wedge(A, B):
    ra, ca = fm_shape(A)
    rb, cb = fm_shape(B)
    if ca != rb:
        raise ValueError("form matrix shapes do not compose")
    out = []
    for i in range(ra):
        row = []
        for j in range(cb):
            acc = A[i][0].wedge(B[0][j])
            for k in range(1, ca):
                acc = acc + A[i][k].wedge(B[k][j])
            row.append(acc)
        out.append(row)
    return out


def fm_d(A, part: str = "all"):
    return [[a.exterior_d(part) for a in row] for row in A]


def fm_trace(A):
    acc = A[0][0]
    for k in range(1, len(A)):
        acc = acc + A[k][k]
    return acc


def fm_mul_field(f: Field, A):
    return [[a.mul_field(f) for a in row] for row in A]


def fm_gated_mul_field(switch: Field, A):
    return [[a.gated_mul_field(switch) for a in row] for row in A]


def fm_fiber_integrate(A, degree: int = 7):
    return [[a.fiber_integrate(degree) for a in row] for row in A]


def fm_with_simplex(A, p: int):
    return [[a.with_simplex(p) for a in row] for row in A]


def fm_max_abs(A, ctx) -> float:
    return max(a.max_abs(ctx) for row in A for a in row)


# ---------------------------------------------------------------------------
# graded pieces: vectors and endomorphisms with super signs


def _homogeneous_degree(forms) -> int:
    degs = set()
    for f in forms:
        degs |= f.degrees()
    if not degs:
        return 0
    if len(degs) > 1:
        raise ValueError(f"inhomogeneous form degrees {sorted(degs)}")
    return degs.pop()


class VectForm:
    """Form-valued section of one level of a graded bundle."""

    __slots__ = ("level", "comps")

    def __init__(self, level: int, comps):
        self.level = level
        self.comps = list(comps)

    @property
    def form_degree(self) -> int:
        return _homogeneous_degree(self.comps)

    def __add__(self, other):
        if other.level != self.level:
            raise ValueError("vector parts live on different levels")
        return VectForm(self.level, [a + b for a, b in zip(self.comps, other.comps)])

    def scale(self, c):
        return VectForm(self.level, [a.scale(c) for a in self.comps])


class EndForm:
    """Form-valued homomorphism E_source -> E_target with super grading.

    The endomorphism degree is target - source; the total degree adds the
    form degree. Application and composition carry the sign
    (-1)^{(endo degree of the left factor) * (form degree of the right)}.
    """

    __slots__ = ("target", "source", "mat")

    def __init__(self, target: int, source: int, mat):
        self.target = target
        self.source = source
        self.mat = mat

    @property
    def endo_degree(self) -> int:
        return self.target - self.source

    @property
    def form_degree(self) -> int:
        return _homogeneous_degree(f for row in self.mat for f in row)

    @property
    def total_degree(self) -> int:
        return self.endo_degree + self.form_degree

    def apply(self, xi: VectForm) -> VectForm:
        if xi.level != self.source:
            raise ValueError(
                f"endomorphism expects level {self.source}, got {xi.level}")
        sign = (-1) ** (self.endo_degree * xi.form_degree)
        rows = fm_wedge(self.mat, [[c] for c in xi.comps])
        return VectForm(self.target, [r[0].scale(sign) for r in rows])

    def compose(self, other: "EndForm") -> "EndForm":
        if other.target != self.source:
            raise ValueError("levels do not compose")
        sign = (-1) ** (self.endo_degree * other.form_degree)
        mat = fm_wedge(self.mat, other.mat)
        return EndForm(self.target, other.source, fm_scale(sign, mat))

    def add(self, other: "EndForm") -> "EndForm":
        if (other.target, other.source) != (self.target, self.source):
            raise ValueError("endomorphism blocks have different levels")
        return EndForm(self.target, self.source, fm_add(self.mat, other.mat))

    def scale(self, c) -> "EndForm":
        return EndForm(self.target, self.source, fm_scale(c, self.mat))
