"""Bounded complexes of trivial bundles and their connection families.

A complex is E_N -> ... -> E_1 -> E_0 with polynomial (or smooth) maps
phi_k: E_k -> E_{k-1}, exact off some thin singular set Z. The module
provides:

* connections per level, curvature, per-level Chern factors det(I + X_k)
  with X_k = (i/2pi) Theta_k, and the mixed total class
  e(D) = prod_k det(I + X_k)^{(-1)^k} through a truncated Neumann inverse
  for the odd levels;
* minimal inverses sigma_k and the corrected families: for a resolution
  the endomorphism corrections a_k = sigma_k (D phi_k), for a foliation
  chain the corrections built from b and -(D phi_{k+1}) sigma_{k+1};
* cutoff regularization theta_k + chi * a_k with exact-zero gating so the
  singular locus never contaminates an evaluation;
* defect diagnostics (compatibility with the maps, the basic condition
  for foliations) used by validation and tests.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from . import fields as F
from . import forms as FM
from .fields import (
    EvalContext, Field, FieldMatrixNode, MinimalInverse, fadd, fmul, fscale,
    gated_mul)
from .forms import GradedForm, fm_add, fm_d, fm_eye, fm_from_fields, fm_scale, \
    fm_sub, fm_wedge, fm_zero

TWO_PI_I_INV = 1j / (2.0 * math.pi)   # the factor i/(2 pi) in X = i/(2pi) Theta

CHI_WINDOWS = {
    "default": (0.5, 2.0),
    "steep": (0.8, 1.25),
    "wide": (0.25, 4.0),
}


# ---------------------------------------------------------------------------
# complexes


class BundleComplex:
    """Trivial-bundle complex with maps phi_k: E_k -> E_{k-1}, k = 1..N.

    ranks[k] is the rank of E_k; maps[k-1] is the matrix of scalar fields
    for phi_k, shaped ranks[k-1] x ranks[k]. metrics[k], when given, is a
    FieldMatrixNode for the hermitian metric on E_k. map_ranks[k-1] is the
    generic rank of phi_k (estimated by sampling if not supplied).
    """

    def __init__(self, n: int, ranks, maps, metrics=None, map_ranks=None,
                 name: str = ""):
        self.n = n
        self.ranks = list(ranks)
        self.maps = list(maps)
        if len(self.maps) != len(self.ranks) - 1:
            raise ValueError("need exactly one map per adjacent level pair")
        for k, m in enumerate(self.maps, start=1):
            if m and (len(m) != self.ranks[k - 1] or
                      any(len(row) != self.ranks[k] for row in m)):
                raise ValueError(f"map {k} has the wrong shape")
        self.metrics = list(metrics) if metrics else [None] * len(self.ranks)
        self._map_ranks = list(map_ranks) if map_ranks else None
        self.name = name
        self._sigma_nodes: dict[int, MinimalInverse] = {}

    @property
    def length(self) -> int:
        return len(self.ranks) - 1

    def metric_node(self, level: int):
        h = self.metrics[level]
        if h is None or isinstance(h, FieldMatrixNode):
            return h
        return FieldMatrixNode(h)

    def map_rank(self, k: int) -> int:
        if self._map_ranks is None:
            self._map_ranks = [
                _generic_rank(self.maps[j - 1], self.n)
                for j in range(1, self.length + 1)
            ]
        return self._map_ranks[k - 1]

    def sigma(self, k: int) -> MinimalInverse:
        """Minimal-inverse node of phi_k (E_{k-1} -> E_k)."""
        node = self._sigma_nodes.get(k)
        if node is None:
            node = MinimalInverse(
                self.maps[k - 1], self.map_rank(k),
                h_tgt=self.metric_node(k - 1), h_src=self.metric_node(k))
            self._sigma_nodes[k] = node
        return node

    def composition_defect(self, ctx: EvalContext) -> float:
        """max |phi_k phi_{k+1}| over the batch; zero for a true complex."""
        worst = 0.0
        for k in range(1, self.length):
            a = fm_from_fields(self.maps[k - 1], self.n)
            b = fm_from_fields(self.maps[k], self.n)
            worst = max(worst, FM.fm_max_abs(fm_wedge(a, b), ctx))
        return worst


def _generic_rank(map_fields, n: int, seed: int = 1234) -> int:
    if not map_fields or not map_fields[0]:
        return 0
    rng = np.random.default_rng(seed)
    z = rng.uniform(0.2, 1.0, size=(32, n)) * np.exp(
        2j * np.pi * rng.uniform(size=(32, n)))
    ctx = EvalContext.from_points(z)
    vals = np.stack(
        [np.stack([f.values(ctx) for f in row], axis=-1) for row in map_fields],
        axis=-2)
    s = np.linalg.svd(vals, compute_uv=False)
    tol = s.max() * 1e-9 if s.size else 0.0
    return int((s > tol).sum(axis=-1).max())


# ---------------------------------------------------------------------------
# connections


class Connection:
    """One 1-form matrix theta_k per level of a complex (D = d + theta)."""

    def __init__(self, thetas, n: int, p: int = 0):
        self.thetas = list(thetas)
        self.n = n
        self.p = p

    @staticmethod
    def trivial(cx: BundleComplex, p: int = 0) -> "Connection":
        return Connection(
            [fm_zero(r, r, cx.n, p) for r in cx.ranks], cx.n, p)

    @staticmethod
    def from_metrics(cx: BundleComplex, p: int = 0) -> "Connection":
        """The metric-compatible (1,0) connection h^-1 (dz-part of dh)."""
        thetas = []
        for level, r in enumerate(cx.ranks):
            h = cx.metric_node(level)
            if h is None or r == 0:
                thetas.append(fm_zero(r, r, cx.n, p))
                continue
            hinv = F.MatInverse(h)
            hinv_forms = fm_from_fields(hinv.entries(), cx.n, p)
            dh = [[FM.GradedForm.scalar(f, cx.n, p).exterior_d("dz")
                   for f in row] for row in h.fields]
            thetas.append(fm_wedge(hinv_forms, dh))
        return Connection(thetas, cx.n, p)

    def level(self, k: int):
        return self.thetas[k]

    def add(self, corrections) -> "Connection":
        return Connection(
            [fm_add(t, a) for t, a in zip(self.thetas, corrections)],
            self.n, self.p)

    def with_simplex(self, p: int) -> "Connection":
        return Connection([FM.fm_with_simplex(t, p) for t in self.thetas],
                          self.n, p)


def interpolate_connections(conns, p: int | None = None) -> Connection:
    """t-weighted combination theta^0 + sum_j t_j (theta^j - theta^0).

    The result lives on chart x simplex with p = len(conns) - 1 (or the
    given p >= that), realizing the simplex family whose vertex j is the
    j-th input connection.
    """
    q = len(conns) - 1
    if p is None:
        p = q
    if p < q:
        raise ValueError("simplex dimension too small for the vertex count")
    base = conns[0].with_simplex(p)
    out = list(base.thetas)
    for j in range(1, q + 1):
        # identical vertex objects contribute nothing; skipping keeps the
        # family structurally t-free in that direction
        if conns[j] is conns[0]:
            continue
        tj = F.SimplexCoord(j)
        other = conns[j].with_simplex(p)
        for lvl in range(len(out)):
            diff = fm_sub(other.thetas[lvl], base.thetas[lvl])
            out[lvl] = fm_add(out[lvl], FM.fm_mul_field(tj, diff))
    return Connection(out, conns[0].n, p)


def curvature(theta, n: int, p: int = 0):
    """Theta = d theta + theta ^ theta for one level."""
    if not theta:
        return theta
    return fm_add(fm_d(theta), fm_wedge(theta, theta))


# ---------------------------------------------------------------------------
# Chern forms: per-level factors and the mixed total class


def _det_of_even_matrix(X, rows):
    """Determinant of the principal minor X[rows][rows]; entries are even
    forms, so plain permutation expansion applies."""
    n_, p_ = X[0][0].n, X[0][0].p
    acc = GradedForm.zero(n_, p_)
    for perm in itertools.permutations(range(len(rows))):
        sign = _perm_sign(perm)
        term = None
        for i, pi in enumerate(perm):
            f = X[rows[i]][rows[pi]]
            term = f if term is None else term.wedge(f)
        acc = acc + term.scale(sign)
    return acc


def _perm_sign(perm) -> int:
    sign = 1
    seen = [False] * len(perm)
    for start in range(len(perm)):
        if seen[start]:
            continue
        length = 0
        j = start
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def chern_factor(theta, n: int, p: int = 0, cap: int | None = None):
    """Chern vector [1, e_1, e_2, ...] of det(I + (i/2pi) Theta) for one
    level; entry j is the homogeneous 2j-form part."""
    rank = len(theta)
    if rank == 0:
        return [GradedForm.scalar(F.ONE, n, p)]
    Theta = curvature(theta, n, p)
    X = fm_scale(TWO_PI_I_INV, Theta)
    jmax = rank
    if cap is not None:
        jmax = min(jmax, cap // 2)
    out = [GradedForm.scalar(F.ONE, n, p)]
    for j in range(1, jmax + 1):
        acc = GradedForm.zero(n, p)
        for rows in itertools.combinations(range(rank), j):
            acc = acc + _det_of_even_matrix(X, rows)
        out.append(acc)
    return out


def cv_wedge(a, b, cap: int):
    """Product of chern vectors (lists of 2j-forms), capped at form degree."""
    jcap = cap // 2
    n_, p_ = a[0].n, a[0].p
    out = [GradedForm.zero(n_, p_) for _ in range(jcap + 1)]
    for i, ai in enumerate(a):
        if i > jcap:
            break
        for j, bj in enumerate(b):
            if i + j > jcap:
                break
            out[i + j] = out[i + j] + ai.wedge(bj)
    return out


def cv_inverse(a, cap: int):
    """(1 + u)^{-1} = sum (-u)^m with u = a - 1 nilpotent by degree."""
    jcap = cap // 2
    n_, p_ = a[0].n, a[0].p
    one = [GradedForm.scalar(F.ONE, n_, p_)] + [
        GradedForm.zero(n_, p_) for _ in range(jcap)]
    u = [GradedForm.zero(n_, p_)] + [
        (a[j] if j < len(a) else GradedForm.zero(n_, p_))
        for j in range(1, jcap + 1)]
    out = list(one)
    power = one
    sign = 1.0
    for _ in range(jcap):
        power = cv_wedge(power, u, cap)
        sign = -sign
        for j in range(jcap + 1):
            out[j] = out[j] + power[j].scale(sign)
    return out


def mixed_chern(cx: BundleComplex, conn: Connection, cap: int):
    """Chern vector of e(D) = prod_k det(I + X_k)^{(-1)^k}, capped."""
    total = None
    for level, theta in enumerate(conn.thetas):
        fac = chern_factor(theta, conn.n, conn.p, cap)
        if level % 2 == 1:
            fac = cv_inverse(fac, cap)
        total = fac if total is None else cv_wedge(total, fac, cap)
    return total


class SymmetricPolynomial:
    """Polynomial in the mixed classes e_1, e_2, ... as wedge monomials."""

    def __init__(self, monomials):
        # monomials: list of (coefficient, tuple of e-indices)
        self.monomials = [(complex(c), tuple(sorted(ix))) for c, ix in monomials]
        if not self.monomials:
            raise ValueError("empty symmetric polynomial")

    @property
    def degree(self) -> int:
        return max(sum(ix) for _, ix in self.monomials)

    def __str__(self) -> str:
        parts = []
        for c, ixs in self.monomials:
            coeff = f"{c.real:g}" if c.imag == 0 else f"({c:g})"
            body = "*".join(f"e{i}" for i in ixs)
            if not body:
                parts.append(coeff)
            elif coeff in ("1", "+1"):
                parts.append(body)
            elif coeff == "-1":
                parts.append(f"-{body}")
            else:
                parts.append(f"{coeff}*{body}")
        return " + ".join(parts).replace("+ -", "- ")

    @staticmethod
    def parse(src: str) -> "SymmetricPolynomial":
        """Parse strings like 'e1^2 + 2*e2 - 0.5*e1*e3'."""
        s = src.replace(" ", "")
        if not s:
            raise ValueError("empty symmetric polynomial")
        terms = []
        cur = ""
        for ch in s:
            if ch in "+-" and cur and cur[-1] not in "eE^*+-":
                terms.append(cur)
                cur = ch
            else:
                cur += ch
        terms.append(cur)
        monos = []
        for t in terms:
            coeff = 1.0
            sign = 1.0
            while t and t[0] in "+-":
                if t[0] == "-":
                    sign = -sign
                t = t[1:]
            parts = t.split("*")
            ixs: list[int] = []
            for part in parts:
                if not part:
                    continue
                if part[0] in "eE":
                    if "^" in part:
                        base, power = part.split("^")
                        ixs.extend([int(base[1:])] * int(power))
                    else:
                        ixs.append(int(part[1:]))
                else:
                    coeff *= float(part)
            monos.append((sign * coeff, tuple(ixs)))
        return SymmetricPolynomial(monos)

    def of_chern_vector(self, cv, n: int, p: int = 0) -> GradedForm:
        out = GradedForm.zero(n, p)
        for coeff, ixs in self.monomials:
            if not ixs:
                out = out + GradedForm.scalar(F.Const(coeff), n, p)
                continue
            term = None
            ok = True
            for ix in ixs:
                if ix >= len(cv):
                    ok = False
                    break
                term = cv[ix] if term is None else term.wedge(cv[ix])
            if ok and term is not None:
                out = out + term.scale(coeff)
        return out


def phi_form(cx: BundleComplex, conn: Connection, phi: SymmetricPolynomial,
             extra_cap: int | None = None) -> GradedForm:
    """The form Phi-hat(e_1, ..., e_l) of the mixed class of (cx, conn)."""
    cap = 2 * phi.degree if extra_cap is None else extra_cap
    cap = min(cap, 2 * conn.n + conn.p)
    cv = mixed_chern(cx, conn, cap)
    return phi.of_chern_vector(cv, conn.n, conn.p)


# ---------------------------------------------------------------------------
# corrected families


def covariant_map_derivative(cx: BundleComplex, conn: Connection, k: int):
    """D phi_k = d phi_k + theta_{k-1} phi_k - phi_k theta_k (matrices of
    1-forms in plain products)."""
    phi = fm_from_fields(cx.maps[k - 1], cx.n, conn.p)
    out = fm_d(phi)
    th_t = conn.thetas[k - 1]
    th_s = conn.thetas[k]
    if th_t:
        out = fm_add(out, fm_wedge(th_t, phi))
    if th_s:
        out = fm_sub(out, fm_wedge(phi, th_s))
    return out


def sigma_forms(cx: BundleComplex, k: int, p: int = 0):
    return fm_from_fields(cx.sigma(k).entries(), cx.n, p)


def sheaf_corrections(cx: BundleComplex, conn: Connection):
    """Per-level endomorphism 1-forms a_k = sigma_k (D phi_k), a_0 = 0."""
    out = [fm_zero(cx.ranks[0], cx.ranks[0], cx.n, conn.p)]
    for k in range(1, cx.length + 1):
        dphi = covariant_map_derivative(cx, conn, k)
        sig = sigma_forms(cx, k, conn.p)
        out.append(fm_wedge(sig, dphi))
    return out


def foliation_b_matrix(cx: BundleComplex, conn: Connection):
    """The negated swap b of A = (D phi_1) sigma_1: entry (j, k) of b is
    -sum_m (coefficient of dz_k in A[j][m]) dz_m, using only dz parts.

    The sign is forced by the basic condition on the induced quotient
    connection: contracting b with a leaf generator v must give minus the
    covariant Jacobian of v on the transverse complement, so that
    i(v) D (proj w) = proj [v, w] holds for every frame field w, not just
    tangent ones. The positive swap satisfies i(v) swap(A) w = i(w) A v
    exactly, hence the minus."""
    n = cx.n
    r0 = cx.ranks[0]
    if r0 != n:
        raise ValueError(
            "the foliation construction needs E_0 of rank n (tangent frame)")
    dphi = covariant_map_derivative(cx, conn, 1)
    sig = sigma_forms(cx, 1, conn.p)
    A = fm_wedge(dphi, sig)
    b = fm_zero(r0, r0, n, conn.p)
    for j in range(r0):
        for k in range(r0):
            terms = {}
            for m in range(r0):
                c = A[j][m].terms.get(((k + 1,), (), ()))
                if c is not None:
                    c = fscale(-1.0, c)
                    key = ((m + 1,), (), ())
                    terms[key] = fadd(terms[key], c) if key in terms else c
            b[j][k] = GradedForm(n, conn.p, terms)
    return b


def foliation_corrections(cx: BundleComplex, conn: Connection):
    """a_0 = b (I - phi_1 sigma_1) - (D phi_1) sigma_1;
    a_k = -(D phi_{k+1}) sigma_{k+1} for k = 1..N-1; a_N = 0."""
    n, p = cx.n, conn.p
    b = foliation_b_matrix(cx, conn)
    phi1 = fm_from_fields(cx.maps[0], n, p)
    sig1 = sigma_forms(cx, 1, p)
    proj = fm_sub(fm_eye(cx.ranks[0], n, p), fm_wedge(phi1, sig1))
    dphi1 = covariant_map_derivative(cx, conn, 1)
    a0 = fm_sub(fm_wedge(b, proj), fm_wedge(dphi1, sig1))
    out = [a0]
    for k in range(1, cx.length):
        dphi = covariant_map_derivative(cx, conn, k + 1)
        sig = sigma_forms(cx, k + 1, p)
        out.append(fm_scale(-1.0, fm_wedge(dphi, sig)))
    out.append(fm_zero(cx.ranks[cx.length], cx.ranks[cx.length], n, p))
    return out


def corrected_connection(cx: BundleComplex, conn: Connection,
                         kind: str = "sheaf") -> Connection:
    corr = (sheaf_corrections(cx, conn) if kind == "sheaf"
            else foliation_corrections(cx, conn))
    return conn.add(corr)


def regularized_connection(cx: BundleComplex, conn: Connection, chi: Field,
                           kind: str = "sheaf") -> Connection:
    """theta_k + chi a_k with exact-zero gating on the vanishing set of chi."""
    corr = (sheaf_corrections(cx, conn) if kind == "sheaf"
            else foliation_corrections(cx, conn))
    gated = [FM.fm_gated_mul_field(chi, a) for a in corr]
    return conn.add(gated)


def cutoff_field(s_fields, lo: float = 0.5, hi: float = 2.0) -> Field:
    """chi(|s|^2 / eps) for section components s (single-chart version)."""
    u = F.ZERO
    for s in s_fields:
        u = fadd(u, F.abs2(s))
    return F.SmoothStep(fmul(u, F.EpsPow(-1)), lo, hi)


# ---------------------------------------------------------------------------
# defect diagnostics


def compatibility_defect(cx: BundleComplex, conn: Connection,
                         ctx: EvalContext) -> float:
    """max over levels and points of |(d + theta) phi - phi theta|."""
    worst = 0.0
    for k in range(1, cx.length + 1):
        dphi = covariant_map_derivative(cx, conn, k)
        worst = max(worst, FM.fm_max_abs(dphi, ctx))
    return worst


def basic_defect(cx: BundleComplex, conn: Connection, u_fields, v_fields,
                 ctx: EvalContext) -> float:
    """Defect of the basic condition for a foliation family on E_0:

    (I - phi_1 sigma_1) ( i(u) D v - [u, v] )

    with i(u) contracting only dz components and [u, v] the holomorphic
    bracket. Both u and v are length-n lists of fields.
    """
    n, p = cx.n, conn.p
    theta0 = conn.thetas[0]
    # D v = dv + theta0 v, contracted with u over dz parts
    contracted = []
    for j in range(n):
        dv = FM.d_of_field(v_fields[j], n, p, "dz")
        row = dv
        for k in range(n):
            row = row + theta0[j][k].mul_field(v_fields[k])
        acc = F.ZERO
        for m in range(n):
            c = row.terms.get(((m + 1,), (), ()))
            if c is not None:
                acc = fadd(acc, fmul(u_fields[m], c))
        contracted.append(acc)
    # holomorphic bracket
    bracket = []
    for j in range(n):
        acc = F.ZERO
        for m in range(n):
            acc = fadd(acc,
                       fmul(u_fields[m], F.d_dz(v_fields[j], m)),
                       fscale(-1.0, fmul(v_fields[m], F.d_dz(u_fields[j], m))))
        bracket.append(acc)
    diff = [fadd(c, fscale(-1.0, b)) for c, b in zip(contracted, bracket)]
    # project off the image of phi_1
    phi1 = fm_from_fields(cx.maps[0], n, p)
    sig1 = sigma_forms(cx, 1, p)
    proj = fm_sub(fm_eye(cx.ranks[0], n, p), fm_wedge(phi1, sig1))
    worst = 0.0
    for j in range(n):
        acc = GradedForm.zero(n, p)
        for k in range(n):
            acc = acc + proj[j][k].mul_field(diff[k])
        worst = max(worst, acc.max_abs(ctx))
    return worst
