"""Pairings of regularized classes against test forms, and their limits.

The current-level layer: compactly supported test forms, an adaptive
quadrature that resolves the cutoff transition band when pairing a
regularized global form against a test form, ladders of pairings over
decreasing regulator scales, extrapolation of a ladder to its limit by
fitting value + coeff * eps^rate, and independent oracles (point
residues of separable vector fields over torus contours, hyperplane
slice pairings, pointwise vanishing probes) used to cross-check the
pipeline without sharing any of its code paths.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import fields as F
from . import forms as FM
from .cechgreen import SimplicialFamily, transgression
from .complexes import SymmetricPolynomial, phi_form
from .fields import EvalContext, Field, fadd, fmul, fsub
from .forms import GradedForm
from .quadrature import box_rule


# ---------------------------------------------------------------------------
# test forms


def bump_field(lo, hi, margin: float = 0.25) -> Field:
    """Plateau bump: exactly 1 on the core of the box, exactly 0 outside.

    Each axis rises over [lo, lo + m] and falls over [hi - m, hi] with
    m = margin * side, so the bump is smooth with all derivatives zero
    on the boundary.
    """
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    factors = []
    for a in range(lo.size):
        m = margin * (hi[a] - lo[a])
        factors.append(F.SmoothStep(F.Coord(a), lo[a], lo[a] + m))
        factors.append(fsub(
            F.ONE, F.SmoothStep(F.Coord(a), hi[a] - m, hi[a])))
    return fmul(*factors)


class TestForm:
    """Compactly supported smooth test form: plateau bump times a form.

    The stored form is already multiplied by the bump and gated to exact
    zeros outside the support box, so it can be paired, differentiated,
    and evaluated anywhere.
    """

    def __init__(self, graded: GradedForm, lo, hi, margin: float = 0.25):
        self.lo = np.asarray(lo, float)
        self.hi = np.asarray(hi, float)
        if self.lo.size != 2 * graded.n or self.hi.size != 2 * graded.n:
            raise ValueError("support bounds must be 2n-vectors")
        self.margin = margin
        self.bump = bump_field(self.lo, self.hi, margin)
        self.form = graded.gated_mul_field(self.bump)
        self.n = graded.n

    @staticmethod
    def scalar(n: int, lo, hi, coeff: Field = F.ONE,
               margin: float = 0.25) -> "TestForm":
        return TestForm(GradedForm.scalar(coeff, n), lo, hi, margin)

    def d(self) -> GradedForm:
        return self.form.exterior_d()

    def value_at(self, z) -> np.ndarray:
        """Scalar (0,0)-part values at the given points."""
        ctx = EvalContext.from_points(np.asarray(z, complex), n=self.n)
        return self.form.coefficient(((), (), ())).values(ctx)


# ---------------------------------------------------------------------------
# adaptive pairing quadrature


@dataclass
class PairingRule:
    """Knobs for the band-resolving adaptive quadrature."""
    npts: int = 4            # Gauss-Legendre points per axis on each cell
    coarse: int = 3          # comparison rule for shell-cell error estimates
    axis_depth: int = 6      # max halvings per axis
    pad: float = 1.6         # safety factor widening the refinement band
    chunk: int = 4096        # evaluation batch size
    base_splits: int = 2     # uniform halvings per axis before band splits
    max_cells: int = 60000   # hard budget; splitting stops once exceeded


@dataclass
class PairingResult:
    value: complex
    error: float
    points: int
    cells: int
    shell_cells: int


def _probe_points(lo, hi):
    corners = np.array(list(itertools.product(*zip(lo, hi))))
    quarters = np.array(list(itertools.product(
        *zip(0.75 * lo + 0.25 * hi, 0.25 * lo + 0.75 * hi))))
    center = 0.5 * (lo + hi)
    return np.vstack([corners, quarters, center]), len(corners)


def _adaptive_leaves(s2_fields, lo, hi, eps: float, window, rule: PairingRule):
    """Dyadic cells refined where some chart's |s|^2 straddles the band."""
    band_lo = window[0] * eps / rule.pad
    band_hi = window[1] * eps * rule.pad
    dim = lo.size
    min_splits = rule.base_splits * dim
    leaves = []
    stack = [(np.asarray(lo, float), np.asarray(hi, float),
              0, np.zeros(dim, int))]
    while stack:
        clo, chi, depth, counts = stack.pop()
        probes, ncorner = _probe_points(clo, chi)
        z = probes[:, 0::2] + 1j * probes[:, 1::2]
        ctx = EvalContext.from_points(z, n=z.shape[1])
        vals = [np.abs(s2.values(ctx).real) for s2 in s2_fields]
        # pad the probe range by its own spread: probes can miss interior
        # dips, so a cell only counts as band-free once the spread bound
        # proves the band cannot hide inside it
        straddle = False
        for v in vals:
            sp = float(v.max() - v.min())
            if sp <= 1e-12 * max(1.0, band_hi):
                continue
            if v.min() - sp <= band_hi and v.max() + sp >= band_lo:
                straddle = True
                break
        allowed = [a for a in range(dim) if counts[a] < rule.axis_depth]
        axis = None
        if allowed and (depth < min_splits or straddle):
            if depth < min_splits:
                axis = allowed[depth % len(allowed)]
            else:
                # largest |s|^2 swing along an axis; axes the band does not
                # vary over are never split, so tube-shaped bands stay cheap
                cubes = [v[:ncorner].reshape((2,) * dim) for v in vals]
                floor = 1e-6 * max(1.0, band_hi)
                best = floor
                for a in allowed:
                    swing = max(float(np.abs(np.diff(cv, axis=a)).max())
                                for cv in cubes)
                    if swing > best:
                        best, axis = swing, a
        if axis is not None and len(leaves) + len(stack) < rule.max_cells:
            mid = 0.5 * (clo[axis] + chi[axis])
            nc = counts.copy()
            nc[axis] += 1
            left_hi = chi.copy()
            left_hi[axis] = mid
            right_lo = clo.copy()
            right_lo[axis] = mid
            stack.append((clo, left_hi, depth + 1, nc))
            stack.append((right_lo, chi, depth + 1, nc))
        else:
            leaves.append((clo, chi, bool(straddle)))
    return leaves


def _integrate_leaves(density: Field, cells, npts: int, eps: float, n: int,
                      chunk: int):
    """Tensor rule on each cell, evaluated in streamed batches of whole
    cells; returns the grand total, per-cell totals, and the point count."""
    total = 0j
    per = np.zeros(len(cells), complex)
    buf_p, buf_w, buf_s = [], [], []
    size = 0
    npoints = 0

    def flush():
        nonlocal total, size
        if not buf_p:
            return
        pts = np.vstack(buf_p)
        wts = np.concatenate(buf_w)
        z = pts[:, 0::2] + 1j * pts[:, 1::2]
        ctx = EvalContext.from_points(z, n=n, eps=eps)
        vals = density.values(ctx) * wts
        total += complex(vals.sum())
        for i, s, e in buf_s:
            per[i] += vals[s:e].sum()
        buf_p.clear()
        buf_w.clear()
        buf_s.clear()
        size = 0

    for i, (clo, chi) in enumerate(cells):
        p, w = box_rule(clo, chi, npts)
        buf_s.append((i, size, size + len(w)))
        buf_p.append(p)
        buf_w.append(w)
        size += len(w)
        npoints += len(w)
        if size >= chunk:
            flush()
    flush()
    return total, per, npoints


def pair(global_form: GradedForm, test: TestForm, eps: float, sections,
         window=(0.5, 2.0), rule: PairingRule | None = None) -> PairingResult:
    """Integrate (global_form ^ test) over the test support at one eps.

    sections: one list of cutoff section fields per chart; the quadrature
    refines every cell whose |s|^2 range straddles the cutoff window of
    some chart, integrates leaves with a tensor Gauss-Legendre rule, and
    reports a shell-cell error estimate from a coarser comparison rule.
    """
    rule = rule or PairingRule()
    n = test.n
    density = global_form.wedge(test.form).top_density()
    s2_fields = [fadd(*[F.abs2(s) for s in secs]) for secs in sections]
    leaves = _adaptive_leaves(s2_fields, test.lo, test.hi, eps, window, rule)

    cells = [(clo, chi) for clo, chi, _ in leaves]
    total, per_fine, npoints = _integrate_leaves(
        density, cells, rule.npts, eps, n, rule.chunk)
    err = 0.0
    shell_idx = [i for i, (_, _, sh) in enumerate(leaves) if sh]
    if shell_idx:
        coarse = rule.coarse if rule.coarse != rule.npts \
            else max(2, rule.npts - 1)
        _, per_coarse, more = _integrate_leaves(
            density, [cells[i] for i in shell_idx], coarse, eps, n,
            rule.chunk)
        npoints += more
        gap = sum(abs(per_fine[i] - per_coarse[k])
                  for k, i in enumerate(shell_idx))
        err = 0.25 * gap  # both rules converge; the gap overstates fine error
    return PairingResult(complex(total), err, npoints, len(leaves),
                         len(shell_idx))


# ---------------------------------------------------------------------------
# ladders and extrapolation


@dataclass
class LadderRow:
    eps: float
    value: complex
    error: float
    points: int
    cells: int


def run_ladder(pair_fn, eps_values) -> list:
    rows = []
    for e in eps_values:
        r = pair_fn(e)
        rows.append(LadderRow(e, r.value, r.error, r.points, r.cells))
    return rows


@dataclass
class Extrapolation:
    value: complex
    rate: float | None
    coeff: complex
    residual: float
    uncertainty: float
    flag: str


def _fit_at_rate(eps, vals, a):
    design = np.stack([np.ones_like(eps), eps ** a], axis=1)
    sol, *_ = np.linalg.lstsq(design, vals, rcond=None)
    resid = np.abs(design @ sol - vals).max()
    return sol[0], sol[1], resid


def extrapolate(eps_values, values, errors=None,
                rate_bounds=(0.05, 3.0)) -> Extrapolation:
    """Fit value + coeff * eps^rate and report the eps -> 0 limit.

    A flat ladder short-circuits to its mean, and a ladder whose spread
    sits inside the reported quadrature errors returns an error-weighted
    mean (fitting a rate to noise proves nothing). A ladder whose
    distance to the fitted limit fails to shrink with eps is flagged and
    gets a widened uncertainty instead of a confident one.
    """
    eps = np.asarray(eps_values, float)
    order = np.argsort(-eps)
    eps = eps[order]
    vals = np.asarray(values, complex)[order]
    if len(eps) < 2:
        return Extrapolation(complex(vals[-1]), None, 0.0, 0.0,
                             abs(vals[-1]) * 0.5 + 1e-12, "short")
    scale = max(np.abs(vals).max(), 1e-30)
    spread = np.abs(vals - vals.mean()).max()
    if spread < 1e-10 * max(1.0, scale):
        return Extrapolation(complex(vals.mean()), None, 0.0, spread,
                             spread + 1e-14, "constant")
    if errors is not None:
        errs = np.asarray(errors, float)[order]
        wmean = np.average(vals, weights=1.0 / (errs + 1e-30) ** 2)
        if np.abs(vals - wmean).max() <= 2.0 * errs.max():
            unc = float(np.abs(vals - wmean).max() + errs.mean())
            return Extrapolation(complex(wmean), None, 0.0,
                                 float(np.abs(vals - wmean).max()),
                                 unc, "flat")
    if len(eps) < 4:
        p0, c, resid = _fit_at_rate(eps, vals, 1.0)
        return Extrapolation(complex(p0), 1.0, complex(c), resid,
                             resid + abs(vals[-1] - p0), "short")
    grid = np.geomspace(rate_bounds[0], rate_bounds[1], 40)
    resids = [_fit_at_rate(eps, vals, a)[2] for a in grid]
    k = int(np.argmin(resids))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, len(grid) - 1)]
    gr = 0.5 * (math.sqrt(5.0) - 1.0)
    x1 = hi - gr * (hi - lo)
    x2 = lo + gr * (hi - lo)
    f1 = _fit_at_rate(eps, vals, x1)[2]
    f2 = _fit_at_rate(eps, vals, x2)[2]
    for _ in range(48):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - gr * (hi - lo)
            f1 = _fit_at_rate(eps, vals, x1)[2]
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + gr * (hi - lo)
            f2 = _fit_at_rate(eps, vals, x2)[2]
    a = 0.5 * (lo + hi)
    p0, c, resid = _fit_at_rate(eps, vals, a)
    dist = np.abs(vals - p0)
    shrinking = all(dist[i + 1] <= dist[i] * 1.1 + 1e-12 * max(1.0, scale)
                    for i in range(len(dist) - 1))
    at_bound = (a < rate_bounds[0] * 1.2) or (a > rate_bounds[1] * 0.98)
    unc = resid + 0.25 * abs(vals[-1] - p0)
    flag = "ok"
    if not shrinking:
        unc = resid + abs(vals[-1] - p0) + np.abs(np.diff(vals)).max()
        flag = "nonmonotone"
    if at_bound or resid > 0.02 * max(1.0, scale):
        # the power model does not describe the ladder; do not pretend it does
        unc = max(unc, float(dist.max()))
        flag = "misfit" if flag == "ok" else flag
    return Extrapolation(complex(p0), float(a), complex(c), float(resid),
                         float(unc), flag)


# ---------------------------------------------------------------------------
# current pairings through a glued family


@dataclass
class ResidueReport:
    phi: str
    rows: list
    extrapolation: Extrapolation

    @property
    def value(self) -> complex:
        return self.extrapolation.value


def residue_pairing(fam: SimplicialFamily, phi, test: TestForm, eps_values,
                    qmax: int | None = None,
                    rule: PairingRule | None = None) -> ResidueReport:
    """Ladder of pairings <Phi_eps(D), test> and its extrapolated limit.

    The global form is built once; the regulator scale enters only at
    evaluation time, so each rung reuses the same symbolic form.
    """
    if isinstance(phi, str):
        phi = SymmetricPolynomial.parse(phi)
    glob = fam.global_form(phi, qmax=qmax)
    sections = [cd.sections for cd in fam.charts]
    rows = run_ladder(
        lambda e: pair(glob, test, e, sections, window=fam.chi_window,
                       rule=rule),
        eps_values)
    extrap = extrapolate([r.eps for r in rows], [r.value for r in rows],
                         errors=[r.error for r in rows])
    return ResidueReport(str(phi), rows, extrap)


def comparison_defect(fam1: SimplicialFamily, fam2: SimplicialFamily, phi,
                      z, eps: float, qmax: int | None = None) -> float:
    """Pointwise |d eta - (Phi_2 - Phi_1)| for the two-family transgression."""
    eta, g1, g2 = transgression(fam1, fam2, phi, qmax=qmax)
    ctx = EvalContext.from_points(np.asarray(z, complex), n=fam1.n, eps=eps)
    resid = eta.exterior_d() - (g2 - g1)
    return resid.max_abs(ctx)


def vanishing_probe(cx, conn, phi, ctx) -> float:
    """Largest coefficient of the class at the given points; degree-above-
    codimension classes of corrected families must report ~0 off Z."""
    if isinstance(phi, str):
        phi = SymmetricPolynomial.parse(phi)
    return phi_form(cx, conn, phi).max_abs(ctx)


# ---------------------------------------------------------------------------
# independent oracles


def _phi_of_matrix(phi: SymmetricPolynomial, mats: np.ndarray) -> np.ndarray:
    """Evaluate a symmetric polynomial in the Chern roots of 2x2 matrices."""
    if mats.shape[-2:] != (2, 2):
        raise ValueError("matrix oracle implemented for 2x2 blocks")
    e1 = np.trace(mats, axis1=-2, axis2=-1)
    e2 = (mats[..., 0, 0] * mats[..., 1, 1] -
          mats[..., 0, 1] * mats[..., 1, 0])
    out = np.zeros(mats.shape[:-2], complex)
    for coeff, ixs in phi.monomials:
        term = np.full(mats.shape[:-2], coeff, complex)
        for idx in ixs:
            if idx == 1:
                term = term * e1
            elif idx == 2:
                term = term * e2
            else:
                term = term * 0.0
        out = out + term
    return out


def grothendieck_point_residue(f1, f2, jac, phi, r1: float = 0.35,
                               r2: float = 0.35, npts: int = 256) -> complex:
    """Point residue of a separable field v = (f1(z1), f2(z2)) at 0.

    Torus-contour double Cauchy integral: the residue of phi(Jv) equals
    the grid mean of phi(J(z)) z1 z2 / (f1(z1) f2(z2)) over the torus
    |z1| = r1, |z2| = r2 (trapezoid in both angles, which is spectrally
    accurate for these periodic integrands). The factors f_i must not
    vanish on their circles.
    """
    if isinstance(phi, str):
        phi = SymmetricPolynomial.parse(phi)
    th = 2.0 * np.pi * np.arange(npts) / npts
    z1 = r1 * np.exp(1j * th)[:, None]
    z2 = r2 * np.exp(1j * th)[None, :]
    v1 = f1(z1) * np.ones_like(z2)
    v2 = f2(z2) * np.ones_like(z1)
    if min(np.abs(v1).min(), np.abs(v2).min()) < 1e-9:
        raise ValueError("a component of the field vanishes on the contour")
    mats = jac(z1 * np.ones_like(z2), z2 * np.ones_like(z1))
    w = _phi_of_matrix(phi, mats)
    return complex(np.mean(w * z1 * z2 / (v1 * v2)))


def cauchy_point_residue(g, r: float = 0.35, npts: int = 512) -> complex:
    """(1/2 pi i) contour integral of g(z) dz over |z| = r (trapezoid)."""
    th = 2.0 * np.pi * np.arange(npts) / npts
    z = r * np.exp(1j * th)
    return complex(np.mean(g(z) * z))


def hyperplane_pairing(test: TestForm, axis: int = 0,
                       npts: int = 96) -> complex:
    """Pair the integration current of {z_axis = 0} in C^2 with a test
    (1,1)-form: integrate the complementary coefficient over the slice."""
    if test.n != 2:
        raise ValueError("slice pairing implemented for two variables")
    other = 1 - axis
    key = ((other + 1,), (other + 1,), ())
    coeff = test.form.coefficient(key)
    lo = test.lo[2 * other:2 * other + 2]
    hi = test.hi[2 * other:2 * other + 2]
    pts, w = box_rule(lo, hi, npts)
    z = np.zeros((pts.shape[0], 2), complex)
    z[:, other] = pts[:, 0] + 1j * pts[:, 1]
    ctx = EvalContext.from_points(z, n=2)
    vals = coeff.values(ctx) * FM.volume_factor(1)
    return complex(np.dot(vals, w))


def fundamental_factor(p: int) -> float:
    """Multiplicity relating the degree-p class current of a codimension-p
    plane to its integration current: (-1)^(p-1) (p-1)!."""
    return (-1.0) ** (p - 1) * math.factorial(p - 1)
