"""Pairings against test forms, ladders, extrapolation, point-residue oracles.

Oracle routes are independent of the pairing pipeline and are checked first:

* separable fields v = (f1(z1), f2(z2)): the point residue of a symmetric
  polynomial in the Jacobian eigenvalues is a torus-contour mean, exact to
  machine precision for these integrands; for v = (z1, 2 z2) the hand
  values are e1 -> 3/2, e2 -> 1, e1^2 -> 9/2, e1*e2 -> 3;
* single-variable Cauchy residues by circle means: 1/z -> 1, entire -> 0;
* the integration current of {z1 = 0} in C^2 pairs with a (1,1) test form
  through the slice integral of the complementary coefficient.

Pipeline masses are frozen from ladder measurements against those oracles:
the skyscraper at 0.3 weighted by 1 + |z|^2 gives 1.09, the plane current
reproduces the slice integral, the rank-2 exact complex puts mass -phi(0)
at the determinant level, and the linear foliation reproduces both of its
point residues. Tolerances are the measured errors with ~3x headroom.
"""

import numpy as np
import pytest

from cherncurrents import fields as F
from cherncurrents import complexes as C
from cherncurrents import residues as R
from cherncurrents.fields import EvalContext
from cherncurrents.forms import GradedForm
from cherncurrents.quadrature import box_rule
from cherncurrents.cechgreen import Cover, ChartData, SimplicialFamily


BOX1 = ((-1.0, -1.0), (1.0, 1.0))
BOX2 = ((-1.0, -1.0, -1.0, -1.0), (1.0, 1.0, 1.0, 1.0))


def point_family(shift=0.0):
    z = F.ZVar(0)
    gen = F.fsub(z, F.Const(shift)) if shift else z
    cx = C.BundleComplex(1, [1, 1], [[[gen]]])
    cover = Cover([BOX1], n=1)
    return SimplicialFamily(cover, [ChartData(cx)]), cx


def koszul_family(metrics=None, chi=None):
    z1, z2 = F.ZVar(0), F.ZVar(1)
    phi1 = [[z1, z2]]
    phi2 = [[F.fscale(-1.0, z2)], [z1]]
    cx = C.BundleComplex(2, [1, 2, 1], [phi1, phi2], metrics=metrics)
    conn = "metric" if metrics is not None else None
    return SimplicialFamily(Cover([BOX2], n=2),
                            [ChartData(cx, connection=conn)], chi=chi)


def foliation_family():
    z1, z2 = F.ZVar(0), F.ZVar(1)
    cx = C.BundleComplex(2, [2, 1], [[[z1], [F.fscale(2.0, z2)]]])
    return SimplicialFamily(Cover([BOX2], n=2), [ChartData(cx)],
                            kind="foliation")


def weight_1d():
    return F.fadd(F.ONE, F.abs2(F.ZVar(0)))


def weight_2d():
    z1, z2 = F.ZVar(0), F.ZVar(1)
    return F.fadd(F.ONE, F.fscale(0.3, F.abs2(z1)),
                  F.fscale(-0.2, F.abs2(z2)))


# ---------------------------------------------------------------------------
# independent oracles


def test_fundamental_factor():
    assert R.fundamental_factor(1) == 1.0
    assert R.fundamental_factor(2) == -1.0
    assert R.fundamental_factor(3) == 2.0


def test_cauchy_residue():
    assert abs(R.cauchy_point_residue(lambda z: 1.0 / z) - 1.0) < 1e-12
    assert abs(R.cauchy_point_residue(lambda z: z)) < 1e-12
    # pole outside the contour contributes nothing
    assert abs(R.cauchy_point_residue(lambda z: 1.0 / (z - 0.9))) < 1e-12


def lin_f1(z):
    return z


def lin_f2(z):
    return 2.0 * z


def lin_jac(a, b):
    J = np.array([[1.0, 0.0], [0.0, 2.0]], complex)
    return np.broadcast_to(J, np.broadcast(a, b).shape + (2, 2))


def test_grothendieck_linear_model():
    cases = {"e1": 1.5, "e2": 1.0, "e1^2": 4.5, "e1*e2": 3.0}
    for phi, want in cases.items():
        got = R.grothendieck_point_residue(lin_f1, lin_f2, lin_jac, phi)
        assert abs(got - want) < 1e-12, phi


def test_grothendieck_nonlinear_jacobian():
    # v = (z1 + z1^3, 2 z2): extra zeros of f1 sit at +-i, outside the
    # contour; at the origin the Jacobian is still diag(1, 2)
    def f1(z):
        return z + z ** 3

    def jac(a, b):
        out = np.zeros(np.broadcast(a, b).shape + (2, 2), complex)
        out[..., 0, 0] = 1.0 + 3.0 * a ** 2
        out[..., 1, 1] = 2.0
        return out

    assert abs(R.grothendieck_point_residue(f1, lin_f2, jac, "e2")
               - 1.0) < 1e-12
    assert abs(R.grothendieck_point_residue(f1, lin_f2, jac, "e1")
               - 1.5) < 1e-12


def test_grothendieck_contour_guard():
    with pytest.raises(ValueError):
        R.grothendieck_point_residue(lambda z: z - 0.35, lin_f2, lin_jac,
                                     "e1")


def test_matrix_oracle_shape_guard():
    with pytest.raises(ValueError):
        R._phi_of_matrix(C.SymmetricPolynomial.parse("e1"),
                         np.zeros((3, 3), complex))


def test_hyperplane_pairing_consistency():
    w = GradedForm(2, 0, {((2,), (2,), ()): weight_2d()})
    t = R.TestForm(w, *BOX2)
    a = R.hyperplane_pairing(t, axis=0, npts=96)
    b = R.hyperplane_pairing(t, axis=0, npts=192)
    # the ramp joints are smooth but not analytic, so the tensor rule
    # converges algebraically; measured gap 2.3e-7
    assert abs(a - b) < 1e-5
    # linear in the test form
    w2 = GradedForm(2, 0, {((2,), (2,), ()): F.fscale(2.0, weight_2d())})
    t2 = R.TestForm(w2, *BOX2)
    assert abs(R.hyperplane_pairing(t2, axis=0) - 2.0 * a) < 1e-10


# ---------------------------------------------------------------------------
# test forms


def test_bump_exact_outside_and_plateau():
    t = R.TestForm.scalar(1, *BOX1, coeff=weight_1d())
    outside = t.value_at(np.array([[1.4 + 0.0j], [0.0 + 1.1j],
                                   [-2.0 - 2.0j]]))
    np.testing.assert_array_equal(outside, 0.0)
    # the middle half of the box is an exact plateau of the bump
    inside = t.value_at(np.array([[0.3 + 0.0j], [0.0 + 0.0j]]))
    np.testing.assert_allclose(inside, [1.09, 1.0], rtol=1e-14)


def test_testform_d_supported_in_margin():
    t = R.TestForm.scalar(1, *BOX1)
    dt = t.d()
    plateau = EvalContext.from_points(
        np.array([[0.0 + 0.0j], [0.2 - 0.3j]]), n=1)
    ring = EvalContext.from_points(
        np.array([[0.9 + 0.0j], [0.0 - 0.85j]]), n=1)
    outside = EvalContext.from_points(np.array([[1.3 + 0.9j]]), n=1)
    assert dt.max_abs(plateau) < 1e-14
    assert dt.max_abs(ring) > 1e-3
    assert dt.max_abs(outside) == 0.0


def test_testform_bounds_validation():
    with pytest.raises(ValueError):
        R.TestForm.scalar(2, (-1.0, -1.0), (1.0, 1.0))


# ---------------------------------------------------------------------------
# extrapolation


def test_extrapolate_power_recovery():
    eps = np.geomspace(0.1, 0.01, 6)
    vals = 2.5 - 0.7 * eps ** 1.3
    ex = R.extrapolate(eps, vals)
    assert ex.flag == "ok"
    assert abs(ex.value - 2.5) < 1e-6
    assert abs(ex.rate - 1.3) < 1e-2


def test_extrapolate_complex_values():
    eps = np.geomspace(0.1, 0.01, 5)
    vals = (1.0 - 2.0j) + (0.3 + 0.1j) * eps ** 0.8
    ex = R.extrapolate(eps, vals)
    assert abs(ex.value - (1.0 - 2.0j)) < 1e-6


def test_extrapolate_constant():
    ex = R.extrapolate([0.1, 0.05, 0.02, 0.01], [3.25] * 4)
    assert ex.flag == "constant"
    assert ex.value == 3.25
    assert ex.uncertainty < 1e-12


def test_extrapolate_flat_within_errors():
    # spread is inside the quadrature error bars: fitting a rate to that
    # noise proves nothing, so the result is the error-weighted mean
    vals = [1.001, 0.999, 1.0005, 0.9992]
    errs = [0.004, 0.004, 0.008, 0.008]
    ex = R.extrapolate([0.1, 0.07, 0.05, 0.035], vals, errors=errs)
    assert ex.flag == "flat"
    assert abs(ex.value - 1.0) < 5e-4
    assert ex.rate is None


def test_extrapolate_nonmonotone_flag():
    eps = [0.1, 0.07, 0.05, 0.035, 0.02]
    vals = [1.1, 0.9, 1.08, 0.92, 1.05]
    ex = R.extrapolate(eps, vals)
    assert ex.flag in ("nonmonotone", "misfit")
    assert ex.uncertainty >= 0.05


def test_extrapolate_short_ladder():
    ex = R.extrapolate([0.1, 0.05], [1.2, 1.1])
    assert ex.flag == "short"
    # two rungs fix the first-order model exactly: value + c * eps
    assert abs(ex.value - 1.0) < 1e-12


def test_extrapolate_misfit_widens_uncertainty():
    # not a power law at all: exponent slams into the scan bound
    eps = np.geomspace(0.1, 0.01, 6)
    vals = 2.0 + 0.3 * np.log(eps)
    ex = R.extrapolate(eps, vals)
    assert ex.flag == "misfit"
    assert ex.uncertainty >= abs(vals - ex.value).max() * 0.5


def test_run_ladder_rows():
    fam, _ = point_family()
    t = R.TestForm.scalar(1, *BOX1)
    glob = fam.global_form("e1")
    secs = [cd.sections for cd in fam.charts]
    rows = R.run_ladder(
        lambda e: R.pair(glob, t, e, secs), [0.06, 0.045])
    assert [r.eps for r in rows] == [0.06, 0.045]
    assert all(r.points > 0 and r.cells > 0 for r in rows)


# ---------------------------------------------------------------------------
# adaptive pairing against a dense tensor rule


def test_pair_matches_brute_force():
    fam, _ = point_family()
    t = R.TestForm.scalar(1, *BOX1, coeff=weight_1d())
    glob = fam.global_form("e1")
    secs = [cd.sections for cd in fam.charts]
    res = R.pair(glob, t, 0.1, secs)
    dens = glob.wedge(t.form).top_density()
    pts, w = box_rule(BOX1[0], BOX1[1], 220)
    ctx = EvalContext.from_points(
        (pts[:, 0] + 1j * pts[:, 1])[:, None], eps=0.1, n=1)
    brute = complex(np.dot(dens.values(ctx), w))
    assert abs(res.value - brute) < 1e-4
    assert res.shell_cells > 0
    assert res.error > 0.0
    assert res.points > res.cells


def test_pair_coarse_guard():
    # coarse == npts must not silently zero the error estimate
    fam, _ = point_family()
    t = R.TestForm.scalar(1, *BOX1)
    res = R.pair(fam.global_form("e1"), t, 0.06,
                 [cd.sections for cd in fam.charts],
                 rule=R.PairingRule(npts=3, coarse=3))
    assert res.error > 0.0


# ---------------------------------------------------------------------------
# frozen pairing masses (tolerance ~3x the measured error)


def test_point_residue_ladder():
    fam, _ = point_family(shift=0.3)
    t = R.TestForm.scalar(1, *BOX1, coeff=weight_1d())
    rep = R.residue_pairing(fam, "e1", t, [0.05, 0.0375, 0.028, 0.021])
    # target phi(0.3) = 1 + |0.3|^2; measured error 5.1e-5
    assert abs(rep.value - 1.09) < 2e-3
    assert rep.extrapolation.flag in ("ok", "flat")
    assert rep.extrapolation.uncertainty < 0.05
    assert rep.phi == "e1"
    assert len(rep.rows) == 4


def test_window_independence_of_the_limit():
    # same current through two cutoff profiles; single rungs differ by
    # design, the extrapolated limits must not
    fam, _ = point_family(shift=0.3)
    t = R.TestForm.scalar(1, *BOX1, coeff=weight_1d())
    rep1 = R.residue_pairing(fam, "e1", t, [0.05, 0.0375, 0.028, 0.021])
    famw = SimplicialFamily(Cover([BOX1], n=1), fam.charts,
                            chi_window=(0.25, 4.0))
    rep2 = R.residue_pairing(famw, "e1", t, [0.02, 0.015, 0.011, 0.008])
    gap = abs(rep1.value - rep2.value)
    budget = rep1.extrapolation.uncertainty + rep2.extrapolation.uncertainty
    assert gap < max(budget, 5e-3)


def test_plane_current_matches_slice_integral():
    z1 = F.ZVar(0)
    cx = C.BundleComplex(2, [1, 1], [[[z1]]])
    fam = SimplicialFamily(Cover([BOX2], n=2), [ChartData(cx)])
    w = GradedForm(2, 0, {((2,), (2,), ()): weight_2d()})
    t = R.TestForm(w, *BOX2)
    oracle = R.hyperplane_pairing(t, axis=0)
    res = R.pair(fam.global_form("e1"), t, 0.06,
                 [cd.sections for cd in fam.charts],
                 rule=R.PairingRule(npts=4, axis_depth=5))
    # single-rung bias measured at 1.0e-2 relative
    assert abs(res.value - oracle) / abs(oracle) < 2.5e-2


def test_koszul_determinant_level_mass():
    fam = koszul_family()
    t = R.TestForm.scalar(2, *BOX2, coeff=weight_2d())
    res = R.pair(fam.global_form("e2"), t, 0.08,
                 [cd.sections for cd in fam.charts],
                 rule=R.PairingRule(npts=3, base_splits=1, axis_depth=4))
    # mass -phi(0) = -1; single rung measured at -1.0046
    assert abs(res.value + 1.0) < 0.02


def test_foliation_masses_match_point_residues():
    fam = foliation_family()
    t = R.TestForm.scalar(2, *BOX2, coeff=weight_2d())
    secs = [cd.sections for cd in fam.charts]
    rule = R.PairingRule(npts=3, base_splits=1, axis_depth=4)
    for phi, rel_tol in (("e2", 0.03), ("e1^2", 0.05)):
        want = R.grothendieck_point_residue(lin_f1, lin_f2, lin_jac, phi)
        res = R.pair(fam.global_form(phi), t, 0.08, secs, rule=rule)
        assert abs(res.value - want) / abs(want) < rel_tol, phi


# ---------------------------------------------------------------------------
# comparison and vanishing diagnostics


def test_comparison_defect_two_metrics():
    z1, z2 = F.ZVar(0), F.ZVar(1)
    fam_triv = koszul_family()
    h0 = [[F.ONE]]
    h1 = [[F.fadd(F.ONE, F.fscale(0.5, F.abs2(z1))), F.ZERO],
          [F.ZERO, F.fadd(F.ONE, F.fscale(0.25, F.abs2(z2)))]]
    h2 = [[F.fadd(F.ONE, F.fscale(0.3, F.abs2(z2)))]]
    fam_met = koszul_family(metrics=[h0, h1, h2], chi=fam_triv.chi)
    rng = np.random.default_rng(5)
    z = 0.3 * (rng.standard_normal((30, 2)) +
               1j * rng.standard_normal((30, 2)))
    assert R.comparison_defect(fam_triv, fam_met, "e2", z, 0.05) < 1e-8


def test_vanishing_probe_off_singularity():
    _, cx = point_family()
    conn = C.corrected_connection(cx, C.Connection.trivial(cx), "sheaf")
    ctx = EvalContext.from_points(
        np.array([[0.8 + 0.1j], [0.5 - 0.6j], [-0.4 + 0.4j]]), n=1)
    assert R.vanishing_probe(cx, conn, "e1", ctx) < 1e-10
