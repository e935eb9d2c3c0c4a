"""Partitions, cochain operators, glued families, collapse, transgression.

Identities frozen here are derived by hand before the assertions:

* plateau partitions: exact zeros outside each box, exact sum 1 on the
  union, vanishing derivative sum;
* delta^2 = 0 and nabla^2 = 0 for nabla = delta + (-1)^q d over the
  ordered nerve with repetitions;
* the weighted contraction K satisfies delta K + K delta = id in
  positive degrees and K delta = id - S in degree 0;
* collapse is a chain morphism onto global forms:
  d collapse(gamma) = collapse(nabla gamma) for arbitrary gamma, and it
  reproduces a global form fed in as a constant degree-0 cochain;
* refinement through a product cover leaves the collapse unchanged;
* the prism homotopy h satisfies nabla h + h nabla = rho2^* - rho1^*;
* fiber-integrated class cochains are nabla-cocycles (the p = 2 case
  exercises the full simplex Stokes identity
  pi_*(dw) = (-1)^p d(pi_* w) + sum_j (-1)^j (face_j)_* w);
* conjugating a connection by a chain isomorphism preserves its class;
* the transgression eta of two families satisfies
  d eta = Phi(second) - Phi(first) pointwise.
"""

import numpy as np
import pytest

from cherncurrents import fields as F
from cherncurrents import forms as FM
from cherncurrents import complexes as C
from cherncurrents import cechgreen as G
from cherncurrents.fields import EvalContext, fadd, fmul, fscale
from cherncurrents.forms import GradedForm


def ctx_of(z, eps=None, n=None):
    return EvalContext.from_points(np.asarray(z, complex), n=n, eps=eps)


# ---------------------------------------------------------------------------
# fixtures


def cover_1d():
    # two overlapping boxes on [-1.3, 1.3]^2, overlap strip x in [0.4, 0.6]
    u1 = ((-1.3, -1.3), (0.6, 1.3))
    u2 = ((0.4, -1.3), (1.3, 1.3))
    return G.Cover([u1, u2], 1)


def cover_1d_shifted():
    u1 = ((-1.3, -1.3), (0.8, 1.3))
    u2 = ((0.2, -1.3), (1.3, 1.3))
    return G.Cover([u1, u2], 1)


def cover_2d():
    lo = [-1.2, -1.2, -1.2, -1.2]
    hi = [1.2, 1.2, 1.2, 1.2]
    u1 = (list(lo), [0.5, 1.2, 1.2, 1.2])
    u2 = ([0.3, -1.2, -1.2, -1.2], list(hi))
    return G.Cover([u1, u2], 2)


def point_cx():
    return C.BundleComplex(1, [1, 1], [[[F.ZVar(0)]]])


def unit_cx():
    return C.BundleComplex(1, [1, 1], [[[F.ONE]]])


def koszul_cx(metrics=None):
    z1, z2 = F.ZVar(0), F.ZVar(1)
    return C.BundleComplex(
        2, [1, 2, 1],
        [[[z1, z2]], [[F.fscale(-1.0, z2)], [z1]]], metrics=metrics)


def rand_poly(rng, n):
    terms = [F.Const(complex(rng.uniform(-1, 1), rng.uniform(-1, 1)))]
    for i in range(n):
        terms.append(fscale(complex(rng.uniform(-1, 1), rng.uniform(-1, 1)),
                            F.ZVar(i)))
        terms.append(fscale(complex(rng.uniform(-1, 1), 0.0), F.ZBarVar(i)))
    terms.append(fscale(0.5 * rng.uniform(-1, 1),
                        fmul(F.ZVar(0), F.ZBarVar(0))))
    return fadd(*terms)


def rand_form(rng, n):
    keys = [((), (), ()), ((1,), (), ()), ((), (1,), ())]
    picked = rng.choice(len(keys), size=2, replace=False)
    terms = {keys[i]: rand_poly(rng, n) for i in picked}
    return GradedForm(n, 0, terms)


def rand_cochain(rng, cover, degrees=(0, 1, 2)):
    comps = {q: {t: rand_form(rng, cover.n) for t in cover.tuples(q)}
             for q in degrees}
    return G.Cochain(cover, cover.n, comps)


def comp_max(coch, rng, count=4, eps=None):
    """Largest coefficient of any component at its own overlap samples."""
    worst = 0.0
    for q, comp in coch.comps.items():
        for tup, f in comp.items():
            z = coch.cover.sample_points(tup, count, rng)
            worst = max(worst, f.max_abs(ctx_of(z, eps=eps, n=coch.n)))
    return worst


def domain_points(cover, rng, count=3):
    pts = [cover.sample_points((b,), count, rng) for b in range(cover.size)]
    return np.concatenate(pts, axis=0)


# ---------------------------------------------------------------------------
# partitions


def test_partition_sums_to_one_with_exact_supports():
    cover = cover_1d()
    rng = np.random.default_rng(7)
    z = domain_points(cover, rng, 16)
    ctx = ctx_of(z, n=1)
    total = sum(psi.values(ctx) for psi in cover.psis)
    np.testing.assert_allclose(total, 1.0, atol=1e-14)
    # psi_1 vanishes identically right of its box, psi_2 left of its box
    right = ctx_of(np.array([[0.9 + 0.2j], [1.1 - 0.5j]]), n=1)
    assert np.all(cover.psis[0].values(right) == 0.0)
    left = ctx_of(np.array([[-0.8 + 0.2j], [0.1 + 0.9j]]), n=1)
    assert np.all(cover.psis[1].values(left) == 0.0)
    # derivatives of the partition sum to zero
    dsum = cover.dpsi(0) + cover.dpsi(1)
    assert dsum.max_abs(ctx) < 1e-12


def test_partition_plateau_is_exactly_one_in_core():
    cover = cover_1d()
    core = ctx_of(np.array([[-0.5 + 0.1j], [0.0 - 0.3j]]), n=1)
    np.testing.assert_array_equal(cover.psis[0].values(core), 1.0)
    np.testing.assert_array_equal(cover.psis[1].values(core), 0.0)


# ---------------------------------------------------------------------------
# cochain operators


def test_delta_squared_is_zero():
    cover = cover_1d()
    rng = np.random.default_rng(11)
    gamma = rand_cochain(rng, cover, degrees=(0, 1))
    dd = gamma.delta().delta()
    assert comp_max(dd, rng) < 1e-13


def test_nabla_squared_is_zero():
    cover = cover_1d()
    rng = np.random.default_rng(12)
    gamma = rand_cochain(rng, cover, degrees=(0, 1, 2))
    nn = gamma.nabla().nabla()
    assert comp_max(nn, rng) < 1e-12


def test_contract_homotopy_positive_degrees():
    cover = cover_1d()
    rng = np.random.default_rng(13)
    for q in (1, 2):
        gamma = rand_cochain(rng, cover, degrees=(q,))
        lhs = gamma.contract().delta().add(gamma.delta().contract())
        assert comp_max(lhs.sub(gamma), rng) < 1e-11


def test_contract_homotopy_degree_zero():
    cover = cover_1d()
    rng = np.random.default_rng(14)
    gamma = rand_cochain(rng, cover, degrees=(0,))
    kd = gamma.delta().contract()
    s = gamma.global_sum()
    for b in range(cover.size):
        f = kd.get(0, (b,)) - gamma.get(0, (b,)) + s
        z = cover.sample_points((b,), 6, rng)
        assert f.max_abs(ctx_of(z, n=1)) < 1e-12


def test_collapse_is_chain_morphism():
    # d(collapse(gamma)) = collapse(nabla(gamma)) for arbitrary cochains
    cover = cover_1d()
    rng = np.random.default_rng(15)
    gamma = rand_cochain(rng, cover, degrees=(0, 1, 2))
    lhs = gamma.collapse().exterior_d()
    rhs = gamma.nabla().collapse()
    z = domain_points(cover, rng, 6)
    assert (lhs - rhs).max_abs(ctx_of(z, n=1)) < 1e-10


def test_collapse_of_constant_cochain_returns_the_form():
    cover = cover_1d()
    rng = np.random.default_rng(16)
    g = rand_form(rng, 1)
    gamma = G.Cochain(cover, 1, {0: {(b,): g for b in range(cover.size)}})
    z = domain_points(cover, rng, 6)
    assert (gamma.collapse() - g).max_abs(ctx_of(z, n=1)) < 1e-13


def test_refinement_leaves_collapse_unchanged():
    cov1 = cover_1d()
    cov2 = cover_1d_shifted()
    cover12, pairs = G.product_cover(cov1, cov2)
    rng = np.random.default_rng(17)
    gamma = rand_cochain(rng, cov1, degrees=(0, 1, 2))
    refined = G.refine_cochain(gamma, cover12, lambda i: pairs[i][0])
    z = domain_points(cov1, rng, 6)
    diff = refined.collapse() - gamma.collapse()
    assert diff.max_abs(ctx_of(z, n=1)) < 1e-11


def test_prism_homotopy_identity():
    cov1 = cover_1d()
    cov2 = cover_1d_shifted()
    union = G.disjoint_union_cover(cov1, cov2)
    cover12, pairs = G.product_cover(cov1, cov2)
    rho1 = lambda i: pairs[i][0]
    rho2 = lambda i: pairs[i][1] + cov1.size
    rng = np.random.default_rng(18)
    gamma = rand_cochain(rng, union, degrees=(0, 1, 2))
    h_nabla = G.prism_homotopy(gamma.nabla(), cover12, rho1, rho2)
    nabla_h = G.prism_homotopy(gamma, cover12, rho1, rho2).nabla()
    lhs = h_nabla.add(nabla_h)
    rhs = G.refine_cochain(gamma, cover12, rho2).sub(
        G.refine_cochain(gamma, cover12, rho1))
    assert comp_max(lhs.sub(rhs), rng) < 1e-11


# ---------------------------------------------------------------------------
# glued families: cocycle property and bidegree cutoffs


def test_line_bundle_cochain_is_cocycle_with_real_edge_terms():
    # two metrics on a line bundle: no corrections, nothing collapses, so
    # the edge component is an honest nonzero transgression on the overlap
    cover = cover_1d()
    flat = C.BundleComplex(1, [1], [], metrics=[[[F.ONE]]])
    curved = C.BundleComplex(
        1, [1], [], metrics=[[[fadd(F.ONE, F.abs2(F.ZVar(0)))]]])
    charts = [G.ChartData(flat, connection="metric", sections=[F.ONE]),
              G.ChartData(curved, connection="metric", sections=[F.ONE])]
    fam = G.SimplicialFamily(cover, charts, kind="sheaf", regularized=False)
    checks = fam.class_cochain("e1", qmax=2)
    assert 2 not in checks.comps
    rng = np.random.default_rng(19)
    z01 = cover.sample_points((0, 1), 6, rng)
    assert checks.get(1, (0, 1)).max_abs(ctx_of(z01, n=1)) > 1e-3
    assert comp_max(checks.nabla(), rng) < 1e-11
    # the collapsed global form is closed and nonzero
    glob = checks.collapse()
    z = domain_points(cover, rng, 6)
    ctx = ctx_of(z, n=1)
    assert glob.max_abs(ctx) > 1e-3
    assert glob.exterior_d().max_abs(ctx) < 1e-11


def test_point_sheaf_class_cochain_is_cocycle():
    cover = cover_1d()
    h0 = [[fadd(F.ONE, F.abs2(F.ZVar(0)))]]
    h1 = [[F.ONE]]
    cx_metric = C.BundleComplex(1, [1, 1], [[[F.ZVar(0)]]],
                                metrics=[h0, h1])
    charts = [G.ChartData(point_cx()),
              G.ChartData(cx_metric, connection="metric")]
    fam = G.SimplicialFamily(cover, charts, kind="sheaf")
    checks = fam.class_cochain("e1", qmax=2)
    # one dt leg at most: the triple component vanishes structurally
    assert 2 not in checks.comps
    rng = np.random.default_rng(19)
    # corrected classes concentrate in the cutoff band around z = 0 ...
    band = ctx_of(np.array([[0.2 + 0.0j], [0.0 + 0.25j]]), eps=0.05, n=1)
    assert checks.get(0, (0,)).max_abs(band) > 1e-2
    # ... so the edge component vanishes identically on the overlap,
    # which sits outside the band
    z01 = cover.sample_points((0, 1), 6, rng)
    assert checks.get(1, (0, 1)).max_abs(ctx_of(z01, eps=0.05, n=1)) < 1e-12
    nab = checks.nabla()
    assert comp_max(nab, rng, eps=0.05) < 1e-9


def test_koszul_e2_class_cochain_is_cocycle():
    # two distinct vertex connections exercise the p = 2 Stokes signs
    cover = cover_2d()
    h0 = [[fadd(F.ONE, F.abs2(F.ZVar(0)))]]
    h1 = [[fadd(F.ONE, F.abs2(F.ZVar(1))), F.ZERO], [F.ZERO, F.Const(2.0)]]
    h2 = [[F.ONE]]
    charts = [G.ChartData(koszul_cx()),
              G.ChartData(koszul_cx(metrics=[h0, h1, h2]),
                          connection="metric")]
    fam = G.SimplicialFamily(cover, charts, kind="sheaf")
    checks = fam.class_cochain("e2")
    assert 2 in checks.comps
    rng = np.random.default_rng(20)
    # the cutoff band |z|^2 in [0.04, 0.16] crosses the overlap strip
    band = ctx_of(np.array([[0.35 + 0.0j, 0.10 + 0.05j],
                            [0.32 + 0.05j, -0.12 + 0.0j]]), eps=0.08, n=2)
    assert checks.get(1, (0, 1)).max_abs(band) > 1e-2
    nab = checks.nabla()
    sub = G.Cochain(cover, 2, {q: nab.comps[q] for q in (1, 2)})
    assert comp_max(sub, rng, count=2, eps=0.08) < 5e-8
    # hardest points: inside the band, where the cutoff derivatives live
    assert max(f.max_abs(band) for f in nab.comps[1].values()) < 1e-10


# ---------------------------------------------------------------------------
# chain isomorphisms and padding


def test_conjugation_preserves_class():
    # gauge a curved line bundle by 1 + z/2: e1 is nonzero and unchanged
    cx = C.BundleComplex(
        1, [1], [], metrics=[[[fadd(F.ONE, F.abs2(F.ZVar(0)))]]])
    conn = C.Connection.from_metrics(cx)
    g_levels = [[[fadd(F.ONE, fscale(0.5, F.ZVar(0)))]]]
    moved = G.conjugate_connection(conn, g_levels)
    z = np.array([[0.3 + 0.4j], [-0.5 + 0.1j], [0.2 - 0.7j]])
    ctx = ctx_of(z, n=1)
    phi = C.SymmetricPolynomial.parse("e1")
    f0 = C.phi_form(cx, conn, phi)
    f1 = C.phi_form(cx, moved, phi)
    assert f0.max_abs(ctx) > 1e-3
    assert (f0 - f1).max_abs(ctx) < 1e-10


def test_iso_glued_family_is_cocycle_and_closed():
    cover = cover_1d()
    # a nontrivial metric on the unit resolution makes the transported
    # vertex connection genuinely different from chart 0's
    hu = [[fadd(F.ONE, F.abs2(F.ZVar(0)))]]
    cx_unit = C.BundleComplex(1, [1, 1], [[[F.ONE]]],
                              metrics=[hu, [[F.ONE]]])
    charts = [G.ChartData(point_cx()),
              G.ChartData(cx_unit, connection="metric", sections=[F.ONE])]
    isos = {(0, 1): G.IsoSpec([[[F.ONE]], [[F.ZVar(0)]]])}
    fam = G.SimplicialFamily(cover, charts, kind="sheaf", mode="iso",
                             isos=isos)
    assert fam.validate() == []
    checks = fam.class_cochain("e1")
    rng = np.random.default_rng(22)
    # chart 0's class is alive in the cutoff band around z = 0
    band = ctx_of(np.array([[0.2 + 0.0j], [0.0 + 0.25j]]), eps=0.05, n=1)
    assert checks.get(0, (0,)).max_abs(band) > 1e-2
    nab = checks.nabla()
    assert comp_max(nab, rng, eps=0.05) < 1e-8
    glob = checks.collapse()
    z = domain_points(cover, rng, 5)
    assert glob.exterior_d().max_abs(ctx_of(z, eps=0.05, n=1)) < 1e-8


def test_iso_validator_reports_problems():
    cover = cover_1d()
    charts = [G.ChartData(point_cx()),
              G.ChartData(unit_cx(), sections=[F.ONE])]
    # missing data
    fam = G.SimplicialFamily(cover, charts, mode="iso")
    msgs = fam.validate()
    assert any("missing chain isomorphism" in m for m in msgs)
    with pytest.raises(G.GluingDataError):
        fam.family((0, 1))
    # broken chain map
    bad = {(0, 1): G.IsoSpec([[[F.ONE]], [[F.ONE]]])}
    fam2 = G.SimplicialFamily(cover, charts, mode="iso", isos=bad)
    assert any("not a chain map" in m for m in fam2.validate())


def test_iso_validator_flags_triple_overlaps():
    u1 = ((-1.0, -1.0), (0.4, 1.0))
    u2 = ((0.0, -1.0), (0.8, 1.0))
    u3 = ((0.3, -1.0), (1.0, 1.0))
    cover = G.Cover([u1, u2, u3], 1)
    charts = [G.ChartData(point_cx()) for _ in range(3)]
    eye = G.IsoSpec([[[F.ONE]], [[F.ONE]]])
    fam = G.SimplicialFamily(
        cover, charts, mode="iso",
        isos={(0, 1): eye, (1, 2): eye, (0, 2): eye})
    msgs = fam.validate()
    assert any("supply gluing data" in m for m in msgs)


def test_pad_complex_blocks_and_invariance():
    cx = point_cx()
    padded = G.pad_complex(cx, [(1, 1)])
    assert padded.ranks == [2, 2]
    ctx = ctx_of(np.array([[0.4 + 0.3j], [-0.6 + 0.2j]]), n=1)
    vals = np.array([[f.values(ctx) for f in row] for row in padded.maps[0]])
    z = np.array([0.4 + 0.3j, -0.6 + 0.2j])
    np.testing.assert_allclose(vals[0, 0], z, rtol=1e-14)
    np.testing.assert_allclose(vals[0, 1], 0.0, atol=1e-14)
    np.testing.assert_allclose(vals[1, 0], 0.0, atol=1e-14)
    np.testing.assert_allclose(vals[1, 1], 1.0, rtol=1e-14)
    assert padded.map_rank(1) == 2
    # the corrected class does not see the elementary summand
    phi = C.SymmetricPolynomial.parse("e1")
    f_plain = C.phi_form(cx, C.corrected_connection(
        cx, C.Connection.trivial(cx)), phi)
    f_pad = C.phi_form(padded, C.corrected_connection(
        padded, C.Connection.trivial(padded)), phi)
    assert (f_plain - f_pad).max_abs(ctx) < 1e-11


def test_global_regulator_plateaus():
    cover = cover_1d()
    charts = [G.ChartData(point_cx()),
              G.ChartData(unit_cx(), sections=[F.ONE])]
    chi = G.global_regulator(cover, charts)
    near = ctx_of(np.array([[0.1 + 0.0j], [0.0 + 0.12j]]), eps=0.1, n=1)
    np.testing.assert_array_equal(chi.values(near), 0.0)
    far = ctx_of(np.array([[0.5 + 0.0j], [1.0 + 0.3j], [-0.9 + 0.4j]]),
                 eps=0.1, n=1)
    np.testing.assert_allclose(chi.values(far), 1.0, atol=1e-14)
    mid = chi.values(ctx_of(np.array([[0.3 + 0.0j]]), eps=0.1, n=1))
    assert 0.0 < mid[0] < 1.0


# ---------------------------------------------------------------------------
# transgression


def test_transgression_single_box():
    box = ((-1.0, -1.0), (1.0, 1.0))
    cover1 = G.Cover([box], 1)
    cover2 = G.Cover([box], 1)
    h0 = [[fadd(F.ONE, F.abs2(F.ZVar(0)))]]
    h1 = [[F.ONE]]
    cx_plain = point_cx()
    cx_metric = C.BundleComplex(1, [1, 1], [[[F.ZVar(0)]]],
                                metrics=[h0, h1])
    fam1 = G.SimplicialFamily(cover1, [G.ChartData(cx_plain)], kind="sheaf")
    fam2 = G.SimplicialFamily(
        cover2, [G.ChartData(cx_metric, connection="metric")],
        kind="sheaf", chi=fam1.chi)
    eta, g1, g2 = G.transgression(fam1, fam2, "e1")
    rng = np.random.default_rng(23)
    z = np.concatenate([cover1.sample_points((0,), 8, rng),
                        np.array([[0.2 + 0.0j], [0.0 + 0.25j]])])
    ctx = ctx_of(z, eps=0.05, n=1)
    # the two regularized classes differ inside the cutoff band
    assert (g2 - g1).max_abs(ctx) > 1e-3
    resid = eta.exterior_d() - (g2 - g1)
    assert resid.max_abs(ctx) < 1e-8


def test_transgression_two_chart_cover():
    cover1 = cover_1d()
    cover2 = cover_1d()
    h0 = [[fadd(F.ONE, F.abs2(F.ZVar(0)))]]
    h1 = [[F.ONE]]
    cx_plain = point_cx()
    cx_metric = C.BundleComplex(1, [1, 1], [[[F.ZVar(0)]]],
                                metrics=[h0, h1])
    fam1 = G.SimplicialFamily(
        cover1, [G.ChartData(cx_plain), G.ChartData(cx_plain)], kind="sheaf")
    fam2 = G.SimplicialFamily(
        cover2,
        [G.ChartData(cx_metric, connection="metric"),
         G.ChartData(cx_metric, connection="metric")],
        kind="sheaf", chi=fam1.chi)
    eta, g1, g2 = G.transgression(fam1, fam2, "e1")
    rng = np.random.default_rng(24)
    z = np.concatenate([domain_points(cover1, rng, 4),
                        np.array([[0.2 + 0.0j], [0.0 + 0.25j]])])
    ctx = ctx_of(z, eps=0.05, n=1)
    assert (g2 - g1).max_abs(ctx) > 1e-3
    resid = eta.exterior_d() - (g2 - g1)
    assert resid.max_abs(ctx) < 1e-8
