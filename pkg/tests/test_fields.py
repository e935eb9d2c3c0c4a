import numpy as np
import pytest

from cherncurrents import fields as F
from cherncurrents.fields import (
    Const, EvalContext, EpsPow, FieldMatrixNode, MatInverse, MinimalInverse,
    SimplexCoord, SimplexIntegral, SingularPointError, SmoothStep, ZBarVar,
    ZVar, abs2, d_dz, d_dzbar, fadd, fmul, fscale, gated_mul)


def ctx_of(z, **kw):
    return EvalContext.from_points(np.asarray(z, complex), **kw)


def rand_z(rng, m, n, lo=0.3, hi=1.2):
    # radii bounded away from 0 so nothing is singular unless intended
    r = rng.uniform(lo, hi, size=(m, n))
    phase = np.exp(2j * np.pi * rng.uniform(size=(m, n)))
    return r * phase


def test_wirtinger_derivatives():
    rng = np.random.default_rng(3)
    z0 = rand_z(rng, 6, 1)
    ctx = ctx_of(z0)
    z = ZVar(0)
    f = fmul(z, z)                       # z^2
    np.testing.assert_allclose(d_dz(f, 0).values(ctx), 2 * z0[:, 0], atol=1e-12)
    np.testing.assert_allclose(d_dzbar(f, 0).values(ctx), 0, atol=1e-12)
    g = abs2(z)                          # z zbar
    np.testing.assert_allclose(d_dz(g, 0).values(ctx), np.conj(z0[:, 0]), atol=1e-12)
    np.testing.assert_allclose(d_dzbar(g, 0).values(ctx), z0[:, 0], atol=1e-12)


def test_second_wirtinger_derivative_of_log_like_kernel():
    # f = 1/(1+|z|^2); d/dz dbar/dz f has the closed form
    # -(1+|z|^2)^-2 + 2|z|^2 (1+|z|^2)^-3
    rng = np.random.default_rng(4)
    z0 = rand_z(rng, 5, 1)
    ctx = ctx_of(z0)
    z = ZVar(0)
    f = F.frecip(fadd(Const(1.0), abs2(z)))
    got = d_dzbar(d_dz(f, 0), 0).values(ctx)
    a = 1 + np.abs(z0[:, 0]) ** 2
    want = -a ** -2 + 2 * np.abs(z0[:, 0]) ** 2 * a ** -3
    np.testing.assert_allclose(got, want, rtol=1e-10)


def test_smooth_step_plateaus_and_derivatives():
    xs = np.linspace(-0.5, 2.5, 61)
    ctx = EvalContext(np.stack([xs, np.zeros_like(xs)], axis=1), 1)
    step = SmoothStep(F.Coord(0), 0.0, 2.0)
    v = step.values(ctx).real
    assert (v[xs <= 0] == 0).all()
    assert (v[xs >= 2] == 1).all()
    inside = (xs > 0.05) & (xs < 1.95)
    assert (np.diff(v[inside]) > -1e-15).all()
    # midpoint symmetry of the exp construction
    mid = SmoothStep(F.Coord(0), 0.0, 2.0).values(
        EvalContext(np.array([[1.0, 0.0]]), 1)).real
    assert abs(mid[0] - 0.5) < 1e-13
    # derivative field vanishes identically on both plateaus
    dstep = step.d(("chart", 0))
    dv = dstep.values(ctx).real
    assert (dv[xs <= 0] == 0).all()
    assert (dv[xs >= 2] == 0).all()
    # and matches central differences inside
    h = 1e-6
    for x in (0.3, 0.9, 1.7):
        c = EvalContext(np.array([[x - h, 0.0], [x + h, 0.0], [x, 0.0]]), 1)
        vals = step.values(c).real
        dd = dstep.values(c).real
        assert abs((vals[1] - vals[0]) / (2 * h) - dd[2]) < 1e-6


def test_zero_gate_masks_singular_payload():
    xs = np.array([[0.0, 0.0], [0.5, 0.0], [2.0, 0.0]])
    ctx = EvalContext(xs, 1)
    switch = SmoothStep(F.Coord(0), 1.0, 1.5)   # exactly 0 at x <= 1
    pole = F.frecip(F.Coord(0))                 # 1/x, singular at 0
    g = gated_mul(switch, pole)
    v = g.values(ctx)
    assert v[0] == 0 and v[1] == 0
    assert abs(v[2] - 1.0 / 2.0) < 1e-12
    # derivative through the gate also exact zero on the masked region
    dv = g.d(("chart", 0)).values(ctx)
    assert dv[0] == 0 and dv[1] == 0
    assert np.isfinite(dv[2])


def test_eps_leaf_requires_eps():
    ctx = ctx_of([[0.5 + 0.1j]])
    with pytest.raises(ValueError):
        EpsPow(-1).values(ctx)
    ctx2 = ctx_of([[0.5 + 0.1j]], eps=0.25)
    np.testing.assert_allclose(EpsPow(-1).values(ctx2), 4.0)


def test_simplex_integral_of_monomials():
    z0 = np.array([[0.3 + 0.4j]])
    ctx = ctx_of(z0)
    t1 = SimplexCoord(1)
    np.testing.assert_allclose(
        SimplexIntegral(t1, 1).values(ctx), 0.5, atol=1e-13)
    t2 = SimplexCoord(2)
    np.testing.assert_allclose(
        SimplexIntegral(fmul(t1, t2), 2).values(ctx), 1.0 / 24.0, atol=1e-13)
    # chart factor rides along: int over the 1-simplex of z*t1 = z/2
    zt = fmul(ZVar(0), t1)
    np.testing.assert_allclose(
        SimplexIntegral(zt, 1).values(ctx), z0[:, 0] / 2, atol=1e-13)


def test_simplex_derivative_inside_integral():
    # d/dt1 of t1^2 = 2 t1, integrated over the 1-simplex -> 1
    t1 = SimplexCoord(1)
    f = fmul(t1, t1).d(("t", 1))
    ctx = ctx_of([[0.1 + 0.2j]])
    np.testing.assert_allclose(SimplexIntegral(f, 1).values(ctx), 1.0, atol=1e-13)


def minimal_inverse_of(phi_entries, rank, **kw):
    return MinimalInverse(phi_entries, rank, **kw)


def test_minimal_inverse_single_function():
    rng = np.random.default_rng(5)
    z0 = rand_z(rng, 8, 1)
    ctx = ctx_of(z0)
    node = minimal_inverse_of([[ZVar(0)]], rank=1)
    sigma = node.entry(0, 0)
    z = z0[:, 0]
    np.testing.assert_allclose(sigma.values(ctx), np.conj(z) / np.abs(z) ** 2,
                               rtol=1e-12)
    # holomorphic derivative of zbar/|z|^2 is -zbar^2/|z|^4
    got = d_dz(sigma, 0).values(ctx)
    np.testing.assert_allclose(got, -np.conj(z) ** 2 / np.abs(z) ** 4, rtol=1e-9)


def test_minimal_inverse_koszul_maps():
    rng = np.random.default_rng(6)
    z0 = rand_z(rng, 7, 2)
    ctx = ctx_of(z0)
    z1, z2 = z0[:, 0], z0[:, 1]
    r2 = np.abs(z1) ** 2 + np.abs(z2) ** 2
    phi1 = [[ZVar(0), ZVar(1)]]                      # rank-2 -> rank-1
    sig1 = minimal_inverse_of(phi1, rank=1)
    np.testing.assert_allclose(sig1.entry(0, 0).values(ctx), np.conj(z1) / r2, rtol=1e-11)
    np.testing.assert_allclose(sig1.entry(1, 0).values(ctx), np.conj(z2) / r2, rtol=1e-11)
    phi2 = [[fscale(-1, ZVar(1))], [ZVar(0)]]        # rank-1 -> rank-2
    sig2 = minimal_inverse_of(phi2, rank=1)
    np.testing.assert_allclose(sig2.entry(0, 0).values(ctx), -z2.conj() / r2, rtol=1e-11)
    np.testing.assert_allclose(sig2.entry(0, 1).values(ctx), z1.conj() / r2, rtol=1e-11)
    # sigma2 sigma1 = 0 pointwise (minimal inverses compose to zero here)
    prod = fadd(fmul(sig2.entry(0, 0), sig1.entry(0, 0)),
                fmul(sig2.entry(0, 1), sig1.entry(1, 0)))
    np.testing.assert_allclose(prod.values(ctx), 0, atol=1e-12)


def test_minimal_inverse_full_rank_is_matrix_inverse_for_any_metric():
    rng = np.random.default_rng(7)
    z0 = rand_z(rng, 6, 1)
    ctx = ctx_of(z0)
    z = ZVar(0)
    phi = [[z, Const(0.0)], [Const(1.0), z]]
    h_tgt = FieldMatrixNode([[fadd(Const(1), abs2(z)), Const(0)],
                             [Const(0), Const(2)]])
    node = minimal_inverse_of(phi, rank=2, h_tgt=h_tgt)
    vals = np.stack([[node.entry(i, j).values(ctx) for j in range(2)]
                     for i in range(2)])
    zv = z0[:, 0]
    for k in range(len(zv)):
        m = np.array([[zv[k], 0], [1, zv[k]]])
        np.testing.assert_allclose(vals[:, :, k], np.linalg.inv(m),
                                   rtol=1e-9, atol=1e-12)


def test_minimal_inverse_projects_with_metric():
    # rank-1 map into C^2 with a nontrivial target metric:
    # sigma = (phi* h phi)^{-1} phi* h must satisfy sigma phi = 1
    rng = np.random.default_rng(8)
    z0 = rand_z(rng, 6, 1)
    ctx = ctx_of(z0)
    z = ZVar(0)
    phi = [[z], [Const(1.0)]]
    h = FieldMatrixNode([[fadd(Const(1), abs2(z)), Const(0)],
                         [Const(0), Const(3)]])
    node = minimal_inverse_of(phi, rank=1, h_tgt=h)
    comp = fadd(fmul(node.entry(0, 0), z), node.entry(0, 1))
    np.testing.assert_allclose(comp.values(ctx), 1.0, rtol=1e-10)
    # oracle from the normal equations, computed numerically per point
    zv = z0[:, 0]
    hm = np.zeros((len(zv), 2, 2), complex)
    hm[:, 0, 0] = 1 + np.abs(zv) ** 2
    hm[:, 1, 1] = 3
    phv = np.stack([zv, np.ones_like(zv)], axis=1)[:, :, None]
    ph_star = np.conj(np.transpose(phv, (0, 2, 1))) @ hm
    sig = np.linalg.solve(ph_star @ phv, ph_star)
    np.testing.assert_allclose(node.entry(0, 0).values(ctx), sig[:, 0, 0], rtol=1e-9)
    np.testing.assert_allclose(node.entry(0, 1).values(ctx), sig[:, 0, 1], rtol=1e-9)


def test_minimal_inverse_strict_raises_at_rank_drop():
    ctx = EvalContext.from_points(np.array([[0.0 + 0.0j]]), strict=True)
    node = minimal_inverse_of([[ZVar(0)]], rank=1)
    with pytest.raises(SingularPointError):
        node.entry(0, 0).values(ctx)


def test_mat_inverse_node():
    rng = np.random.default_rng(9)
    z0 = rand_z(rng, 5, 1)
    ctx = ctx_of(z0)
    z = ZVar(0)
    base = FieldMatrixNode([[Const(2.0), z], [F.fconj(z), fadd(Const(3), abs2(z))]])
    inv = MatInverse(base)
    zv = z0[:, 0]
    for k in range(len(zv)):
        m = np.array([[2, zv[k]], [np.conj(zv[k]), 3 + abs(zv[k]) ** 2]])
        got = np.array([[inv.entry(i, j).values(ctx)[k] for j in range(2)]
                        for i in range(2)])
        np.testing.assert_allclose(got, np.linalg.inv(m), rtol=1e-10)


def test_chart_only_fields_embed_into_fiber_contexts():
    # evaluating a chart field inside a simplex context must agree with
    # the plain chart evaluation (shared through the parent cache)
    z0 = np.array([[0.5 + 0.25j]])
    ctx = ctx_of(z0)
    f = fmul(ZVar(0), ZBarVar(0))
    sub = ctx.fiber((0.25,))
    v_chart = f.values(ctx)
    v_fiber = f.ev(sub, 1).value
    np.testing.assert_allclose(v_chart, v_fiber, atol=1e-14)
