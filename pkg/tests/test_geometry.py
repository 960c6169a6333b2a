import numpy as np
import pytest
from hypothesis import given, strategies as st

from hamgeom import geometry, jets, models, riemann, samples
from hamgeom.errors import NotConvexError
from hamgeom.models import PhasePoint


def _points(rng, count, n, scale=1.0, center=None):
    c = np.zeros(n) if center is None else np.asarray(center)
    return PhasePoint(c + rng.uniform(-scale, scale, (count, n)), rng.uniform(-scale, scale, (count, n)))


def test_sho_table():
    t = geometry.derivative_table(models.builtin("sho", omega=1.7), PhasePoint([0.4], [-0.3]))
    assert t.partial(upper=(0, 0)) == pytest.approx(1.0)
    assert t.partial(lower=(0, 0)) == pytest.approx(1.7 ** 2)
    assert t.partial(upper=(0,), lower=(0,)) == pytest.approx(0.0)


def test_free_table_second_order():
    t = geometry.derivative_table(models.free(1), PhasePoint([0.9], [0.2]))
    assert t.matrix("pp")[0, 0] == 1.0
    assert t.matrix("pq")[0, 0] == 0.0
    assert t.matrix("qq")[0, 0] == 0.0


def test_literal_gauge_mixed_partial():
    B = 1.3
    m = models.from_expression("(p1 + B*q2)^2/2 + (p2 - B*q1)^2/2", 2, {"B": B})
    t = geometry.derivative_table(m, PhasePoint([0.0, 0.0], [0.0, 0.0]))
    assert t.partial(upper=(0,), lower=(1,)) == pytest.approx(B)
    assert t.partial(upper=(1,), lower=(0,)) == pytest.approx(-B)


def test_table_schwarz_symmetry(rng):
    cfg = samples.random_emd(rng, 2)
    t = geometry.derivative_table(models.emd(cfg.metric, cfg.A, cfg.phi, 2), _points(rng, 1, 2).z[0])
    a = t.partial(upper=(0, 1), lower=(1, 0))
    b = t.partial(upper=(1, 0), lower=(0, 1))
    assert abs(a - b) < 1e-12
    np.testing.assert_allclose(t.matrix("pp"), t.matrix("pp").T, atol=1e-12)


def test_mass_inverse_riemannian(rng):
    m = models.riemannian(samples.analytic_2metric, 2)
    pts = _points(rng, 6, 2)
    G = geometry.mass_inverse(geometry.derivative_table(m, pts))
    g = riemann.metric_value(riemann.MetricField(2, samples.analytic_2metric), pts.q)
    np.testing.assert_allclose(G, g, atol=1e-12)


def test_mass_inverse_free():
    G = geometry.mass_inverse(geometry.derivative_table(models.free(3), np.zeros(6)))
    np.testing.assert_allclose(G, np.eye(3))


def test_quartic_momentum_is_not_convex():
    m = models.from_expression("p1^4/4 + q1^2/2", 1)
    with pytest.raises(NotConvexError):
        geometry.curvature(m, PhasePoint([0.3], [0.0]))


def test_indefinite_kinetic_term_rejected():
    m = models.from_expression("(p1^2 - p2^2)/2", 2)
    with pytest.raises(NotConvexError):
        geometry.curvature(m, np.zeros(4))


def test_poisson_bracket_examples():
    w = 1.4
    m = models.builtin("sho", omega=w)
    pt = PhasePoint([0.6], [-0.8])
    assert geometry.poisson_bracket(m, lambda q, p: q[0], pt) == pytest.approx(-0.8)
    assert geometry.poisson_bracket(m, lambda q, p: p[0], pt) == pytest.approx(-w * w * 0.6)
    assert geometry.poisson_bracket(m, m, pt) == pytest.approx(0.0, abs=1e-15)


@given(st.integers(0, 1000))
def test_poisson_bracket_antisymmetric(seed):
    rng = np.random.default_rng(seed)
    pt = _points(rng, 1, 2).z[0]

    def f(q, p):
        return jets.sin(q[0]) * p[1] + q[1] * q[1] * p[0]

    def g(q, p):
        return jets.exp(0.3 * q[1]) * p[0] * p[0] + q[0]

    fg = geometry.poisson_bracket(f, g, pt)
    gf = geometry.poisson_bracket(g, f, pt)
    assert fg == pytest.approx(-gf, abs=1e-13)


def test_free_gamma_is_zero(rng):
    t = geometry.derivative_table(models.free(2), _points(rng, 3, 2))
    assert np.all(geometry.gamma(t) == 0.0)


def test_constant_field_gamma_is_half_field_strength(rng):
    B = 2.2
    m = models.builtin("constant_field", B=B)
    F = np.array([[0.0, B], [-B, 0.0]])
    gam = geometry.curvature(m, _points(rng, 5, 2)).gamma
    # gamma^k_j = 1/2 F_jk
    np.testing.assert_allclose(gam, np.broadcast_to(0.5 * F.T, gam.shape), atol=1e-12)


def test_riemannian_gamma_is_christoffel_contracted(rng):
    mf = riemann.MetricField(2, samples.analytic_2metric)
    m = models.riemannian(samples.analytic_2metric, 2)
    pts = _points(rng, 8, 2)
    res = geometry.curvature(m, pts)
    G = riemann.christoffel(mf, pts.q)
    want = np.einsum("...ijk,...k->...ij", G, res.velocity)
    np.testing.assert_allclose(res.gamma, want, atol=1e-10)


@pytest.mark.parametrize("w", [0.5, 1.0, 3.0])
def test_sho_curvature(w, rng):
    r = geometry.curvature(models.builtin("sho", omega=w), _points(rng, 4, 1))
    np.testing.assert_allclose(r.R[..., 0, 0], w * w, rtol=1e-12)
    r = geometry.curvature(models.builtin("inverted_sho", omega=w), _points(rng, 4, 1))
    np.testing.assert_allclose(r.R[..., 0, 0], -w * w, rtol=1e-12)


def test_constant_field_curvature(rng):
    B = 1.7
    r = geometry.curvature(models.builtin("constant_field", B=B), _points(rng, 6, 2))
    np.testing.assert_allclose(r.R, np.broadcast_to(0.25 * B * B * np.eye(2), r.R.shape), atol=1e-12)


def test_sphere_ricci_form_is_twice_energy(rng):
    m = models.riemannian(samples.unit_sphere, 2)
    pts = _points(rng, 10, 2, 0.5, center=[1.3, 0.0])
    np.testing.assert_allclose(geometry.ricci_form(m, pts), 2.0 * m.value(pts), rtol=1e-10)


@pytest.mark.parametrize("metric", [samples.unit_sphere, samples.hyperbolic_plane, samples.analytic_2metric])
def test_riemannian_reduction(metric):
    rng = np.random.default_rng(5)
    mf = riemann.MetricField(2, metric)
    center = [1.2, 0.0] if metric is samples.unit_sphere else [0.0, 0.0]
    pts = _points(rng, 100, 2, 0.5, center=center)
    res = geometry.curvature(models.riemannian(metric, 2), pts)
    g = riemann.metric_value(mf, pts.q)
    Rm = riemann.riemann(mf, pts.q)
    v = res.velocity
    residual = res.R + np.einsum("...im,...k,...l,...mklj->...ij", g, v, v, Rm)
    assert np.max(np.abs(residual)) < 1e-8
    Ric = riemann.ricci(mf, pts.q)
    assert np.max(np.abs(res.ricci - np.einsum("...k,...l,...kl->...", v, v, Ric))) < 1e-8


def test_riemannian_reduction_three_dimensions(rng):
    cfg = samples.random_emd(rng, 3)
    mf = riemann.MetricField(3, cfg.metric)
    pts = _points(rng, 30, 3, 2.0)
    res = geometry.curvature(models.riemannian(cfg.metric, 3), pts)
    g = riemann.metric_value(mf, pts.q)
    target = -np.einsum("...im,...k,...l,...mklj->...ij", g, res.velocity, res.velocity,
                        riemann.riemann(mf, pts.q))
    assert np.max(np.abs(res.R - target)) < 1e-8


@given(st.integers(0, 1000))
def test_pure_potential_curvature_is_hessian(seed):
    rng = np.random.default_rng(seed)
    phi = samples.TrigScalar.random(rng, 2, terms=3)
    m = models.emd(None, None, phi, 2)
    pts = _points(rng, 4, 2, 2.0)
    R = geometry.curvature(m, pts).R
    hess = geometry.emd_fields(None, None, phi, pts.q)["hess_phi"]
    np.testing.assert_allclose(R, hess, atol=1e-12)


def test_gauge_invariance(rng):
    cfg = samples.random_emd(rng, 2)

    def shifted(q):
        a = cfg.A(q)
        # grad of chi = sin(x) cos(y) + x^2 y
        return [a[0] + jets.cos(q[0]) * jets.cos(q[1]) + 2.0 * q[0] * q[1],
                a[1] - jets.sin(q[0]) * jets.sin(q[1]) + q[0] * q[0]]

    pts = _points(rng, 10, 2, 1.5)
    m1 = models.emd(cfg.metric, cfg.A, cfg.phi, 2)
    m2 = models.emd(cfg.metric, shifted, cfg.phi, 2)
    # same kinetic momentum: p' = p + grad chi
    q = pts.q
    grad = np.column_stack([np.cos(q[:, 0]) * np.cos(q[:, 1]) + 2 * q[:, 0] * q[:, 1],
                            -np.sin(q[:, 0]) * np.sin(q[:, 1]) + q[:, 0] ** 2])
    r1 = geometry.curvature(m1, pts).R
    r2 = geometry.curvature(m2, PhasePoint(q, pts.p + grad)).R
    assert np.max(np.abs(r1 - r2)) < 1e-9


def test_closed_form_trivial_and_constant_field(rng):
    pts = _points(rng, 5, 2)
    r0 = geometry.emd_curvature_closed_form(None, None, None, pts).R
    assert np.max(np.abs(r0)) == 0.0
    B = 0.8
    rB = geometry.emd_curvature_closed_form(None, lambda q: [-0.5 * B * q[1], 0.5 * B * q[0]], None, pts).R
    np.testing.assert_allclose(rB, np.broadcast_to(0.25 * B * B * np.eye(2), rB.shape), atol=1e-14)


@pytest.mark.parametrize("n", [2, 3])
def test_closed_form_matches_bracket_pipeline(n, rng):
    cfg = samples.random_emd(rng, n)
    pts = _points(rng, 20, n, 2.0)
    a = geometry.curvature(models.emd(cfg.metric, cfg.A, cfg.phi, n), pts).R
    b = geometry.emd_curvature_closed_form(cfg.metric, cfg.A, cfg.phi, pts).R
    assert np.max(np.abs(a - b)) < 1e-7


def test_curvature_symmetric_and_inverse_identity(rng):
    cfg = samples.random_emd(rng, 3)
    res = geometry.curvature(models.emd(cfg.metric, cfg.A, cfg.phi, 3), _points(rng, 10, 3))
    np.testing.assert_allclose(res.R, np.swapaxes(res.R, -1, -2), atol=1e-10)
    eye = np.einsum("...ik,...kj->...ij", res.Hpp, res.G)
    np.testing.assert_allclose(eye, np.broadcast_to(np.eye(3), eye.shape), atol=1e-10)
    assert res.antisymmetric_part.shape == res.R.shape


def test_identity_diffeo_has_zero_residual(rng):
    cfg = samples.random_emd(rng, 2)
    m = models.emd(cfg.metric, cfg.A, cfg.phi, 2)
    pt = _points(rng, 1, 2).z[0]
    d = geometry.PolynomialDiffeo(np.zeros(2), np.eye(2))
    chk = geometry.transform_check(m, pt, d)
    assert chk.R_residual < 1e-13 and chk.gamma_residual < 1e-13


def test_linear_diffeo_on_sho(rng):
    m = models.builtin("sho", omega=[1.0, 2.5])
    d = geometry.PolynomialDiffeo(np.zeros(2), [[1.3, 0.4], [-0.2, 0.8]])
    chk = geometry.transform_check(m, _points(rng, 1, 2).z[0], d)
    assert chk.R_residual < 1e-9 and chk.gamma_residual < 1e-9


@given(st.integers(0, 1000))
def test_tensor_law_under_cubic_diffeos(seed):
    rng = np.random.default_rng(seed)
    cfg = samples.random_emd(rng, 2)
    m = models.emd(cfg.metric, cfg.A, cfg.phi, 2)
    d = geometry.PolynomialDiffeo.random(rng, 2, center=rng.uniform(-0.5, 0.5, 2))
    # stay in the neighbourhood where the cubic map is invertible
    q = np.array(d.forward(list(d.center + rng.uniform(-0.3, 0.3, 2))))
    pt = PhasePoint(q, rng.uniform(-1, 1, 2))
    chk = geometry.transform_check(m, pt, d)
    assert chk.R_residual < 1e-7
    assert chk.gamma_residual < 1e-7
    xi, xidot = rng.normal(size=(2, 2))
    assert chk.rate_residual(xi, xidot) < 1e-7
