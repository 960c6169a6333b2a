"""Acceptance criteria, one test each, at their stated tolerances and time budgets.

Each test prints one PASS/FAIL line; the session summary repeats them in order.
"""

import json
import time

import numpy as np
import pytest

from hamgeom import boltzmann, cli, dynamics, eikonal, geometry, riemann, samples, stability
from hamgeom.boltzmann import QuadratureSpec
from hamgeom.models import PhasePoint, builtin, emd, free, riemannian

from conftest import sine_variation

pytestmark = pytest.mark.acceptance


def _points(rng, count, n, scale=1.0, centre=0.0):
    return PhasePoint(centre + rng.uniform(-scale, scale, (count, n)),
                      rng.uniform(-scale, scale, (count, n)))


def _emd_configs(seed=101):
    rng = np.random.default_rng(seed)
    return [(n, samples.random_emd(rng, n)) for n in (2, 3) for _ in range(10)]


def test_criterion_01_sho_curvature(criterion, rng):
    t0 = time.perf_counter()
    worst = 0.0
    for w in (0.5, 1.0, 2.0, 10.0):
        pts = _points(rng, 10, 1, 2.0)
        worst = max(worst, np.max(np.abs(geometry.curvature(builtin("sho", omega=w), pts).R[..., 0, 0] - w * w)))
        inv = geometry.curvature(builtin("inverted_sho", omega=w), pts).R[..., 0, 0]
        worst = max(worst, np.max(np.abs(inv + w * w)))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-10 and dt < 1.0
    criterion(1, ok, f"max |R11 - (+/-)w^2| = {worst:.2e} (tol 1e-10)", dt)
    assert ok


def test_criterion_02_constant_field(criterion, rng):
    t0 = time.perf_counter()
    worst = 0.0
    for B in (0.1, 1.0, 5.0):
        R = geometry.curvature(builtin("constant_field", B=B), _points(rng, 50, 2, 3.0)).R
        worst = max(worst, np.max(np.abs(R - 0.25 * B * B * np.eye(2))))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-10 and dt < 5.0
    criterion(2, ok, f"max |R - B^2/4 I| = {worst:.2e} (tol 1e-10)", dt)
    assert ok


def test_criterion_03_riemannian_reduction(criterion, rng):
    t0 = time.perf_counter()
    cases = [(samples.unit_sphere, 1.3, 0.5), (samples.hyperbolic_plane, 0.0, 1.0),
             (samples.TrigMetric.random(rng, 2, 0.3), 0.0, 3.0)]
    tensor = scalar = 0.0
    for metric_fn, centre, spread in cases:
        mf = riemann.MetricField(2, metric_fn)
        pts = PhasePoint(centre + rng.uniform(-spread, spread, (100, 2)), rng.uniform(-1, 1, (100, 2)))
        res = geometry.curvature(riemannian(metric_fn, 2), pts)
        Rm = riemann.riemann(mf, pts.q)
        g = riemann.metric_value(mf, pts.q)
        v = np.einsum("...ij,...j->...i", np.linalg.inv(g), pts.p)
        target = -np.einsum("...im,...k,...l,...mklj->...ij", g, v, v, Rm)
        tensor = max(tensor, np.max(np.abs(res.R - target)))
        ric = np.einsum("...k,...l,...kl->...", v, v, riemann.ricci(mf, pts.q))
        scalar = max(scalar, np.max(np.abs(res.ricci - ric)))
    dt = time.perf_counter() - t0
    ok = tensor < 1e-8 and scalar < 1e-8 and dt < 30.0
    criterion(3, ok, f"tensor {tensor:.2e}, Ricci form {scalar:.2e} (tol 1e-8)", dt)
    assert ok


def test_criterion_04_emd_tensor_identity(criterion, rng):
    t0 = time.perf_counter()
    worst = 0.0
    for n, cfg in _emd_configs():
        pts = _points(rng, 100, n, 3.0)
        a = geometry.curvature(emd(cfg.metric, cfg.A, cfg.phi, n), pts).R
        b = geometry.emd_curvature_closed_form(cfg.metric, cfg.A, cfg.phi, pts).R
        worst = max(worst, np.max(np.abs(a - b)))
    dt = time.perf_counter() - t0
    ok = worst < 1e-7 and dt < 60.0
    criterion(4, ok, f"max tensor difference {worst:.2e} over 20 configs x 100 points (tol 1e-7)", dt)
    assert ok


def test_criterion_05_ricci_density(criterion, rng):
    t0 = time.perf_counter()
    gh_worst = 0.0
    mc_worst = 0.0
    for idx, (n, cfg) in enumerate(_emd_configs()):
        m = emd(cfg.metric, cfg.A, cfg.phi, n)
        q = rng.uniform(-3, 3, (3, n))
        closed = boltzmann.emd_density_closed_form(cfg.metric, cfg.A, cfg.phi, q)
        gh = boltzmann.ricci_density(m, q)
        gh_worst = max(gh_worst, np.max(np.abs(gh.value - closed)))
        if idx % 5 == 0:
            mc = boltzmann.ricci_density(m, q, QuadratureSpec("monte_carlo", samples=20000, seed=idx))
            mc_worst = max(mc_worst, np.max(np.abs(mc.value - closed) / mc.error))
    dt = time.perf_counter() - t0
    ok = gh_worst <= 1e-6 and mc_worst <= 3.0 and dt < 120.0
    criterion(5, ok, f"Gauss-Hermite {gh_worst:.2e} (tol 1e-6), Monte Carlo {mc_worst:.2f} stderr (max 3)", dt)
    assert ok


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def test_criterion_06_eikonal_closed_forms(criterion, rng):
    t0 = time.perf_counter()
    E, B = 0.5, 1.5
    radius = np.sqrt(2 * E) / B
    fr, mag = free(2), builtin("constant_field", B=B)
    s_err = sig_err = hj = sym = 0.0
    for k in range(20):
        # free particle
        Qp, Q = rng.uniform(-1, 1, (2, 2))
        T = rng.uniform(0.3, 2.0)
        s_err = max(s_err, _rel(eikonal.action_s(fr, Q, Qp, T), np.sum((Q - Qp) ** 2) / (2 * T)))
        sig_err = max(sig_err, _rel(eikonal.eikonal_sigma(fr, Q, Qp, E).sigma,
                                    np.sqrt(2 * E) * np.linalg.norm(Q - Qp)))
        # constant field, inside the cyclotron diameter and before the first conjugate time
        Zp = rng.uniform(-1, 1, 2)
        ang = rng.uniform(0, 2 * np.pi)
        Z = Zp + rng.uniform(0.1, 1.8) * radius * np.array([np.cos(ang), np.sin(ang)])
        T = rng.uniform(0.2, 0.8) * 2 * np.pi / B
        s_err = max(s_err, _rel(eikonal.action_s(mag, Z, Zp, T), eikonal.constant_field_action(Z, Zp, T, B)))
        sig_err = max(sig_err, _rel(eikonal.eikonal_sigma(mag, Z, Zp, E).sigma,
                                    eikonal.constant_field_sigma(Z, Zp, E, B)))
        if k < 2:
            for m, Qa, Qb in ((fr, Q, Qp), (mag, Z, Zp)):
                s_num = lambda X, T_, m=m, Qb=Qb: eikonal.action_s(m, X, Qb, T_)
                hj = max(hj, eikonal.hj_residual(m, s_num, Qa, mode="timedep", T=T))
                sig_num = lambda X, m=m, Qb=Qb: eikonal.eikonal_sigma(m, X, Qb, E).sigma
                hj = max(hj, eikonal.hj_residual(m, sig_num, Qa, E=E))
            probe = eikonal.symmetry_probe(mag, Z, Zp, E)
            sym = max(sym, abs(probe.difference - abs(B * (Z[0] * Zp[1] - Z[1] * Zp[0]))))
    dt = time.perf_counter() - t0
    ok = s_err <= 1e-7 and sig_err <= 1e-7 and hj < 1e-6 and sym <= 1e-6 and dt < 60.0
    criterion(6, ok, f"s_T rel {s_err:.1e}, sigma rel {sig_err:.1e}, HJ {hj:.1e}, "
                     f"symmetry {sym:.1e}", dt)
    assert ok


def test_criterion_07_sho_eikonal_bound(criterion, rng):
    t0 = time.perf_counter()
    w, E = 1.0, 0.5
    a = np.sqrt(2 * E) / w
    m = builtin("sho", omega=w)
    bound = np.pi * E / w
    sigmas = []
    for _ in range(50):
        Q, Qp = rng.uniform(-0.95, 0.95, 2) * a
        sigmas.append(eikonal.eikonal_sigma(m, [Q], [Qp], E).sigma)
    # the supremum sits at opposite turning points
    eps = 1e-3
    sigmas.append(eikonal.eikonal_sigma(m, [(1 - eps) * a], [-(1 - eps) * a], E).sigma)
    sigmas = np.array(sigmas)
    dt = time.perf_counter() - t0
    excess = float(np.max(sigmas - bound))
    gap = bound - float(np.max(sigmas))
    ok = excess <= 1e-8 and gap <= 1e-4 and dt < 30.0
    criterion(7, ok, f"max sigma - pi E/w = {excess:.2e} (<= 1e-8), gap to bound {gap:.2e} (<= 1e-4)", dt)
    assert ok


def test_criterion_08_second_variation_forms(criterion, rng):
    t0 = time.perf_counter()
    cfg = samples.random_emd(rng, 2)
    cases = [(free(2), 2), (builtin("sho", omega=[1.0, 1.7]), 2),
             (builtin("constant_field", B=1.3), 2), (emd(cfg.metric, cfg.A, cfg.phi, 2), 2)]
    worst = 0.0
    for m, n in cases:
        T = 1.5
        traj = dynamics.integrate(m, PhasePoint(rng.uniform(-0.5, 0.5, n), rng.uniform(-0.5, 0.5, n)), T)
        for _ in range(20):
            xi = sine_variation(rng.normal(size=(n, 3)), T)
            raw = dynamics.second_variation(traj, xi, "raw")
            cov = dynamics.second_variation(traj, xi, "covariant")
            worst = max(worst, abs(raw - cov))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-7 and dt < 60.0
    criterion(8, ok, f"max |raw - covariant| = {worst:.2e} over 4 models x 20 variations (tol 1e-7)", dt)
    assert ok


def test_criterion_09_tensoriality(criterion, rng):
    t0 = time.perf_counter()
    cfg = samples.random_emd(rng, 2)
    models_ = [free(2), builtin("sho", omega=[1.0, 1.7]), builtin("constant_field", B=1.3),
               riemannian(samples.analytic_2metric, 2), emd(cfg.metric, cfg.A, cfg.phi, 2)]
    worst = 0.0
    for m in models_:
        for _ in range(10):
            centre = rng.uniform(-0.5, 0.5, 2)
            d = geometry.PolynomialDiffeo.random(rng, 2, center=centre)
            q = np.array(d.forward(list(centre + rng.uniform(-0.3, 0.3, 2))), dtype=float)
            chk = geometry.transform_check(m, PhasePoint(q, rng.uniform(-1, 1, 2)), d)
            rate = chk.rate_residual(rng.normal(size=2), rng.normal(size=2))
            worst = max(worst, chk.R_residual, chk.gamma_residual, rate)
    dt = time.perf_counter() - t0
    ok = worst < 1e-7 and dt < 60.0
    criterion(9, ok, f"max residual {worst:.2e} over 5 models x 10 cubic maps (tol 1e-7)", dt)
    assert ok


@pytest.mark.xfail(strict=True, reason="positive curvature does not imply stability when k1 k2 < 0; "
                                       "see the k1 k2 < 0 counterexample in test_stability")
def test_criterion_10_stability_grid(criterion):
    t0 = time.perf_counter()
    ks = np.linspace(-3, 3, 20)
    s = stability.sweep(ks, ks, ks, np.linspace(0.2, 4.0, 20))
    v = s.violations()
    cp = v["curvature_positive=>stable"]
    same_sign = int(np.sum(s.k1[cp] * s.k2[cp] > 0))
    w = stability.assess(-3.0, -0.5, 3.5, np.sqrt(8.0))
    witness = w.sufficient_criterion_met and not w.curvature_positive and w.spectrally_stable
    dt = time.perf_counter() - t0
    counts = {k: int(x.size) for k, x in v.items()}
    ok = all(c == 0 for c in counts.values()) and witness and dt < 30.0
    criterion(10, ok, f"violations {counts} (all with k1 k2 < 0: {same_sign == 0}), "
                      f"witness {'ok' if witness else 'wrong'}", dt)
    assert ok


def test_criterion_11_jacobi_fields(criterion, rng):
    t0 = time.perf_counter()
    cfg = samples.random_emd(rng, 2)
    fd_worst = 0.0
    for m in (builtin("sho", omega=[1.0, 1.6]), builtin("constant_field", B=1.3),
              emd(cfg.metric, cfg.A, cfg.phi, 2)):
        z0 = rng.uniform(-0.5, 0.5, 4)
        T, h = 2.0, 1e-5
        traj = dynamics.integrate(m, PhasePoint.from_z(z0), T)
        for _ in range(3):
            d = rng.normal(size=4)
            d /= np.linalg.norm(d)
            plus = dynamics.integrate(m, PhasePoint.from_z(z0 + h * d), T).states[-1]
            minus = dynamics.integrate(m, PhasePoint.from_z(z0 - h * d), T).states[-1]
            jf = dynamics.jacobi_evolve(traj, d[:2], d[2:])
            jac = np.concatenate([jf.xi[-1, :, 0], jf.pi[-1, :, 0]])
            fd_worst = max(fd_worst, np.max(np.abs(jac - (plus - minus) / (2 * h))))
    pair_worst = 0.0
    for m in (builtin("sho", omega=[0.8, 1.9]), builtin("constant_field", B=2.0)):
        traj = dynamics.integrate(m, PhasePoint(rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)), 6.0)
        jf = dynamics.jacobi_evolve(traj, rng.normal(size=(2, 2)), rng.normal(size=(2, 2)))
        w = dynamics.symplectic_pairing(jf, jf, 0, 1)
        pair_worst = max(pair_worst, np.max(np.abs(w - w[0])))
    dt = time.perf_counter() - t0
    ok = fd_worst <= 1e-6 and pair_worst <= 1e-8 and dt < 30.0
    criterion(11, ok, f"finite differences {fd_worst:.2e} (tol 1e-6), pairing drift {pair_worst:.2e} (tol 1e-8)", dt)
    assert ok


def test_criterion_12_determinism(criterion, tmp_path, capsys):
    t0 = time.perf_counter()
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    codes = [cli.main(["verify", "--seed", "5", "--output", str(p)]) for p in (a, b)]
    capsys.readouterr()
    same = a.read_bytes() == b.read_bytes()
    json.loads(a.read_text())
    dt = time.perf_counter() - t0
    ok = same and codes == [0, 0]
    criterion(12, ok, f"verify twice with seed 5: byte-identical {same}, exit codes {codes}", dt)
    assert ok
