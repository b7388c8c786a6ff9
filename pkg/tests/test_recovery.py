import numpy as np
import pytest

from dynsamp import dynamics as dyn
from dynsamp import recovery as rec
from dynsamp import sampling as smp
from dynsamp.spectral import random_bandlimited
from util import random_system


def instance(n=60, s=5, k=4, m_t=12, sigma=0.0, seed=0, alpha=5.0, regime=2):
    sys, L = random_system(n, s, alpha=alpha, seed=100 + seed)
    rng = np.random.default_rng(seed)
    x0 = random_bandlimited(sys.basis, k, rng)
    w = random_bandlimited(sys.basis, k, rng)
    plan = smp.SamplingPlan.uniform(n, s, m_t, regime)
    ss = smp.draw_samples(plan, rng)
    meas = smp.measure(dyn.evolve(sys, x0, w), ss, sigma, rng)
    return sys, L, plan, meas, np.concatenate([x0, w])


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@pytest.mark.parametrize("regime", [1, 2])
def test_known_basis_noiseless_exact(regime):
    sys, L, plan, meas, truth = instance(m_t=15, regime=regime, seed=regime)
    res = rec.recover_known_basis(meas, plan, sys, 4)
    assert rel(res.w_aug_star, truth) <= 1e-8
    assert not res.diagnostics["rank_deficient"]
    report = rec.check_error_bounds(res, truth, sys, 4, delta=0.5)
    assert report["noise"].rhs == 0.0 and report["noise"].lhs == pytest.approx(0, abs=1e-10)


def test_known_basis_degenerate_horizon():
    sys, L = random_system(10, 1, seed=4)
    x0 = sys.basis.Uk(1)[:, 0] * 2.0
    w = sys.basis.Uk(1)[:, 0]
    plan = smp.SamplingPlan.uniform(10, 1, 10)
    ss = smp.SampleSet((np.arange(10),))
    meas = smp.measure(dyn.evolve(sys, x0, w), ss)
    res = rec.recover_known_basis(meas, plan, sys, 1, with_coherence=False)
    np.testing.assert_allclose(res.x0_star, x0, atol=1e-12)
    assert res.diagnostics["rank_deficient"] and res.diagnostics["rank"] == 1


def test_noise_bound_when_rip_holds():
    held = 0
    for seed in range(100):
        sys, L, plan, meas, truth = instance(n=40, s=4, k=3, m_t=25, sigma=1e-3, seed=seed)
        ss = meas.samples
        rip = smp.rip_check(sys, 3, plan, ss, trials=1, delta=0.5, rng=seed)
        res = rec.recover_known_basis(meas, plan, sys, 3, delta=0.5)
        if rip.passed:
            held += 1
            assert rec.check_error_bounds(res, truth, sys, 3, delta=0.5)["noise"].satisfied
    assert held > 50


def test_adversarial_noise_shifts_solution():
    sys, L, plan, meas, truth = instance(seed=3)
    rng = np.random.default_rng(99)
    w_tilde = np.concatenate([random_bandlimited(sys.basis, 4, rng), random_bandlimited(sys.basis, 4, rng)])
    t, v = meas.samples.rows()
    e = dyn.apply_pi(sys, 4, w_tilde).reshape(sys.s, sys.n)[t, v]
    adv = smp.Measurements(meas.z + e, meas.samples, 0.0, e)
    res = rec.recover_known_basis(adv, plan, sys, 4)
    assert rel(res.w_aug_star, truth + w_tilde) <= 1e-9


def test_noise_linear_in_sigma():
    sigmas = np.logspace(-7, -2, 6)
    med = []
    for sigma in sigmas:
        errs = []
        for seed in range(15):
            sys, L, plan, meas, truth = instance(sigma=sigma, seed=seed)
            errs.append(rel(rec.recover_known_basis(meas, plan, sys, 4, with_coherence=False).w_aug_star, truth))
        med.append(np.median(errs))
    slope = np.polyfit(np.log(sigmas), np.log(med), 1)[0]
    assert abs(slope - 1) <= 0.15


def test_known_basis_json_roundtrip():
    sys, L, plan, meas, truth = instance()
    res = rec.recover_known_basis(meas, plan, sys, 4)
    back = rec.RecoveryResult.from_json(res.to_json())
    np.testing.assert_array_equal(back.w_aug_star, res.w_aug_star)


def test_conjugate_residual_spd():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((30, 30))
    H = M @ M.T + 0.1 * np.eye(30)
    b = rng.standard_normal(30)
    info = rec.conjugate_residual(lambda x: H @ x, b, tol=1e-12, max_iters=500)
    assert info.converged
    np.testing.assert_allclose(H @ info.x, b, atol=1e-9)
    assert all(b2 <= a2 * (1 + 1e-12) for a2, b2 in zip(info.history, info.history[1:]))


def test_embedding_adjoint():
    sys, L, plan, meas, truth = instance()
    emb = rec.EmbeddingOperator(sys.A(), smp.WeightedOperator(meas.samples, plan), sys.s)
    rng = np.random.default_rng(1)
    v, y = rng.standard_normal(2 * sys.n), rng.standard_normal(meas.samples.total)
    assert emb.forward(v) @ y == pytest.approx(v @ emb.adjoint(y), rel=1e-10)


def _normal_residual(res, meas, plan, sys, L, g, gamma):
    emb = rec.EmbeddingOperator(sys.A(), smp.WeightedOperator(meas.samples, plan), sys.s)
    n, v = sys.n, res.v_star
    b = emb.adjoint(smp.WeightedOperator(meas.samples, plan).weight(meas.z))
    Hv = emb.adjoint(emb.forward(v)) + gamma * np.concatenate([g.apply(L, v[:n]), g.apply(L, v[n:])])
    return np.linalg.norm(Hv - b) / np.linalg.norm(b)


@pytest.mark.parametrize("gamma", [3.0**6, 3.0**11, 3.0**16])
def test_regularized_normal_equation(gamma):
    sys, L, plan, meas, truth = instance(sigma=1e-3)
    g = rec.RegularizerPoly.power(4)
    res = rec.recover_regularized(meas, plan, sys.A(), L, g, gamma)
    assert res.diagnostics["converged"]
    assert _normal_residual(res, meas, plan, sys, L, g, gamma) <= 1e-8
    report = rec.check_error_bounds(res, truth, sys, 4, delta=0.5)
    assert report["off_band"].satisfied


def test_regularized_errors():
    sys, L, plan, meas, truth = instance()
    with pytest.raises(ValueError):
        rec.recover_regularized(meas, plan, sys.A(), L, rec.RegularizerPoly.power(4), 0.0)
    res = rec.recover_regularized(meas, plan, sys.A(), L, rec.RegularizerPoly.power(4), 10.0, max_iters=2)
    assert not res.diagnostics["converged"] and res.diagnostics["rel_residual"] > 1e-10
    with pytest.raises(ValueError):
        rec.recover_regularized(meas, plan, sys.A(), L, rec.RegularizerPoly((1.0, -1.0)), 1.0)


def test_regularized_exact_when_g_vanishes_on_band():
    # g = prod_j (L - theta_j)^2 over the band; the truth is then a zero of the objective
    sys, L, plan, meas, truth = instance(n=40, s=5, k=3, m_t=10, seed=5)
    roots = sys.basis.theta[:3]
    poly = np.polynomial.polynomial.polyfromroots(np.repeat(roots, 2))
    g = rec.RegularizerPoly(tuple(poly), require_monotone=False)
    res = rec.recover_regularized(meas, plan, sys.A(), L, g, 1e-3, tol=1e-13, max_iters=20_000)
    assert rel(res.w_aug_star, truth) <= 1e-6


def test_regularized_matches_known_basis_k1():
    # with k = 1 the band is the constant-like eigenvector and L^4 vanishes on it
    sys, L, plan, meas, truth = instance(n=30, s=4, k=1, m_t=6, seed=6)
    res = rec.recover_regularized(meas, plan, sys.A(), L, rec.RegularizerPoly.power(4), 1e-2,
                                  tol=1e-13, max_iters=20_000)
    assert rel(res.w_aug_star, truth) <= 1e-6


def test_betabd_noiseless():
    sys, L, plan, meas, truth = instance(seed=7)
    g = rec.RegularizerPoly.power(4)
    res = rec.recover_regularized(meas, plan, sys.A(), L, g, 3.0**8)
    report = rec.check_error_bounds(res, truth, sys, 4, delta=0.5)
    th = sys.basis.theta
    assert report["off_band"].rhs == pytest.approx(np.sqrt(g(th[3]) / g(th[4])) * np.linalg.norm(truth))
    assert report.all_satisfied


def test_regularizer_poly():
    g = rec.RegularizerPoly.power(2)
    L = np.array([[1.0, -1.0], [-1.0, 1.0]])
    np.testing.assert_allclose(g.apply(L, np.array([1.0, 0.0])), L @ L @ [1.0, 0.0])
    assert g(3.0) == 9.0 and g.describe() == "1*L^2"
