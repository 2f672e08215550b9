from __future__ import annotations

import numpy as np
import pytest

from specdiff.denoiser import (
    GaussianDenoiser,
    GmmDenoiser,
    gaussian_mmse_predict,
    gmm_mmse_predict,
)


def test_gaussian_mmse_hand_cases():
    x = np.array([1.0, 2.0, -0.5])
    assert np.array_equal(gaussian_mmse_predict(x, 0.0, 0.5, 0.3), x)
    mid = gaussian_mmse_predict(x, 0.3, 0.5, 0.3)
    assert np.max(np.abs(mid - (x + 0.5) / 2.0)) < 1e-14
    flat = gaussian_mmse_predict(x, 1.0, 0.5, 1e9)
    assert np.max(np.abs(flat - x) / np.abs(x)) < 1e-6


def test_gaussian_mmse_rejects_bad_tau():
    with pytest.raises(ValueError):
        gaussian_mmse_predict(np.zeros(2), 1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        gaussian_mmse_predict(np.zeros(2), -1.0, 0.0, 1.0)


def test_gaussian_mmse_is_affine():
    rng = np.random.default_rng(0)
    mu, tau, sig = 0.3, 0.7, 0.4
    shift = sig**2 * mu / (sig**2 + tau**2)
    for _ in range(20):
        x = rng.standard_normal(6)
        y = rng.standard_normal(6)
        a, b = rng.uniform(-2, 2, size=2)
        lhs = gaussian_mmse_predict(a * x + b * y, sig, mu, tau)
        rhs = (a * gaussian_mmse_predict(x, sig, mu, tau)
               + b * gaussian_mmse_predict(y, sig, mu, tau)
               + (1 - a - b) * shift)
        assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_gmm_single_component_reduces_to_gaussian():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(10)
    got = gmm_mmse_predict(x, 0.6, [1.0], [0.2], [0.9])
    want = gaussian_mmse_predict(x, 0.6, 0.2, 0.9)
    assert np.max(np.abs(got - want)) < 1e-14


def test_gmm_symmetric_components_cancel_at_zero():
    out = gmm_mmse_predict(np.zeros(4), 0.5, [0.5, 0.5], [-1.0, 1.0], [0.3, 0.3])
    assert np.max(np.abs(out)) < 1e-14


def _brute_force_posterior_mean(x, sigma, weights, means, taus):
    # E[x0 | x] by numerical integration over a wide grid
    grid = np.linspace(-40.0, 40.0, 400_001)
    prior = np.zeros_like(grid)
    for w, m, t in zip(weights, means, taus):
        prior += w * np.exp(-0.5 * (grid - m) ** 2 / t**2) / (t * np.sqrt(2 * np.pi))
    lik = np.exp(-0.5 * (x - grid) ** 2 / sigma**2)
    joint = prior * lik
    trapezoid = getattr(np, "trapezoid", np.trapz)
    return float(trapezoid(grid * joint, grid) / trapezoid(joint, grid))


def test_gmm_two_component_value_vs_integration():
    want = _brute_force_posterior_mean(9.9, 0.1, [0.5, 0.5], [0.0, 10.0], [0.1, 0.1])
    got = gmm_mmse_predict(np.array([9.9]), 0.1, [0.5, 0.5], [0.0, 10.0], [0.1, 0.1])[0]
    assert abs(want - 9.95) < 1e-3
    assert abs(got - 9.95) < 1e-3
    assert abs(got - want) < 1e-6


def test_gmm_random_cases_vs_integration():
    rng = np.random.default_rng(4)
    for _ in range(5):
        w = rng.uniform(0.2, 1.0, 3)
        w /= w.sum()
        mu = rng.uniform(-2, 2, 3)
        tau = rng.uniform(0.2, 1.5, 3)
        sigma = float(rng.uniform(0.05, 2.0))
        x = float(rng.uniform(-3, 3))
        want = _brute_force_posterior_mean(x, sigma, w, mu, tau)
        got = gmm_mmse_predict(np.array([x]), sigma, w, mu, tau)[0]
        assert abs(got - want) < 1e-6


def test_gmm_output_in_convex_hull_of_component_means():
    rng = np.random.default_rng(2)
    w = np.array([0.2, 0.5, 0.3])
    mu = np.array([-1.0, 0.5, 2.0])
    tau = np.array([0.4, 0.2, 0.8])
    sigma = 0.7
    x = rng.standard_normal(50)
    out = gmm_mmse_predict(x, sigma, w, mu, tau)
    per_comp = np.stack([gaussian_mmse_predict(x, sigma, m, t)
                         for m, t in zip(mu, tau)])
    assert np.all(out >= per_comp.min(axis=0) - 1e-12)
    assert np.all(out <= per_comp.max(axis=0) + 1e-12)


def test_gmm_extreme_inputs_stay_finite():
    # log-space responsibilities must survive huge |x|
    out = gmm_mmse_predict(np.array([1e8, -1e8]), 1.0,
                           [0.5, 0.5], [0.0, 5.0], [1.0, 1.0])
    assert np.all(np.isfinite(out))


def test_gmm_validation_errors():
    with pytest.raises(ValueError):
        gmm_mmse_predict(np.zeros(2), 1.0, [], [], [])
    with pytest.raises(ValueError):
        gmm_mmse_predict(np.zeros(2), 1.0, [0.6, 0.6], [0.0, 1.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        gmm_mmse_predict(np.zeros(2), 1.0, [1.0], [0.0], [-1.0])


def _gmm_mean_derivative(x, sigma, w, mu, tau):
    # d/dx of sum_k rho_k(x) m_k(x) with softmax responsibilities
    w, mu, tau = map(np.asarray, (w, mu, tau))
    v = tau**2 + sigma**2
    log_r = np.log(w) - 0.5 * np.log(v) - 0.5 * (x - mu) ** 2 / v
    log_r -= log_r.max()
    rho = np.exp(log_r)
    rho /= rho.sum()
    score = (mu - x) / v
    drho = rho * (score - np.sum(rho * score))
    m = (sigma**2 * mu + tau**2 * x) / v
    dm = tau**2 / v
    return float(np.sum(drho * m + rho * dm))


def test_denoiser_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    h = 1e-6
    for _ in range(20):
        x = float(rng.uniform(-2.0, 3.0))
        sigma = float(rng.uniform(0.1, 2.0))

        den_g = GaussianDenoiser(mu=0.2, tau=0.8)
        fd = (den_g.predict_x0(np.array([x + h]), sigma)
              - den_g.predict_x0(np.array([x - h]), sigma))[0] / (2 * h)
        assert abs(fd - 0.8**2 / (sigma**2 + 0.8**2)) < 1e-6

        w, mu, tau = [0.4, 0.6], [0.0, 1.0], [0.3, 0.5]
        den_m = GmmDenoiser(w, mu, tau)
        fd = (den_m.predict_x0(np.array([x + h]), sigma)
              - den_m.predict_x0(np.array([x - h]), sigma))[0] / (2 * h)
        assert abs(fd - _gmm_mean_derivative(x, sigma, w, mu, tau)) < 1e-6


def test_gmm_denoiser_from_file(tmp_path):
    spec = tmp_path / "mix.txt"
    spec.write_text(
        "# toy bimodal prior\n"
        "1.0 0.3 0.08\n"
        "1.0 0.7 0.08   # weights get normalized\n",
        encoding="utf-8")
    den = GmmDenoiser.from_file(spec)
    assert np.allclose(den.weights, [0.5, 0.5])
    assert np.allclose(den.means, [0.3, 0.7])
    out = den.predict_x0(np.array([0.5]), 0.05)
    assert abs(out[0] - 0.5) < 1e-9


def test_gmm_denoiser_file_errors(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("0.5 0.3\n", encoding="utf-8")
    with pytest.raises(ValueError):
        GmmDenoiser.from_file(bad)
    empty = tmp_path / "empty.txt"
    empty.write_text("# nothing\n", encoding="utf-8")
    with pytest.raises(ValueError):
        GmmDenoiser.from_file(empty)


def test_denoisers_are_deterministic():
    x = np.linspace(-1, 2, 9)
    den = GmmDenoiser([0.5, 0.5], [0.0, 1.0], [0.2, 0.2])
    a = den.predict_x0(x, 0.4, step=3, label=7)
    b = den.predict_x0(x, 0.4, step=3, label=7)
    assert np.array_equal(a, b)
