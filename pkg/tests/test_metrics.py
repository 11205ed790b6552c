"""Divergence estimators and their closed-form oracles."""

import math

import numpy as np
import pytest

from temperlab.distributions import GaussianSpec, SmoothedUniformSpec
from temperlab.inequalities import chi2_gauss_um
from temperlab.metrics import (
    chi2_quadrature,
    fisher_divergence,
    kl_gaussians,
    kl_hist,
    kl_quadrature,
    metrics_to_csv,
    tv_hist,
)
from temperlab.sampler import GaussianLaw

from conftest import gauss_1d


def _law(mean, cov):
    return GaussianLaw(mean=np.atleast_1d(np.asarray(mean, float)),
                       covariance=np.atleast_2d(np.asarray(cov, float)))


# ---------------------------------------------------------------------------
# Gaussian KL closed form
# ---------------------------------------------------------------------------

def test_kl_gaussians_identity():
    p = _law([0.3], [[1.7]])
    assert kl_gaussians(p, p) == pytest.approx(0.0, abs=1e-14)


def test_kl_gaussians_isotropic_2d():
    p = _law([0.0, 0.0], np.eye(2))
    q = _law([0.0, 0.0], 10 * np.eye(2))
    assert kl_gaussians(p, q) == pytest.approx(0.5 * (0.2 - 2 + math.log(100.0)), rel=1e-12)


def test_kl_gaussians_nonnegative_random_pairs():
    rng = np.random.default_rng(5)
    for _ in range(100):
        d = int(rng.integers(1, 4))
        a = rng.standard_normal((d, d))
        b = rng.standard_normal((d, d))
        p = _law(rng.standard_normal(d), a @ a.T + 0.1 * np.eye(d))
        q = _law(rng.standard_normal(d), b @ b.T + 0.1 * np.eye(d))
        assert kl_gaussians(p, q) >= -1e-12


def test_kl_quadrature_matches_closed_form():
    p = gauss_1d(0.0, 1.0)
    q = gauss_1d(1.5, 2.0)
    exact = kl_gaussians(_law([0.0], [[1.0]]), _law([1.5], [[2.0]]))
    assert kl_quadrature(p, q) == pytest.approx(exact, rel=1e-8)


# ---------------------------------------------------------------------------
# histogram estimators
# ---------------------------------------------------------------------------

def test_tv_hist_self_consistency():
    rng = np.random.default_rng(11)
    samples = rng.normal(0.5, 1.2, size=100_000)
    res = tv_hist(samples, gauss_1d(0.5, 1.2 ** 2))
    assert res.value <= 0.02
    assert res.stable


def test_tv_hist_disjoint_support():
    samples = np.full(5000, 500.0)
    res = tv_hist(samples, gauss_1d(0.0, 1.0))
    assert res.value >= 0.98


def test_tv_hist_warns_on_few_samples():
    with pytest.warns(UserWarning):
        tv_hist(np.zeros(10), gauss_1d(0.0, 1.0))


def test_tv_hist_calibration_over_seeds():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        samples = rng.standard_normal(100_000)
        assert tv_hist(samples, gauss_1d(0, 1)).value <= 0.02


def test_kl_hist_self_consistency():
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        samples = rng.standard_normal(100_000)
        res = kl_hist(samples, gauss_1d(0, 1))
        assert res.value <= 0.05


def test_kl_hist_tracks_gaussian_closed_form():
    rng = np.random.default_rng(21)
    samples = rng.normal(1.0, 1.0, size=100_000)
    est = kl_hist(samples, gauss_1d(0.0, 1.0)).value
    exact = kl_gaussians(_law([1.0], [[1.0]]), _law([0.0], [[1.0]]))
    assert abs(est - exact) <= 0.05


def test_tv_hist_2d():
    rng = np.random.default_rng(31)
    samples = rng.standard_normal((100_000, 2))
    spec = GaussianSpec(mean=[0.0, 0.0], covariance=np.eye(2).tolist())
    # 2D histograms spread 1e5 samples over bins^2 cells, so the self-TV
    # noise floor is far higher than in 1D; use a coarser grid
    assert tv_hist(samples, spec, bins=64).value <= 0.06


def test_pinsker_consistency():
    rng = np.random.default_rng(41)
    pairs = [
        ((0.0, 1.0), (0.5, 1.0)),
        ((0.0, 1.0), (0.0, 2.0)),
        ((1.0, 0.5), (0.0, 1.0)),
    ]
    for (mp, vp), (mq, vq) in pairs:
        samples = rng.normal(mp, math.sqrt(vp), size=100_000)
        tv = tv_hist(samples, gauss_1d(mq, vq)).value
        kl = kl_gaussians(_law([mp], [[vp]]), _law([mq], [[vq]]))
        assert tv <= math.sqrt(kl / 2.0) + 0.03


# ---------------------------------------------------------------------------
# quadrature divergences
# ---------------------------------------------------------------------------

def test_chi2_identity():
    assert chi2_quadrature(gauss_1d(0, 1), gauss_1d(0, 1)) == pytest.approx(0.0, abs=1e-10)


def test_chi2_gaussian_variance_pair():
    # chi^2(N(0,1), N(0,s)) + 1 = sqrt(s^2/(2s - 1))
    s = 2.0
    val = chi2_quadrature(gauss_1d(0, 1), gauss_1d(0, s))
    assert val == pytest.approx(math.sqrt(s * s / (2 * s - 1)) - 1.0, rel=1e-9)


def test_chi2_gaussian_mean_pair():
    mu = 1.25
    val = chi2_quadrature(gauss_1d(mu, 1), gauss_1d(0, 1))
    assert val == pytest.approx(math.exp(mu * mu) - 1.0, rel=1e-9)


def test_chi2_cross_module_agreement():
    m = 4.0
    via_metrics = chi2_quadrature(gauss_1d(m, 1.0), SmoothedUniformSpec(m=m))
    via_inequalities = chi2_gauss_um(m)
    assert abs(via_metrics - via_inequalities) <= 1e-10
    assert via_metrics + 1.0 <= 5 * m


def test_chi2_tail_domination_failure():
    # p has much heavier tails than q: the integral diverges
    with pytest.raises(ValueError):
        chi2_quadrature(gauss_1d(0, 9.0), gauss_1d(0, 1.0))


def test_fisher_identity():
    assert fisher_divergence(gauss_1d(0, 1), gauss_1d(0, 1)) == pytest.approx(0.0, abs=1e-12)


def test_fisher_mean_shift():
    mu = 0.8
    assert fisher_divergence(gauss_1d(0, 1), gauss_1d(mu, 1)) == pytest.approx(mu * mu, rel=1e-9)


def test_fisher_variance_change():
    sigma2 = 3.0
    expected = (1 - 1 / sigma2) ** 2
    assert fisher_divergence(gauss_1d(0, 1), gauss_1d(0, sigma2)) == pytest.approx(expected, rel=1e-9)


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------

def test_metrics_csv_format(tmp_path):
    out = tmp_path / "metrics.csv"
    metrics_to_csv(
        [
            (0.5, "tv_hist", 0.12, "bins=256;sensitivity=0.001"),
            (1.0, "kl_exact", 0.05, ""),
        ],
        out,
    )
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "time_or_level,metric,value,estimator_meta"
    assert len(lines) == 3
    assert lines[1].startswith("0.5,tv_hist,")
