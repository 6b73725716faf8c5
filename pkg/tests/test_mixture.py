"""Tests for Cholesky-parameterized Gaussian mixtures."""

import numpy as np
import pytest
from scipy.stats import multivariate_normal, norm

from framework.augmentation.mixture import (
    MixtureDensity,
    component_log_density,
    component_log_densities,
    kl_to_standard_normal,
    mixture_log_density,
    sample_pbm,
    validate_mixture,
)
from probeopt_core.errors import NumericalInstabilityError


def random_factor(rng: np.random.Generator, d: int) -> np.ndarray:
    """Upper-triangular factor with a diagonal in [1, 2]."""
    chol = np.triu(rng.normal(scale=0.3, size=(d, d)), k=1)
    chol[np.diag_indices(d)] = rng.uniform(1.0, 2.0, size=d)
    return chol


def random_mixture(seed: int, g: int, d: int) -> MixtureDensity:
    rng = np.random.default_rng(seed)
    weights = rng.dirichlet(np.ones(g))
    return MixtureDensity(
        weights=weights,
        means=rng.normal(size=(g, d)),
        chol=np.stack([random_factor(rng, d) for _ in range(g)]),
    )


def test_standard_normal_at_origin():
    """ln N(0; 0, 1) = -0.5 ln 2pi."""
    assert component_log_density(np.zeros(1), np.eye(1), np.zeros(1)) == pytest.approx(-0.918939, abs=1e-6)


def test_diagonal_factor_is_a_product_of_normals():
    """Precision u^2 means standard deviation 1/u per coordinate."""
    u = np.array([2.0, 0.5, 1.5])
    mean = np.array([0.1, -1.0, 2.0])
    r = np.array([0.4, 0.3, 1.0])
    expected = norm.logpdf(r, loc=mean, scale=1 / u).sum()
    assert component_log_density(mean, np.diag(u), r) == pytest.approx(expected, abs=1e-12)


def test_full_factor_matches_dense_gaussian():
    """Covariance (U^T U)^-1 scored by a dense multivariate normal."""
    rng = np.random.default_rng(1)
    chol = random_factor(rng, 6)
    mean, r = rng.normal(size=6), rng.normal(size=6)
    covariance = np.linalg.inv(chol.T @ chol)
    expected = multivariate_normal(mean=mean, cov=covariance).logpdf(r)
    assert component_log_density(mean, chol, r) == pytest.approx(expected, abs=1e-8)


def test_single_component_mixture_equals_component():
    """G = 1 reduces to the component density."""
    mix = random_mixture(2, 1, 4)
    r = np.full(4, 0.3)
    assert mixture_log_density(mix, r) == pytest.approx(component_log_density(mix.means[0], mix.chol[0], r))


def test_duplicate_components_do_not_change_density():
    """Two identical halves equal one component."""
    single = random_mixture(3, 1, 3)
    doubled = MixtureDensity(
        weights=np.array([0.5, 0.5]),
        means=np.repeat(single.means, 2, axis=0),
        chol=np.repeat(single.chol, 2, axis=0),
    )
    r = np.array([0.2, -0.1, 0.4])
    assert mixture_log_density(doubled, r) == pytest.approx(mixture_log_density(single, r), abs=1e-12)


def test_mixture_matches_naive_sum():
    """Log-sum-exp agrees with direct summation where that is safe."""
    mix = random_mixture(4, 3, 5)
    r = np.random.default_rng(0).normal(size=5)
    naive = np.log(sum(
        w * np.exp(component_log_density(m, u, r)) for w, m, u in zip(mix.weights, mix.means, mix.chol)
    ))
    assert mixture_log_density(mix, r) == pytest.approx(naive, abs=1e-10)


def test_component_order_is_irrelevant():
    """Permuting components leaves the density unchanged."""
    mix = random_mixture(5, 4, 3)
    order = [2, 0, 3, 1]
    shuffled = MixtureDensity(mix.weights[order], mix.means[order], mix.chol[order])
    r = np.array([0.5, 0.0, -0.5])
    assert mixture_log_density(shuffled, r) == pytest.approx(mixture_log_density(mix, r), abs=1e-12)
    assert np.allclose(component_log_densities(shuffled, r), component_log_densities(mix, r)[order])


def test_kl_closed_forms():
    """Zero for the prior itself, 0.5 for a unit mean shift."""
    assert kl_to_standard_normal(np.zeros(3), np.ones(3)) == 0.0
    assert kl_to_standard_normal(np.array([1.0]), np.array([1.0])) == pytest.approx(0.5)


@pytest.mark.slow
def test_kl_matches_monte_carlo():
    """Closed form within 1% of a 10^6-sample estimate."""
    rng = np.random.default_rng(0)
    mean, std = np.array([0.5, -1.0, 0.2]), np.array([0.7, 1.3, 0.9])
    z = mean + std * rng.standard_normal((1_000_000, 3))
    log_q = norm.logpdf(z, loc=mean, scale=std).sum(axis=1)
    log_p = norm.logpdf(z).sum(axis=1)
    assert kl_to_standard_normal(mean, std) == pytest.approx(np.mean(log_q - log_p), rel=0.01)


def test_zero_noise_sample_is_the_mean():
    """eps = 0 returns mu of the single component."""
    mix = MixtureDensity(np.ones(1), np.array([[1.0, 2.0, 3.0]]), np.eye(3)[np.newaxis])
    assert np.array_equal(sample_pbm(mix, seed=0, noise=np.zeros(3)), [1.0, 2.0, 3.0])


def test_zero_weight_component_is_never_drawn():
    """pi = (1, 0) draws only from the first component."""
    mix = MixtureDensity(
        np.array([1.0, 0.0]),
        np.array([[0.0, 0.0], [100.0, 100.0]]),
        np.stack([np.eye(2), np.eye(2)]),
    )
    samples = sample_pbm(mix, seed=1, clamp=False, n=10_000)
    assert np.all(samples < 50)


def test_clamp_keeps_samples_nonnegative():
    """Samples are powers unless clamping is disabled."""
    mix = MixtureDensity(np.ones(1), np.full((1, 2), -1.0), np.eye(2)[np.newaxis])
    assert np.all(sample_pbm(mix, seed=2, n=200) >= 0)
    assert np.any(sample_pbm(mix, seed=2, n=200, clamp=False) < 0)


def test_sample_covariance_matches_precision_inverse():
    """Empirical covariance within 5% (Frobenius) of (U^T U)^-1."""
    rng = np.random.default_rng(3)
    chol = random_factor(rng, 4)
    mix = MixtureDensity(np.ones(1), np.zeros((1, 4)), chol[np.newaxis])
    samples = sample_pbm(mix, seed=4, clamp=False, n=20_000)
    expected = np.linalg.inv(chol.T @ chol)
    error = np.linalg.norm(np.cov(samples, rowvar=False) - expected) / np.linalg.norm(expected)
    assert error < 0.05


def test_validation_catches_bad_factors():
    """Non-positive diagonals and off-simplex weights are flagged."""
    mix = random_mixture(6, 2, 3)
    validate_mixture(mix)
    broken = MixtureDensity(mix.weights, mix.means, mix.chol.copy())
    broken.chol[1, 2, 2] = 0.0
    with pytest.raises(NumericalInstabilityError):
        validate_mixture(broken)
    with pytest.raises(NumericalInstabilityError):
        validate_mixture(MixtureDensity(np.array([0.7, 0.7]), mix.means, mix.chol))
