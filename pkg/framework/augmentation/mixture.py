"""Gaussian mixtures parameterized by upper-triangular Cholesky factors of the precision.

Component g has precision U_g^T U_g, so its log-density is
-(d/2) ln 2pi - 0.5 ||U_g (r - mu_g)||^2 + sum_j ln U_g[j, j].
"""

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from framework.augmentation.defaults import LOG_2PI
from probeopt_core.errors import NumericalInstabilityError, ShapeError


@dataclass
class MixtureDensity:
    weights: np.ndarray  # (G,)
    means: np.ndarray  # (G, d)
    chol: np.ndarray  # (G, d, d) upper triangular, positive diagonal

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def validate_mixture(mix: MixtureDensity, atol: float = 1e-9) -> None:
    """
    Check simplex weights, upper-triangular factors with positive diagonals, finite entries.

    Raises:
        ShapeError: If the component arrays disagree in shape
        NumericalInstabilityError: If any validity condition fails
    """
    g, d = mix.means.shape
    if mix.weights.shape != (g,) or mix.chol.shape != (g, d, d):
        raise ShapeError(
            f"mixture shapes disagree: weights {mix.weights.shape}, means {mix.means.shape}, chol {mix.chol.shape}"
        )
    for name, values in (("weights", mix.weights), ("means", mix.means), ("chol", mix.chol)):
        if not np.all(np.isfinite(values)):
            raise NumericalInstabilityError(f"mixture {name} hold non-finite entries")
    if np.any(mix.weights < 0) or abs(mix.weights.sum() - 1.0) > atol:
        raise NumericalInstabilityError(
            "mixture weights are not on the simplex", {"sum": float(mix.weights.sum())}
        )
    diagonals = np.diagonal(mix.chol, axis1=1, axis2=2)
    if np.any(diagonals <= 0):
        bad = int(np.argmin(diagonals.min(axis=1)))
        raise NumericalInstabilityError(
            "precision factor has a non-positive diagonal",
            {"component": bad, "min_diag": float(diagonals.min())},
        )
    if np.any(np.tril(mix.chol, k=-1) != 0):
        raise NumericalInstabilityError("precision factor is not upper triangular")


def component_log_density(mean: np.ndarray, chol: np.ndarray, r: np.ndarray) -> float:
    """Normalized log-density of one component at ``r``."""
    mean, r = np.asarray(mean, dtype=float), np.asarray(r, dtype=float)
    if mean.shape != r.shape or chol.shape != (r.size, r.size):
        raise ShapeError(f"component of dim {mean.shape} / {chol.shape} cannot score point of shape {r.shape}")
    v = chol @ (r - mean)
    return float(-0.5 * r.size * LOG_2PI - 0.5 * v @ v + np.sum(np.log(np.diag(chol))))


def component_log_densities(mix: MixtureDensity, r: np.ndarray) -> np.ndarray:
    """Log-density of every component at ``r``, shape (G,)."""
    r = np.asarray(r, dtype=float)
    if r.shape != (mix.dim,):
        raise ShapeError(f"mixture of dim {mix.dim} cannot score point of shape {r.shape}")
    v = np.einsum("gij,gj->gi", mix.chol, r[np.newaxis, :] - mix.means)
    log_det = np.log(np.diagonal(mix.chol, axis1=1, axis2=2)).sum(axis=1)
    return -0.5 * mix.dim * LOG_2PI - 0.5 * np.sum(v**2, axis=1) + log_det


def mixture_log_density(mix: MixtureDensity, r: np.ndarray) -> float:
    """ln sum_g pi_g p_g(r), stabilized with log-sum-exp."""
    with np.errstate(divide="ignore"):
        log_weights = np.log(mix.weights)
    return float(logsumexp(log_weights + component_log_densities(mix, r)))


def kl_to_standard_normal(mean: np.ndarray, std: np.ndarray) -> float:
    """KL(N(mean, diag std^2) || N(0, I)) in closed form."""
    mean, std = np.asarray(mean, dtype=float), np.asarray(std, dtype=float)
    return float(0.5 * np.sum(mean**2 + std**2 - 2.0 * np.log(std) - 1.0))


def sample_pbm(
    mix: MixtureDensity,
    seed: Optional[Union[int, np.random.Generator]] = None,
    clamp: bool = True,
    n: Optional[int] = None,
    noise: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Draw from the mixture: g ~ Categorical(pi), r = mu_g + U_g^-1 eps.

    Args:
        mix: Mixture density
        seed: Seed or generator
        clamp: Clip samples at 0 (PBMs are powers)
        n: Number of draws; None returns a single (d,) vector
        noise: Explicit standard-normal draws replacing eps, shape (d,) or (n, d)

    Returns:
        np.ndarray: (d,) or (n, d) samples
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    count = 1 if n is None else n
    components = rng.choice(mix.n_components, size=count, p=mix.weights / mix.weights.sum())
    eps = rng.standard_normal((count, mix.dim)) if noise is None else np.asarray(noise, dtype=float).reshape(count, mix.dim)
    samples = np.empty((count, mix.dim))
    for i, g in enumerate(components):
        samples[i] = mix.means[g] + solve_triangular(mix.chol[g], eps[i], lower=False)
    if clamp:
        np.maximum(samples, 0.0, out=samples)
    return samples[0] if n is None else samples
