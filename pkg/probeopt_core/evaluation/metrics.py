"""Distribution-quality metrics: Gaussian-kernel MMD and empirical CDFs."""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist, pdist

from probeopt_core.errors import ShapeError

logger = logging.getLogger(__name__)


class Provenance(str, Enum):
    REAL = "real"
    AUGMENTED = "augmented"
    BASELINE = "baseline"


@dataclass
class SampleSet:
    """n vectors of one dimension, tagged with where they came from."""
    samples: np.ndarray  # (n, d)
    provenance: Provenance = Provenance.REAL

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, np.newaxis]
        if samples.ndim != 2 or samples.shape[0] == 0:
            raise ShapeError(f"sample set needs shape (n, d) with n >= 1, got {np.shape(self.samples)}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("sample set holds non-finite entries")
        self.samples = samples
        self.provenance = Provenance(self.provenance)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]


def gaussian_kernel(x: np.ndarray, y: np.ndarray, bandwidth: float) -> float:
    """exp(-||x - y||^2 / (2 h^2))."""
    if bandwidth <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ShapeError(f"kernel arguments differ in shape: {x.shape} vs {y.shape}")
    return float(np.exp(-np.sum((x - y) ** 2) / (2.0 * bandwidth**2)))


def median_bandwidth(samples: np.ndarray) -> float:
    """
    Median pairwise Euclidean distance of the pooled samples.

    Falls back to 1.0 when every pairwise distance is zero.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, np.newaxis]
    if samples.shape[0] < 2:
        raise ValueError("median bandwidth needs at least two points")
    distances = pdist(samples)
    h = float(np.median(distances))
    if h <= 0:
        logger.warning("All pairwise distances are zero; falling back to bandwidth 1.0")
        return 1.0
    return h


def _kernel_mean(a: np.ndarray, b: np.ndarray, bandwidth: float) -> float:
    return float(np.mean(np.exp(-cdist(a, b, "sqeuclidean") / (2.0 * bandwidth**2))))


def mmd(x: SampleSet, y: SampleSet, bandwidth: Optional[float] = None) -> float:
    """
    Biased squared maximum mean discrepancy with a Gaussian kernel.

    Args:
        x: First sample set
        y: Second sample set
        bandwidth: Kernel bandwidth h; median heuristic over the pooled sets when None

    Returns:
        float: mean k(X, X) + mean k(Y, Y) - 2 mean k(X, Y)

    Raises:
        ShapeError: If the dimensions differ
    """
    if x.dim != y.dim:
        raise ShapeError(f"sample sets differ in dimension: {x.dim} vs {y.dim}")
    if bandwidth is None:
        bandwidth = median_bandwidth(np.vstack([x.samples, y.samples]))
    return (
        _kernel_mean(x.samples, x.samples, bandwidth)
        + _kernel_mean(y.samples, y.samples, bandwidth)
        - 2.0 * _kernel_mean(x.samples, y.samples, bandwidth)
    )


def empirical_cdf(values: Sequence[float]) -> List[Tuple[float, float]]:
    """Right-continuous empirical CDF as sorted (value, k/n) pairs, one per distinct value."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("empirical CDF needs at least one value")
    distinct, counts = np.unique(values, return_counts=True)
    probabilities = np.cumsum(counts) / values.size
    return [(float(v), float(p)) for v, p in zip(distinct, probabilities)]


def mmd_per_combo(
    reference: Mapping[int, np.ndarray],
    candidate: Mapping[int, np.ndarray],
    bandwidth: Optional[float] = None,
    provenance: Provenance = Provenance.AUGMENTED,
) -> Dict[int, float]:
    """MMD between reference and candidate samples for every combination present in both."""
    scores = {}
    for combo in sorted(set(reference) & set(candidate)):
        scores[combo] = mmd(
            SampleSet(reference[combo], Provenance.REAL),
            SampleSet(candidate[combo], provenance),
            bandwidth,
        )
    return scores
