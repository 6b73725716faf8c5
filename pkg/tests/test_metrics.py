"""Tests for MMD and empirical CDFs."""

import math

import numpy as np
import pytest

from probeopt_core.errors import ShapeError
from probeopt_core.evaluation.metrics import (
    Provenance,
    SampleSet,
    empirical_cdf,
    gaussian_kernel,
    median_bandwidth,
    mmd,
    mmd_per_combo,
)


def test_kernel_closed_forms():
    """k(x, x) = 1 and k = e^-1 at squared distance 2h^2."""
    x = np.array([1.0, 2.0])
    assert gaussian_kernel(x, x, 0.7) == 1.0
    assert gaussian_kernel(np.zeros(2), np.array([1.0, 1.0]), 1.0) == pytest.approx(math.exp(-1))


def test_kernel_rejects_bad_arguments():
    """Positive bandwidth, equal shapes."""
    with pytest.raises(ValueError):
        gaussian_kernel(np.zeros(2), np.zeros(2), 0.0)
    with pytest.raises(ShapeError):
        gaussian_kernel(np.zeros(2), np.zeros(3), 1.0)


def test_median_bandwidth():
    """Median pairwise distance, with a fallback for coincident points."""
    assert median_bandwidth(np.array([[0.0], [4.0]])) == 4.0
    assert median_bandwidth(np.ones((5, 3))) == 1.0
    points = np.random.default_rng(0).normal(size=(9, 2))
    pairs = sorted(np.linalg.norm(points[i] - points[j]) for i in range(9) for j in range(i + 1, 9))
    assert median_bandwidth(points) == pytest.approx((pairs[17] + pairs[18]) / 2)


def test_mmd_of_a_set_with_itself_is_zero():
    """Identical sets have zero discrepancy."""
    x = SampleSet(np.random.default_rng(1).normal(size=(20, 3)))
    assert abs(mmd(x, x)) <= 1e-12


def test_mmd_of_single_points():
    """n = m = 1 gives 2 - 2 k(x, y)."""
    x, y = np.array([0.0, 1.0]), np.array([1.0, 3.0])
    expected = 2 - 2 * gaussian_kernel(x, y, 1.5)
    assert mmd(SampleSet(x[np.newaxis]), SampleSet(y[np.newaxis]), 1.5) == pytest.approx(expected, abs=1e-15)


def test_mmd_matches_triple_loop():
    """Vectorized kernels agree with explicit double sums."""
    rng = np.random.default_rng(2)
    x, y = rng.normal(size=(7, 3)), rng.normal(1.0, size=(5, 3))
    h = 1.3

    def mean_kernel(a, b):
        return sum(gaussian_kernel(p, q, h) for p in a for q in b) / (len(a) * len(b))

    expected = mean_kernel(x, x) + mean_kernel(y, y) - 2 * mean_kernel(x, y)
    assert mmd(SampleSet(x), SampleSet(y), h) == pytest.approx(expected, abs=1e-12)
    assert mmd(SampleSet(x), SampleSet(y), h) == pytest.approx(mmd(SampleSet(y), SampleSet(x), h), abs=1e-15)


def test_mmd_ignores_sample_order():
    """Shuffling either set leaves the discrepancy unchanged; swapping the sets too."""
    rng = np.random.default_rng(5)
    x, y = rng.normal(size=(30, 4)), rng.normal(0.5, size=(25, 4))
    reference = mmd(SampleSet(x), SampleSet(y), 1.2)
    shuffled = mmd(SampleSet(rng.permutation(x)), SampleSet(rng.permutation(y)), 1.2)
    assert shuffled == pytest.approx(reference, abs=1e-12)
    assert mmd(SampleSet(y), SampleSet(x), 1.2) == pytest.approx(reference, abs=1e-12)


def test_mmd_grows_with_separation():
    """Shifting one set away increases the discrepancy."""
    rng = np.random.default_rng(3)
    base = rng.normal(size=(50, 2))
    near = mmd(SampleSet(base), SampleSet(base + 0.1), 1.0)
    far = mmd(SampleSet(base), SampleSet(base + 2.0), 1.0)
    assert 0 <= near < far


def test_mmd_dimension_mismatch():
    """Both sets share a dimension."""
    with pytest.raises(ShapeError):
        mmd(SampleSet(np.zeros((3, 2))), SampleSet(np.zeros((3, 4))))


def test_sample_set_validation():
    """1-D input becomes a column; empty and non-finite input are rejected."""
    assert SampleSet(np.arange(4.0)).samples.shape == (4, 1)
    with pytest.raises(ShapeError):
        SampleSet(np.zeros((0, 2)))
    with pytest.raises(ValueError):
        SampleSet(np.array([[1.0, np.nan]]))
    assert SampleSet(np.ones((2, 2)), "augmented").provenance == Provenance.AUGMENTED


def test_empirical_cdf():
    """Sorted distinct values with cumulative fractions."""
    assert empirical_cdf([5.0]) == [(5.0, 1.0)]
    assert empirical_cdf([2.0, 1.0]) == [(1.0, 0.5), (2.0, 1.0)]
    assert empirical_cdf([1.0, 2.0, 1.0]) == [(1.0, pytest.approx(2 / 3)), (2.0, 1.0)]
    values = np.random.default_rng(4).exponential(size=50)
    cdf = empirical_cdf(values)
    assert all(a[0] < b[0] and a[1] < b[1] for a, b in zip(cdf, cdf[1:]))
    assert cdf[-1][1] == 1.0
    with pytest.raises(ValueError):
        empirical_cdf([])


def test_mmd_per_combo_uses_shared_combinations():
    """Only combinations present on both sides are scored."""
    rng = np.random.default_rng(5)
    reference = {1: rng.normal(size=(6, 2)), 2: rng.normal(size=(6, 2))}
    candidate = {2: rng.normal(size=(8, 2)), 3: rng.normal(size=(8, 2))}
    scores = mmd_per_combo(reference, candidate, bandwidth=1.0)
    assert list(scores) == [2]
    assert scores[2] == pytest.approx(mmd(SampleSet(reference[2]), SampleSet(candidate[2]), 1.0))
