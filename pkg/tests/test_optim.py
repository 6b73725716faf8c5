"""Tests for the Adam optimizer and the step schedule."""

import numpy as np
import pytest

from probeopt_core.errors import ConfigurationError, ShapeError
from probeopt_core.neural.network import DenseNetSpec, Activation, ParameterSet
from probeopt_core.neural.optim import AdamState, TrainingHistory, adam_step, step_lr_schedule


def quadratic_params(values) -> ParameterSet:
    """A parameter set of size len(values) to optimize directly."""
    spec = DenseNetSpec((len(values) - 1, 1), (Activation.IDENTITY,), (0.0,))
    return ParameterSet(spec, np.asarray(values, dtype=float))


def test_first_step_closed_form():
    """After one step the update is -lr * g / (|g| + eps)."""
    params = quadratic_params([1.0, -2.0, 3.0])
    grad = np.array([0.5, -4.0, 1e-3])
    adam_step(params, grad, AdamState.zeros(3), lr=0.1)
    expected = np.array([1.0, -2.0, 3.0]) - 0.1 * grad / (np.abs(grad) + 1e-8)
    assert np.allclose(params.flat, expected, rtol=1e-12)


def test_zero_gradient_leaves_parameters():
    """No gradient, no movement."""
    params = quadratic_params([1.0, 2.0])
    state = AdamState.zeros(2)
    for _ in range(3):
        adam_step(params, np.zeros(2), state, lr=0.1)
    assert np.array_equal(params.flat, [1.0, 2.0])
    assert state.step == 3
    assert params.version == 3


def test_quadratic_loss_decreases_monotonically():
    """100 steps on a convex quadratic far from its minimum."""
    curvature = np.array([1.0, 3.0, 0.5])
    params = quadratic_params([10.0, -8.0, 12.0])
    state = AdamState.zeros(3)
    losses = []
    for _ in range(100):
        losses.append(float(np.sum(curvature * params.flat**2)))
        adam_step(params, 2 * curvature * params.flat, state, lr=0.05)
    assert all(later < earlier for earlier, later in zip(losses, losses[1:]))


def test_gradient_shape_checked():
    """Gradient and parameters share a layout."""
    with pytest.raises(ShapeError):
        adam_step(quadratic_params([1.0, 2.0]), np.zeros(3), AdamState.zeros(2), lr=0.1)


def test_step_schedule():
    """lr = base * gamma ** floor(epoch / step_size)."""
    assert step_lr_schedule(1e-3, 10, 0.5, 0) == 1e-3
    assert step_lr_schedule(1e-3, 10, 0.5, 9) == 1e-3
    assert step_lr_schedule(1e-3, 10, 0.5, 20) == pytest.approx(2.5e-4)
    assert step_lr_schedule(1e-3, 10, 1.0, 500) == 1e-3


def test_step_schedule_rejects_bad_gamma():
    """gamma must lie in (0, 1]."""
    with pytest.raises(ConfigurationError):
        step_lr_schedule(1e-3, 10, 0.0, 1)
    with pytest.raises(ConfigurationError):
        step_lr_schedule(1e-3, 0, 0.5, 1)


def test_history_columns():
    """Recorded values are read back per column."""
    history = TrainingHistory()
    history.record(0, train_loss=3.0)
    history.record(1, train_loss=2.0, validation_loss=2.5)
    assert history.column("train_loss") == [3.0, 2.0]
    assert history.column("validation_loss") == [2.5]
