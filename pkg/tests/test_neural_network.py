"""Tests for dense networks, their tape and reverse-mode gradients."""

import numpy as np
import pytest

from probeopt_core.errors import ConfigurationError, ShapeError, StaleTapeError
from probeopt_core.neural.network import (
    Activation,
    DenseNetSpec,
    Mode,
    ParameterSet,
    backward,
    dense_spec,
    forward,
    init_parameters,
)


def numeric_gradient(loss, flat: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central differences of ``loss()`` w.r.t. every entry of ``flat`` (perturbed in place)."""
    grad = np.zeros_like(flat)
    for k in range(flat.size):
        original = flat[k]
        flat[k] = original + step
        plus = loss()
        flat[k] = original - step
        minus = loss()
        flat[k] = original
        grad[k] = (plus - minus) / (2 * step)
    return grad


def test_identity_network_passes_input_through():
    """Identity weights, zero bias and identity activation."""
    spec = DenseNetSpec((3, 3), (Activation.IDENTITY,), (0.0,))
    params = ParameterSet(spec)
    params.weight(0)[...] = np.eye(3)
    x = np.array([[1.0, -2.0, 0.5], [0.0, 3.0, 4.0]])
    y, _ = forward(spec, params, x)
    assert np.array_equal(y, x)


def test_eval_mode_ignores_seed():
    """Dropout is off in eval mode."""
    spec = dense_spec([4, 6, 2], dropout=0.3)
    params = init_parameters(spec, seed=1)
    x = np.random.default_rng(0).standard_normal((5, 4))
    first, _ = forward(spec, params, x, Mode.EVAL, seed=1)
    second, _ = forward(spec, params, x, Mode.EVAL, seed=2)
    assert np.array_equal(first, second)


def test_train_mode_dropout_is_seeded():
    """Same seed, same mask."""
    spec = dense_spec([4, 16, 2], dropout=0.5)
    params = init_parameters(spec, seed=1)
    x = np.ones((3, 4))
    first, _ = forward(spec, params, x, Mode.TRAIN, seed=9)
    second, _ = forward(spec, params, x, Mode.TRAIN, seed=9)
    assert np.array_equal(first, second)


def test_forward_matches_loop_oracle():
    """Three layers with PReLU hidden activations against explicit loops."""
    spec = dense_spec([3, 4, 5, 2])
    params = init_parameters(spec, seed=4)
    params.bias(0)[...] = [0.1, -0.2, 0.3, -0.4]
    x = np.random.default_rng(2).standard_normal(3)
    a = x
    for i in range(3):
        w, b = params.weight(i), params.bias(i)
        z = np.array([sum(w[o, k] * a[k] for k in range(len(a))) + b[o] for o in range(w.shape[0])])
        if spec.activations[i] == Activation.PRELU:
            z = np.array([v if v > 0 else params.slope(i) * v for v in z])
        a = z
    y, _ = forward(spec, params, x)
    assert y.shape == (2,)
    assert np.allclose(y, a, atol=1e-12)


def test_linear_layer_squared_loss_gradient():
    """dL/dW = 2 (Wx - y) x^T for L = ||Wx - y||^2."""
    spec = DenseNetSpec((3, 2), (Activation.IDENTITY,), (0.0,))
    params = init_parameters(spec, seed=0)
    x = np.array([1.0, 2.0, -1.0])
    target = np.array([0.5, -0.5])
    out, tape = forward(spec, params, x)
    grads = backward(tape, 2 * (out - target))
    expected = np.outer(2 * (out - target), x)
    assert np.allclose(grads.params[:6].reshape(2, 3), expected)
    assert np.allclose(grads.params[6:], 2 * (out - target))


@pytest.mark.parametrize("mode", [Mode.EVAL, Mode.TRAIN])
def test_gradients_match_finite_differences(mode):
    """Every activation kind, parameters and inputs."""
    spec = DenseNetSpec(
        (4, 5, 4, 3),
        (Activation.PRELU, Activation.EXP, Activation.SOFTMAX),
        (0.2, 0.0, 0.0),
    )
    params = init_parameters(spec, seed=3)
    params.flat[:] += np.random.default_rng(8).normal(scale=0.1, size=params.size)
    rng = np.random.default_rng(5)
    x = rng.standard_normal((6, 4))
    c = rng.standard_normal((6, 3))

    def loss():
        out, _ = forward(spec, params, x, mode, seed=11)
        return float(np.sum(c * out))

    _, tape = forward(spec, params, x, mode, seed=11)
    grads = backward(tape, c)
    assert np.allclose(grads.params, numeric_gradient(loss, params.flat), rtol=1e-5, atol=1e-7)
    assert np.allclose(grads.inputs.ravel(), numeric_gradient(loss, x.reshape(-1)), rtol=1e-5, atol=1e-7)


def test_zero_output_gradient_gives_zero_gradients():
    """Nothing flows back from a zero upstream gradient."""
    spec = dense_spec([3, 4, 2])
    params = init_parameters(spec, seed=0)
    _, tape = forward(spec, params, np.ones((2, 3)))
    grads = backward(tape, np.zeros((2, 2)))
    assert np.all(grads.params == 0)
    assert np.all(grads.inputs == 0)


def test_backward_after_update_is_rejected():
    """A tape is tied to the parameter version it saw."""
    spec = dense_spec([3, 2])
    params = init_parameters(spec, seed=0)
    _, tape = forward(spec, params, np.ones(3))
    params.assign(params.flat * 0.5)
    with pytest.raises(StaleTapeError):
        backward(tape, np.ones(2))


def test_input_width_mismatch():
    """The input must match the first layer."""
    spec = dense_spec([3, 2])
    with pytest.raises(ShapeError):
        forward(spec, init_parameters(spec), np.ones(4))


def test_softmax_only_on_final_layer():
    """A hidden softmax is rejected."""
    with pytest.raises(ConfigurationError):
        DenseNetSpec((3, 3, 2), (Activation.SOFTMAX, Activation.IDENTITY), (0.0, 0.0))


def test_parameter_vector_shape_checked():
    """A flat vector of the wrong size is rejected."""
    with pytest.raises(ShapeError):
        ParameterSet(dense_spec([3, 2]), np.zeros(5))


def test_initialization_layout():
    """Glorot-bounded weights, zero biases, slopes at 0.25."""
    spec = dense_spec([10, 6, 4])
    params = init_parameters(spec, seed=7)
    assert np.all(np.abs(params.weight(0)) <= np.sqrt(6 / 16))
    assert np.all(params.bias(0) == 0)
    assert params.slope(0) == 0.25
    assert params.slope(1) is None
    assert DenseNetSpec.from_descriptor(spec.to_descriptor()) == spec


@pytest.mark.slow
def test_inverted_dropout_preserves_expectation():
    """The mean over many masks matches the eval-mode output within 1%."""
    spec = DenseNetSpec((4, 3), (Activation.IDENTITY,), (0.3,))
    params = ParameterSet(spec, np.ones(15))
    x = np.ones((100_000, 4))
    train_out, _ = forward(spec, params, x, Mode.TRAIN, seed=0)
    eval_out, _ = forward(spec, params, x[:1], Mode.EVAL)
    assert np.allclose(train_out.mean(axis=0), eval_out[0], rtol=0.01)
