"""Dense feed-forward networks with a recorded tape for exact reverse-mode gradients.

Inputs are row batches of shape (n, width); a 1-D input is treated as a
batch of one and the output is squeezed back. Each layer computes
``act(a @ W.T + b)`` followed by inverted dropout in train mode.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from probeopt_core.errors import ConfigurationError, ShapeError, StaleTapeError

PRELU_INIT = 0.25


class Activation(str, Enum):
    IDENTITY = "identity"
    PRELU = "prelu"
    SOFTMAX = "softmax"
    EXP = "exp"


class Mode(str, Enum):
    TRAIN = "train"
    EVAL = "eval"


@dataclass(frozen=True)
class DenseNetSpec:
    """Layer widths (input first), one activation and one dropout rate per layer."""
    widths: Tuple[int, ...]
    activations: Tuple[Activation, ...]
    dropout: Tuple[float, ...]

    def __post_init__(self):
        n_layers = len(self.widths) - 1
        if n_layers < 1:
            raise ConfigurationError("a network needs an input width and at least one layer")
        if any(w < 1 for w in self.widths):
            raise ConfigurationError(f"layer widths must be >= 1, got {list(self.widths)}")
        if len(self.activations) != n_layers or len(self.dropout) != n_layers:
            raise ConfigurationError("activations and dropout need one entry per layer")
        if any(not 0.0 <= p < 1.0 for p in self.dropout):
            raise ConfigurationError(f"dropout must lie in [0, 1), got {list(self.dropout)}")
        if Activation.SOFTMAX in self.activations[:-1]:
            raise ConfigurationError("softmax is only allowed on the final layer")

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    @property
    def input_width(self) -> int:
        return self.widths[0]

    @property
    def output_width(self) -> int:
        return self.widths[-1]

    def to_descriptor(self) -> Dict[str, Any]:
        return {
            "widths": list(self.widths),
            "activations": [a.value for a in self.activations],
            "dropout": list(self.dropout),
        }

    @classmethod
    def from_descriptor(cls, descriptor: Dict[str, Any]) -> "DenseNetSpec":
        return cls(
            widths=tuple(int(w) for w in descriptor["widths"]),
            activations=tuple(Activation(a) for a in descriptor["activations"]),
            dropout=tuple(float(p) for p in descriptor["dropout"]),
        )


def dense_spec(
    widths: Sequence[int],
    hidden_activation: Activation = Activation.PRELU,
    output_activation: Activation = Activation.IDENTITY,
    dropout: float = 0.0,
) -> DenseNetSpec:
    """Spec with one activation on hidden layers and no dropout on the output layer."""
    n_layers = len(widths) - 1
    activations = [hidden_activation] * (n_layers - 1) + [output_activation]
    rates = [dropout] * (n_layers - 1) + [0.0]
    return DenseNetSpec(tuple(int(w) for w in widths), tuple(activations), tuple(rates))


@dataclass(frozen=True)
class _LayerSlices:
    weight: slice
    bias: slice
    slope: Optional[int]
    shape: Tuple[int, int]  # (out, in)


def _layout(spec: DenseNetSpec) -> Tuple[List[_LayerSlices], int]:
    offset = 0
    layers = []
    for i in range(spec.n_layers):
        fan_in, fan_out = spec.widths[i], spec.widths[i + 1]
        weight = slice(offset, offset + fan_out * fan_in)
        offset = weight.stop
        bias = slice(offset, offset + fan_out)
        offset = bias.stop
        slope = None
        if spec.activations[i] == Activation.PRELU:
            slope = offset
            offset += 1
        layers.append(_LayerSlices(weight, bias, slope, (fan_out, fan_in)))
    return layers, offset


class ParameterSet:
    """
    All weights, biases and PReLU slopes of one network in a flat vector.

    Weight, bias and slope accessors slice the flat vector without copying.
    ``version`` counts in-place updates so tapes recorded before an update
    can be detected.
    """

    def __init__(self, spec: DenseNetSpec, flat: Optional[np.ndarray] = None):
        self.spec = spec
        self._layers, size = _layout(spec)
        if flat is None:
            flat = np.zeros(size)
        flat = np.array(flat, dtype=float)
        if flat.shape != (size,):
            raise ShapeError(f"parameter vector has shape {flat.shape}, spec needs ({size},)")
        if not np.all(np.isfinite(flat)):
            raise ValueError("parameter vector holds non-finite entries")
        self.flat = flat
        self.version = 0

    @property
    def size(self) -> int:
        return self.flat.size

    def weight(self, layer: int) -> np.ndarray:
        info = self._layers[layer]
        return self.flat[info.weight].reshape(info.shape)

    def bias(self, layer: int) -> np.ndarray:
        return self.flat[self._layers[layer].bias]

    def slope(self, layer: int) -> Optional[float]:
        index = self._layers[layer].slope
        return None if index is None else float(self.flat[index])

    def assign(self, flat: np.ndarray) -> None:
        """Overwrite all parameters in place."""
        self.flat[...] = flat
        self.version += 1

    def copy(self) -> "ParameterSet":
        return ParameterSet(self.spec, self.flat.copy())


def init_parameters(spec: DenseNetSpec, seed: Optional[int] = None) -> ParameterSet:
    """Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases, PReLU slopes 0.25."""
    rng = np.random.default_rng(seed)
    params = ParameterSet(spec)
    for i, info in enumerate(params._layers):
        fan_out, fan_in = info.shape
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        params.flat[info.weight] = rng.uniform(-limit, limit, size=fan_out * fan_in)
        if info.slope is not None:
            params.flat[info.slope] = PRELU_INIT
    return params


@dataclass
class Tape:
    """Everything backward needs from one forward pass."""
    params: ParameterSet
    params_version: int
    mode: Mode
    squeeze: bool
    inputs: List[np.ndarray] = field(default_factory=list)
    pre_activations: List[np.ndarray] = field(default_factory=list)
    activations: List[np.ndarray] = field(default_factory=list)
    masks: List[Optional[np.ndarray]] = field(default_factory=list)


@dataclass
class Gradients:
    params: np.ndarray  # same layout as ParameterSet.flat
    inputs: np.ndarray  # same shape as the forward input


def _activate(kind: Activation, z: np.ndarray, slope: Optional[float]) -> np.ndarray:
    if kind == Activation.IDENTITY:
        return z
    if kind == Activation.PRELU:
        return np.where(z > 0, z, slope * z)
    if kind == Activation.EXP:
        return np.exp(z)
    shifted = np.exp(z - z.max(axis=1, keepdims=True))
    return shifted / shifted.sum(axis=1, keepdims=True)


def forward(
    spec: DenseNetSpec,
    params: ParameterSet,
    inputs: np.ndarray,
    mode: Mode = Mode.EVAL,
    seed: Optional[int] = None,
) -> Tuple[np.ndarray, Tape]:
    """
    Evaluate the network and record a tape.

    Args:
        spec: Network spec
        params: Parameters laid out for ``spec``
        inputs: (n, input_width) batch or (input_width,) vector
        mode: TRAIN applies inverted dropout drawn from ``seed``; EVAL does not
        seed: Dropout seed (train mode only)

    Returns:
        tuple: (output, tape)

    Raises:
        ShapeError: If the input width does not match the spec
    """
    x = np.asarray(inputs, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[np.newaxis, :]
    if x.ndim != 2 or x.shape[1] != spec.input_width:
        raise ShapeError(f"network expects input width {spec.input_width}, got shape {np.shape(inputs)}")

    tape = Tape(params=params, params_version=params.version, mode=Mode(mode), squeeze=squeeze)
    rng = np.random.default_rng(seed) if tape.mode == Mode.TRAIN else None
    a = x
    for i in range(spec.n_layers):
        z = a @ params.weight(i).T + params.bias(i)
        y = _activate(spec.activations[i], z, params.slope(i))
        mask = None
        rate = spec.dropout[i]
        if rng is not None and rate > 0.0:
            mask = (rng.random(y.shape) >= rate) / (1.0 - rate)
        tape.inputs.append(a)
        tape.pre_activations.append(z)
        tape.activations.append(y)
        tape.masks.append(mask)
        a = y if mask is None else y * mask
    return (a[0] if squeeze else a), tape


def backward(tape: Tape, grad_output: np.ndarray) -> Gradients:
    """
    Reverse-mode gradient of a scalar loss given dLoss/dOutput.

    Args:
        tape: Tape from ``forward``
        grad_output: Gradient of the loss w.r.t. the network output (same shape)

    Returns:
        Gradients: Parameter gradient (flat) and input gradient

    Raises:
        StaleTapeError: If the parameters changed since the tape was recorded
    """
    params = tape.params
    if params.version != tape.params_version:
        raise StaleTapeError(
            f"tape recorded at parameter version {tape.params_version}, parameters are at {params.version}"
        )
    spec = params.spec
    g = np.asarray(grad_output, dtype=float)
    if tape.squeeze:
        g = g[np.newaxis, :]

    grad = np.zeros_like(params.flat)
    for i in reversed(range(spec.n_layers)):
        info = params._layers[i]
        mask = tape.masks[i]
        if mask is not None:
            g = g * mask
        z, y = tape.pre_activations[i], tape.activations[i]
        kind = spec.activations[i]
        if kind == Activation.IDENTITY:
            gz = g
        elif kind == Activation.PRELU:
            positive = z > 0
            gz = np.where(positive, g, params.slope(i) * g)
            grad[info.slope] = np.sum(np.where(positive, 0.0, z) * g)
        elif kind == Activation.EXP:
            gz = g * y
        else:
            gz = y * (g - np.sum(g * y, axis=1, keepdims=True))
        grad[info.weight] = (gz.T @ tape.inputs[i]).ravel()
        grad[info.bias] = gz.sum(axis=0)
        g = gz @ params.weight(i)
    return Gradients(params=grad, inputs=g[0] if tape.squeeze else g)
