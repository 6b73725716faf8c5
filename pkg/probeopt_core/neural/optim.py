"""Adaptive-moment optimizer and step learning-rate schedule."""

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from probeopt_core.errors import ConfigurationError, ShapeError
from probeopt_core.neural.network import ParameterSet


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size))


def adam_step(
    params: ParameterSet,
    grad: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> Tuple[ParameterSet, AdamState]:
    """
    One bias-corrected Adam update, applied in place.

    Args:
        params: Parameters to update (single writer)
        grad: Flat gradient with the parameter layout
        state: Moment estimates, updated in place
        lr: Learning rate
        beta1: First-moment decay
        beta2: Second-moment decay
        eps: Denominator floor

    Returns:
        tuple: (params, state)
    """
    grad = np.asarray(grad, dtype=float)
    if grad.shape != params.flat.shape or state.m.shape != params.flat.shape:
        raise ShapeError(
            f"gradient {grad.shape} / state {state.m.shape} do not match parameters {params.flat.shape}"
        )
    state.step += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad**2
    m_hat = state.m / (1.0 - beta1**state.step)
    v_hat = state.v / (1.0 - beta2**state.step)
    params.assign(params.flat - lr * m_hat / (np.sqrt(v_hat) + eps))
    return params, state


def step_lr_schedule(base_lr: float, step_size: int, gamma: float, epoch: int) -> float:
    """lr = base_lr * gamma ** floor(epoch / step_size)."""
    if not 0.0 < gamma <= 1.0:
        raise ConfigurationError(f"gamma must lie in (0, 1], got {gamma}")
    if step_size < 1:
        raise ConfigurationError(f"step_size must be >= 1, got {step_size}")
    return base_lr * gamma ** (epoch // step_size)


@dataclass
class TrainingHistory:
    """Per-epoch training record of one model."""
    epochs: List[Dict[str, float]] = field(default_factory=list)
    best_epoch: int = -1
    diverged: bool = False

    def record(self, epoch: int, **values: float) -> None:
        self.epochs.append({"epoch": epoch, **values})

    def column(self, name: str) -> List[float]:
        return [row[name] for row in self.epochs if name in row]
