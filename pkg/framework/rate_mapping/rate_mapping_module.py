"""
Rate Mapping Module

Regressor from (PBM vector, probing codewords) to the sum rate the
probing-beam powered beamforming pipeline achieves, trained with the
mean squared error on standardized inputs and labels.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from framework.augmentation.augmentation_module import PbmTransform
from probeopt_core.config.settings import MapperSettings
from probeopt_core.errors import ConfigurationError, DivergenceError, ShapeError
from probeopt_core.neural.checkpoint import load_checkpoint, save_checkpoint
from probeopt_core.neural.network import Activation, Mode, ParameterSet, backward, dense_spec, forward, init_parameters
from probeopt_core.neural.optim import AdamState, TrainingHistory, adam_step, step_lr_schedule
from probeopt_core.seeding import derive_seed, rng_for
from probeopt_core.storage.dataset_store import ensure_not_test

logger = logging.getLogger(__name__)

MIN_SAMPLES_FOR_VALIDATION = 4


@dataclass
class RateMapperModel:
    params: ParameterSet
    dim: int
    condition_width: int
    transform: PbmTransform
    label_mean: float = 0.0
    label_std: float = 1.0

    def __post_init__(self):
        if self.params.spec.input_width != self.dim + self.condition_width:
            raise ShapeError("mapper input width must equal dim + condition_width")
        if self.params.spec.output_width != 1:
            raise ShapeError("mapper must output a single value")

    def inputs(self, pbms: np.ndarray, conditions: np.ndarray) -> np.ndarray:
        """Normalized network input rows."""
        pbms = np.asarray(getattr(pbms, "values", pbms), dtype=float)
        pbms = pbms[np.newaxis, :] if pbms.ndim == 1 else pbms
        if pbms.shape[1] != self.dim:
            raise ShapeError(f"PBM width {pbms.shape[1]} != {self.dim}")
        conditions = np.asarray(conditions, dtype=float)
        if conditions.shape[-1] != self.condition_width:
            raise ShapeError(f"condition width {conditions.shape[-1]} != {self.condition_width}")
        if conditions.ndim == 1:
            conditions = np.tile(conditions, (pbms.shape[0], 1))
        return np.hstack([self.transform.transform(pbms), conditions])

    def metadata(self) -> Dict[str, Any]:
        return {
            "dim": self.dim,
            "condition_width": self.condition_width,
            "transform": self.transform.to_dict(),
            "label_mean": self.label_mean,
            "label_std": self.label_std,
        }


def build_mapper(
    dim: int, condition_width: int, settings: MapperSettings, transform: PbmTransform, seed: Optional[int] = None
) -> RateMapperModel:
    spec = dense_spec(
        [dim + condition_width, *settings.hidden, 1], Activation.PRELU, Activation.IDENTITY, settings.dropout
    )
    params = init_parameters(spec, settings.seed if seed is None else seed)
    return RateMapperModel(params=params, dim=dim, condition_width=condition_width, transform=transform)


def mapper_loss(
    model: RateMapperModel,
    x: np.ndarray,
    y: np.ndarray,
    mode: Mode = Mode.EVAL,
    seed: Optional[int] = None,
) -> Tuple[float, np.ndarray]:
    """
    Mean squared error on normalized inputs and labels, with its parameter gradient.

    Args:
        model: Rate mapper
        x: Normalized input rows (PBM part and condition), (n, dim + w)
        y: Standardized labels, (n,)

    Returns:
        tuple: (loss, flat gradient)
    """
    y = np.asarray(y, dtype=float).ravel()
    out, tape = forward(model.params.spec, model.params, np.atleast_2d(x), mode, seed)
    diff = out[:, 0] - y
    loss = float(np.mean(diff**2))
    grad = backward(tape, (2.0 * diff / diff.size)[:, np.newaxis])
    return loss, grad.params


def predict_rate(model: RateMapperModel, pbms: np.ndarray, conditions: np.ndarray) -> np.ndarray:
    """
    Predicted sum rate in bits/s/Hz, clamped at 0.

    Args:
        model: Rate mapper
        pbms: Raw PBMs, (n, d) or (d,)
        conditions: Codewords, (n, w) or (w,)

    Returns:
        np.ndarray: (n,) predictions, or a 0-d array for a single PBM
    """
    single = np.ndim(getattr(pbms, "values", pbms)) == 1
    out, _ = forward(model.params.spec, model.params, model.inputs(pbms, conditions), Mode.EVAL)
    rates = np.maximum(out[:, 0] * model.label_std + model.label_mean, 0.0)
    return np.asarray(rates[0]) if single else rates


def _rmse(model: RateMapperModel, x: np.ndarray, rates: np.ndarray) -> float:
    out, _ = forward(model.params.spec, model.params, x, Mode.EVAL)
    predicted = np.maximum(out[:, 0] * model.label_std + model.label_mean, 0.0)
    return float(np.sqrt(np.mean((predicted - rates) ** 2)))


def train_mapper(
    pbms: np.ndarray,
    conditions: np.ndarray,
    rates: np.ndarray,
    settings: MapperSettings,
    validation: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None,
    splits: Optional[Sequence[Any]] = None,
    seed: Optional[int] = None,
) -> Tuple[RateMapperModel, TrainingHistory]:
    """
    Fit the mapper by mini-batch Adam on the MSE loss.

    Args:
        pbms: Raw training PBMs, (n, d)
        conditions: Codewords per sample, (n, w)
        rates: Sum-rate labels, (n,)
        settings: Architecture and optimizer settings
        validation: Raw (pbms, conditions, rates) for model selection;
            carved from the training data when None
        splits: Split tags of the training samples
        seed: Overrides settings.seed

    Returns:
        tuple: (model with the lowest validation RMSE, history with RMSE in bits/s/Hz)

    Raises:
        ProvenanceError: If any training sample is tagged as test
        DivergenceError: If the loss diverges before any stable epoch
    """
    ensure_not_test(splits, "rate mapper training")
    pbms = np.asarray(pbms, dtype=float)
    rates = np.asarray(rates, dtype=float).ravel()
    conditions = np.asarray(conditions, dtype=float)
    if pbms.ndim != 2 or pbms.shape[0] == 0 or rates.size != pbms.shape[0]:
        raise ConfigurationError(f"mapper training needs matching nonempty PBMs and rates, got {pbms.shape} / {rates.shape}")
    base = settings.seed if seed is None else seed

    if validation is None:
        order = rng_for(base, 4).permutation(pbms.shape[0])
        n_val = 0
        if settings.validation_fraction > 0 and pbms.shape[0] >= MIN_SAMPLES_FOR_VALIDATION:
            n_val = min(pbms.shape[0] - 1, max(1, int(round(settings.validation_fraction * pbms.shape[0]))))
        val_idx, train_idx = np.sort(order[:n_val]), np.sort(order[n_val:])
        validation = (pbms[val_idx], conditions[val_idx], rates[val_idx])
        pbms, conditions, rates = pbms[train_idx], conditions[train_idx], rates[train_idx]

    transform = PbmTransform.fit(pbms, settings.log_transform)
    model = build_mapper(pbms.shape[1], conditions.shape[-1], settings, transform, derive_seed(base, 0))
    model.label_mean = float(rates.mean())
    model.label_std = float(rates.std()) if rates.std() > 0 else 1.0
    x = model.inputs(pbms, conditions)
    y = (rates - model.label_mean) / model.label_std
    has_val = len(validation[2]) > 0
    val_x = model.inputs(validation[0], validation[1]) if has_val else x
    val_rates = np.asarray(validation[2], dtype=float) if has_val else rates

    state = AdamState.zeros(model.params.size)
    history = TrainingHistory()
    best: Optional[ParameterSet] = None
    best_rmse = np.inf
    n = x.shape[0]
    logger.info("Training rate mapper", extra={"fields": {"samples": n, "validation": int(val_x.shape[0]) if has_val else 0}})

    for epoch in range(settings.epochs):
        lr = step_lr_schedule(settings.learning_rate, settings.step_size, settings.gamma, epoch)
        order = rng_for(base, 1, epoch).permutation(n)
        total = 0.0
        for batch, start in enumerate(range(0, n, settings.batch_size)):
            idx = order[start : start + settings.batch_size]
            loss, grad = mapper_loss(model, x[idx], y[idx], Mode.TRAIN, derive_seed(base, 3, epoch, batch))
            if not np.isfinite(loss):
                return _stop_diverged(model, best, history, epoch, loss)
            adam_step(model.params, grad, state, lr, settings.beta1, settings.beta2, settings.epsilon)
            total += loss * idx.size
        train_rmse = _rmse(model, x, rates)
        val_rmse = _rmse(model, val_x, val_rates)
        if not np.isfinite(val_rmse):
            return _stop_diverged(model, best, history, epoch, val_rmse)
        history.record(epoch, train_loss=total / n, train_rmse=train_rmse, validation_rmse=val_rmse, learning_rate=lr)
        logger.info(
            "Mapper epoch",
            extra={"fields": {"epoch": epoch, "train_rmse": train_rmse, "validation_rmse": val_rmse, "lr": lr}},
        )
        if val_rmse < best_rmse:
            best_rmse = val_rmse
            best = model.params.copy()
            history.best_epoch = epoch

    model.params = best
    return model, history


def _stop_diverged(model, best, history, epoch, value):
    diagnostics = {"epoch": epoch, "value": str(value)}
    if best is None:
        raise DivergenceError("Rate mapper training diverged before any stable epoch", diagnostics)
    logger.warning("Rate mapper diverged; keeping best epoch", extra={"fields": {**diagnostics, "best_epoch": history.best_epoch}})
    model.params = best
    history.diverged = True
    return model, history


def save_mapper(path: Union[str, Path], model: RateMapperModel, metadata: Optional[Dict[str, Any]] = None) -> None:
    save_checkpoint(path, {"mapper": model.params}, {"mapper": model.metadata(), **(metadata or {})})


def load_mapper(path: Union[str, Path]) -> RateMapperModel:
    checkpoint = load_checkpoint(path)
    info = checkpoint.metadata["mapper"]
    return RateMapperModel(
        params=checkpoint.networks["mapper"],
        dim=info["dim"],
        condition_width=info["condition_width"],
        transform=PbmTransform.from_dict(info["transform"]),
        label_mean=float(info["label_mean"]),
        label_std=float(info["label_std"]),
    )
