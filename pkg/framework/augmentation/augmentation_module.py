"""
PBM Augmentation Module

Conditional variational autoencoder whose decoder is a mixture density
network. The encoder maps (PBM, probing codewords) to a diagonal Gaussian
over the latent space; the decoder maps (latent, codewords) to a Gaussian
mixture over PBM vectors with full precision matrices held as Cholesky
factors. Networks see PBMs in a log-standardized space (PbmTransform).
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from framework.augmentation.defaults import (
    DIAG_RAW_CLAMP,
    LOG_2PI,
    LOG_FLOOR,
    MIN_SAMPLES_FOR_VALIDATION,
    MIN_STD,
    STREAM_DROPOUT,
    STREAM_IMPORTANCE,
    STREAM_INIT,
    STREAM_NOISE,
    STREAM_SHUFFLE,
    STREAM_VALIDATION,
    TRANSFORM_MARGIN,
)
from framework.augmentation.mixture import MixtureDensity, sample_pbm, validate_mixture
from probeopt_core.config.settings import AugmenterSettings, ConditionMode, CovarianceMode, ModelTag
from probeopt_core.errors import (
    ConfigurationError,
    DivergenceError,
    MissingArtifactError,
    NumericalInstabilityError,
    ShapeError,
)
from probeopt_core.neural.checkpoint import load_checkpoint, save_checkpoint
from probeopt_core.neural.network import (
    Activation,
    Mode,
    ParameterSet,
    backward,
    dense_spec,
    forward,
    init_parameters,
)
from probeopt_core.neural.optim import AdamState, TrainingHistory, adam_step, step_lr_schedule
from probeopt_core.seeding import derive_seed, rng_for
from probeopt_core.storage.dataset_store import ensure_not_test

logger = logging.getLogger(__name__)


@dataclass
class PbmTransform:
    """
    Optional log domain followed by per-coordinate standardization.

    ``low`` and ``high`` bound the model space: the standardized training
    range widened by TRANSFORM_MARGIN on each side.
    """
    mean: np.ndarray
    std: np.ndarray
    log_domain: bool = True
    low: Optional[np.ndarray] = None
    high: Optional[np.ndarray] = None

    @classmethod
    def fit(cls, pbms: np.ndarray, log_domain: bool = True) -> "PbmTransform":
        values = np.log(np.asarray(pbms, dtype=float) + LOG_FLOOR) if log_domain else np.asarray(pbms, dtype=float)
        std = values.std(axis=0)
        transform = cls(mean=values.mean(axis=0), std=np.where(std < MIN_STD, 1.0, std), log_domain=log_domain)
        scaled = (values - transform.mean) / transform.std
        transform.low = scaled.min(axis=0) - TRANSFORM_MARGIN
        transform.high = scaled.max(axis=0) + TRANSFORM_MARGIN
        return transform

    def transform(self, pbms: np.ndarray) -> np.ndarray:
        values = np.asarray(pbms, dtype=float)
        if self.log_domain:
            values = np.log(values + LOG_FLOOR)
        return (values - self.mean) / self.std

    def clip(self, values: np.ndarray) -> Tuple[np.ndarray, int]:
        """Model-space rows clipped to [low, high], and how many rows changed."""
        values = np.asarray(values, dtype=float)
        if self.low is None or self.high is None:
            return values, 0
        clipped = np.clip(values, self.low, self.high)
        changed = np.any(clipped != values, axis=-1)
        return clipped, int(np.count_nonzero(changed))

    def inverse(self, values: np.ndarray) -> np.ndarray:
        raw = np.asarray(values, dtype=float) * self.std + self.mean
        return np.exp(raw) - LOG_FLOOR if self.log_domain else raw

    def log_jacobian(self, pbms: np.ndarray) -> np.ndarray:
        """ln |d transform / d pbm| per row."""
        pbms = np.atleast_2d(np.asarray(pbms, dtype=float))
        log_det = -np.sum(np.log(self.std))
        if self.log_domain:
            return log_det - np.sum(np.log(pbms + LOG_FLOOR), axis=1)
        return np.full(pbms.shape[0], log_det)

    def to_dict(self) -> Dict[str, Any]:
        data = {"mean": self.mean.tolist(), "std": self.std.tolist(), "log_domain": self.log_domain}
        if self.low is not None and self.high is not None:
            data.update(low=self.low.tolist(), high=self.high.tolist())
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PbmTransform":
        bounds = [np.asarray(data[key], dtype=float) if data.get(key) is not None else None for key in ("low", "high")]
        return cls(
            np.asarray(data["mean"], dtype=float), np.asarray(data["std"], dtype=float), bool(data["log_domain"]), *bounds
        )


@dataclass
class LatentGaussian:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if np.any(self.std <= 0):
            raise NumericalInstabilityError("latent standard deviation must be positive")


def raw_output_width(n_components: int, dim: int, covariance: CovarianceMode) -> int:
    """Decoder output width: logits, means, then precision-factor entries."""
    factor = dim * (dim + 1) // 2 if covariance == CovarianceMode.FULL else dim
    return n_components * (1 + dim + factor)


@dataclass
class AugmenterModel:
    encoder: ParameterSet
    decoder: ParameterSet
    n_components: int
    latent_dim: int
    dim: int
    condition_width: int
    covariance: CovarianceMode = CovarianceMode.FULL
    condition_mode: ConditionMode = ConditionMode.CODEWORDS
    transform: Optional[PbmTransform] = None

    def __post_init__(self):
        self.covariance = CovarianceMode(self.covariance)
        self.condition_mode = ConditionMode(self.condition_mode)
        expected = raw_output_width(self.n_components, self.dim, self.covariance)
        if self.decoder.spec.output_width != expected:
            raise ShapeError(f"decoder outputs {self.decoder.spec.output_width} values, mixture needs {expected}")
        if self.decoder.spec.input_width != self.latent_dim + self.condition_width:
            raise ShapeError("decoder input width must equal latent_dim + condition_width")
        if self.encoder.spec.input_width != self.dim + self.condition_width:
            raise ShapeError("encoder input width must equal dim + condition_width")
        if self.encoder.spec.output_width != 2 * self.latent_dim:
            raise ShapeError("encoder must output a mean and a log-std per latent coordinate")

    def condition_input(self, condition: np.ndarray, rows: int) -> np.ndarray:
        """Condition batch of ``rows`` rows; all zeros in zeroed-condition mode."""
        condition = np.asarray(condition, dtype=float)
        if condition.shape[-1] != self.condition_width:
            raise ShapeError(f"condition width {condition.shape[-1]} != {self.condition_width}")
        if self.condition_mode == ConditionMode.ZEROED:
            return np.zeros((rows, self.condition_width))
        if condition.ndim == 1:
            return np.tile(condition, (rows, 1))
        if condition.shape[0] != rows:
            raise ShapeError(f"{condition.shape[0]} conditions for {rows} samples")
        return condition

    def metadata(self) -> Dict[str, Any]:
        return {
            "n_components": self.n_components,
            "latent_dim": self.latent_dim,
            "dim": self.dim,
            "condition_width": self.condition_width,
            "covariance": self.covariance.value,
            "condition_mode": self.condition_mode.value,
            "transform": self.transform.to_dict() if self.transform else None,
        }


def build_augmenter(
    dim: int,
    condition_width: int,
    settings: AugmenterSettings,
    seed: Optional[int] = None,
    transform: Optional[PbmTransform] = None,
) -> AugmenterModel:
    """Freshly initialized model; the mixture weights start uniform."""
    n_components = settings.components
    encoder_spec = dense_spec(
        [dim + condition_width, *settings.encoder_hidden, 2 * settings.latent_dim],
        Activation.PRELU, Activation.IDENTITY, settings.dropout,
    )
    decoder_spec = dense_spec(
        [settings.latent_dim + condition_width, *settings.decoder_hidden,
         raw_output_width(n_components, dim, settings.covariance)],
        Activation.PRELU, Activation.IDENTITY, settings.dropout,
    )
    base = settings.seed if seed is None else seed
    encoder = init_parameters(encoder_spec, derive_seed(base, STREAM_INIT, 0))
    decoder = init_parameters(decoder_spec, derive_seed(base, STREAM_INIT, 1))
    last = decoder_spec.n_layers - 1
    decoder.weight(last)[:n_components, :] = 0.0
    return AugmenterModel(
        encoder=encoder,
        decoder=decoder,
        n_components=n_components,
        latent_dim=settings.latent_dim,
        dim=dim,
        condition_width=condition_width,
        covariance=settings.covariance,
        condition_mode=settings.condition_mode,
        transform=transform,
    )


def _rows(values: Any, width: int, what: str) -> Tuple[np.ndarray, bool]:
    values = np.asarray(getattr(values, "values", values), dtype=float)
    single = values.ndim == 1
    values = values[np.newaxis, :] if single else values
    if values.ndim != 2 or values.shape[1] != width:
        raise ShapeError(f"{what} must have width {width}, got shape {values.shape}")
    return values, single


def _encode_batch(model, r, cond, mode, seed):
    out, tape = forward(model.encoder.spec, model.encoder, np.hstack([r, cond]), mode, seed)
    return out[:, : model.latent_dim], out[:, model.latent_dim :], tape


def encode(model: AugmenterModel, r: np.ndarray, condition: np.ndarray) -> LatentGaussian:
    """
    Inference network in eval mode.

    Args:
        model: Augmentation model
        r: PBM vector in model space, shape (d,)
        condition: Probing codewords, shape (condition_width,)

    Returns:
        LatentGaussian: mean and standard deviation of the latent posterior
    """
    r, _ = _rows(r, model.dim, "PBM")
    mean, log_std, _ = _encode_batch(model, r, model.condition_input(condition, 1), Mode.EVAL, None)
    return LatentGaussian(mean=mean[0], std=np.exp(log_std[0]))


def reparameterize(latent: LatentGaussian, eps: np.ndarray) -> np.ndarray:
    eps = np.asarray(eps, dtype=float)
    if eps.shape != latent.mean.shape:
        raise ShapeError(f"noise shape {eps.shape} != latent shape {latent.mean.shape}")
    return latent.mean + eps * latent.std


@dataclass
class _RawMixtures:
    logits: np.ndarray  # (n, G)
    means: np.ndarray  # (n, G, d)
    chol: np.ndarray  # (n, G, d, d)
    diag_raw: np.ndarray  # (n, G, d) before clipping

    @property
    def log_weights(self) -> np.ndarray:
        return self.logits - logsumexp(self.logits, axis=1, keepdims=True)

    def mixture(self, i: int) -> MixtureDensity:
        return MixtureDensity(np.exp(self.log_weights[i]), self.means[i], self.chol[i])


def _assemble(raw: np.ndarray, model: AugmenterModel) -> _RawMixtures:
    n, g, d = raw.shape[0], model.n_components, model.dim
    logits = raw[:, :g]
    means = raw[:, g : g + g * d].reshape(n, g, d)
    factor = raw[:, g + g * d :]
    chol = np.zeros((n, g, d, d))
    diagonal = np.arange(d)
    if model.covariance == CovarianceMode.FULL:
        rows, cols = np.triu_indices(d)
        tri = factor.reshape(n, g, -1)
        on_diag = rows == cols
        diag_raw = tri[..., on_diag]
        chol[:, :, rows, cols] = tri
    else:
        diag_raw = factor.reshape(n, g, d)
    chol[:, :, diagonal, diagonal] = np.exp(np.clip(diag_raw, -DIAG_RAW_CLAMP, DIAG_RAW_CLAMP))
    return _RawMixtures(logits, means, chol, diag_raw)


def _decode_batch(model, z, cond, mode, seed):
    raw, tape = forward(model.decoder.spec, model.decoder, np.hstack([z, cond]), mode, seed)
    return _assemble(raw, model), tape


def decode(model: AugmenterModel, z: np.ndarray, condition: np.ndarray) -> MixtureDensity:
    """Generative network in eval mode: (latent, codewords) -> mixture over model-space PBMs."""
    z, _ = _rows(z, model.latent_dim, "latent")
    mixtures, _ = _decode_batch(model, z, model.condition_input(condition, 1), Mode.EVAL, None)
    mixture = mixtures.mixture(0)
    validate_mixture(mixture)
    return mixture


@dataclass
class AugmenterGradients:
    encoder: np.ndarray
    decoder: np.ndarray


@dataclass
class Loss1Terms:
    """Batch means of the three loss terms."""
    mixture_nll: float
    kl: float
    anti_degeneracy: float

    @property
    def total(self) -> float:
        return self.mixture_nll + self.kl + self.anti_degeneracy


def _component_log_probs(model, r, mixtures):
    err = r[:, np.newaxis, :] - mixtures.means
    v = np.einsum("ngij,ngj->ngi", mixtures.chol, err)
    log_diag = np.clip(mixtures.diag_raw, -DIAG_RAW_CLAMP, DIAG_RAW_CLAMP)
    lp = -0.5 * model.dim * LOG_2PI - 0.5 * np.sum(v**2, axis=2) + log_diag.sum(axis=2)
    return err, v, lp


def _loss1_batch(model, r, cond, eps, mode, seed, need_grad, kl_weight=1.0):
    n, g = r.shape[0], model.n_components
    mu, log_std, enc_tape = _encode_batch(model, r, cond, mode, seed)
    std = np.exp(log_std)
    z = mu + eps * std
    dec_seed = None if seed is None else derive_seed(seed, 1)
    mixtures, dec_tape = _decode_batch(model, z, cond, mode, dec_seed)

    err, v, lp = _component_log_probs(model, r, mixtures)
    log_w = mixtures.log_weights
    joint = log_w + lp
    mix_lp = logsumexp(joint, axis=1)
    kl = 0.5 * np.sum(mu**2 + std**2 - 2.0 * log_std - 1.0, axis=1)
    terms = Loss1Terms(
        mixture_nll=float(-mix_lp.mean()), kl=float(kl.mean()), anti_degeneracy=float(-lp.mean())
    )
    loss = terms.mixture_nll + kl_weight * terms.kl + terms.anti_degeneracy
    if not np.isfinite(loss):
        bad_row = int(np.argmax(~np.isfinite(mix_lp - lp.mean(axis=1) + kl)))
        raise NumericalInstabilityError(
            "Loss1 is not finite",
            {
                "component": int(np.argmin(np.nan_to_num(lp[bad_row], nan=-np.inf))),
                "max_abs_diag_raw": float(np.nanmax(np.abs(mixtures.diag_raw))),
                "max_latent_std": float(np.nanmax(std)),
            },
        )
    if not need_grad:
        return loss, terms, None

    resp = np.exp(joint - mix_lp[:, np.newaxis])
    c = (-resp - 1.0 / g) / n  # dLoss / d lp
    d_logits = (np.exp(log_w) - resp) / n
    d_means = c[..., np.newaxis] * np.einsum("ngji,ngj->ngi", mixtures.chol, v)
    diagonal = np.arange(model.dim)
    u_diag = mixtures.chol[:, :, diagonal, diagonal]
    in_range = (mixtures.diag_raw > -DIAG_RAW_CLAMP) & (mixtures.diag_raw < DIAG_RAW_CLAMP)
    d_u_diag = -c[..., np.newaxis] * v * err
    d_diag_raw = (d_u_diag * u_diag + c[..., np.newaxis]) * in_range
    if model.covariance == CovarianceMode.FULL:
        rows, cols = np.triu_indices(model.dim)
        d_factor = -c[..., np.newaxis] * v[..., rows] * err[..., cols]
        d_factor[..., rows == cols] = d_diag_raw
    else:
        d_factor = d_diag_raw
    d_raw = np.hstack([d_logits, d_means.reshape(n, -1), d_factor.reshape(n, -1)])

    dec_grad = backward(dec_tape, d_raw)
    dz = dec_grad.inputs[:, : model.latent_dim]
    d_mu = dz + kl_weight * mu / n
    d_log_std = dz * eps * std + kl_weight * (std**2 - 1.0) / n
    enc_grad = backward(enc_tape, np.hstack([d_mu, d_log_std]))
    return loss, terms, AugmenterGradients(encoder=enc_grad.params, decoder=dec_grad.params)


def loss1(
    model: AugmenterModel,
    r: np.ndarray,
    condition: np.ndarray,
    eps: np.ndarray,
    mode: Mode = Mode.EVAL,
    seed: Optional[int] = None,
    kl_weight: float = 1.0,
) -> Tuple[float, AugmenterGradients]:
    """
    Batch-mean training loss and its exact gradients.

    Loss1 = -ln sum_g pi_g p_g(r) + beta KL(q || N(0, I)) - (1/G) sum_g ln p_g(r)
    with beta = kl_weight, 1 outside the warm-up.

    Args:
        model: Augmentation model
        r: Model-space PBMs, (n, d) or (d,)
        condition: Codewords, (n, w) or (w,)
        eps: Standard-normal latent noise, (n, latent_dim) or (latent_dim,)
        mode: TRAIN applies dropout
        seed: Dropout seed
        kl_weight: Weight of the KL term

    Returns:
        tuple: (loss, gradients for encoder and decoder parameters)

    Raises:
        NumericalInstabilityError: If the loss is not finite
    """
    r, _ = _rows(r, model.dim, "PBM")
    eps, _ = _rows(eps, model.latent_dim, "latent noise")
    if eps.shape[0] != r.shape[0]:
        raise ShapeError(f"{eps.shape[0]} noise rows for {r.shape[0]} samples")
    loss, _, grads = _loss1_batch(
        model, r, model.condition_input(condition, r.shape[0]), eps, mode, seed, True, kl_weight
    )
    return loss, grads


def evaluate_loss1(
    model: AugmenterModel, r: np.ndarray, condition: np.ndarray, eps: np.ndarray, batch_size: int = 64
) -> Loss1Terms:
    """Mean loss terms over a dataset in eval mode, computed in chunks."""
    r, _ = _rows(r, model.dim, "PBM")
    cond = model.condition_input(condition, r.shape[0])
    totals = np.zeros(3)
    for start in range(0, r.shape[0], batch_size):
        stop = start + batch_size
        _, terms, _ = _loss1_batch(model, r[start:stop], cond[start:stop], eps[start:stop], Mode.EVAL, None, False)
        totals += np.array([terms.mixture_nll, terms.kl, terms.anti_degeneracy]) * r[start:stop].shape[0]
    totals /= r.shape[0]
    return Loss1Terms(*totals.tolist())


def kl_warmup_weight(epoch: int, warmup_epochs: int) -> float:
    """Linear KL weight: (epoch + 1) / warmup_epochs, capped at 1; always 1 without warm-up."""
    if warmup_epochs <= 0:
        return 1.0
    return min(1.0, (epoch + 1) / warmup_epochs)


def _split_validation(n: int, fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    order = rng_for(seed, STREAM_VALIDATION).permutation(n)
    if fraction <= 0 or n < MIN_SAMPLES_FOR_VALIDATION:
        return order, order[:0]
    n_val = min(n - 1, max(1, int(round(fraction * n))))
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def train_augmenter(
    pbms: np.ndarray,
    conditions: np.ndarray,
    settings: AugmenterSettings,
    validation: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    splits: Optional[Sequence[Any]] = None,
    seed: Optional[int] = None,
) -> Tuple[AugmenterModel, TrainingHistory]:
    """
    Fit the model by mini-batch Adam on Loss1 with a step learning-rate schedule.

    During the first ``settings.kl_warmup_epochs`` epochs the KL term of the
    training loss is scaled by kl_warmup_weight; model selection always uses
    the full validation Loss1.

    Args:
        pbms: Raw training PBMs, (n, d)
        conditions: Codewords per sample (n, w), or one shared (w,) vector
        settings: Architecture and optimizer settings
        validation: Raw (pbms, conditions) held out for model selection;
            carved from the training data when None
        splits: Split tags of the training samples
        seed: Overrides settings.seed

    Returns:
        tuple: (model with the lowest validation loss, training history)

    Raises:
        ProvenanceError: If any training sample is tagged as test
        DivergenceError: If the loss diverges before any stable epoch
    """
    ensure_not_test(splits, "augmenter training")
    pbms = np.asarray(pbms, dtype=float)
    if pbms.ndim != 2 or pbms.shape[0] == 0:
        raise ConfigurationError(f"augmenter training needs a nonempty (n, d) PBM array, got {pbms.shape}")
    base = settings.seed if seed is None else seed
    n_all, dim = pbms.shape
    conditions = np.asarray(conditions, dtype=float)
    if conditions.ndim == 1:
        conditions = np.tile(conditions, (n_all, 1))

    if validation is None:
        train_idx, val_idx = _split_validation(n_all, settings.validation_fraction, base)
        val_pbms, val_cond = pbms[val_idx], conditions[val_idx]
        pbms, conditions = pbms[train_idx], conditions[train_idx]
    else:
        val_pbms = np.asarray(validation[0], dtype=float).reshape(-1, dim)
        val_cond = np.asarray(validation[1], dtype=float)
        if val_cond.ndim == 1:
            val_cond = np.tile(val_cond, (val_pbms.shape[0], 1))

    transform = PbmTransform.fit(pbms, settings.log_transform)
    x = transform.transform(pbms)
    model = build_augmenter(dim, conditions.shape[1], settings, base, transform)
    n = x.shape[0]
    has_val = val_pbms.shape[0] > 0
    val_x = transform.transform(val_pbms) if has_val else x
    val_cond = val_cond if has_val else conditions
    val_eps = rng_for(base, STREAM_VALIDATION, 1).standard_normal((val_x.shape[0], model.latent_dim))

    enc_state = AdamState.zeros(model.encoder.size)
    dec_state = AdamState.zeros(model.decoder.size)
    history = TrainingHistory()
    best: Optional[Tuple[ParameterSet, ParameterSet]] = None
    best_loss = np.inf
    logger.info(
        "Training augmenter",
        extra={"fields": {"samples": n, "validation": int(val_x.shape[0]) if has_val else 0, "dim": dim,
                          "components": model.n_components, "covariance": model.covariance.value}},
    )

    for epoch in range(settings.epochs):
        lr = step_lr_schedule(settings.learning_rate, settings.step_size, settings.gamma, epoch)
        order = rng_for(base, STREAM_SHUFFLE, epoch).permutation(n)
        noise = rng_for(base, STREAM_NOISE, epoch)
        beta = kl_warmup_weight(epoch, settings.kl_warmup_epochs)
        total = 0.0
        try:
            for batch, start in enumerate(range(0, n, settings.batch_size)):
                idx = order[start : start + settings.batch_size]
                eps = noise.standard_normal((idx.size, model.latent_dim))
                loss, grads = loss1(
                    model, x[idx], conditions[idx], eps, Mode.TRAIN,
                    derive_seed(base, STREAM_DROPOUT, epoch, batch), beta,
                )
                adam_step(model.encoder, grads.encoder, enc_state, lr, settings.beta1, settings.beta2, settings.epsilon)
                adam_step(model.decoder, grads.decoder, dec_state, lr, settings.beta1, settings.beta2, settings.epsilon)
                total += loss * idx.size
            val_loss = evaluate_loss1(model, val_x, val_cond, val_eps, settings.batch_size).total
        except NumericalInstabilityError as e:
            return _stop_diverged(model, best, history, epoch, e.diagnostics)
        if not np.isfinite(val_loss):
            return _stop_diverged(model, best, history, epoch, {"validation_loss": str(val_loss)})

        history.record(epoch, train_loss=total / n, validation_loss=val_loss, learning_rate=lr, kl_weight=beta)
        logger.info(
            "Augmenter epoch",
            extra={"fields": {"epoch": epoch, "train_loss": total / n, "validation_loss": val_loss, "lr": lr}},
        )
        if val_loss < best_loss:
            best_loss = val_loss
            best = (model.encoder.copy(), model.decoder.copy())
            history.best_epoch = epoch

    model.encoder, model.decoder = best
    return model, history


def _stop_diverged(model, best, history, epoch, diagnostics):
    diagnostics = dict(diagnostics or {}, epoch=epoch)
    if best is None:
        raise DivergenceError("Augmenter training diverged before any stable epoch", diagnostics)
    logger.warning(
        "Augmenter training diverged; keeping best epoch",
        extra={"fields": {**diagnostics, "best_epoch": history.best_epoch}},
    )
    model.encoder, model.decoder = best
    history.diverged = True
    return model, history


def generate_pbms(model: AugmenterModel, condition: np.ndarray, n: int, seed: Optional[int] = None) -> np.ndarray:
    """
    Execution-stage augmentation: z ~ N(0, I), decode, sample, map back to raw PBMs.

    Args:
        model: Trained model (must carry its PbmTransform)
        condition: Codewords of the target probing combination, (w,)
        n: Number of PBM vectors
        seed: Sampling seed

    Returns:
        np.ndarray: (n, d) nonnegative PBMs, drawn in model space and clipped
        to the transform's bounds before mapping back
    """
    if model.transform is None:
        raise ConfigurationError("model has no PBM transform; train or load it first")
    rng = np.random.default_rng(seed)
    samples = np.empty((n, model.dim))
    chunk = 64
    for start in range(0, n, chunk):
        rows = min(chunk, n - start)
        z = rng.standard_normal((rows, model.latent_dim))
        mixtures, _ = _decode_batch(model, z, model.condition_input(condition, rows), Mode.EVAL, None)
        for i in range(rows):
            samples[start + i] = sample_pbm(mixtures.mixture(i), rng, clamp=False)
    samples, clipped = model.transform.clip(samples)
    if clipped:
        logger.warning("Clipped generated PBMs to the training range", extra={"fields": {"rows": clipped, "of": n}})
    return np.maximum(model.transform.inverse(samples), 0.0)


def estimate_log_density(
    model: AugmenterModel,
    pbms: np.ndarray,
    condition: np.ndarray,
    n_samples: int = 256,
    seed: Optional[int] = None,
) -> np.ndarray:
    """
    Importance-sampled marginal log-density of raw PBMs.

    ln p(r) ~ logsumexp_k [ln p(r | z_k) + ln N(z_k; 0, I) - ln q(z_k | r)] - ln K
    with z_k drawn from the encoder posterior, plus the log-Jacobian of the
    transform so the result is a density over raw PBMs.

    Args:
        model: Trained model (must carry its PbmTransform)
        pbms: Raw PBMs, (n, d) or (d,)
        condition: Codewords, (n, w) or (w,)
        n_samples: Importance samples per PBM
        seed: Seed of the importance samples

    Returns:
        np.ndarray: (n,) log-densities in nats
    """
    if model.transform is None:
        raise ConfigurationError("model has no PBM transform; train or load it first")
    raw, _ = _rows(pbms, model.dim, "PBM")
    r = model.transform.transform(raw)
    n = r.shape[0]
    cond = model.condition_input(condition, n)
    rng = rng_for(0 if seed is None else seed, STREAM_IMPORTANCE)
    mu, log_std, _ = _encode_batch(model, r, cond, Mode.EVAL, None)
    std = np.exp(log_std)

    weights = np.empty((n, n_samples))
    for k in range(n_samples):
        eps = rng.standard_normal(mu.shape)
        z = mu + eps * std
        mixtures, _ = _decode_batch(model, z, cond, Mode.EVAL, None)
        _, _, lp = _component_log_probs(model, r, mixtures)
        log_likelihood = logsumexp(mixtures.log_weights + lp, axis=1)
        log_prior = -0.5 * np.sum(z**2 + LOG_2PI, axis=1)
        log_posterior = -0.5 * np.sum(eps**2 + LOG_2PI, axis=1) - log_std.sum(axis=1)
        weights[:, k] = log_likelihood + log_prior - log_posterior
    return logsumexp(weights, axis=1) - np.log(n_samples) + model.transform.log_jacobian(raw)


@dataclass
class AugmenterFarm:
    """
    The augmentation models of one model tag.

    Tags with per-combination models hold one model per sampled combination
    plus a pooled model that serves combinations without training data.
    """
    tag: ModelTag
    shared: Optional[AugmenterModel] = None
    per_combo: Dict[int, AugmenterModel] = field(default_factory=dict)
    histories: Dict[str, TrainingHistory] = field(default_factory=dict)

    def model_for(self, combo: int) -> AugmenterModel:
        model = self.per_combo.get(combo, self.shared)
        if model is None:
            raise MissingArtifactError(f"No {self.tag.value} augmenter for combination {combo}")
        return model

    def generate(self, combo: int, condition: np.ndarray, n: int, seed: Optional[int] = None) -> np.ndarray:
        return generate_pbms(self.model_for(combo), condition, n, seed)

    def named_models(self) -> Dict[str, AugmenterModel]:
        named = {f"combo{c}": m for c, m in sorted(self.per_combo.items())}
        if self.shared is not None:
            named["shared"] = self.shared
        return named


def train_augmenter_farm(
    tag: ModelTag,
    pbms: np.ndarray,
    conditions: np.ndarray,
    combos: np.ndarray,
    settings: AugmenterSettings,
    validation: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None,
    splits: Optional[Sequence[Any]] = None,
    seed: Optional[int] = None,
) -> AugmenterFarm:
    """
    Train the model(s) of one tag.

    Args:
        tag: Model variant
        pbms: Raw training PBMs, (n, d)
        conditions: Codewords per sample, (n, w)
        combos: Combination index per sample, (n,)
        settings: Base augmenter settings (adjusted per tag)
        validation: Raw (pbms, conditions, combos) validation samples
        splits: Split tags of the training samples
        seed: Overrides settings.seed

    Returns:
        AugmenterFarm: Trained models with their histories
    """
    ensure_not_test(splits, "augmenter training")
    tagged = settings.for_tag(tag)
    base = tagged.seed if seed is None else seed
    combos = np.asarray(combos, dtype=int)
    farm = AugmenterFarm(tag=ModelTag(tag))

    if tagged.per_combination:
        for combo in np.unique(combos):
            mask = combos == combo
            val = None
            if validation is not None:
                val_mask = np.asarray(validation[2]) == combo
                val = (validation[0][val_mask], validation[1][val_mask])
            model, history = train_augmenter(
                pbms[mask], conditions[mask], tagged, val, seed=derive_seed(base, int(combo))
            )
            farm.per_combo[int(combo)] = model
            farm.histories[f"combo{int(combo)}"] = history

    val = None if validation is None else (validation[0], validation[1])
    farm.shared, farm.histories["shared"] = train_augmenter(pbms, conditions, tagged, val, seed=base)
    return farm


def save_augmenter(path: Union[str, Path], farm: AugmenterFarm, metadata: Optional[Dict[str, Any]] = None) -> None:
    networks: Dict[str, ParameterSet] = {}
    models: Dict[str, Any] = {}
    for name, model in farm.named_models().items():
        networks[f"{name}/encoder"] = model.encoder
        networks[f"{name}/decoder"] = model.decoder
        models[name] = model.metadata()
    save_checkpoint(path, networks, {"tag": farm.tag.value, "models": models, **(metadata or {})})


def load_augmenter(path: Union[str, Path]) -> AugmenterFarm:
    checkpoint = load_checkpoint(path)
    farm = AugmenterFarm(tag=ModelTag(checkpoint.metadata["tag"]))
    for name, info in checkpoint.metadata["models"].items():
        model = AugmenterModel(
            encoder=checkpoint.networks[f"{name}/encoder"],
            decoder=checkpoint.networks[f"{name}/decoder"],
            n_components=info["n_components"],
            latent_dim=info["latent_dim"],
            dim=info["dim"],
            condition_width=info["condition_width"],
            covariance=info["covariance"],
            condition_mode=info["condition_mode"],
            transform=PbmTransform.from_dict(info["transform"]) if info.get("transform") else None,
        )
        if name == "shared":
            farm.shared = model
        else:
            farm.per_combo[int(name[len("combo"):])] = model
    return farm
