"""Validated configuration models for scenarios, models and experiments."""

from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ModelTag(str, Enum):
    """Augmentation model variants."""
    CVAE_MDN = "cvae-mdn"
    CVAE = "cvae"
    VAE_MDN = "vae-mdn"


class CovarianceMode(str, Enum):
    """Structure of the per-component precision factor."""
    FULL = "full"
    DIAGONAL = "diagonal"


class ConditionMode(str, Enum):
    """How the probing codewords enter the augmentation networks."""
    CODEWORDS = "codewords"
    ZEROED = "zeroed"


class ProbingLayout(str, Enum):
    """Order in which the codebook grid is cut into probing combinations."""
    LAYERS = "layers"  # one vertical layer across every horizontal beam
    CONTIGUOUS = "contiguous"  # consecutive codebook columns


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class ArrayGeometry(_Frozen):
    """Uniform rectangular array with half-wavelength spacing."""
    m_y: int = Field(8, ge=1, description="antennas, horizontal")
    m_z: int = Field(8, ge=1, description="antennas, vertical")

    @property
    def n_antennas(self) -> int:
        return self.m_y * self.m_z


def _default_ap_positions() -> Tuple[Tuple[float, float, float], ...]:
    return ((0.0, 0.0, 6.0), (45.0, 0.0, 6.0), (90.0, 0.0, 6.0))


def _default_region_centers() -> Tuple[Tuple[float, float], ...]:
    return ((10.0, 18.0), (25.0, 22.0), (40.0, 18.0), (55.0, 22.0), (70.0, 18.0), (85.0, 22.0))


class ScenarioConfig(_Frozen):
    """
    Cell-free deployment and channel-model parameters (SI units).

    The keys are flat so a scenario can live in its own key/value file.
    """
    n_aps: int = Field(3, ge=1)
    n_users: int = Field(6, ge=1)
    m_y: int = Field(8, ge=1)
    m_z: int = Field(8, ge=1)
    l_paths: int = Field(5, ge=1)
    bandwidth: float = Field(100e6, gt=0, description="Hz")
    carrier: float = Field(28e9, gt=0, description="Hz")
    ap_positions: Tuple[Tuple[float, float, float], ...] = Field(default_factory=_default_ap_positions)
    region_centers: Tuple[Tuple[float, float], ...] = Field(default_factory=_default_region_centers)
    region_side: float = Field(4.0, gt=0, description="m")
    user_height: float = Field(1.5, description="m")
    tx_power: float = Field(10.0, gt=0, description="W per AP")
    noise_power: Optional[float] = Field(None, gt=0, description="W; calibrated when omitted")
    target_snr_db: float = 10.0
    pathloss_exponent: float = Field(3.0, gt=0)
    angular_spread_deg: float = Field(30.0, ge=0, le=180)
    elevation_min_deg: float = Field(80.0, gt=0, lt=180)
    elevation_max_deg: float = Field(100.0, gt=0, lt=180)
    max_delay: float = Field(100e-9, ge=0, description="s")
    power_decay: float = Field(1.0, ge=0, description="per-path exponential decay rate")

    @model_validator(mode="after")
    def _check_layout(self) -> "ScenarioConfig":
        if len(self.ap_positions) != self.n_aps:
            raise ValueError(
                f"ap_positions lists {len(self.ap_positions)} APs but n_aps = {self.n_aps}"
            )
        if not self.region_centers:
            raise ValueError("region_centers must not be empty")
        if self.elevation_min_deg > self.elevation_max_deg:
            raise ValueError("elevation_min_deg must not exceed elevation_max_deg")
        return self

    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(m_y=self.m_y, m_z=self.m_z)


class ProbingSettings(_Frozen):
    beams_per_ap: int = Field(8, ge=1)
    n_combos: int = Field(8, ge=1)
    layout: ProbingLayout = ProbingLayout.LAYERS
    sampled_combos: Optional[List[int]] = None

    @model_validator(mode="after")
    def _check_sampled(self) -> "ProbingSettings":
        for combo in self.sampled_combos or []:
            if not 1 <= combo <= self.n_combos:
                raise ValueError(f"sampled combo {combo} outside 1..{self.n_combos}")
        return self

    def sampled(self) -> List[int]:
        """1-based indices of the combinations that receive training data."""
        if self.sampled_combos is None:
            return list(range(1, self.n_combos + 1))
        return sorted(set(self.sampled_combos))


class DatasetSettings(_Frozen):
    n_location_sets: int = Field(200, ge=1)
    split: Tuple[float, float, float] = (0.70, 0.15, 0.15)
    train_size: int = Field(40, ge=0, description="training samples per combination; 0 = all")
    train_sizes: List[int] = Field(default_factory=list)
    test_size: int = Field(0, ge=0, description="test samples per combination; 0 = all")
    aug_size: int = Field(100, ge=0, description="augmented samples per combination")

    @field_validator("split")
    @classmethod
    def _check_split(cls, value: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if any(part < 0 for part in value) or abs(sum(value) - 1.0) > 1e-9:
            raise ValueError("split fractions must be nonnegative and sum to 1")
        return value

    @field_validator("train_sizes")
    @classmethod
    def _check_sizes(cls, value: List[int]) -> List[int]:
        if any(size < 0 for size in value):
            raise ValueError("train_sizes must be nonnegative")
        return value


class PipelineSettings(_Frozen):
    classes: int = Field(8, ge=1)
    keep: int = Field(2, ge=1)
    regularizer: Optional[float] = Field(None, ge=0)

    @model_validator(mode="after")
    def _check_keep(self) -> "PipelineSettings":
        if self.keep > self.classes:
            raise ValueError("keep must not exceed classes")
        return self


class TrainingSettings(_Frozen):
    """Optimizer and schedule knobs shared by both learned modules."""
    dropout: float = Field(0.3, ge=0, lt=1)
    epochs: int = Field(200, ge=1)
    batch_size: int = Field(32, ge=1)
    learning_rate: float = Field(1e-3, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    epsilon: float = Field(1e-8, gt=0)
    step_size: int = Field(50, ge=1)
    gamma: float = Field(0.5, gt=0, le=1)
    validation_fraction: float = Field(0.15, ge=0, lt=1)
    seed: int = 0


class AugmenterSettings(TrainingSettings):
    latent_dim: int = Field(64, ge=1)
    components: int = Field(8, ge=1)
    encoder_hidden: List[int] = Field(default_factory=lambda: [256, 128])
    decoder_hidden: List[int] = Field(default_factory=lambda: [128, 128])
    covariance: CovarianceMode = CovarianceMode.FULL
    condition_mode: ConditionMode = ConditionMode.CODEWORDS
    per_combination: bool = False
    log_transform: bool = True
    kl_warmup_epochs: int = Field(20, ge=0, description="epochs over which the KL weight ramps to 1; 0 disables")

    def for_tag(self, tag: ModelTag) -> "AugmenterSettings":
        """Settings for one of the three model variants."""
        if tag == ModelTag.CVAE:
            return self.model_copy(update={"components": 1, "covariance": CovarianceMode.DIAGONAL})
        if tag == ModelTag.VAE_MDN:
            return self.model_copy(
                update={"condition_mode": ConditionMode.ZEROED, "per_combination": True}
            )
        return self


class MapperSettings(TrainingSettings):
    hidden: List[int] = Field(default_factory=lambda: [256, 128, 64])
    epochs: int = Field(300, ge=1)
    log_transform: bool = True


class GaSettings(_Frozen):
    population: int = Field(6, ge=2)
    n_iterations: int = Field(3, ge=1)
    n_evolutions: int = Field(5, ge=1)
    crossover: float = Field(0.9, ge=0, le=1)
    mutation: float = Field(0.1, ge=0, le=1)
    elitism: int = Field(1, ge=0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_elitism(self) -> "GaSettings":
        if self.elitism >= self.population:
            raise ValueError("elitism must be smaller than the population")
        return self


class EvaluationSettings(_Frozen):
    bandwidth: Optional[float] = Field(None, gt=0, description="MMD kernel bandwidth; median heuristic when omitted")
    model_tags: List[ModelTag] = Field(
        default_factory=lambda: [ModelTag.CVAE_MDN, ModelTag.CVAE, ModelTag.VAE_MDN]
    )
    compression_bound: float = Field(0.8, ge=0, le=1, description="minimum pipeline / full-beamspace rate ratio")


class ExperimentConfig(_Frozen):
    scenario: ScenarioConfig = Field(default_factory=ScenarioConfig)
    probing: ProbingSettings = Field(default_factory=ProbingSettings)
    dataset: DatasetSettings = Field(default_factory=DatasetSettings)
    pipeline: PipelineSettings = Field(default_factory=PipelineSettings)
    augmenter: AugmenterSettings = Field(default_factory=AugmenterSettings)
    mapper: MapperSettings = Field(default_factory=MapperSettings)
    ga: GaSettings = Field(default_factory=GaSettings)
    evaluation: EvaluationSettings = Field(default_factory=EvaluationSettings)
    model_tag: ModelTag = ModelTag.CVAE_MDN
    seed: int = 0
    output_dir: str = "runs/default"
    workers: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _check_probing_fits(self) -> "ExperimentConfig":
        n_antennas = self.scenario.m_y * self.scenario.m_z
        if self.probing.n_combos * self.probing.beams_per_ap > n_antennas:
            raise ValueError(
                f"{self.probing.n_combos} combinations of {self.probing.beams_per_ap} beams "
                f"do not fit a codebook of {n_antennas} beams"
            )
        if n_antennas % self.pipeline.classes != 0:
            raise ValueError(f"classes = {self.pipeline.classes} must divide M = {n_antennas}")
        return self
