"""Unit tests for ConfigLoader experiment and scenario loading."""

from pathlib import Path

import pytest
import yaml

from probeopt_core.config.loader import ConfigLoader
from probeopt_core.config.settings import (
    AugmenterSettings,
    ConditionMode,
    CovarianceMode,
    ExperimentConfig,
    ModelTag,
    ProbingLayout,
)
from probeopt_core.errors import ConfigurationError

REPO_ROOT = Path(__file__).resolve().parents[1]
EXAMPLES = REPO_ROOT / "configs" / "examples"


def write_yaml(path: Path, data: dict) -> Path:
    path.write_text(yaml.safe_dump(data))
    return path


def test_defaults_without_a_file():
    """No experiment file gives the built-in defaults."""
    config = ConfigLoader().load_experiment()
    assert config.scenario.n_aps == 3
    assert config.scenario.geometry.n_antennas == 64
    assert config.probing.sampled() == list(range(1, 9))
    assert config.pipeline.classes == 8 and config.pipeline.keep == 2
    assert config.ga.population == 6


@pytest.mark.parametrize("name", ["desk-scenario.yaml", "full-scale-scenario.yaml"])
def test_bundled_examples_validate(name):
    """Shipped experiment files load cleanly."""
    config = ConfigLoader().load_experiment(EXAMPLES / name)
    assert config.probing.n_combos * config.probing.beams_per_ap <= config.scenario.geometry.n_antennas


def test_overrides_replace_file_values(tmp_path):
    """CLI overrides win; None overrides are ignored."""
    path = write_yaml(tmp_path / "exp.yaml", {"seed": 3, "output_dir": "runs/a"})
    config = ConfigLoader().load_experiment(path, {"seed": 9, "output_dir": None, "model_tag": "cvae"})
    assert config.seed == 9
    assert config.output_dir == "runs/a"
    assert config.model_tag == ModelTag.CVAE


def test_probing_must_fit_codebook(tmp_path):
    """Nine sectors of eight beams do not fit a 64-beam codebook."""
    path = write_yaml(tmp_path / "exp.yaml", {"probing": {"n_combos": 9, "beams_per_ap": 8}})
    with pytest.raises(ConfigurationError):
        ConfigLoader().load_experiment(path)


def test_ap_positions_must_match_ap_count(tmp_path):
    """One position per AP."""
    path = write_yaml(tmp_path / "exp.yaml", {"scenario": {"n_aps": 2}})
    with pytest.raises(ConfigurationError):
        ConfigLoader().load_experiment(path)


def test_unknown_keys_rejected(tmp_path):
    """Typos do not pass silently."""
    path = write_yaml(tmp_path / "exp.yaml", {"ga": {"populaton": 10}})
    with pytest.raises(ConfigurationError):
        ConfigLoader().load_experiment(path)


def test_missing_file(tmp_path):
    """A missing experiment file is a configuration error."""
    with pytest.raises(ConfigurationError):
        ConfigLoader().load_experiment(tmp_path / "absent.yaml")


def test_flat_scenario_file(tmp_path):
    """A scenario file holds ScenarioConfig keys at the top level."""
    path = write_yaml(tmp_path / "scenario.yaml", {
        "n_aps": 1, "n_users": 2, "ap_positions": [[0.0, 0.0, 5.0]], "noise_power": 1e-12,
    })
    scenario = ConfigLoader().load_scenario(path)
    assert scenario.n_aps == 1
    assert scenario.noise_power == 1e-12


def test_missing_global_settings_is_empty(tmp_path):
    """Absent platform settings fall back to an empty mapping."""
    assert ConfigLoader(tmp_path / "none.yaml").load_global_settings() == {}


def test_config_hash_tracks_semantics_only():
    """The hash changes with the seed but not with the output directory."""
    base = ExperimentConfig()
    short = ConfigLoader.config_hash(base)
    assert len(short) == 16
    assert len(ConfigLoader.config_hash(base, full=True)) == 64
    assert ConfigLoader.config_hash(ExperimentConfig()) == short
    assert ConfigLoader.config_hash(base.model_copy(update={"output_dir": "elsewhere", "workers": 8})) == short
    assert ConfigLoader.config_hash(ExperimentConfig(seed=1)) != short


def test_model_tag_settings():
    """cvae is one diagonal component; vae-mdn zeroes the condition per combination."""
    settings = AugmenterSettings()
    cvae = settings.for_tag(ModelTag.CVAE)
    assert cvae.components == 1 and cvae.covariance == CovarianceMode.DIAGONAL
    vae = settings.for_tag(ModelTag.VAE_MDN)
    assert vae.condition_mode == ConditionMode.ZEROED and vae.per_combination
    assert settings.for_tag(ModelTag.CVAE_MDN) == settings


def test_probing_layout_and_bound_settings():
    """Layer probing, KL warm-up and the 0.8 compression bound are the defaults; layout is a closed set."""
    config = ExperimentConfig()
    assert config.probing.layout == ProbingLayout.LAYERS
    assert config.augmenter.kl_warmup_epochs == 20
    assert config.evaluation.compression_bound == 0.8
    contiguous = ExperimentConfig.model_validate({"probing": {"layout": "contiguous"}})
    assert contiguous.probing.layout == ProbingLayout.CONTIGUOUS
    assert ConfigLoader.config_hash(contiguous) != ConfigLoader.config_hash(config)
    with pytest.raises(ValueError):
        ExperimentConfig.model_validate({"probing": {"layout": "diagonal"}})
