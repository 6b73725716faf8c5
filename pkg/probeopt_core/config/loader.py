import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml
from pydantic import ValidationError

from probeopt_core.config.settings import ExperimentConfig, ScenarioConfig
from probeopt_core.errors import ConfigurationError

PathLike = Union[str, Path]


class ConfigLoader:
    """
    Loads platform settings and experiment configurations.

    Supports:
    - configs/global-settings.yaml: platform defaults and the logging section
    - experiment YAML files with nested sections (scenario, probing, ...)
    - flat scenario files holding only ScenarioConfig keys
    """

    GLOBAL_SETTINGS_PATH = "configs/global-settings.yaml"
    SHORT_HASH_LENGTH = 16
    HASH_EXCLUDED = {"output_dir", "workers"}

    def __init__(self, settings_path: Optional[PathLike] = None):
        """
        Initialize config loader.

        Args:
            settings_path: Path to the global settings file (defaults to
                $PROBEOPT_SETTINGS or configs/global-settings.yaml)
        """
        self.settings_path = Path(
            settings_path or os.getenv("PROBEOPT_SETTINGS") or self.GLOBAL_SETTINGS_PATH
        )

    def load_global_settings(self) -> Dict[str, Any]:
        """
        Load the platform-wide settings.

        Returns:
            dict: Settings, or an empty dict when the file is absent
        """
        if not self.settings_path.exists():
            return {}
        return self._read_yaml(self.settings_path)

    def load_experiment(
        self,
        path: Optional[PathLike] = None,
        overrides: Optional[Dict[str, Any]] = None,
    ) -> ExperimentConfig:
        """
        Load and validate an experiment configuration.

        Args:
            path: Experiment YAML file; None gives the built-in defaults
            overrides: Top-level keys replacing file values (CLI flags)

        Returns:
            ExperimentConfig: Validated configuration

        Raises:
            ConfigurationError: If the file is missing or fails validation
        """
        raw: Dict[str, Any] = self._read_yaml(Path(path)) if path else {}
        for key, value in (overrides or {}).items():
            if value is not None:
                raw[key] = value
        try:
            return ExperimentConfig.model_validate(raw)
        except ValidationError as e:
            raise ConfigurationError(f"Invalid experiment config: {e}")

    def load_scenario(self, path: PathLike) -> ScenarioConfig:
        """
        Load a flat key/value scenario file.

        Args:
            path: YAML file whose top level holds ScenarioConfig keys

        Returns:
            ScenarioConfig: Validated scenario

        Raises:
            ConfigurationError: If the file is missing or fails validation
        """
        raw = self._read_yaml(Path(path))
        try:
            return ScenarioConfig.model_validate(raw)
        except ValidationError as e:
            raise ConfigurationError(f"Invalid scenario config '{path}': {e}")

    @classmethod
    def config_hash(cls, config: ExperimentConfig, full: bool = False) -> str:
        """
        Hash of the canonical JSON dump of a configuration.

        Args:
            config: Validated configuration
            full: Return all 64 hex characters instead of the short form

        Returns:
            str: SHA-256 hex digest
        """
        canonical = json.dumps(config.model_dump(mode="json", exclude=cls.HASH_EXCLUDED), sort_keys=True, separators=(",", ":"))
        digest = hashlib.sha256(canonical.encode("utf-8")).hexdigest()
        return digest if full else digest[: cls.SHORT_HASH_LENGTH]

    def _read_yaml(self, path: Path) -> Dict[str, Any]:
        if not path.exists():
            raise ConfigurationError(f"Config file not found: {path}")
        with path.open("r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
        if not isinstance(data, dict):
            raise ConfigurationError(f"Config file '{path}' must hold a mapping at the top level")
        return data
