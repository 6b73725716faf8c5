"""Run registry for tracking the artifacts each stage produced."""

import json
import os
from typing import Dict, List, Optional

from probeopt_core.errors import MissingArtifactError, OutputPathError


class RunRegistry:
    """
    Registry of artifacts written into one output directory.

    Stores artifact metadata (kind, path, config hash, seed) in a JSON file
    next to the artifacts, so later stages can check their inputs exist.
    """

    FILE_NAME = "run_registry.json"

    def __init__(self, output_dir: str):
        """
        Initialize run registry.

        Args:
            output_dir: Directory holding the artifacts and the registry file
        """
        self.output_dir = output_dir
        self.registry_file = os.path.join(output_dir, self.FILE_NAME)
        self._artifacts: Dict[str, Dict] = {}
        self._load_registry()

    def _load_registry(self):
        """Load registry from file."""
        if os.path.exists(self.registry_file):
            try:
                with open(self.registry_file, "r") as f:
                    self._artifacts = json.load(f)
            except (json.JSONDecodeError, IOError):
                self._artifacts = {}
        else:
            self._artifacts = {}

    def _save_registry(self):
        """Save registry to file."""
        try:
            os.makedirs(self.output_dir, exist_ok=True)
            with open(self.registry_file, "w") as f:
                json.dump(self._artifacts, f, indent=2, sort_keys=True)
        except OSError as e:
            raise OutputPathError(f"Failed to save run registry: {e}")

    def record(self, name: str, kind: str, path: str, config_hash: str, seed: int) -> Dict:
        """
        Record (or replace) an artifact.

        Args:
            name: Unique artifact name, e.g. "dataset/train"
            kind: Artifact kind ("dataset", "checkpoint", "report", ...)
            path: File path relative to the output directory
            config_hash: Short hash of the producing configuration
            seed: Seed of the producing run

        Returns:
            dict: Recorded artifact information
        """
        info = {
            "name": name,
            "kind": kind,
            "path": path,
            "config_hash": config_hash,
            "seed": seed,
        }
        self._artifacts[name] = info
        self._save_registry()
        return info

    def get(self, name: str) -> Optional[Dict]:
        """Artifact information by name, or None."""
        return self._artifacts.get(name)

    def require(self, name: str) -> str:
        """
        Absolute path of a recorded artifact that must exist on disk.

        Args:
            name: Artifact name

        Returns:
            str: Path to the artifact file

        Raises:
            MissingArtifactError: If the artifact is unknown or its file is gone
        """
        info = self._artifacts.get(name)
        if info is None:
            raise MissingArtifactError(
                f"Artifact '{name}' not found in {self.registry_file}; run the producing stage first"
            )
        path = os.path.join(self.output_dir, info["path"])
        if not os.path.exists(path):
            raise MissingArtifactError(f"Artifact '{name}' is registered but {path} does not exist")
        return path

    def list_artifacts(self, kind: Optional[str] = None) -> List[Dict]:
        """
        List recorded artifacts.

        Args:
            kind: Only return artifacts of this kind

        Returns:
            list: Artifact information dictionaries, sorted by name
        """
        items = sorted(self._artifacts.values(), key=lambda info: info["name"])
        if kind is None:
            return items
        return [info for info in items if info["kind"] == kind]
