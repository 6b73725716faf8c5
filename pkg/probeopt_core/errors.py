"""Exception hierarchy for the probing-beam optimization library.

Every error carries an uppercase ``code`` so the CLI can emit a
machine-readable error line. Each class also inherits the builtin it
specializes, so callers may catch ``ValueError`` and friends as usual.
"""

from typing import Any, Dict, List, Optional


class ProbeOptError(Exception):
    """Base class for all library errors."""

    code = "PROBEOPT_ERROR"

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.diagnostics = diagnostics or {}

    def to_record(self) -> Dict[str, Any]:
        """Serializable view used by the CLI error line."""
        record = {
            "status": "error",
            "code": self.code,
            "type": type(self).__name__,
            "message": self.message,
        }
        if self.diagnostics:
            record["diagnostics"] = self.diagnostics
        return record


class ConfigurationError(ProbeOptError, ValueError):
    code = "CONFIGURATION_ERROR"


class ShapeError(ProbeOptError, ValueError):
    code = "SHAPE_MISMATCH"


class InfeasibleCandidatesError(ProbeOptError, ValueError):
    code = "INFEASIBLE_CANDIDATES"


class NumericalRankError(ProbeOptError, ArithmeticError):
    code = "NUMERICAL_RANK"


class NumericalInstabilityError(ProbeOptError, ArithmeticError):
    code = "NUMERICAL_INSTABILITY"


class StaleTapeError(ProbeOptError, RuntimeError):
    code = "STALE_TAPE"


class DivergenceError(ProbeOptError, RuntimeError):
    code = "TRAINING_DIVERGED"


class UndefinedFitnessError(ProbeOptError, ValueError):
    code = "UNDEFINED_FITNESS"

    def __init__(self, message: str, offenders: Optional[List[int]] = None):
        super().__init__(message, {"offenders": list(offenders or [])})
        self.offenders = list(offenders or [])


class ProvenanceError(ProbeOptError, ValueError):
    code = "PROVENANCE_VIOLATION"


class MissingArtifactError(ProbeOptError, FileNotFoundError):
    code = "MISSING_ARTIFACT"


class OutputPathError(ProbeOptError, OSError):
    code = "OUTPUT_NOT_WRITABLE"


class DatasetFormatError(ProbeOptError, ValueError):
    code = "DATASET_FORMAT"


class CheckpointFormatError(ProbeOptError, ValueError):
    code = "CHECKPOINT_FORMAT"
