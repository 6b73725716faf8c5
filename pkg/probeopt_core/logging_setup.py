"""Logging configuration driven by the ``logging:`` section of global settings."""

import json
import logging
import os
import sys
from typing import Any, Dict, Optional

LOG_LEVEL_ENV = "PROBEOPT_LOG_LEVEL"


class JsonLineFormatter(logging.Formatter):
    """Formats each record as one JSON object per line."""

    def format(self, record: logging.LogRecord) -> str:
        payload: Dict[str, Any] = {
            "ts": self.formatTime(record, "%Y-%m-%dT%H:%M:%S"),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        extra = getattr(record, "fields", None)
        if isinstance(extra, dict):
            payload.update(extra)
        if record.exc_info:
            payload["exc"] = self.formatException(record.exc_info)
        return json.dumps(payload, default=str)


def configure_logging(logging_settings: Optional[Dict[str, Any]] = None) -> logging.Logger:
    """
    Configure the root logger.

    Args:
        logging_settings: Mapping with optional keys ``level``, ``format``
            ("json" or "text") and ``output`` ("stdout" or "stderr")

    Returns:
        logging.Logger: The configured root logger
    """
    settings = logging_settings or {}
    level_name = os.getenv(LOG_LEVEL_ENV) or str(settings.get("level", "INFO"))
    level = logging.getLevelName(level_name.upper())
    if not isinstance(level, int):
        level = logging.INFO

    stream = sys.stderr if settings.get("output") == "stderr" else sys.stdout
    handler = logging.StreamHandler(stream)
    if str(settings.get("format", "json")).lower() == "json":
        handler.setFormatter(JsonLineFormatter())
    else:
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))

    root = logging.getLogger()
    for existing in list(root.handlers):
        root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel(level)
    return root
