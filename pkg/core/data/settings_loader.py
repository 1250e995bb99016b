"""
Settings loader for solver and output defaults.
"""

import copy
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

logger = logging.getLogger(__name__)

SETTINGS_PATH = Path(__file__).parent / "settings.json"

DEFAULT_SETTINGS: Dict[str, Any] = {
    "output_dir": "output",
    "threads": 1,
    "log_level": "INFO",
    "grid": {},
    "search": {},
    "simulation": {},
    "curve_points": 200,
}

ENV_OVERRIDES = {
    "ROADSPREAD_OUTPUT_DIR": ("output_dir", str),
    "ROADSPREAD_THREADS": ("threads", int),
    "ROADSPREAD_LOG_LEVEL": ("log_level", str),
}


def load_settings(path: Optional[Path] = None) -> Dict[str, Any]:
    """Read settings.json, fall back to built-in defaults, then apply environment overrides."""
    path = Path(path) if path is not None else SETTINGS_PATH
    settings = copy.deepcopy(DEFAULT_SETTINGS)
    try:
        with open(path, "r", encoding="utf-8") as f:
            settings.update(json.load(f))
    except (OSError, json.JSONDecodeError) as e:
        logger.warning("Settings file %s unreadable (%s); using built-in defaults", path, e)

    for variable, (key, cast) in ENV_OVERRIDES.items():
        raw = os.environ.get(variable)
        if raw is None or raw == "":
            continue
        try:
            settings[key] = cast(raw)
        except ValueError:
            logger.warning("Ignoring %s=%r: expected %s", variable, raw, cast.__name__)
    return settings
