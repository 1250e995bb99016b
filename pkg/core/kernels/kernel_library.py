"""
Library of the standard kernel shapes, stored as JSON presets next to this module.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from ..errors import KernelError
from ..model import Kernel, make_kernel

logger = logging.getLogger(__name__)


class KernelLibrary:
    """Loads the shape presets and materialises them at a requested mass."""

    def __init__(self, presets_dir: Optional[Path] = None):
        self.presets_dir = Path(presets_dir) if presets_dir is not None else Path(__file__).parent
        self.presets: Dict[str, Dict[str, Any]] = {}
        self._load_all()

    def _load_all(self) -> None:
        paths = sorted(self.presets_dir.glob("*.json"))
        if not paths:
            logger.warning("No kernel presets found in %s", self.presets_dir)
        for path in paths:
            try:
                with open(path, "r", encoding="utf-8") as f:
                    data = json.load(f)
            except (OSError, json.JSONDecodeError) as e:
                logger.warning("Skipping kernel preset %s: %s", path.name, e)
                continue
            self.presets[data.get("name", path.stem)] = data
        logger.debug("kernel presets: %s", list(self.presets))

    def names(self) -> List[str]:
        return list(self.presets)

    def descriptor(self, name: str) -> Dict[str, Any]:
        if name not in self.presets:
            raise KernelError(f"Unknown kernel preset {name!r}; available: {self.names()}")
        return {k: v for k, v in self.presets[name].items() if k != "name"}

    def get(self, name: str, mass: float, halfwidth: Optional[float] = None) -> Kernel:
        """Preset ``name`` with total mass ``mass``, optionally rescaled to ``halfwidth``."""
        descriptor = self.descriptor(name)
        if halfwidth is not None:
            descriptor["halfwidth"] = halfwidth
        return make_kernel(descriptor, mass)

    def standard_set(self, mass: float, halfwidth: Optional[float] = None) -> Dict[str, Kernel]:
        return {name: self.get(name, mass, halfwidth) for name in self.names()}


kernel_library = KernelLibrary()
