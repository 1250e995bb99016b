"""
Save manager for run outputs: CSV tables, JSON summaries, error records and
plot bundles.
"""

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = "%.17g"

_PLOT_TEMPLATES = {
    "curves": '''"""Overlay of the road and field curves against lambda."""
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

data = np.loadtxt(Path(__file__).with_name("{data}"), skiprows=1, ndmin=2)
fig, ax = plt.subplots()
ax.plot(data[:, 0], data[:, 1], label="{col1}")
ax.plot(data[:, 0], data[:, 2], label="{col2}")
ax.set_xlabel("{col0}")
ax.legend()
fig.savefig(Path(__file__).with_name("{stem}.png"), dpi=150)
''',
    "sweep": '''"""c*/sqrt(D) against D with the large-D limit."""
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

data = np.loadtxt(Path(__file__).with_name("{data}"), skiprows=1, ndmin=2)
fig, ax = plt.subplots()
ax.semilogx(data[:, {x}], data[:, {y}], "o-", label="{ylabel}")
ax.axhline({hline!r}, color="k", linestyle="--", label="limit")
ax.set_xlabel("{xlabel}")
ax.legend()
fig.savefig(Path(__file__).with_name("{stem}.png"), dpi=150)
''',
    "table": '''"""Every column against the first one."""
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

names = {names!r}
data = np.loadtxt(Path(__file__).with_name("{data}"), skiprows=1, ndmin=2)
fig, ax = plt.subplots()
for i, name in enumerate(names[1:], start=1):
    ax.plot(data[:, 0], data[:, i], label=name)
ax.set_xlabel(names[0])
ax.legend()
fig.savefig(Path(__file__).with_name("{stem}.png"), dpi=150)
''',
}


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


class SaveManager:
    """Writes every file of one run into ``base_dir``; all writes are temp + rename."""

    def __init__(self, base_dir: str = "output"):
        self.base_dir = Path(base_dir)
        self.written: List[Path] = []

    def ensure_dir(self) -> Path:
        self.base_dir.mkdir(parents=True, exist_ok=True)
        return self.base_dir

    def _record(self, path: Path) -> Path:
        if path not in self.written:
            self.written.append(path)
        logger.debug("wrote %s", path)
        return path

    def save_table(self, frame: pd.DataFrame, name: str, header: Optional[Iterable[str]] = None) -> Path:
        """CSV with 17 significant digits; optional ``# key=value`` header lines."""
        path = self.ensure_dir() / name
        body = frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
        prefix = "".join(f"# {line}\n" for line in header) if header else ""
        _atomic_write(path, prefix + body)
        return self._record(path)

    def save_json(self, record: Dict[str, Any], name: str) -> Path:
        path = self.ensure_dir() / name
        _atomic_write(path, json.dumps(_jsonable(record), indent=2, sort_keys=True) + "\n")
        return self._record(path)

    def save_error(self, record: Dict[str, Any]) -> Optional[Path]:
        """error.json, or None when the output directory is not writable."""
        try:
            return self.save_json(record, "error.json")
        except OSError as e:
            logger.error("could not write error record: %s", e)
            return None

    def emit_plot_bundle(self, frame: pd.DataFrame, style: str, stem: str,
                         options: Optional[Dict[str, Any]] = None) -> List[Path]:
        """Whitespace-separated data file plus a matplotlib script that reads it."""
        if frame.empty:
            raise ValueError("Cannot emit a plot bundle for an empty table")
        if style not in _PLOT_TEMPLATES:
            raise ValueError(f"Unknown plot style {style!r}")
        options = options or {}
        numeric = frame.select_dtypes(include=[np.number, bool]).astype(float)
        columns = list(numeric.columns)
        data_name = f"{stem}.dat"
        data_text = numeric.to_csv(sep=" ", index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")

        if style == "curves":
            if len(columns) < 3:
                raise ValueError("curves plot needs three numeric columns")
            script = _PLOT_TEMPLATES[style].format(data=data_name, stem=stem, col0=columns[0],
                                                   col1=columns[1], col2=columns[2])
        elif style == "sweep":
            x_col = options.get("x", columns[0])
            y_col = options.get("y", columns[1])
            script = _PLOT_TEMPLATES[style].format(
                data=data_name, stem=stem, x=columns.index(x_col), y=columns.index(y_col),
                xlabel=x_col, ylabel=y_col, hline=float(options.get("hline", 0.0)))
        else:
            script = _PLOT_TEMPLATES[style].format(data=data_name, stem=stem, names=columns)

        data_path = self.ensure_dir() / data_name
        script_path = self.base_dir / f"plot_{stem}.py"
        _atomic_write(data_path, data_text)
        _atomic_write(script_path, script)
        return [self._record(data_path), self._record(script_path)]

    def save_simulation(self, result, stem: str = "sim") -> List[Path]:
        """Final road/field snapshots and the front trace, each with the config header."""
        header = result.config.header()
        paths = [
            self.save_table(result.road_frame(), f"{stem}_road.csv", header),
            self.save_table(result.field_frame(), f"{stem}_field.csv", header),
            self.save_table(result.trace.to_frame(), f"{stem}_front.csv", header),
        ]
        return paths

    def load_summary(self) -> Dict[str, Any]:
        path = self.base_dir / "summary.json"
        if not path.exists():
            raise FileNotFoundError(f"No summary found in {self.base_dir}")
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
