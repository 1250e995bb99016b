"""
Command-line front end: one JSON run config in, CSV tables, plot bundles and
a summary.json out.
"""

import argparse
import asyncio
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence

import pandas as pd

from . import analysis, dispersion
from .bvp import GridControl
from .data.settings_loader import load_settings
from .dispersion import SearchControl
from .errors import ConfigError, DomainError, KernelError, RoadSpreadError, SolverFailure
from .kernels.kernel_library import kernel_library
from .model import Kernel, ModelKind, ModelSpec, Params, make_kernel
from .save_manager import SaveManager
from .sim import SimConfig, simulate, stationary_state

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4

TOP_LEVEL_KEYS = {"command", "params", "kernels", "options", "grid", "search"}

COMMAND_OPTIONS = {
    "speed": {"closed_form"},
    "curves": {"c", "n", "margin", "closed_form"},
    "sweep-d": {"d_ladder"},
    "compare-kernels": {"kernels", "halfwidth", "eps_ladder", "base"},
    "perturb": {"upsilon", "eps_ladder"},
    "selfsim": {"c", "lambda", "base", "eps_ladder"},
    "simulate": {"simulation", "reference_speed"},
    "stationary": {"ly", "ny"},
    "cinf": set(),
}


@dataclass
class RunConfig:
    command: str
    params: Params
    spec: ModelSpec
    options: Dict[str, Any]
    grid: GridControl
    search: SearchControl
    raw: Dict[str, Any] = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        text = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], settings: Optional[Mapping[str, Any]] = None) -> "RunConfig":
        """Validate a run config; every schema problem becomes a ConfigError."""
        settings = settings or {}
        if not isinstance(data, Mapping):
            raise ConfigError("Run config must be a JSON object")
        unknown = set(data) - TOP_LEVEL_KEYS
        if unknown:
            raise ConfigError(f"Unknown top-level keys: {sorted(unknown)}")
        command = data.get("command")
        if command not in COMMAND_OPTIONS:
            raise ConfigError(f"command must be one of {sorted(COMMAND_OPTIONS)}, got {command!r}")
        if not isinstance(data.get("options", {}), Mapping):
            raise ConfigError("options must be an object")
        options = dict(data.get("options", {}))
        bad = set(options) - COMMAND_OPTIONS[command]
        if bad:
            raise ConfigError(f"Unknown options for {command}: {sorted(bad)}")
        try:
            params = Params.from_dict(data["params"])
        except KeyError as e:
            raise ConfigError(f"Missing parameter {e}") from e
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e
        try:
            spec = ModelSpec.from_dict(data.get("kernels", {}), params)
            spec.check_masses(params)
            grid = GridControl.from_dict({**settings.get("grid", {}), **data.get("grid", {})})
            search = SearchControl.from_dict({**settings.get("search", {}), **data.get("search", {})})
        except (KernelError, TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e
        options = _validate_options(command, options, settings, params, spec)
        if "closed_form" in options:
            search = search.replace(closed_form=bool(options["closed_form"]))
        return cls(command=command, params=params, spec=spec, options=options, grid=grid,
                   search=search, raw=dict(data))


def _number(options: Mapping[str, Any], key: str, default: Any = None, positive: bool = False) -> Optional[float]:
    value = options.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"options.{key} must be a finite number, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(f"options.{key} must be positive, got {value!r}")
    return float(value)


def _integer(options: Mapping[str, Any], key: str, default: int, minimum: int) -> int:
    value = _number(options, key, default)
    if value != int(value):
        raise ConfigError(f"options.{key} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"options.{key} must be >= {minimum}, got {value!r}")
    return int(value)


def _ladder(options: Mapping[str, Any], key: str, default: Sequence[float], increasing: bool = False,
            upper: Optional[float] = None) -> List[float]:
    """Positive, strictly monotone ladder; decreasing unless ``increasing``."""
    values = options.get(key, default)
    if not isinstance(values, (list, tuple)) or not values:
        raise ConfigError(f"{key} must be a non-empty list")
    ladder = [_number({key: v}, key, positive=True) for v in values]
    if upper is not None and any(v > upper for v in ladder):
        raise ConfigError(f"{key} entries must not exceed {upper}")
    pairs = list(zip(ladder, ladder[1:]))
    if increasing and any(b <= a for a, b in pairs):
        raise ConfigError(f"{key} must be strictly increasing, got {ladder}")
    if not increasing and any(b >= a for a, b in pairs):
        raise ConfigError(f"{key} must be strictly decreasing, got {ladder}")
    return ladder


def _validate_options(command: str, options: Dict[str, Any], settings: Mapping[str, Any],
                      params: Params, spec: ModelSpec) -> Dict[str, Any]:
    """Type-check one command's options and fill in settings defaults."""
    out = dict(options)
    if "closed_form" in options and not isinstance(options["closed_form"], bool):
        raise ConfigError(f"options.closed_form must be true or false, got {options['closed_form']!r}")
    if command == "curves":
        if "c" not in options:
            raise ConfigError("curves needs options.c")
        out["c"] = _number(options, "c", positive=True)
        out["n"] = _integer(options, "n", settings.get("curve_points", 200), 2)
        margin = _number(options, "margin", positive=True)
        if margin is not None and margin >= 0.5:
            raise ConfigError(f"options.margin must lie in (0, 0.5), got {margin}")
    elif command == "sweep-d":
        out["d_ladder"] = _ladder(options, "d_ladder", [1e2, 1e3, 1e4], increasing=True)
    elif command == "compare-kernels":
        if "halfwidth" in options:
            out["halfwidth"] = _number(options, "halfwidth", positive=True)
        if "eps_ladder" in options:
            out["eps_ladder"] = _ladder(options, "eps_ladder", [])
    elif command == "perturb":
        out["eps_ladder"] = _ladder(options, "eps_ladder", [0.1, 0.05, 0.02])
        if out["eps_ladder"][0] >= 1:
            raise ConfigError(f"eps_ladder entries must lie in (0, 1), got {out['eps_ladder']}")
    elif command == "selfsim":
        if "c" not in options or "lambda" not in options:
            raise ConfigError("selfsim needs options.c and options.lambda")
        out["c"] = _number(options, "c", positive=True)
        out["lambda"] = _number(options, "lambda", positive=True)
        out["eps_ladder"] = _ladder(options, "eps_ladder", [0.1, 0.05, 0.025], upper=0.5)
    elif command == "stationary":
        out["ly"] = _number(options, "ly", 10.0, positive=True)
        out["ny"] = _integer(options, "ny", 101, 3)
        if out["ny"] % 2 == 0:
            raise ConfigError(f"options.ny must be odd, got {out['ny']}")
    elif command == "simulate":
        block = options.get("simulation", {})
        if not isinstance(block, Mapping):
            raise ConfigError("options.simulation must be an object")
        merged = {**settings.get("simulation", {}), **block}
        try:
            SimConfig.from_dict(merged, params, spec).validate()
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e
        out["simulation"] = merged
    return out


def parse_overrides(text: Optional[str]) -> Dict[str, Dict[str, float]]:
    """``key=value[,key=value]`` into grid and search overrides."""
    overrides: Dict[str, Dict[str, float]] = {"grid": {}, "search": {}}
    if not text:
        return overrides
    grid_keys = set(GridControl.__dataclass_fields__)
    search_keys = set(SearchControl.__dataclass_fields__)
    for item in text.split(","):
        if "=" not in item:
            raise ConfigError(f"Tolerance override {item!r} is not key=value")
        key, value = (part.strip() for part in item.split("=", 1))
        section = None
        if "." in key:
            section, key = key.split(".", 1)
        try:
            number = float(value)
        except ValueError as e:
            raise ConfigError(f"Tolerance override {key}={value!r} is not numeric") from e
        if section in (None, "grid") and key in grid_keys:
            overrides["grid"][key] = number
        elif section in (None, "search") and key in search_keys:
            overrides["search"][key] = number
        else:
            raise ConfigError(f"Unknown tolerance key {key!r}")
    return overrides


def apply_overrides(config: RunConfig, overrides: Mapping[str, Mapping[str, float]]) -> RunConfig:
    try:
        grid = GridControl.from_dict({**config.grid.to_dict(), **overrides.get("grid", {})})
        search = SearchControl.from_dict({**config.search.to_dict(), **overrides.get("search", {})})
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
    config.grid, config.search = grid, search
    return config


def _kernel_option(block: Any, mass: float) -> Kernel:
    """Kernel from a preset name or a kernel block, rescaled to ``mass``."""
    if isinstance(block, str):
        return kernel_library.get(block, mass)
    if isinstance(block, Mapping):
        descriptor = dict(block)
        descriptor.pop("mass", None)
        return make_kernel(descriptor, mass)
    raise ConfigError(f"Cannot read a kernel from {block!r}")


def emit_plot_bundle(save: SaveManager, table: pd.DataFrame, style: str, stem: str,
                     options: Optional[Dict[str, Any]] = None) -> List[Path]:
    return save.emit_plot_bundle(table, style, stem, options)


# --- commands -----------------------------------------------------------------

def run_speed(config: RunConfig, save: SaveManager, threads: int) -> Dict[str, Any]:
    result = dispersion.spreading_speed(config.params, config.spec, config.search, config.grid)
    summary = result.to_dict()
    if result.lambda_star is not None and not result.threshold_degenerate:
        chain = dispersion.check_inequality_chain(result, config.params)
        summary.update({"chain_holds": chain.holds, "chain_first_slack": chain.first_slack,
                        "chain_second_slack": chain.second_slack})
    if config.spec.kind == ModelKind.LIMIT and config.params.big_d > 2 * config.params.d:
        c_tan, lam_tan = dispersion.limit_tangency(config.params)
        summary.update({"c_star_tangency": c_tan, "lambda_star_tangency": lam_tan})
    return summary


def run_curves(config: RunConfig, save: SaveManager, threads: int) -> Dict[str, Any]:
    options = config.options
    n = options["n"]
    table = dispersion.curve_sample(config.params, config.spec, options["c"], n,
                                    margin=options.get("margin"), grid=config.grid,
                                    closed_form=config.search.closed_form)
    save.save_table(table, "curves.csv")
    emit_plot_bundle(save, table, "curves", "curves")
    return {"c": options["c"], "n": n, "psi2_min": float(table["psi2"].min()),
            "psi1_max": float(table["psi1"].max())}


def run_sweep(config: RunConfig, save: SaveManager, threads: int) -> Dict[str, Any]:
    report = analysis.sweep_D(config.params, config.options["d_ladder"], config.spec, config.search,
                              config.grid, threads)
    table = report.to_frame()
    save.save_table(table, "sweep.csv")
    emit_plot_bundle(save, table, "sweep", "sweep", {"x": "D", "y": "ratio", "hline": report.c_inf})
    first, second = report.cinf_chain()
    return {"c_inf": report.c_inf, "converges": report.converges(),
            "cinf_chain_first_slack": first, "cinf_chain_second_slack": second,
            "liminf_lower": report.liminf[0], "liminf_upper": report.liminf[1]}


def run_compare(config: RunConfig, save: SaveManager, threads: int) -> Dict[str, Any]:
    options, params = config.options, config.params
    blocks = options.get("kernels", kernel_library.names())
    if isinstance(blocks, list):
        blocks = {b if isinstance(b, str) else b.get("name", f"kernel{i}"): b for i, b in enumerate(blocks)}
    mu_list = {name: _kernel_option(block, params.mu_bar) for name, block in blocks.items()}
    if "halfwidth" in options:
        mu_list = {name: kernel_library.get(name, params.mu_bar, options["halfwidth"])
                   if isinstance(blocks[name], str) else k for name, k in mu_list.items()}
    table = analysis.rpsl2_compare(params, mu_list, config.search, config.grid, threads)
    save.save_table(table, "compare.csv")
    summary: Dict[str, Any] = {"c_star_0": float(table["c_star_0"].iloc[0]),
                               "all_within_bound": bool(table["within_bound"].all())}
    if "eps_ladder" in options:
        base = _kernel_option(options.get("base", "boxcar"), params.mu_bar)
        ladder = analysis.mollified_ladder(params, base, options["eps_ladder"],
                                           config.search, config.grid, threads)
        save.save_table(ladder, "mollified.csv")
        emit_plot_bundle(save, ladder[["eps", "c_star", "c_star_0"]], "table", "mollified")
        summary["mollified_monotone"] = bool((ladder["distance"].diff().dropna() <= 0).all())
    return summary


def run_perturb(config: RunConfig, save: SaveManager, threads: int) -> Dict[str, Any]:
    options, params = config.options, config.params
    block = dict(options.get("upsilon", {"shape": "boxcar", "halfwidth": 1.0}))
    fraction = block.pop("threshold_fraction", None)
    if fraction is not None:
        alpha = analysis.alpha_star(params, config.search)
        if alpha <= 0 or alpha >= 0.5:
            raise DomainError(f"alpha* = {alpha:.6g} has no negative-g region to fill")
        block["halfwidth"] = float(fraction) * analysis.y_threshold(alpha)
    upsilon = _kernel_option(block, 1.0)
    report = analysis.perturbation_study(params, upsilon, options["eps_ladder"], config.search, config.grid, threads)
    save.save_table(report.to_frame(), "perturbation.csv")
    summary = report.to_dict()
    summary.update({"regime": report.sign, "deltas": report.deltas, "eps_ladder": report.eps_ladder,
                    "upsilon_halfwidth": upsilon.support_radius})
    return summary


def run_selfsim(config: RunConfig, save: SaveManager, threads: int) -> Dict[str, Any]:
    options, params = config.options, config.params
    base = _kernel_option(options.get("base", "boxcar"), params.nu_bar)
    report = analysis.dpsi2_deps_selfsimilar(
        params, options["c"], options["lambda"], base, options["eps_ladder"], config.grid,
        mu_kernel=config.spec.mu, threads=threads)
    save.save_table(report.to_frame(), "selfsim.csv")
    return report.to_dict()


def run_simulate(config: RunConfig, save: SaveManager, threads: int) -> Dict[str, Any]:
    sim_config = SimConfig.from_dict(config.options["simulation"], config.params, config.spec)
    result = simulate(sim_config)
    save.save_simulation(result)
    summary = result.summary()
    if config.options.get("reference_speed", True):
        reference = dispersion.spreading_speed(config.params, config.spec, config.search, config.grid)
        summary["c_star_dispersion"] = reference.c_star
        if result.fit is not None:
            summary["speed_relative_error"] = abs(result.fit.speed - reference.c_star) / reference.c_star
    return summary


def run_stationary(config: RunConfig, save: SaveManager, threads: int) -> Dict[str, Any]:
    state = stationary_state(config.params, config.spec, config.options["ly"], config.options["ny"])
    save.save_table(state.to_frame(), "stationary.csv")
    return {"u_stationary": state.u, "v_max": float(state.v.max()), "v_min": float(state.v.min()),
            "steps": state.steps, "exchange_balance": state.exchange_balance(config.spec, config.params.mu_bar)}


def run_cinf(config: RunConfig, save: SaveManager, threads: int) -> Dict[str, Any]:
    p = config.params
    c_inf = analysis.c_infinity(p.d, p.growth, p.mu_bar, config.spec.nu, config.spec.mu, config.search, config.grid)
    return {"c_inf": c_inf, "c_inf_over_sqrt_growth": c_inf / math.sqrt(p.growth)}


COMMANDS: Dict[str, Callable[[RunConfig, SaveManager, int], Dict[str, Any]]] = {
    "speed": run_speed,
    "curves": run_curves,
    "sweep-d": run_sweep,
    "compare-kernels": run_compare,
    "perturb": run_perturb,
    "selfsim": run_selfsim,
    "simulate": run_simulate,
    "stationary": run_stationary,
    "cinf": run_cinf,
}


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, (ConfigError, KernelError, DomainError)):
        return EXIT_CONFIG
    if isinstance(error, (SolverFailure, RoadSpreadError)):
        return EXIT_SOLVER
    if isinstance(error, OSError):
        return EXIT_IO
    return EXIT_SOLVER


def load_config(path: str, settings: Mapping[str, Any]) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config {path} is not valid JSON: {e}") from e
    return RunConfig.from_dict(data, settings)


def execute(config: RunConfig, save: SaveManager, threads: int = 1, seed: Optional[int] = None) -> Dict[str, Any]:
    """Run one command and write summary.json."""
    results = COMMANDS[config.command](config, save, threads)
    summary = {
        "status": "ok",
        "command": config.command,
        "config_hash": config.config_hash,
        "params": config.params.to_dict(),
        "kernels": config.spec.to_dict(),
        "grid": config.grid.to_dict(),
        "search": config.search.to_dict(),
        "threads": threads,
        "seed": seed,
        "results": results,
    }
    summary["files"] = sorted(p.name for p in save.written) + ["summary.json"]
    save.save_json(summary, "summary.json")
    logger.info("%s finished; outputs in %s", config.command, save.base_dir)
    return summary


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Spreading speeds for road-field exchange models")
    parser.add_argument("config", help="JSON run config")
    parser.add_argument("--out", help="Output directory (default: settings output_dir)")
    parser.add_argument("--threads", type=int, help="Worker threads for ladders and sweeps")
    parser.add_argument("--seed", type=int, default=None, help="Recorded in the summary; runs are deterministic")
    parser.add_argument("--tolerance-overrides", default=None, help="key=value[,key=value] for grid/search fields")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    return parser.parse_args(argv)


async def main(argv: Optional[Sequence[str]] = None) -> int:
    args = parse_args(argv)
    settings = load_settings()
    logging.basicConfig(level=(args.log_level or settings.get("log_level", "INFO")).upper(),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    save = SaveManager(args.out or settings.get("output_dir", "output"))
    threads = args.threads if args.threads is not None else int(settings.get("threads", 1))
    try:
        config = apply_overrides(load_config(args.config, settings), parse_overrides(args.tolerance_overrides))
        await asyncio.to_thread(execute, config, save, max(1, threads), args.seed)
        return EXIT_OK
    except Exception as e:
        code = exit_code_for(e)
        record = {"status": "error", "kind": type(e).__name__, "exit_code": code, "message": str(e)}
        save.save_error(record)
        print(json.dumps(record), file=sys.stderr)
        if code == EXIT_SOLVER and not isinstance(e, RoadSpreadError):
            logger.exception("unexpected failure")
        return code


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Console-script entry point."""
    if os.path.exists(".env"):
        from dotenv import load_dotenv
        load_dotenv()
    return asyncio.run(main(argv))
