"""
Direct time integration of the road-field system.

    u_t = D u_xx - mu_bar u + int nu(y) v dy          on the road y = 0
    v_t = d (v_xx + v_yy) + f(v) + mu(y) u - nu(y) v   in the field

with f(v) = growth v (1 - v). Forward Euler on a uniform grid, zero-flux outer
boundaries. For the all-atom model the exchange acts on the y = 0 row as
(mu_bar u - nu_bar v) / hy.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid
from scipy.stats import linregress

from .errors import ConfigError, SolverFailure
from .model import ModelKind, ModelSpec, Params

logger = logging.getLogger(__name__)

SUPPORTED_KINDS = (ModelKind.LIMIT, ModelKind.FULL_NONLOCAL)


@dataclass(frozen=True)
class InitialData:
    """Compact bumps a (1 - (x/r)^2)_+ on the road and a (1 - (x/r)^2 - (y/r_y)^2)_+ in the field."""
    road_amplitude: float = 0.5
    field_amplitude: float = 0.5
    radius: float = 5.0
    field_radius_y: float = 2.0

    def __post_init__(self):
        if self.road_amplitude < 0 or self.field_amplitude < 0:
            raise ConfigError("Initial amplitudes must be nonnegative")
        if not (self.radius > 0 and self.field_radius_y > 0):
            raise ConfigError("Initial support radii must be positive")

    def road(self, x: np.ndarray) -> np.ndarray:
        return self.road_amplitude * np.clip(1 - (x / self.radius) ** 2, 0.0, None)

    def field(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        shape = 1 - (x[:, None] / self.radius) ** 2 - (y[None, :] / self.field_radius_y) ** 2
        return self.field_amplitude * np.clip(shape, 0.0, None)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "InitialData":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown initial-data keys: {sorted(unknown)}")
        return cls(**{key: float(value) for key, value in data.items()})

    def to_dict(self) -> Dict[str, float]:
        return {
            "road_amplitude": self.road_amplitude,
            "field_amplitude": self.field_amplitude,
            "radius": self.radius,
            "field_radius_y": self.field_radius_y,
        }


def _reaction_slope(growth: float, upper: float) -> float:
    """Largest |f'(v)| for 0 <= v <= upper."""
    return growth * max(1.0, 2 * upper - 1)


@dataclass(frozen=True)
class SimConfig:
    params: Params
    spec: ModelSpec
    lx: float = 150.0
    ly: float = 10.0
    nx: int = 1201
    ny: int = 101
    t_end: float = 40.0
    dt: Optional[float] = None
    init: InitialData = field(default_factory=InitialData)
    snapshot_every: int = 0
    trace_every: int = 0
    front_fraction: float = 0.1
    fit_fraction: float = 0.5
    min_r2: float = 0.99

    @property
    def hx(self) -> float:
        return 2 * self.lx / (self.nx - 1)

    @property
    def hy(self) -> float:
        return 2 * self.ly / (self.ny - 1)

    def x(self) -> np.ndarray:
        return np.linspace(-self.lx, self.lx, self.nx)

    def y(self) -> np.ndarray:
        y = np.linspace(-self.ly, self.ly, self.ny)
        y[self.ny // 2] = 0.0
        return y

    def stable_dt(self) -> float:
        """Largest step keeping the explicit update monotone."""
        p, hx, hy = self.params, self.hx, self.hy
        y = self.y()
        nu_max = float(np.max(self.spec.nu.sample(y))) if self.spec.nu.has_continuous else 0.0
        nu_max += self.spec.nu.atom / hy
        upper = max(1.0, self.init.field_amplitude, self.init.road_amplitude) + nu_max
        field_rate = 2 * p.d * (1 / hx ** 2 + 1 / hy ** 2) + nu_max + _reaction_slope(p.growth, upper)
        road_rate = 2 * p.big_d / hx ** 2 + p.mu_bar
        return 0.9 / max(field_rate, road_rate)

    def validate(self) -> None:
        if self.spec.kind not in SUPPORTED_KINDS:
            raise ConfigError(f"The simulator supports Limit and FullNonlocal models, got {self.spec.kind.value}")
        if self.nx < 3 or self.ny < 3:
            raise ConfigError("Simulation grid needs at least 3 nodes per direction")
        if self.ny % 2 == 0:
            raise ConfigError(f"ny must be odd so that y = 0 is a grid row, got {self.ny}")
        if not (self.lx > 0 and self.ly > 0 and self.t_end > 0):
            raise ConfigError("lx, ly and t_end must be positive")
        if self.spec.support_radius >= self.ly:
            raise ConfigError(f"Kernel support {self.spec.support_radius} must lie inside |y| < ly={self.ly}")
        if not 0 < self.front_fraction < 1 or not 0 < self.fit_fraction <= 1:
            raise ConfigError("front_fraction and fit_fraction must lie in (0, 1)")
        if self.dt is not None:
            bound = self.stable_dt()
            if not 0 < self.dt <= bound * (1 + 1e-12):
                raise SolverFailure(f"dt={self.dt} violates the stability bound {bound:.6g}")

    def header(self) -> List[str]:
        """``key=value`` lines describing the run."""
        lines = [f"{key}={value}" for key, value in self.params.to_dict().items()]
        lines.append(f"model={self.spec.kind.value}")
        lines += [f"nu.{key}={value}" for key, value in self.spec.nu.to_dict().items() if key not in ("y", "values")]
        lines += [f"mu.{key}={value}" for key, value in self.spec.mu.to_dict().items() if key not in ("y", "values")]
        for key in ("lx", "ly", "nx", "ny", "t_end", "front_fraction", "fit_fraction"):
            lines.append(f"{key}={getattr(self, key)}")
        lines.append(f"dt={self.dt if self.dt is not None else self.stable_dt()}")
        lines += [f"init.{key}={value}" for key, value in self.init.to_dict().items()]
        return lines

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], params: Params, spec: ModelSpec) -> "SimConfig":
        data = dict(data)
        unknown = set(data) - (set(cls.__dataclass_fields__) - {"params", "spec"})
        if unknown:
            raise ConfigError(f"Unknown simulation keys: {sorted(unknown)}")
        init = InitialData.from_dict(data.pop("init", {}))
        for key in ("nx", "ny", "snapshot_every", "trace_every"):
            if key in data:
                data[key] = int(data[key])
        return cls(params=params, spec=spec, init=init, **data)


@dataclass
class StationaryState:
    ygrid: np.ndarray
    v: np.ndarray
    u: float
    steps: int

    def exchange_balance(self, spec: ModelSpec, mu_bar: float) -> float:
        """|U_s - (nu_atom V_s(0) + int nu_cont V_s) / mu_bar|."""
        mid = len(self.ygrid) // 2
        flux = spec.nu.atom * self.v[mid] + trapezoid(spec.nu.sample(self.ygrid) * self.v, self.ygrid)
        return abs(self.u - flux / mu_bar)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"y": self.ygrid, "v": self.v})


class _Exchange:
    """Kernel samples on the y-grid and the two coupling terms."""

    def __init__(self, spec: ModelSpec, y: np.ndarray):
        self.y = y
        self.hy = y[1] - y[0]
        self.mid = len(y) // 2
        self.nu_atom = spec.nu.atom
        self.mu_atom = spec.mu.atom
        self.nu_y = spec.nu.sample(y)
        self.mu_y = spec.mu.sample(y)

    def road_gain(self, v: np.ndarray) -> np.ndarray:
        """int nu v dy along the last axis."""
        return trapezoid(self.nu_y * v, self.y, axis=-1) + self.nu_atom * v[..., self.mid]

    def field_source(self, u, v: np.ndarray) -> np.ndarray:
        u = np.asarray(u)[..., None]
        source = self.mu_y * u - self.nu_y * v
        source[..., self.mid] += (self.mu_atom * u[..., 0] - self.nu_atom * v[..., self.mid]) / self.hy
        return source


def _second_difference(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    pad = [(0, 0)] * values.ndim
    pad[axis] = (1, 1)
    ext = np.pad(values, pad, mode="reflect")
    lower = np.take(ext, range(0, values.shape[axis]), axis=axis)
    upper = np.take(ext, range(2, values.shape[axis] + 2), axis=axis)
    return (lower - 2 * values + upper) / (h * h)


def stationary_state(params: Params, spec: ModelSpec, ly: float = 10.0, ny: int = 101,
                     tol: float = 1e-10, max_steps: int = 2_000_000) -> StationaryState:
    """March the x-independent system from V = 0.5, U = 0.5 nu_bar/mu_bar to rest."""
    if ny < 3 or ny % 2 == 0:
        raise ConfigError(f"ny must be odd and >= 3, got {ny}")
    y = np.linspace(-ly, ly, ny)
    y[ny // 2] = 0.0
    exchange = _Exchange(spec, y)
    hy = exchange.hy
    nu_max = float(exchange.nu_y.max()) + exchange.nu_atom / hy
    upper = 1.0 + nu_max
    dt = 0.9 / max(2 * params.d / hy ** 2 + nu_max + _reaction_slope(params.growth, upper), params.mu_bar)

    v = np.full(ny, 0.5)
    u = 0.5 * params.nu_bar / params.mu_bar
    for step in range(1, max_steps + 1):
        du = -params.mu_bar * u + exchange.road_gain(v)
        dv = (params.d * _second_difference(v, hy, 0) + params.growth * v * (1 - v)
              + exchange.field_source(u, v))
        u += dt * du
        v = v + dt * dv
        if max(abs(dt * du), float(np.max(np.abs(dt * dv)))) < tol:
            logger.info("stationary state after %d steps: U_s=%.10g", step, u)
            return StationaryState(ygrid=y, v=v, u=float(u), steps=step)
    raise SolverFailure(f"Stationary state not reached within {max_steps} steps")


@dataclass
class SpeedFit:
    speed: float
    intercept: float
    r2: float
    samples: int
    ballistic: bool

    def to_dict(self) -> Dict[str, Any]:
        return {"speed": self.speed, "intercept": self.intercept, "r2": self.r2,
                "samples": self.samples, "ballistic": self.ballistic}


@dataclass
class FrontTrace:
    times: np.ndarray
    positions: np.ndarray
    threshold: float
    fraction: float
    truncated: bool = False

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "x_f": self.positions})


def estimate_speed(trace: FrontTrace, window_fraction: float = 0.5, min_r2: float = 0.99) -> SpeedFit:
    """Least-squares slope of x_f(t) over the trailing part of the trace."""
    times = np.asarray(trace.times, dtype=float)
    positions = np.asarray(trace.positions, dtype=float)
    keep = np.isfinite(positions)
    times, positions = times[keep], positions[keep]
    if len(times) == 0:
        raise ValueError("Front trace is empty")
    start = times[-1] - window_fraction * (times[-1] - times[0])
    window = times >= start
    if window.sum() < 10:
        raise ValueError(f"Need at least 10 trace samples in the fit window, got {int(window.sum())}")
    fit = linregress(times[window], positions[window])
    r2 = float(fit.rvalue ** 2)
    ballistic = r2 >= min_r2
    if not ballistic:
        logger.warning("front not yet ballistic: R^2=%.4f < %.2f", r2, min_r2)
    return SpeedFit(speed=float(fit.slope), intercept=float(fit.intercept), r2=r2,
                    samples=int(window.sum()), ballistic=ballistic)


@dataclass
class Snapshot:
    t: float
    u: np.ndarray
    v: np.ndarray


@dataclass
class SimResult:
    config: SimConfig
    x: np.ndarray
    y: np.ndarray
    dt: float
    snapshots: List[Snapshot]
    trace: FrontTrace
    stationary: StationaryState
    fit: Optional[SpeedFit]
    min_value: float

    def road_frame(self, index: int = -1) -> pd.DataFrame:
        snap = self.snapshots[index]
        return pd.DataFrame({"x": self.x, "u": snap.u})

    def field_frame(self, index: int = -1) -> pd.DataFrame:
        snap = self.snapshots[index]
        xx, yy = np.meshgrid(self.x, self.y, indexing="ij")
        return pd.DataFrame({"x": xx.ravel(), "y": yy.ravel(), "v": snap.v.ravel()})

    def summary(self) -> Dict[str, Any]:
        record: Dict[str, Any] = {
            "dt": self.dt,
            "snapshots": len(self.snapshots),
            "trace_samples": int(len(self.trace.times)),
            "trace_truncated": self.trace.truncated,
            "front_threshold": self.trace.threshold,
            "u_stationary": self.stationary.u,
            "min_value": self.min_value,
        }
        if self.fit is not None:
            record.update({f"fit_{key}": value for key, value in self.fit.to_dict().items()})
        return record


def _front_position(x: np.ndarray, u: np.ndarray, threshold: float) -> float:
    above = np.nonzero(u >= threshold)[0]
    if len(above) == 0:
        return math.nan
    i = above[-1]
    if i == len(x) - 1:
        return float(x[i])
    # linear interpolation to the crossing
    return float(x[i] + (u[i] - threshold) / (u[i] - u[i + 1]) * (x[i + 1] - x[i]))


def simulate(config: SimConfig, stationary: Optional[StationaryState] = None) -> SimResult:
    config.validate()
    params = config.params
    x, y = config.x(), config.y()
    hx, hy = config.hx, config.hy
    dt_max = config.dt if config.dt is not None else config.stable_dt()
    steps = max(1, math.ceil(config.t_end / dt_max))
    dt = config.t_end / steps
    if stationary is None:
        stationary = stationary_state(params, config.spec, config.ly, config.ny)
    threshold = config.front_fraction * stationary.u
    exchange = _Exchange(config.spec, y)

    u = config.init.road(x)
    v = config.init.field(x, y)
    if not (u.any() or v.any()):
        logger.warning("initial data is identically zero")
    trace_every = config.trace_every or max(1, steps // 400)
    snapshot_every = config.snapshot_every or steps
    snapshots = [Snapshot(0.0, u.copy(), v.copy())]
    times, positions = [0.0], [_front_position(x, u, threshold)]
    edge = config.lx - 10 * hx
    truncated = False
    min_value = min(float(u.min()), float(v.min()))
    logger.info("simulating %s on %dx%d nodes, dt=%.4g, %d steps", config.spec.kind.value, config.nx,
                config.ny, dt, steps)

    for step in range(1, steps + 1):
        du = params.big_d * _second_difference(u, hx, 0) - params.mu_bar * u + exchange.road_gain(v)
        dv = (params.d * (_second_difference(v, hx, 0) + _second_difference(v, hy, 1))
              + params.growth * v * (1 - v) + exchange.field_source(u, v))
        u = u + dt * du
        v = v + dt * dv
        min_value = min(min_value, float(u.min()), float(v.min()))
        t = step * dt
        if step % trace_every == 0 or step == steps:
            front = _front_position(x, u, threshold)
            if math.isfinite(front) and front > edge:
                logger.warning("front reached x=%.4g near the boundary at t=%.4g; trace truncated", front, t)
                truncated = True
                snapshots.append(Snapshot(t, u.copy(), v.copy()))
                break
            times.append(t)
            positions.append(front)
        if step % snapshot_every == 0:
            snapshots.append(Snapshot(t, u.copy(), v.copy()))

    trace = FrontTrace(times=np.asarray(times), positions=np.asarray(positions), threshold=threshold,
                       fraction=config.front_fraction, truncated=truncated)
    try:
        fit = estimate_speed(trace, config.fit_fraction, config.min_r2)
    except ValueError as exc:
        logger.warning("no speed fit: %s", exc)
        fit = None
    if fit is not None:
        logger.info("fitted front speed %.6g (R^2=%.5f)", fit.speed, fit.r2)
    return SimResult(config=config, x=x, y=y, dt=dt, snapshots=snapshots, trace=trace,
                     stationary=stationary, fit=fit, min_value=min_value)
