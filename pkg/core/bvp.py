"""
Exchange ODE solver and the two dispersion functions.

For a decay rate lambda and a frame speed c the field profile solves

    -d phi'' + (P(lambda) + nu(y)) phi = mu(y),    P = lambda c - d lambda^2 - f'(0)

on the line. Atoms of nu and mu act through the interface row at y = 0. The
problem is truncated to [-L, L]; outside the kernel support the decaying
solution is an exact exponential, so the end rows continue the grid function
with its discrete decay factor and introduce no truncation error.
"""

import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import Any, Dict, Mapping, Optional

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid
from scipy.linalg import solve_banded

from .errors import DomainError, KernelError, SolverFailure
from .model import Kernel, ModelSpec, Params

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridControl:
    """Discretisation settings for the exchange ODE."""
    n_intervals: int = 16384
    max_intervals: int = 1 << 21
    decay_lengths: float = 14.0
    # Outside the support the end rows are exact, so the tail can be shortened.
    max_tail_factor: float = 16.0
    kernel_resolution: int = 128
    trunc_len: Optional[float] = None
    extra_support: float = 0.0
    tol: float = 1e-9
    endpoint_margin: float = 1e-6

    def __post_init__(self):
        if self.n_intervals < 4 or self.n_intervals % 2:
            raise ValueError(f"n_intervals must be an even integer >= 4, got {self.n_intervals}")
        if self.trunc_len is not None and not self.trunc_len > 0:
            raise ValueError("trunc_len must be positive")
        if not 0 < self.endpoint_margin < 0.5:
            raise ValueError("endpoint_margin must lie in (0, 0.5)")

    def replace(self, **changes) -> "GridControl":
        return replace(self, **changes)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GridControl":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"Unknown grid keys: {sorted(unknown)}")
        values = dict(data)
        for key in ("n_intervals", "max_intervals", "kernel_resolution"):
            if key in values:
                values[key] = int(values[key])
        return cls(**values)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class LambdaWindow:
    lo: float
    hi: float

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def clamp(self, lam: float, margin: float) -> float:
        """Move ``lam`` inside the window by at least ``margin`` of its width.

        Queries on or outside an endpoint are rejected.
        """
        if not self.lo < lam < self.hi:
            raise DomainError(f"lambda={lam} is outside the admissible window ({self.lo}, {self.hi})")
        pad = margin * self.width
        return min(max(lam, self.lo + pad), self.hi - pad)

    def interior(self, n: int, margin: float) -> np.ndarray:
        pad = margin * self.width
        return np.linspace(self.lo + pad, self.hi - pad, n)


def lambda_window(params: Params, c: float) -> LambdaWindow:
    c_kpp = params.c_kpp()
    if not c > c_kpp:
        raise DomainError(
            f"No exponential profile exists for c={c} <= c_KPP={c_kpp}"
        )
    root = math.sqrt(c * c - c_kpp * c_kpp)
    return LambdaWindow(lo=(c - root) / (2 * params.d), hi=(c + root) / (2 * params.d))


def p_value(params: Params, c: float, lam):
    return lam * c - params.d * lam * lam - params.growth


def psi1(params: Params, c: float, lam):
    """Road curve -D lambda^2 + c lambda + mu_bar."""
    return -params.big_d * lam * lam + c * lam + params.mu_bar


def _require_positive_p(p: float) -> None:
    if not p > 0:
        raise DomainError(f"P(lambda) = {p} must be positive")


def discrete_decay_factor(p: float, d: float, h: float) -> float:
    """Root r in (0, 1) of d (r + 1/r - 2) = h^2 P."""
    q = h * h * p / d
    return 1.0 / (1.0 + 0.5 * q + math.sqrt(q + 0.25 * q * q))


@dataclass(frozen=True)
class GridLayout:
    trunc_len: float
    n_intervals: int

    @property
    def spacing(self) -> float:
        return 2 * self.trunc_len / self.n_intervals

    def nodes(self) -> np.ndarray:
        return np.linspace(-self.trunc_len, self.trunc_len, self.n_intervals + 1)


def grid_layout(p: float, d: float, spec: ModelSpec, grid: GridControl) -> GridLayout:
    """Pick L and the number of intervals for one solve."""
    radius = max(spec.support_radius, grid.extra_support)
    if grid.trunc_len is not None:
        trunc_len = grid.trunc_len
        if trunc_len <= radius:
            raise SolverFailure(f"trunc_len={trunc_len} does not cover the kernel support {radius}")
    else:
        tail = grid.decay_lengths / math.sqrt(p / d)
        if radius > 0:
            tail = min(tail, grid.max_tail_factor * radius)
        trunc_len = radius + tail

    n = grid.n_intervals
    smallest = min([r for r in (spec.smallest_radius(), grid.extra_support) if r > 0], default=0.0)
    if smallest > 0:
        needed = math.ceil(2 * trunc_len * grid.kernel_resolution / smallest)
        needed += needed % 2
        n = max(n, needed)
    if n > grid.max_intervals:
        raise SolverFailure(
            f"Resolving support {smallest:.3g} on [-{trunc_len:.3g}, {trunc_len:.3g}] needs {n} intervals "
            f"(max_intervals={grid.max_intervals})"
        )
    return GridLayout(trunc_len=trunc_len, n_intervals=n)


@dataclass
class ProfileSolution:
    ygrid: np.ndarray
    phi: np.ndarray
    lam: float
    c: float
    p_value: float
    trunc_len: float
    residual: float
    psi2: float

    @property
    def spacing(self) -> float:
        return float(self.ygrid[1] - self.ygrid[0])

    @property
    def phi_at_zero(self) -> float:
        return float(self.phi[len(self.phi) // 2])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"y": self.ygrid, "phi": self.phi})


def solve_exchange_ode(p: float, spec: ModelSpec, d: float, grid: GridControl):
    """Solve -d phi'' + (p + nu) phi = mu. Returns (y, phi, residual, nu_samples)."""
    _require_positive_p(p)
    layout = grid_layout(p, d, spec, grid)
    y = layout.nodes()
    h = layout.spacing
    n = layout.n_intervals
    mid = n // 2
    if abs(y[mid]) > 1e-12 * layout.trunc_len:
        raise SolverFailure("Grid does not contain y = 0 as a node")
    y[mid] = 0.0

    nu_cont = spec.nu.sample(y)
    mu_cont = spec.mu.sample(y)
    off = -d / (h * h)
    diag = 2 * d / (h * h) + p + nu_cont
    rhs = mu_cont.copy()
    diag[mid] += spec.nu.atom / h
    rhs[mid] += spec.mu.atom / h

    # End rows: ghost value continues the grid function by its decay factor.
    r = discrete_decay_factor(p, d, h)
    diag[0] = d * (2 - r) / (h * h) + p + nu_cont[0]
    diag[-1] = d * (2 - r) / (h * h) + p + nu_cont[-1]

    bands = np.zeros((3, n + 1))
    bands[0, 1:] = off
    bands[1, :] = diag
    bands[2, :-1] = off
    try:
        phi = solve_banded((1, 1), bands, rhs)
    except np.linalg.LinAlgError as exc:
        raise SolverFailure(f"Exchange ODE matrix is singular at P={p}") from exc

    applied = diag * phi
    applied[1:] += off * phi[:-1]
    applied[:-1] += off * phi[1:]
    residual = float(np.max(np.abs(applied - rhs)))
    scale = float(np.max(np.abs(rhs)))
    if scale > 0 and residual > grid.tol * scale:
        raise SolverFailure(f"Exchange ODE residual {residual:.3e} exceeds tolerance (scale {scale:.3e})")
    logger.debug("exchange ODE: P=%.6g L=%.6g n=%d residual=%.3e", p, layout.trunc_len, n, residual)
    return y, phi, residual, nu_cont


def solve_profile(params: Params, c: float, lam: float, spec: ModelSpec,
                  grid: Optional[GridControl] = None) -> ProfileSolution:
    grid = grid or GridControl()
    lam = lambda_window(params, c).clamp(lam, grid.endpoint_margin)
    p = p_value(params, c, lam)
    _require_positive_p(p)
    y, phi, residual, nu_cont = solve_exchange_ode(p, spec, params.d, grid)
    value = spec.nu.atom * phi[len(phi) // 2] + trapezoid(nu_cont * phi, y)
    return ProfileSolution(
        ygrid=y,
        phi=phi,
        lam=lam,
        c=c,
        p_value=p,
        trunc_len=float(y[-1]),
        residual=residual,
        psi2=float(value),
    )


def psi2(params: Params, c: float, lam: float, spec: ModelSpec,
         grid: Optional[GridControl] = None) -> float:
    """Field-side curve nu_atom phi(0) + integral of nu_cont phi."""
    return solve_profile(params, c, lam, spec, grid).psi2


def psi2_closed_limit(params: Params, c: float, lam: float) -> float:
    p = p_value(params, c, lam)
    _require_positive_p(p)
    return params.nu_bar * params.mu_bar / (params.nu_bar + 2 * math.sqrt(params.d * p))


def psi2_limit_slope(params: Params, c: float, lam: float) -> float:
    """Derivative in lambda of the closed-form Limit curve."""
    p = p_value(params, c, lam)
    _require_positive_p(p)
    root = math.sqrt(params.d * p)
    return (-params.nu_bar * params.mu_bar * params.d * (c - 2 * params.d * lam)
            / (root * (params.nu_bar + 2 * root) ** 2))


def damped_half_integral(kernel: Kernel, decay: float, intervals: int = 8192) -> float:
    """Integral over z >= 0 of exp(-decay z) times the continuous part."""
    y, values = kernel.half_grid(intervals)
    return float(trapezoid(np.exp(-decay * y) * values, y))


def psi2_closed_rpsl2(params: Params, c: float, lam: float, mu_kernel: Kernel) -> float:
    """Closed-form curve for an atomic nu and a continuous mu."""
    if mu_kernel.atom > 0:
        raise KernelError("Closed-form RPSL2 curve needs a purely continuous mu")
    p = p_value(params, c, lam)
    _require_positive_p(p)
    root = math.sqrt(params.d * p)
    integral = damped_half_integral(mu_kernel, math.sqrt(p / params.d))
    return 2 * params.nu_bar / (params.nu_bar + 2 * root) * integral


def boundary_flux(params: Params, c: float, lam: float, nu_kernel: Kernel, m_value: float,
                  grid: Optional[GridControl] = None) -> float:
    """Outgoing slope phi_M'(0) of the half-line problem with phi(0) = M.

    Solves -d phi'' + (P + nu_cont) phi = 0 on [0, L], decaying at L.
    """
    grid = grid or GridControl()
    lam = lambda_window(params, c).clamp(lam, grid.endpoint_margin)
    p = p_value(params, c, lam)
    _require_positive_p(p)
    spec = ModelSpec(nu=nu_kernel.continuous_part(), mu=Kernel())
    layout = grid_layout(p, params.d, spec, grid)
    h = layout.spacing
    full = layout.nodes()
    mid = layout.n_intervals // 2
    nu_cont = spec.nu.sample(full)[mid:]
    y = full[mid:]
    # interior unknowns phi_1..phi_N, phi_0 = M is known
    inner = len(y) - 1
    off = -params.d / (h * h)
    diag = 2 * params.d / (h * h) + p + nu_cont[1:]
    r = discrete_decay_factor(p, params.d, h)
    diag[-1] = params.d * (2 - r) / (h * h) + p + nu_cont[-1]
    rhs = np.zeros(inner)
    rhs[0] = -off * m_value
    bands = np.zeros((3, inner))
    bands[0, 1:] = off
    bands[1, :] = diag
    bands[2, :-1] = off
    phi = np.concatenate(([m_value], solve_banded((1, 1), bands, rhs)))
    return float((-3 * phi[0] + 4 * phi[1] - phi[2]) / (2 * h))
