"""
Parameter and exchange-kernel data model.

A kernel is an optional Dirac atom at y=0 plus an even, nonnegative, compactly
supported continuous part. Only the half-line y >= 0 is ever stored, so evenness
holds by construction.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .errors import KernelError

logger = logging.getLogger(__name__)

BOXCAR = "boxcar"
TRIANGLE = "triangle"
RAISED_COSINE = "raised-cosine"
TABLE = "table"
ATOM = "atom"
NAMED_SHAPES = (BOXCAR, TRIANGLE, RAISED_COSINE)

# Half-grid resolution used when a named shape has to be materialised.
HALF_GRID_INTERVALS = 256


@dataclass(frozen=True)
class Params:
    """The five scalar model constants."""
    d: float
    big_d: float
    growth: float
    mu_bar: float
    nu_bar: float

    def __post_init__(self):
        for name in ("d", "big_d", "growth", "mu_bar", "nu_bar"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"Parameter {name} must be a positive finite number, got {value!r}")

    def c_kpp(self) -> float:
        """Spreading speed of the field alone, 2*sqrt(d f'(0))."""
        return 2.0 * math.sqrt(self.d * self.growth)

    def replace(self, **changes) -> "Params":
        return replace(self, **changes)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Params":
        unknown = set(data) - {"d", "big_d", "growth", "mu_bar", "nu_bar"}
        if unknown:
            raise ValueError(f"Unknown parameter keys: {sorted(unknown)}")
        return cls(
            d=float(data["d"]),
            big_d=float(data["big_d"]),
            growth=float(data["growth"]),
            mu_bar=float(data["mu_bar"]),
            nu_bar=float(data["nu_bar"]),
        )

    def to_dict(self) -> Dict[str, float]:
        return {
            "d": self.d,
            "big_d": self.big_d,
            "growth": self.growth,
            "mu_bar": self.mu_bar,
            "nu_bar": self.nu_bar,
        }


@dataclass(frozen=True)
class Kernel:
    """Exchange distribution: Dirac atom plus an even continuous part.

    For named shapes ``level`` is the boxcar height, the triangle peak or the
    raised-cosine mass. Sampled tables keep their values on the half-grid
    ``y_i = i * spacing``.
    """
    atom: float = 0.0
    shape: Optional[str] = None
    halfwidth: float = 0.0
    level: float = 0.0
    table: Optional[Tuple[float, ...]] = None
    spacing: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.atom) or self.atom < 0:
            raise KernelError(f"Atom weight must be nonnegative, got {self.atom}")
        if self.shape is None:
            return
        if self.shape in NAMED_SHAPES:
            if not self.halfwidth > 0:
                raise KernelError(f"{self.shape} halfwidth must be positive, got {self.halfwidth}")
            if not self.level >= 0:
                raise KernelError(f"{self.shape} level must be nonnegative, got {self.level}")
        elif self.shape == TABLE:
            if self.table is None or len(self.table) < 2:
                raise KernelError("Sampled kernel needs at least two half-grid values")
            if not self.spacing > 0:
                raise KernelError("Sampled kernel spacing must be positive")
            if min(self.table) < 0:
                raise KernelError("Sampled kernel has a negative sample")
        else:
            raise KernelError(f"Unknown kernel shape {self.shape!r}")

    @property
    def has_continuous(self) -> bool:
        return self.shape is not None and self.continuous_mass() > 0

    @property
    def is_pure_atom(self) -> bool:
        return not self.has_continuous

    @property
    def is_zero(self) -> bool:
        return self.atom == 0 and not self.has_continuous

    @property
    def support_radius(self) -> float:
        if not self.has_continuous:
            return 0.0
        if self.shape == TABLE:
            return self.spacing * (len(self.table) - 1)
        return self.halfwidth

    def density(self, y) -> np.ndarray:
        """Continuous part evaluated at ``y`` (the atom is not included)."""
        y = np.abs(np.asarray(y, dtype=float))
        if self.shape is None:
            return np.zeros_like(y)
        a = self.halfwidth
        if self.shape == BOXCAR:
            return np.where(y <= a, self.level, 0.0)
        if self.shape == TRIANGLE:
            return self.level * np.clip(1.0 - y / a, 0.0, None)
        if self.shape == RAISED_COSINE:
            return np.where(y <= a, self.level / (2 * a) * (1.0 + np.cos(np.pi * np.minimum(y, a) / a)), 0.0)
        grid = self.spacing * np.arange(len(self.table))
        return np.interp(y, grid, np.asarray(self.table), right=0.0)

    def half_grid(self, intervals: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Stored half-grid (y_i >= 0, k_i) of the continuous part."""
        if self.shape is None:
            return np.zeros(1), np.zeros(1)
        if self.shape == TABLE and intervals is None:
            return self.spacing * np.arange(len(self.table)), np.asarray(self.table, dtype=float)
        n = intervals or HALF_GRID_INTERVALS
        y = np.linspace(0.0, self.support_radius or self.halfwidth, n + 1)
        return y, self.density(y)

    def continuous_mass(self) -> float:
        """Integral of the continuous part (trapezoid on the stored half-grid).

        The named shapes integrate exactly under the trapezoid rule on a uniform
        half-grid, so their closed-form masses are used directly.
        """
        if self.shape is None:
            return 0.0
        if self.shape == BOXCAR:
            return 2 * self.halfwidth * self.level
        if self.shape == TRIANGLE:
            return self.halfwidth * self.level
        if self.shape == RAISED_COSINE:
            return self.level
        return 2.0 * trapezoid(np.asarray(self.table), dx=self.spacing)

    def mass(self) -> float:
        return self.atom + self.continuous_mass()

    def max_density(self) -> float:
        if self.shape is None:
            return 0.0
        _, values = self.half_grid()
        return float(values.max())

    def scaled(self, factor: float) -> "Kernel":
        """Kernel multiplied by ``factor`` (atom and continuous part)."""
        if factor < 0:
            raise KernelError("Kernel scale factor must be nonnegative")
        if self.shape == TABLE:
            return replace(self, atom=self.atom * factor, table=tuple(v * factor for v in self.table))
        return replace(self, atom=self.atom * factor, level=self.level * factor)

    def continuous_part(self) -> "Kernel":
        return replace(self, atom=0.0)

    def cumulative(self, y) -> np.ndarray:
        """Odd antiderivative F(y) = integral of the continuous part over [0, y]."""
        y = np.asarray(y, dtype=float)
        sign, t = np.sign(y), np.abs(y)
        if self.shape is None:
            return np.zeros_like(y)
        a = self.halfwidth
        if self.shape == BOXCAR:
            return sign * self.level * np.minimum(t, a)
        if self.shape == TRIANGLE:
            t = np.minimum(t, a)
            return sign * self.level * (t - t * t / (2 * a))
        if self.shape == RAISED_COSINE:
            t = np.minimum(t, a)
            return sign * self.level / (2 * a) * (t + a / np.pi * np.sin(np.pi * t / a))
        values = np.asarray(self.table, dtype=float)
        nodes = cumulative_trapezoid(values, dx=self.spacing, initial=0.0)
        t = np.minimum(t, self.spacing * (len(values) - 1))
        i = np.minimum((t / self.spacing).astype(int), len(values) - 2)
        s = t - i * self.spacing
        slope = (values[i + 1] - values[i]) / self.spacing
        return sign * (nodes[i] + values[i] * s + 0.5 * slope * s * s)

    def sample(self, y: np.ndarray) -> np.ndarray:
        """Cell averages of the continuous part on a uniform solver grid.

        The averages telescope, so the trapezoid mass on the grid equals the
        exact continuous mass whenever the grid covers the support.
        """
        if self.shape is None:
            return np.zeros_like(y, dtype=float)
        h = y[1] - y[0]
        values = (self.cumulative(y + h / 2) - self.cumulative(y - h / 2)) / h
        target = self.continuous_mass()
        if target == 0:
            return np.zeros_like(values)
        discrete = trapezoid(values, y)
        if discrete <= 0:
            raise KernelError(
                f"Kernel support {self.support_radius:.3g} is not resolved by grid spacing {h:.3g}"
            )
        return values * (target / discrete)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Kernel":
        """Build a kernel from a config block.

        Accepted keys: ``atom`` (Dirac weight), ``shape``, ``halfwidth``,
        ``mass`` (mass of the continuous part), ``y``/``values`` for tables.
        """
        data = dict(data)
        unknown = set(data) - {"atom", "shape", "halfwidth", "mass", "y", "values", "name"}
        if unknown:
            raise KernelError(f"Unknown kernel keys: {sorted(unknown)}")
        atom = float(data.pop("atom", 0.0))
        shape = data.get("shape")
        if shape is None or shape == ATOM:
            return cls(atom=atom)
        if "mass" not in data:
            raise KernelError(f"Kernel block for shape {shape!r} needs a 'mass'")
        cont = make_kernel(data, float(data["mass"]))
        return replace(cont, atom=atom)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"atom": self.atom}
        if self.shape is None:
            return out
        out["shape"] = self.shape
        out["mass"] = self.continuous_mass()
        if self.shape == TABLE:
            y, values = self.half_grid()
            out["y"] = [float(v) for v in y]
            out["values"] = [float(v) for v in values]
        else:
            out["halfwidth"] = self.halfwidth
        return out


ZERO_KERNEL = Kernel()


def atom_kernel(weight: float) -> Kernel:
    return Kernel(atom=float(weight))


def _fold_table(y: np.ndarray, values: np.ndarray) -> Tuple[float, np.ndarray]:
    """Validate a sampled table and return (spacing, half-grid values)."""
    if y.shape != values.shape or y.ndim != 1 or len(y) < 2:
        raise KernelError("Sampled kernel needs matching 1-D 'y' and 'values' arrays")
    steps = np.diff(y)
    if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
        raise KernelError("Sampled kernel grid must be uniform and increasing")
    if np.any(values < 0):
        raise KernelError("Sampled kernel has a negative sample")
    spacing = float(steps[0])
    if y[0] < 0:
        # full table on [-R, R]: fold after checking evenness
        if not (np.isclose(y[0], -y[-1], rtol=1e-9) and np.isclose(y[len(y) // 2], 0.0, atol=1e-12 * spacing) and len(y) % 2 == 1):
            raise KernelError("Sampled kernel on a two-sided grid must be symmetric about 0")
        if not np.allclose(values, values[::-1], rtol=1e-10, atol=1e-14):
            raise KernelError("Sampled kernel is not even")
        values = values[len(y) // 2:]
    elif not np.isclose(y[0], 0.0, atol=1e-12 * spacing):
        raise KernelError("Sampled half-grid must start at y = 0")
    nonzero = np.nonzero(values)[0]
    if len(nonzero) == 0:
        raise KernelError("Sampled kernel is identically zero")
    # trim trailing zeros, keep one so the table ends on the support edge
    end = min(nonzero[-1] + 2, len(values))
    return spacing, values[:end]


def make_kernel(descriptor: Mapping[str, Any], target_mass: float) -> Kernel:
    """Build a kernel of total mass ``target_mass`` from a shape descriptor."""
    if not target_mass > 0:
        raise KernelError(f"Target mass must be positive, got {target_mass}")
    shape = descriptor.get("shape")
    if shape == ATOM:
        return Kernel(atom=target_mass)
    if shape in NAMED_SHAPES:
        a = float(descriptor.get("halfwidth", 0.0))
        if not a > 0:
            raise KernelError(f"{shape} halfwidth must be positive, got {a}")
        if shape == BOXCAR:
            level = target_mass / (2 * a)
        elif shape == TRIANGLE:
            level = target_mass / a
        else:
            level = target_mass
        return Kernel(shape=shape, halfwidth=a, level=level)
    if shape == TABLE:
        y = np.asarray(descriptor.get("y", []), dtype=float)
        values = np.asarray(descriptor.get("values", []), dtype=float)
        spacing, half = _fold_table(y, values)
        raw = Kernel(shape=TABLE, table=tuple(half.tolist()), spacing=spacing)
        return raw.scaled(target_mass / raw.continuous_mass())
    raise KernelError(f"Unknown kernel shape {shape!r}")


def mollify(k: Kernel, eps: float) -> Kernel:
    """Self-similar rescaling y -> (1/eps) k(y/eps); mass is preserved."""
    if k.atom > 0:
        raise KernelError("Cannot mollify a kernel carrying a Dirac atom")
    if not eps > 0:
        raise KernelError(f"Mollifier scale must be positive, got {eps}")
    if k.shape is None or eps == 1:
        return k
    if k.shape == TABLE:
        return replace(k, spacing=k.spacing * eps, table=tuple(v / eps for v in k.table))
    if k.shape == RAISED_COSINE:
        return replace(k, halfwidth=k.halfwidth * eps)
    return replace(k, halfwidth=k.halfwidth * eps, level=k.level / eps)


def mix_with_atom(upsilon: Kernel, eps: float) -> Kernel:
    """nu = (1 - eps) delta_0 + eps * upsilon, for a unit-mass continuous upsilon."""
    if upsilon.atom > 0:
        raise KernelError("Perturbation profile must not carry an atom")
    if not math.isclose(upsilon.mass(), 1.0, rel_tol=1e-8):
        raise KernelError(f"Perturbation profile must have unit mass, got {upsilon.mass():.12g}")
    if not 0 <= eps <= 1:
        raise KernelError(f"Mixing weight must lie in [0, 1], got {eps}")
    if eps == 0:
        return Kernel(atom=1.0)
    if eps == 1:
        return upsilon
    return replace(upsilon.scaled(eps), atom=1.0 - eps)


class ModelKind(str, Enum):
    LIMIT = "Limit"
    FULL_NONLOCAL = "FullNonlocal"
    SEMI_LIMIT_NU_NONLOCAL = "SemiLimitNuNonlocal"
    SEMI_LIMIT_MU_NONLOCAL = "SemiLimitMuNonlocal"
    MIXTURE = "Mixture"


@dataclass(frozen=True)
class ModelSpec:
    """Pair of exchange kernels: nu (field to road) and mu (road to field)."""
    nu: Kernel = field(default_factory=lambda: Kernel(atom=1.0))
    mu: Kernel = field(default_factory=lambda: Kernel(atom=1.0))

    @property
    def kind(self) -> ModelKind:
        nu_atom_only, mu_atom_only = self.nu.is_pure_atom, self.mu.is_pure_atom
        nu_cont_only = self.nu.has_continuous and self.nu.atom == 0
        mu_cont_only = self.mu.has_continuous and self.mu.atom == 0
        if nu_atom_only and mu_atom_only:
            return ModelKind.LIMIT
        if nu_cont_only and mu_cont_only:
            return ModelKind.FULL_NONLOCAL
        if mu_atom_only and nu_cont_only:
            return ModelKind.SEMI_LIMIT_NU_NONLOCAL
        if nu_atom_only and mu_cont_only:
            return ModelKind.SEMI_LIMIT_MU_NONLOCAL
        return ModelKind.MIXTURE

    @property
    def support_radius(self) -> float:
        return max(self.nu.support_radius, self.mu.support_radius)

    def smallest_radius(self) -> float:
        """Smallest positive continuous support radius, 0 if none."""
        radii = [k.support_radius for k in (self.nu, self.mu) if k.has_continuous]
        return min(radii) if radii else 0.0

    def check_masses(self, params: Params, rtol: float = 1e-8) -> None:
        if not math.isclose(self.nu.mass(), params.nu_bar, rel_tol=rtol):
            raise KernelError(f"mass(nu) = {self.nu.mass():.12g} differs from nu_bar = {params.nu_bar}")
        if not math.isclose(self.mu.mass(), params.mu_bar, rel_tol=rtol):
            raise KernelError(f"mass(mu) = {self.mu.mass():.12g} differs from mu_bar = {params.mu_bar}")

    @classmethod
    def limit(cls, params: Params) -> "ModelSpec":
        return cls(nu=Kernel(atom=params.nu_bar), mu=Kernel(atom=params.mu_bar))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], params: Optional[Params] = None) -> "ModelSpec":
        unknown = set(data) - {"nu", "mu"}
        if unknown:
            raise KernelError(f"Unknown kernel blocks: {sorted(unknown)}")
        default = cls.limit(params) if params is not None else cls()
        nu = Kernel.from_dict(data["nu"]) if "nu" in data else default.nu
        mu = Kernel.from_dict(data["mu"]) if "mu" in data else default.mu
        return cls(nu=nu, mu=mu)

    def to_dict(self) -> Dict[str, Any]:
        return {"nu": self.nu.to_dict(), "mu": self.mu.to_dict(), "kind": self.kind.value}
