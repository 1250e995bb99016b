"""
Spreading-speed search.

The road curve Psi1 is a concave parabola in lambda and the field curve Psi2 is
convex on the admissible window, so Psi2 - Psi1 is strictly convex there. The
spreading speed is the first c at which its minimum reaches zero.
"""

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Dict, Mapping, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import bisect, fsolve

from .bvp import (
    GridControl,
    lambda_window,
    psi1,
    psi2,
    psi2_closed_limit,
    psi2_closed_rpsl2,
    psi2_limit_slope,
)
from .errors import DomainError, SolverFailure
from .model import ModelKind, ModelSpec, Params

logger = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class SearchControl:
    c_rtol: float = 1e-8
    lambda_rtol: float = 1e-10
    max_golden_iter: int = 200
    bracket_start: float = 1e-6
    bracket_limit: float = 1e6
    endpoint_margin: float = 1e-6
    max_bisect_iter: int = 200
    closed_form: bool = False

    def replace(self, **changes) -> "SearchControl":
        return replace(self, **changes)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SearchControl":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"Unknown search keys: {sorted(unknown)}")
        values = dict(data)
        for key in ("max_golden_iter", "max_bisect_iter"):
            if key in values:
                values[key] = int(values[key])
        if "closed_form" in values:
            values["closed_form"] = bool(values["closed_form"])
        return cls(**values)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def golden_section_min(func: Callable[[float], float], a: float, b: float,
                       xtol: float, max_iter: int = 200) -> Tuple[float, float, int]:
    """Minimise a unimodal function on [a, b]. Returns (x, f(x), iterations)."""
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = func(x1), func(x2)
    iterations = 0
    while b - a > xtol and iterations < max_iter:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = func(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = func(x2)
        iterations += 1
    if f1 <= f2:
        return x1, f1, iterations
    return x2, f2, iterations


def curve_evaluator(params: Params, spec: ModelSpec, grid: Optional[GridControl] = None,
                    closed_form: bool = False) -> Callable[[float, float], float]:
    """Return psi2(c, lambda) for ``spec``, numeric or closed-form."""
    grid = grid or GridControl()
    if not closed_form:
        return lambda c, lam: psi2(params, c, lam, spec, grid)
    kind = spec.kind
    if kind == ModelKind.LIMIT:
        return lambda c, lam: psi2_closed_limit(params, c, lam)
    if kind == ModelKind.SEMI_LIMIT_MU_NONLOCAL:
        return lambda c, lam: psi2_closed_rpsl2(params, c, lam, spec.mu)
    raise DomainError(f"No closed-form field curve for model kind {kind.value}")


@dataclass
class GapReport:
    c: float
    gap: float
    lambda_argmin: float
    endpoint_cross: bool
    psi1_value: float
    psi2_value: float
    iterations: int = 0


def gap(params: Params, spec: ModelSpec, c: float, search: Optional[SearchControl] = None,
        grid: Optional[GridControl] = None,
        evaluator: Optional[Callable[[float, float], float]] = None) -> GapReport:
    """Minimum over the window of Psi2 - Psi1 at speed ``c``."""
    search = search or SearchControl()
    window = lambda_window(params, c)
    evaluator = evaluator or curve_evaluator(params, spec, grid, search.closed_form)
    pad = search.endpoint_margin * window.width
    lo, hi = window.lo + pad, window.hi - pad

    def difference(lam: float) -> float:
        return evaluator(c, lam) - psi1(params, c, lam)

    lam, value, iterations = golden_section_min(
        difference, lo, hi, search.lambda_rtol * window.width, search.max_golden_iter)
    endpoint_cross = max(psi1(params, c, lo), psi1(params, c, hi)) >= params.mu_bar
    reported = min(value, -np.finfo(float).eps) if endpoint_cross else value
    p1 = psi1(params, c, lam)
    return GapReport(
        c=c,
        gap=float(reported),
        lambda_argmin=float(lam),
        endpoint_cross=bool(endpoint_cross),
        psi1_value=float(p1),
        psi2_value=float(value + p1),
        iterations=iterations,
    )


@dataclass
class SpeedResult:
    c_star: float
    lambda_star: Optional[float]
    psi_star: Optional[float]
    bracket: Tuple[float, float]
    params: Params
    kind: str
    closed_form: bool = False
    threshold_degenerate: bool = False
    gap_evaluations: int = 0
    grid: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        record = {
            "c_star": self.c_star,
            "lambda_star": self.lambda_star,
            "psi_star": self.psi_star,
            "bracket_lo": self.bracket[0],
            "bracket_hi": self.bracket[1],
            "kind": self.kind,
            "closed_form": self.closed_form,
            "threshold_degenerate": self.threshold_degenerate,
            "gap_evaluations": self.gap_evaluations,
            "c_kpp": self.params.c_kpp(),
        }
        record.update(self.params.to_dict())
        record.update({f"grid_{key}": value for key, value in self.grid.items()})
        return record


def spreading_speed(params: Params, spec: ModelSpec, search: Optional[SearchControl] = None,
                    grid: Optional[GridControl] = None) -> SpeedResult:
    search = search or SearchControl()
    grid = grid or GridControl()
    c_kpp = params.c_kpp()
    kind = spec.kind.value
    meta = grid.to_dict()

    if params.big_d <= 2 * params.d:
        logger.info("D=%g <= 2d: spreading speed is c_KPP=%.12g", params.big_d, c_kpp)
        return SpeedResult(c_star=c_kpp, lambda_star=None, psi_star=None, bracket=(c_kpp, c_kpp),
                           params=params, kind=kind, closed_form=search.closed_form, grid=meta)

    evaluator = curve_evaluator(params, spec, grid, search.closed_form)
    state = {"above": None, "below": None, "calls": 0}

    def signed_gap(c: float) -> float:
        report = gap(params, spec, c, search, grid, evaluator)
        state["calls"] += 1
        if report.gap > 0:
            state["above"] = c if state["above"] is None else max(state["above"], c)
        else:
            state["below"] = c if state["below"] is None else min(state["below"], c)
        return report.gap

    offset = search.bracket_start
    c_lo = c_kpp * (1 + offset)
    start = gap(params, spec, c_lo, search, grid, evaluator)
    state["calls"] += 1
    if start.gap <= 0:
        logger.warning("Threshold-degenerate: curves already meet at c_KPP(1+%g); reporting c_KPP", offset)
        return SpeedResult(c_star=c_kpp, lambda_star=start.lambda_argmin, psi_star=start.psi2_value,
                           bracket=(c_kpp, c_lo), params=params, kind=kind,
                           closed_form=search.closed_form, threshold_degenerate=True,
                           gap_evaluations=state["calls"], grid=meta)

    while True:
        offset *= 2
        if offset > search.bracket_limit:
            raise SolverFailure(f"No sign change of the gap below c = {c_kpp * search.bracket_limit:.3g}")
        c_hi = c_kpp * (1 + offset)
        value = signed_gap(c_hi)
        logger.debug("bracket expansion: c=%.12g gap=%.3e", c_hi, value)
        if value <= 0:
            break
        c_lo = c_hi

    try:
        c_star = bisect(signed_gap, c_lo, c_hi, xtol=1e-14 * c_kpp, rtol=search.c_rtol,
                        maxiter=search.max_bisect_iter)
    except RuntimeError as exc:
        raise SolverFailure(f"Bisection on c did not converge: {exc}") from exc

    final = gap(params, spec, c_star, search, grid, evaluator)
    bracket = (state["above"] if state["above"] is not None else c_lo,
               state["below"] if state["below"] is not None else c_hi)
    logger.info("spreading speed (%s): c*=%.12g lambda*=%.8g", kind, c_star, final.lambda_argmin)
    return SpeedResult(
        c_star=float(c_star),
        lambda_star=final.lambda_argmin,
        psi_star=final.psi2_value,
        bracket=(float(bracket[0]), float(bracket[1])),
        params=params,
        kind=kind,
        closed_form=search.closed_form,
        gap_evaluations=state["calls"] + 1,
        grid=meta,
    )


def curve_sample(params: Params, spec: ModelSpec, c: float, n: int, margin: Optional[float] = None,
                 grid: Optional[GridControl] = None, closed_form: bool = False) -> pd.DataFrame:
    """Table of (lambda, psi1, psi2) at ``n`` uniform points of the clamped window."""
    if n < 2:
        raise ValueError("curve_sample needs n >= 2")
    grid = grid or GridControl()
    window = lambda_window(params, c)
    lams = window.interior(n, grid.endpoint_margin if margin is None else margin)
    evaluator = curve_evaluator(params, spec, grid, closed_form)
    return pd.DataFrame({
        "lambda": lams,
        "psi1": psi1(params, c, lams),
        "psi2": [evaluator(c, lam) for lam in lams],
    })


@dataclass
class ChainCheck:
    holds: bool
    first_slack: float
    second_slack: float


def check_inequality_chain(result: SpeedResult, params: Params, tol: float = 1e-7) -> ChainCheck:
    """c/D <= lambda^-(c) <= (c + sqrt(c^2 + 4 D mu_bar)) / (2D) at c = c*."""
    c = result.c_star
    c_kpp = params.c_kpp()
    lam_minus = (c - math.sqrt(max(c * c - c_kpp * c_kpp, 0.0))) / (2 * params.d)
    road_root = (c + math.sqrt(c * c + 4 * params.big_d * params.mu_bar)) / (2 * params.big_d)
    first = lam_minus - c / params.big_d
    second = road_root - lam_minus
    return ChainCheck(holds=first >= -tol and second >= -tol, first_slack=first, second_slack=second)


def liminf_bounds(params: Params) -> Tuple[float, float]:
    """Bracket for the large-D limit of c*^2 / D."""
    lower = math.sqrt(4 * params.mu_bar ** 2 + params.growth ** 2) - 2 * params.mu_bar
    return lower, params.growth


def _closed_limit_gap(params: Params, c: float, points: int) -> Tuple[float, float]:
    window = lambda_window(params, c)
    lams = window.interior(points, 1e-6)
    p = lams * c - params.d * lams ** 2 - params.growth
    values = params.nu_bar * params.mu_bar / (params.nu_bar + 2 * np.sqrt(params.d * p)) - psi1(params, c, lams)
    i = int(np.argmin(values))
    return float(values[i]), float(lams[i])


def limit_tangency(params: Params, scan_points: int = 400, xtol: float = 1e-13) -> Tuple[float, float]:
    """Solve value and slope matching of Psi1 and the closed-form Limit curve.

    Seeded from a coarse scan over c and lambda; returns (c*, lambda*).
    """
    if params.big_d <= 2 * params.d:
        raise DomainError("Tangency exists only for D > 2d")
    c_kpp = params.c_kpp()
    offset = 1e-3
    previous = c_kpp * (1 + offset / 2)
    while True:
        c = c_kpp * (1 + offset)
        value, lam = _closed_limit_gap(params, c, scan_points)
        if value <= 0:
            break
        previous = c
        offset *= 2
        if offset > 1e6:
            raise SolverFailure("Tangency scan found no crossing")
    for c in np.linspace(previous, c, 64):
        value, lam = _closed_limit_gap(params, c, scan_points)
        if value <= 0:
            break

    def equations(x):
        c_, lam_ = x
        if lam_ * c_ - params.d * lam_ ** 2 - params.growth <= 0:
            return [1e3, 1e3]
        return [
            psi2_closed_limit(params, c_, lam_) - psi1(params, c_, lam_),
            psi2_limit_slope(params, c_, lam_) - (c_ - 2 * params.big_d * lam_),
        ]

    solution, info, ier, message = fsolve(equations, [c, lam], xtol=xtol, full_output=True)
    if ier != 1:
        raise SolverFailure(f"Tangency solve failed: {message}")
    c_star, lam_star = (float(v) for v in solution)
    window = lambda_window(params, c_star)
    if not window.lo < lam_star < window.hi:
        raise SolverFailure(f"Tangency solve left the window: lambda={lam_star}")
    return c_star, lam_star
