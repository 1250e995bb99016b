"""
Studies built on the spreading-speed search: large-D asymptotics, comparison of
continuous road-to-field kernels, self-similar shrinking of the field-to-road
kernel and the atom-plus-profile perturbation.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid
from scipy.optimize import bisect, brentq

from .bvp import GridControl, grid_layout, p_value, solve_exchange_ode, solve_profile
from .dispersion import (
    SearchControl,
    check_inequality_chain,
    golden_section_min,
    liminf_bounds,
    spreading_speed,
)
from .errors import DomainError, KernelError, SolverFailure
from .model import Kernel, ModelKind, ModelSpec, Params, mix_with_atom, mollify
from .parallel import map_ladder

logger = logging.getLogger(__name__)


def _require_unit_normalisation(params: Params) -> None:
    if params.d != 1 or params.nu_bar != 1:
        raise KernelError(
            f"This study assumes d = nu_bar = 1 (got d={params.d}, nu_bar={params.nu_bar}); "
            "rescale y by sqrt(d) and the kernels by 1/nu_bar first"
        )


# --- large-D limit ---------------------------------------------------------

def _field_curve_limit(d: float, growth: float, spec: ModelSpec, grid: GridControl,
                       closed_form: bool) -> Callable[[float, float], float]:
    if closed_form:
        if spec.kind != ModelKind.LIMIT:
            raise DomainError(f"No closed-form limit curve for model kind {spec.kind.value}")
        nu_bar, mu_bar = spec.nu.mass(), spec.mu.mass()
        return lambda c, lam: nu_bar * mu_bar / (nu_bar + 2 * math.sqrt(d * (lam * c - growth)))

    def numeric(c: float, lam: float) -> float:
        y, phi, _, nu_cont = solve_exchange_ode(lam * c - growth, spec, d, grid)
        return float(spec.nu.atom * phi[len(phi) // 2] + trapezoid(nu_cont * phi, y))

    return numeric


def c_infinity_gap(d: float, growth: float, mu_bar: float, spec: ModelSpec, c: float,
                   search: SearchControl, grid: GridControl, closed_form: bool = False) -> float:
    """Minimum of the limit field curve minus lambda c - lambda^2 + mu_bar.

    The window is (f'(0)/c, positive root of the road curve); an empty window
    means the curves cannot meet and the gap is +inf.
    """
    lo = growth / c
    hi = (c + math.sqrt(c * c + 4 * mu_bar)) / 2
    if lo >= hi:
        return math.inf
    pad = search.endpoint_margin * (hi - lo)
    a, b = lo + pad, hi - pad
    curve = _field_curve_limit(d, growth, spec, grid, closed_form)

    def road(lam: float) -> float:
        return lam * c - lam * lam + mu_bar

    _, value, _ = golden_section_min(lambda lam: curve(c, lam) - road(lam), a, b,
                                     search.lambda_rtol * (hi - lo), search.max_golden_iter)
    if road(a) >= mu_bar:
        value = min(value, -np.finfo(float).eps)
    return float(value)


def c_infinity(d: float, growth: float, mu_bar: float, nu_kernel: Kernel, mu_kernel: Kernel,
               search: Optional[SearchControl] = None, grid: Optional[GridControl] = None) -> float:
    """Limit of c*/sqrt(D) as D grows."""
    if not growth > 0:
        raise DomainError("growth must be positive")
    search = search or SearchControl()
    grid = grid or GridControl()
    spec = ModelSpec(nu=nu_kernel, mu=mu_kernel)
    if not math.isclose(mu_kernel.mass(), mu_bar, rel_tol=1e-8):
        raise KernelError(f"mass(mu) = {mu_kernel.mass():.12g} differs from mu_bar = {mu_bar}")
    closed_form = search.closed_form and spec.kind == ModelKind.LIMIT

    def signed(c: float) -> float:
        return c_infinity_gap(d, growth, mu_bar, spec, c, search, grid, closed_form)

    # the left edge already crosses once c^2 >= f'(0)
    c_hi = math.sqrt(growth) * (1 + 1e-9)
    c_lo = c_hi / 2
    for _ in range(200):
        if signed(c_lo) > 0:
            break
        c_hi, c_lo = c_lo, c_lo / 2
    else:
        raise SolverFailure("No positive gap found while bracketing c_infinity")
    c_inf = bisect(signed, c_lo, c_hi, xtol=1e-14 * c_hi, rtol=search.c_rtol, maxiter=search.max_bisect_iter)
    logger.info("c_infinity = %.10g (growth=%g, mu_bar=%g)", c_inf, growth, mu_bar)
    return float(c_inf)


@dataclass
class AsymptoticReport:
    d_values: List[float]
    c_star: List[float]
    ratio: List[float]
    c_inf: float
    growth: float
    mu_bar: float
    chain_holds: List[bool] = field(default_factory=list)
    liminf: Tuple[float, float] = (0.0, 0.0)

    def converges(self) -> bool:
        return abs(self.ratio[-1] - self.c_inf) < abs(self.ratio[0] - self.c_inf)

    def cinf_chain(self) -> Tuple[float, float]:
        """Slacks of c_inf <= f'(0)/c_inf <= (c_inf + sqrt(c_inf^2 + 4 mu_bar)) / 2."""
        c = self.c_inf
        first = self.growth / c - c
        second = (c + math.sqrt(c * c + 4 * self.mu_bar)) / 2 - self.growth / c
        return first, second

    def to_frame(self) -> pd.DataFrame:
        c_star = np.asarray(self.c_star)
        d_values = np.asarray(self.d_values)
        return pd.DataFrame({
            "D": d_values,
            "c_star": c_star,
            "ratio": self.ratio,
            "c_inf": self.c_inf,
            "ratio_error": np.abs(np.asarray(self.ratio) - self.c_inf),
            "c2_over_D": c_star ** 2 / d_values,
            "liminf_lower": self.liminf[0],
            "liminf_upper": self.liminf[1],
            "chain_holds": self.chain_holds,
        })


def sweep_D(params: Params, d_ladder: Sequence[float], spec: ModelSpec,
            search: Optional[SearchControl] = None, grid: Optional[GridControl] = None,
            threads: int = 1) -> AsymptoticReport:
    search = search or SearchControl()
    grid = grid or GridControl()
    ladder = [float(v) for v in d_ladder]
    if not ladder:
        raise ValueError("D ladder is empty")
    if any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("D ladder must be strictly increasing")
    if ladder[0] <= 2 * params.d:
        raise DomainError("Every D in the sweep must exceed 2d")

    def one(big_d: float):
        local = params.replace(big_d=big_d)
        result = spreading_speed(local, spec, search, grid)
        chain = check_inequality_chain(result, local)
        logger.info("sweep D=%g: c*=%.10g c*/sqrt(D)=%.8g", big_d, result.c_star, result.c_star / math.sqrt(big_d))
        return result.c_star, chain.holds

    rows = map_ladder(one, ladder, threads)
    c_inf = c_infinity(params.d, params.growth, params.mu_bar, spec.nu, spec.mu, search, grid)
    return AsymptoticReport(
        d_values=ladder,
        c_star=[r[0] for r in rows],
        ratio=[r[0] / math.sqrt(v) for r, v in zip(rows, ladder)],
        c_inf=c_inf,
        growth=params.growth,
        mu_bar=params.mu_bar,
        chain_holds=[r[1] for r in rows],
        liminf=liminf_bounds(params),
    )


# --- continuous road-to-field kernels ----------------------------------------

def _limit_speed(params: Params, search: SearchControl, grid: GridControl) -> float:
    return spreading_speed(params, ModelSpec.limit(params), search.replace(closed_form=True), grid).c_star


def rpsl2_compare(params: Params, mu_list: Mapping[str, Kernel], search: Optional[SearchControl] = None,
                  grid: Optional[GridControl] = None, threads: int = 1, rtol: float = 1e-6) -> pd.DataFrame:
    """Speed for each continuous mu against the all-atom speed c*_0."""
    search = search or SearchControl()
    grid = grid or GridControl()
    for name, mu in mu_list.items():
        if mu.atom > 0:
            raise KernelError(f"Kernel {name!r} carries an atom; only continuous mu are compared")
        if not math.isclose(mu.mass(), params.mu_bar, rel_tol=1e-8):
            raise KernelError(f"Kernel {name!r} has mass {mu.mass():.12g}, expected mu_bar = {params.mu_bar}")
    c0 = _limit_speed(params, search, grid)
    nu = Kernel(atom=params.nu_bar)
    names = list(mu_list)
    speeds = map_ladder(lambda name: spreading_speed(params, ModelSpec(nu=nu, mu=mu_list[name]), search, grid).c_star,
                        names, threads)
    excess = np.asarray(speeds) - c0
    frame = pd.DataFrame({
        "kernel": names,
        "c_star": speeds,
        "c_star_0": c0,
        "excess": excess,
        "within_bound": excess <= rtol * c0,
    })
    for row in frame.itertuples():
        if not row.within_bound:
            logger.warning("kernel %s exceeds the all-atom speed by %.3e", row.kernel, row.excess)
    return frame


def mollified_ladder(params: Params, base_mu: Kernel, eps_ladder: Sequence[float],
                     search: Optional[SearchControl] = None, grid: Optional[GridControl] = None,
                     threads: int = 1) -> pd.DataFrame:
    """Speeds for mu_eps(y) = mu(y/eps)/eps, next to c*_0."""
    search = search or SearchControl()
    grid = grid or GridControl()
    c0 = _limit_speed(params, search, grid)
    nu = Kernel(atom=params.nu_bar)
    speeds = map_ladder(
        lambda eps: spreading_speed(params, ModelSpec(nu=nu, mu=mollify(base_mu, eps)), search, grid).c_star,
        list(eps_ladder), threads)
    return pd.DataFrame({
        "eps": list(eps_ladder),
        "c_star": speeds,
        "c_star_0": c0,
        "distance": np.abs(np.asarray(speeds) - c0),
    })


# --- perturbation indicators ---------------------------------------------------

def g_indicator(alpha: float, y):
    """Leading-order weight of a perturbation placed at distance |y| from the road."""
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    t = np.abs(np.asarray(y, dtype=float))
    value = 1 - np.exp(-alpha * t) - (1 - np.exp(-2 * alpha * t)) / (1 + 2 * alpha)
    return float(value) if value.ndim == 0 else value


def y_threshold(alpha: float) -> float:
    """Positive root of g(alpha, .); g is negative between 0 and the root."""
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if alpha >= 0.5:
        raise DomainError(f"g has no positive root for alpha={alpha} >= 1/2; g >= 0")
    hi = 1.0
    while g_indicator(alpha, hi) <= 0:
        hi *= 2
        if hi > 1e12:
            raise SolverFailure(f"No sign change of g found for alpha={alpha}")
    lo = hi / 2
    while g_indicator(alpha, lo) >= 0:
        lo /= 2
        if lo < 1e-300:
            raise SolverFailure(f"g(alpha={alpha}, .) is not negative near 0")
    return float(brentq(lambda y: g_indicator(alpha, y), lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps))


def m1(growth: float) -> float:
    """Diffusion threshold below which a suitable perturbation speeds the front up."""
    if not growth > 0:
        raise DomainError("growth must be positive")
    inv = 1.0 / growth
    return 2 + inv / 2 + 0.5 * math.sqrt(12 + inv * inv + 7 * inv)


def i0_integral(mu_bar: float, nu_bar: float, p_value: float, nu_kernel: Kernel,
                points: int = 20001) -> float:
    """mu_bar * integral over [0, 1] of ((1/(nu_bar + 2 sqrt P)) int_{-z}^{z} nu - 1) z nu(z) dz."""
    if nu_kernel.is_zero:
        return 0.0
    if nu_kernel.atom > 0:
        raise KernelError("I0 needs a purely continuous nu")
    if nu_kernel.support_radius > 1 + 1e-12:
        raise KernelError(f"nu support radius {nu_kernel.support_radius} exceeds 1; rescale the kernel")
    if not math.isclose(nu_kernel.mass(), nu_bar, rel_tol=1e-8):
        raise KernelError(f"mass(nu) = {nu_kernel.mass():.12g} differs from nu_bar = {nu_bar}")
    if not p_value > 0:
        raise DomainError("P must be positive")
    z = np.linspace(0.0, 1.0, points)
    inner = 2 * nu_kernel.cumulative(z) / (nu_bar + 2 * math.sqrt(p_value)) - 1
    return float(mu_bar * trapezoid(inner * z * nu_kernel.density(z), z))


@dataclass
class SelfSimilarReport:
    p_value: float
    eps_ladder: List[float]
    psi2_values: List[float]
    psi2_atom: float
    quotients: List[float]
    fd_derivative: float
    closed_form: float
    i0: float
    low_order: bool

    @property
    def disagreement(self) -> float:
        return abs(self.fd_derivative - self.closed_form) / max(abs(self.closed_form), 1e-300)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"eps": self.eps_ladder, "psi2": self.psi2_values, "quotient": self.quotients})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "p_value": self.p_value,
            "psi2_atom": self.psi2_atom,
            "fd_derivative": self.fd_derivative,
            "closed_form": self.closed_form,
            "i0": self.i0,
            "low_order": self.low_order,
            "disagreement": self.disagreement,
        }


def dpsi2_deps_selfsimilar(params: Params, c: float, lam: float, base_nu: Kernel,
                           eps_ladder: Sequence[float], grid: Optional[GridControl] = None,
                           mu_kernel: Optional[Kernel] = None, threads: int = 1) -> SelfSimilarReport:
    """Derivative in eps of Psi2 for nu_eps(y) = nu(y/eps)/eps at eps = 0.

    All ladder entries and the eps = 0 reference share one grid, so the
    difference quotients carry no grid-to-grid bias.
    """
    _require_unit_normalisation(params)
    grid = grid or GridControl()
    mu_kernel = mu_kernel if mu_kernel is not None else Kernel(atom=params.mu_bar)
    if mu_kernel.has_continuous:
        raise KernelError("Self-similar study needs an atomic mu")
    ladder = [float(e) for e in eps_ladder]
    if not ladder or any(not 0 < e <= 0.5 for e in ladder):
        raise ValueError("eps ladder entries must lie in (0, 0.5]")
    if any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("eps ladder must be strictly decreasing")

    p = p_value(params, c, lam)
    i0 = i0_integral(params.mu_bar, params.nu_bar, p, base_nu)
    root = math.sqrt(p)
    closed = -2 * root * i0 / (params.nu_bar + 2 * root)

    finest = ModelSpec(nu=mollify(base_nu, ladder[-1]), mu=mu_kernel)
    layout = grid_layout(p, params.d, finest, grid.replace(extra_support=base_nu.support_radius * ladder[0]))
    shared = grid.replace(trunc_len=layout.trunc_len, n_intervals=layout.n_intervals, extra_support=0.0)

    atom_value = solve_profile(params, c, lam, ModelSpec(nu=Kernel(atom=params.nu_bar), mu=mu_kernel), shared).psi2
    values = map_ladder(
        lambda eps: solve_profile(params, c, lam, ModelSpec(nu=mollify(base_nu, eps), mu=mu_kernel), shared).psi2,
        ladder, threads)
    quotients = [(v - atom_value) / e for v, e in zip(values, ladder)]
    if len(ladder) == 1:
        logger.warning("single-entry eps ladder: derivative is a first-order one-sided estimate")
        fd = quotients[0]
    else:
        fd = float(np.polyval(np.polyfit(ladder, quotients, len(ladder) - 1), 0.0))
    report = SelfSimilarReport(
        p_value=p, eps_ladder=ladder, psi2_values=values, psi2_atom=atom_value, quotients=quotients,
        fd_derivative=fd, closed_form=closed, i0=i0, low_order=len(ladder) == 1,
    )
    logger.info("self-similar dPsi2/deps: finite differences %.6g, I0 formula %.6g", fd, closed)
    if report.disagreement > 0.05:
        logger.warning("finite-difference derivative and the I0 formula differ by %.1f%%", 100 * report.disagreement)
    return report


def limit_speed_upper_bound(params: Params) -> float:
    """D sqrt(f'(0)) / sqrt(D - 1), an upper bound on the all-atom speed for d = 1."""
    if params.d != 1:
        raise DomainError("The all-atom speed bound is stated for d = 1")
    if params.big_d <= 1:
        return math.inf
    return params.big_d * math.sqrt(params.growth) / math.sqrt(params.big_d - 1)


@dataclass
class PerturbedSpeed:
    eps: float
    c_star_eps: float
    c_star_0: float
    c_star_0_closed: float

    @property
    def delta(self) -> float:
        return self.c_star_eps - self.c_star_0


def _perturbation_grid(upsilon: Kernel, grid: Optional[GridControl]) -> GridControl:
    return (grid or GridControl()).replace(extra_support=upsilon.support_radius)


def perturbed_speed(params: Params, upsilon: Kernel, eps: float, search: Optional[SearchControl] = None,
                    grid: Optional[GridControl] = None, baseline: Optional[float] = None) -> PerturbedSpeed:
    """Speed with nu = (1 - eps) delta_0 + eps upsilon against the all-atom speed.

    The all-atom reference is solved on the same grid rule as the perturbed
    model; its closed-form value is reported next to it.
    """
    _require_unit_normalisation(params)
    if not 0 <= eps < 1:
        raise ValueError(f"eps must lie in [0, 1), got {eps}")
    search = (search or SearchControl()).replace(closed_form=False)
    shared = _perturbation_grid(upsilon, grid)
    mu = Kernel(atom=params.mu_bar)
    nu = mix_with_atom(upsilon, eps)
    closed = _limit_speed(params, search, shared)
    if baseline is None:
        baseline = spreading_speed(params, ModelSpec(nu=Kernel(atom=1.0), mu=mu), search, shared).c_star
    if eps == 0:
        return PerturbedSpeed(eps=0.0, c_star_eps=baseline, c_star_0=baseline, c_star_0_closed=closed)
    c_eps = spreading_speed(params, ModelSpec(nu=nu, mu=mu), search, shared).c_star
    return PerturbedSpeed(eps=eps, c_star_eps=c_eps, c_star_0=baseline, c_star_0_closed=closed)


@dataclass
class PerturbationReport:
    eps_ladder: List[float]
    c_star_eps: List[float]
    c_star_0: float
    c_star_0_closed: float
    sign: str
    alpha_star: float
    m1: float
    indicator: float
    upper_bound: float

    @property
    def deltas(self) -> List[float]:
        return [c - self.c_star_0 for c in self.c_star_eps]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"eps": self.eps_ladder, "c_star_eps": self.c_star_eps,
                             "c_star_0": self.c_star_0, "delta": self.deltas})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "c_star_0": self.c_star_0,
            "c_star_0_closed": self.c_star_0_closed,
            "sign": self.sign,
            "alpha_star": self.alpha_star,
            "m1": self.m1,
            "indicator": self.indicator,
            "upper_bound": self.upper_bound,
        }


def alpha_star(params: Params, search: Optional[SearchControl] = None) -> float:
    """sqrt(P(lambda*)) at the all-atom tangency."""
    search = (search or SearchControl()).replace(closed_form=True)
    result = spreading_speed(params, ModelSpec.limit(params), search)
    if result.lambda_star is None:
        return 0.0
    return math.sqrt(max(p_value(params, result.c_star, result.lambda_star), 0.0))


def perturbation_indicator(upsilon: Kernel, alpha: float, intervals: int = 8192) -> float:
    """Integral of upsilon(y) g(alpha, y); negative values predict a faster front."""
    y, values = upsilon.half_grid(intervals)
    return float(2 * trapezoid(values * g_indicator(alpha, y), y))


def perturbation_study(params: Params, upsilon: Kernel, eps_ladder: Sequence[float] = (0.1, 0.05, 0.02),
                       search: Optional[SearchControl] = None, grid: Optional[GridControl] = None,
                       threads: int = 1) -> PerturbationReport:
    _require_unit_normalisation(params)
    ladder = sorted((float(e) for e in eps_ladder), reverse=True)
    if not ladder or any(not 0 < e < 1 for e in ladder):
        raise ValueError("eps ladder entries must lie in (0, 1)")
    search = (search or SearchControl()).replace(closed_form=False)
    shared = _perturbation_grid(upsilon, grid)
    baseline = spreading_speed(params, ModelSpec(nu=Kernel(atom=1.0), mu=Kernel(atom=params.mu_bar)),
                               search, shared).c_star
    runs = map_ladder(lambda eps: perturbed_speed(params, upsilon, eps, search, grid, baseline), ladder, threads)
    deltas = [run.delta for run in runs]
    tail = deltas[-2:] if len(deltas) >= 2 else deltas
    if all(d > 0 for d in tail):
        sign = "enhanced"
    elif all(d < 0 for d in tail):
        sign = "suppressed"
    else:
        sign = "inconclusive"
        logger.warning("perturbation sign is inconclusive over eps=%s: deltas=%s", ladder[-2:], tail)
    alpha = alpha_star(params, search)
    indicator = perturbation_indicator(upsilon, alpha) if alpha > 0 else 0.0
    report = PerturbationReport(
        eps_ladder=ladder,
        c_star_eps=[run.c_star_eps for run in runs],
        c_star_0=baseline,
        c_star_0_closed=runs[0].c_star_0_closed,
        sign=sign,
        alpha_star=alpha,
        m1=m1(params.growth),
        indicator=indicator,
        upper_bound=limit_speed_upper_bound(params),
    )
    logger.info("perturbation study: %s (alpha*=%.6g, D=%g, m1=%.6g)", sign, alpha, params.big_d, report.m1)
    return report
