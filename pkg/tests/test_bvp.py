import math

import numpy as np
import pytest

from core.bvp import (
    GridControl,
    boundary_flux,
    discrete_decay_factor,
    grid_layout,
    lambda_window,
    psi1,
    psi2,
    psi2_closed_limit,
    psi2_closed_rpsl2,
    psi2_limit_slope,
    solve_exchange_ode,
    solve_profile,
)
from core.errors import DomainError, KernelError, SolverFailure
from core.model import Kernel, ModelSpec, mollify
from tests.conftest import lam_for_p


def _p_points(params, c, count):
    p_max = c * c / (4 * params.d) - params.growth
    return np.linspace(0.02, 0.95 * p_max, count)


def test_lambda_window(unit_params):
    window = lambda_window(unit_params, 2.5)
    assert window.lo == pytest.approx(0.5)
    assert window.hi == pytest.approx(2.0)
    with pytest.raises(DomainError):
        lambda_window(unit_params, 2.0)
    with pytest.raises(DomainError):
        window.clamp(2.0, 1e-6)
    assert window.clamp(0.5 + 1e-12, 1e-6) == pytest.approx(0.5 + 1.5e-6)


def test_psi1_roots(unit_params):
    # -4 lam^2 + 2.5 lam + 1 = 0
    root = (2.5 + math.sqrt(2.5 ** 2 + 16)) / 8
    assert psi1(unit_params, 2.5, root) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("p,h", [(0.3, 0.01), (4.0, 0.2), (1e-4, 1e-3)])
def test_discrete_decay_factor(p, h):
    r = discrete_decay_factor(p, 1.5, h)
    assert 0 < r < 1
    assert 1.5 * (r + 1 / r - 2) == pytest.approx(h * h * p, rel=1e-9)


@pytest.mark.parametrize("c", [2.2, 2.5])
def test_limit_profile_matches_closed_form(unit_params, limit_spec, c):
    for p in _p_points(unit_params, c, 20):
        lam = lam_for_p(unit_params, c, p)
        solution = solve_profile(unit_params, c, lam, limit_spec)
        closed = psi2_closed_limit(unit_params, c, lam)
        assert solution.psi2 == pytest.approx(closed, rel=1e-6)
        assert solution.p_value == pytest.approx(p, rel=1e-9)
        expected_peak = unit_params.mu_bar / (unit_params.nu_bar + 2 * math.sqrt(unit_params.d * p))
        assert solution.phi_at_zero == pytest.approx(expected_peak, rel=1e-6)


@pytest.mark.parametrize("c", [2.2, 2.5])
def test_rpsl2_profile_matches_closed_form(unit_params, rpsl2_spec, boxcar, c):
    for p in _p_points(unit_params, c, 20):
        lam = lam_for_p(unit_params, c, p)
        numeric = psi2(unit_params, c, lam, rpsl2_spec)
        closed = psi2_closed_rpsl2(unit_params, c, lam, boxcar)
        assert numeric == pytest.approx(closed, rel=2e-6)


def test_rpsl2_closed_form_needs_continuous_mu(unit_params):
    with pytest.raises(KernelError):
        psi2_closed_rpsl2(unit_params, 2.5, 1.0, Kernel(atom=1.0))


def test_limit_slope_matches_finite_difference(unit_params):
    lam, step = 1.1, 1e-6
    fd = (psi2_closed_limit(unit_params, 2.5, lam + step)
          - psi2_closed_limit(unit_params, 2.5, lam - step)) / (2 * step)
    assert psi2_limit_slope(unit_params, 2.5, lam) == pytest.approx(fd, rel=1e-6)


def test_full_nonlocal_profile_is_even_and_positive(unit_params, full_boxcar_spec, coarse_grid):
    solution = solve_profile(unit_params, 2.5, 1.0, full_boxcar_spec, coarse_grid)
    assert np.all(solution.phi > 0)
    assert np.allclose(solution.phi, solution.phi[::-1], rtol=1e-10)
    assert solution.residual < 1e-9
    frame = solution.to_frame()
    assert list(frame.columns) == ["y", "phi"]
    assert len(frame) == len(solution.ygrid)


@pytest.mark.parametrize("spec_name", ["full_boxcar_spec", "limit_spec"])
def test_field_curve_converges_at_second_order(unit_params, spec_name, request):
    spec = request.getfixturevalue(spec_name)
    values = []
    for n in (1024, 2048, 4096, 8192):
        grid = GridControl(n_intervals=n, trunc_len=8.0, kernel_resolution=8)
        values.append(psi2(unit_params, 2.5, 1.0, spec, grid))
    steps = np.diff(values)
    for ratio in steps[:-1] / steps[1:]:
        assert 3.5 <= ratio <= 4.5


@pytest.mark.parametrize("spec_name", ["limit_spec", "full_boxcar_spec"])
def test_field_curve_steepens_at_window_edge(unit_params, spec_name, request, coarse_grid):
    spec = request.getfixturevalue(spec_name)
    lo = lambda_window(unit_params, 2.5).lo

    def quotient(h):
        return (psi2(unit_params, 2.5, lo + h, spec, coarse_grid)
                - psi2(unit_params, 2.5, lo + h / 2, spec, coarse_grid)) / (h / 2)

    assert quotient(1e-3) < quotient(1e-2) < 0


@pytest.mark.parametrize("spec_name", ["limit_spec", "full_boxcar_spec"])
def test_profile_stays_bounded_as_p_vanishes(unit_params, spec_name, request):
    spec = request.getfixturevalue(spec_name)
    peaks = []
    for p in (1.0, 1e-1, 1e-2, 1e-3, 1e-4):
        _, phi, _, _ = solve_exchange_ode(p, spec, unit_params.d, GridControl())
        peaks.append(phi.max())
    assert max(peaks) <= 1.0 + 1e-9
    assert np.all(np.diff(peaks) > 0)


def test_narrow_kernels_approach_limit(unit_params, boxcar):
    lam = lam_for_p(unit_params, 2.5, 0.3)
    closed = psi2_closed_limit(unit_params, 2.5, lam)
    narrow = mollify(boxcar, 0.05)
    value = psi2(unit_params, 2.5, lam, ModelSpec(nu=narrow, mu=narrow))
    assert value == pytest.approx(closed, rel=0.1)


def test_grid_layout_rules(unit_params, full_boxcar_spec, limit_spec):
    layout = grid_layout(0.25, 1.0, limit_spec, GridControl())
    assert layout.trunc_len == pytest.approx(28.0)
    assert layout.n_intervals == 16384
    capped = grid_layout(1e-6, 1.0, full_boxcar_spec, GridControl())
    assert capped.trunc_len == pytest.approx(17.0)
    narrow = ModelSpec(nu=mollify(full_boxcar_spec.nu, 0.01), mu=Kernel(atom=1.0))
    fine = grid_layout(0.25, 1.0, narrow, GridControl(trunc_len=10.0))
    assert fine.n_intervals % 2 == 0
    assert 256000 <= fine.n_intervals <= 256002


def test_grid_limits_raise_solver_failure(full_boxcar_spec):
    with pytest.raises(SolverFailure):
        grid_layout(0.25, 1.0, full_boxcar_spec, GridControl(max_intervals=1024))
    with pytest.raises(SolverFailure):
        grid_layout(0.25, 1.0, full_boxcar_spec, GridControl(trunc_len=0.5))


def test_nonpositive_p_is_rejected(limit_spec):
    with pytest.raises(DomainError):
        solve_exchange_ode(0.0, limit_spec, 1.0, GridControl())


def test_grid_control_validation():
    with pytest.raises(ValueError):
        GridControl(n_intervals=1001)
    with pytest.raises(ValueError):
        GridControl.from_dict({"n_intervals": 2048, "cells": 3})
    grid = GridControl.from_dict({"n_intervals": 2048.0})
    assert grid.n_intervals == 2048
    assert GridControl.from_dict(grid.to_dict()) == grid


def test_boundary_flux_without_kernel_is_pure_decay(unit_params):
    lam = lam_for_p(unit_params, 2.5, 0.36)
    slope = boundary_flux(unit_params, 2.5, lam, Kernel(atom=1.0), 2.0)
    assert slope == pytest.approx(-2.0 * 0.6, rel=1e-5)


def test_boundary_flux_steepens_with_kernel_and_level(unit_params, boxcar):
    lam = lam_for_p(unit_params, 2.5, 0.36)
    bare = boundary_flux(unit_params, 2.5, lam, Kernel(atom=1.0), 1.0)
    loaded = boundary_flux(unit_params, 2.5, lam, boxcar, 1.0)
    assert loaded < bare < 0
    assert boundary_flux(unit_params, 2.5, lam, boxcar, 2.0) < loaded


@pytest.mark.parametrize("spec_name", ["limit_spec", "full_boxcar_spec", "rpsl2_spec", "nu_nonlocal_spec"])
def test_field_curve_properties(unit_params, spec_name, request, coarse_grid):
    spec = request.getfixturevalue(spec_name)
    c = 2.5
    mid = c / (2 * unit_params.d)
    for delta in (0.1, 0.4):
        left = psi2(unit_params, c, mid - delta, spec, coarse_grid)
        right = psi2(unit_params, c, mid + delta, spec, coarse_grid)
        assert left == pytest.approx(right, rel=1e-8)
    lams = lambda_window(unit_params, c).interior(9, 0.05)
    values = np.array([psi2(unit_params, c, lam, spec, coarse_grid) for lam in lams])
    assert np.all(np.diff(values, 2) > 0)
    assert psi2(unit_params, 2.6, 1.2, spec, coarse_grid) < psi2(unit_params, 2.5, 1.2, spec, coarse_grid)
    edge = lambda_window(unit_params, 2.1).interior(2, 1e-3)[0]
    assert psi2(unit_params, 2.1, edge, spec, coarse_grid) == pytest.approx(unit_params.mu_bar, rel=0.05)
