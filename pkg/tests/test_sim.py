from dataclasses import replace

import numpy as np
import pytest

from core.dispersion import spreading_speed
from core.errors import ConfigError, SolverFailure
from core.model import ModelSpec, Params
from core.sim import (
    FrontTrace,
    InitialData,
    SimConfig,
    estimate_speed,
    simulate,
    stationary_state,
)


@pytest.fixture
def small_config(unit_params, limit_spec):
    return SimConfig(params=unit_params, spec=limit_spec, lx=40.0, ly=5.0, nx=161, ny=21, t_end=10.0)


@pytest.mark.parametrize("spec_name", ["limit_spec", "full_boxcar_spec"])
def test_stationary_state_with_matching_kernels_is_flat(unit_params, spec_name, request):
    spec = request.getfixturevalue(spec_name)
    state = stationary_state(unit_params, spec, ly=5.0, ny=41)
    assert state.u == pytest.approx(1.0, abs=1e-6)
    assert np.allclose(state.v, 1.0, atol=1e-6)
    assert state.exchange_balance(spec, unit_params.mu_bar) < 1e-6
    assert list(state.to_frame().columns) == ["y", "v"]


def test_stationary_state_needs_odd_grid(unit_params, limit_spec):
    with pytest.raises(ConfigError):
        stationary_state(unit_params, limit_spec, ny=40)


def test_estimate_speed_on_linear_trace():
    times = np.linspace(0, 20, 41)
    trace = FrontTrace(times=times, positions=3.0 + 2.0 * times, threshold=0.1, fraction=0.1)
    fit = estimate_speed(trace)
    assert fit.speed == pytest.approx(2.0)
    assert fit.intercept == pytest.approx(3.0)
    assert fit.ballistic
    assert fit.samples == 21


def test_estimate_speed_needs_samples():
    trace = FrontTrace(times=np.arange(5.0), positions=np.arange(5.0), threshold=0.1, fraction=0.1)
    with pytest.raises(ValueError):
        estimate_speed(trace)
    empty = FrontTrace(times=np.array([0.0]), positions=np.array([np.nan]), threshold=0.1, fraction=0.1)
    with pytest.raises(ValueError):
        estimate_speed(empty)


def test_config_validation(unit_params, limit_spec, rpsl2_spec):
    with pytest.raises(ConfigError):
        SimConfig(params=unit_params, spec=rpsl2_spec).validate()
    with pytest.raises(ConfigError):
        SimConfig(params=unit_params, spec=limit_spec, ny=20).validate()
    with pytest.raises(SolverFailure):
        SimConfig(params=unit_params, spec=limit_spec, lx=40.0, ly=5.0, nx=161, ny=21, dt=1.0).validate()


def test_kernel_must_fit_inside_field(unit_params, full_boxcar_spec):
    with pytest.raises(ConfigError):
        SimConfig(params=unit_params, spec=full_boxcar_spec, ly=1.0, ny=11).validate()


def test_initial_data_validation():
    with pytest.raises(ConfigError):
        InitialData(road_amplitude=-1.0)
    with pytest.raises(ConfigError):
        InitialData.from_dict({"height": 1.0})
    init = InitialData.from_dict({"radius": 3})
    assert init.radius == 3.0
    assert init.road(np.array([0.0, 3.0, 4.0])).tolist() == [0.5, 0.0, 0.0]


def test_sim_config_from_dict(unit_params, limit_spec):
    config = SimConfig.from_dict({"nx": 81.0, "t_end": 2, "init": {"radius": 2.0}}, unit_params, limit_spec)
    assert config.nx == 81
    assert config.init.radius == 2.0
    with pytest.raises(ConfigError):
        SimConfig.from_dict({"steps": 10}, unit_params, limit_spec)
    header = config.header()
    assert "model=Limit" in header
    assert any(line.startswith("dt=") for line in header)


def test_short_simulation_stays_nonnegative_and_advances(small_config):
    result = simulate(small_config)
    assert result.min_value >= -1e-12
    assert result.dt <= small_config.stable_dt()
    positions = result.trace.positions
    assert len(positions) > 10
    assert positions[-1] > positions[1]
    assert not result.trace.truncated
    assert len(result.road_frame()) == small_config.nx
    assert len(result.field_frame()) == small_config.nx * small_config.ny
    summary = result.summary()
    assert summary["u_stationary"] == pytest.approx(1.0, abs=1e-6)
    assert summary["snapshots"] == 2



def test_estimate_speed_flags_diffusive_front():
    times = np.linspace(0.0, 1.0, 200)
    trace = FrontTrace(times=times, positions=np.sqrt(times), threshold=0.1, fraction=0.1)
    fit = estimate_speed(trace, window_fraction=1.0)
    assert fit.r2 < 0.99
    assert not fit.ballistic


def test_zero_initial_data_stays_zero(small_config):
    config = replace(small_config, init=InitialData(road_amplitude=0.0, field_amplitude=0.0))
    result = simulate(config)
    assert not result.snapshots[-1].u.any()
    assert not result.snapshots[-1].v.any()
    assert result.fit is None


def test_ordered_initial_data_stay_ordered(unit_params, full_boxcar_spec):
    base = dict(params=unit_params, spec=full_boxcar_spec, lx=30.0, ly=5.0, nx=121, ny=21, t_end=6.0)
    low = SimConfig(**base, init=InitialData(road_amplitude=0.2, field_amplitude=0.2))
    high = SimConfig(**base, init=InitialData(road_amplitude=0.4, field_amplitude=0.4))
    dt = min(low.stable_dt(), high.stable_dt())
    steps = int(np.ceil(6.0 / dt))
    runs = [simulate(SimConfig(**base, init=c.init, dt=dt, snapshot_every=max(1, steps // 8))) for c in (low, high)]
    assert len(runs[0].snapshots) == len(runs[1].snapshots) >= 8
    for lower, upper in zip(*(run.snapshots for run in runs)):
        assert lower.t == upper.t
        assert np.all(lower.u <= upper.u + 1e-12)
        assert np.all(lower.v <= upper.v + 1e-12)
    assert min(run.min_value for run in runs) >= -1e-12


def test_state_above_equilibrium_decreases_at_center(unit_params, limit_spec):
    init = InitialData(road_amplitude=1.5, field_amplitude=1.5, radius=1000.0, field_radius_y=1000.0)
    config = SimConfig(params=unit_params, spec=limit_spec, lx=20.0, ly=3.0, nx=81, ny=13, t_end=4.0,
                       init=init, snapshot_every=20)
    result = simulate(config)
    center, row = config.nx // 2, config.ny // 2
    road = [snap.u[center] for snap in result.snapshots]
    field = [snap.v[center, row] for snap in result.snapshots]
    assert len(road) > 5
    assert np.all(np.diff(road) <= 1e-12)
    assert np.all(np.diff(field) <= 1e-12)
    assert road[-1] >= 1.0 - 1e-9
    assert field[-1] >= 1.0 - 1e-9


def test_center_converges_to_stationary_state(unit_params, limit_spec):
    config = SimConfig(params=unit_params, spec=limit_spec, lx=80.0, ly=5.0, nx=321, ny=21, t_end=20.0)
    result = simulate(config)
    assert not result.trace.truncated
    center = config.nx // 2
    final = result.snapshots[-1]
    assert final.u[center] == pytest.approx(result.stationary.u, abs=1e-2)
    assert np.max(np.abs(final.v[center] - result.stationary.v)) < 1e-2
    assert result.min_value >= -1e-12


@pytest.mark.slow
@pytest.mark.parametrize("big_d", [5.0, 1.0])
def test_simulated_front_speed_matches_dispersion(full_boxcar_spec, big_d):
    params = Params(d=1.0, big_d=big_d, growth=1.0, mu_bar=1.0, nu_bar=1.0)
    result = simulate(SimConfig(params=params, spec=full_boxcar_spec, t_end=40.0))
    c_star = spreading_speed(params, full_boxcar_spec).c_star
    if big_d <= 2:
        assert c_star == params.c_kpp()
    assert result.fit is not None
    assert result.fit.ballistic
    assert result.fit.r2 >= 0.99
    assert result.fit.speed == pytest.approx(c_star, rel=0.1)


@pytest.mark.slow
def test_simulated_speed_grows_with_road_diffusion(unit_params):
    speeds = []
    for big_d in (4.0, 8.0, 16.0):
        params = unit_params.replace(big_d=big_d)
        config = SimConfig(params=params, spec=ModelSpec.limit(params), lx=150.0, ly=10.0, nx=601, ny=81,
                           t_end=30.0)
        result = simulate(config)
        assert result.fit is not None
        speeds.append(result.fit.speed)
    assert speeds[0] <= speeds[1] <= speeds[2]
