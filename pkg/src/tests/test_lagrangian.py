import numpy as np
import pytest

from src.model.core import Grid, State, sample_initial
from src.model.errors import ParameterError, VacuumError
from src.model.lagrangian import (
    build_chart,
    chart_frame,
    lagrangian_report,
    mean_value_point,
    resample,
    transformed_energy,
    transformed_residual,
    verify_transformed_energy,
)
from src.model.solver import StepControl, run, step
from src.utils.presets import get_preset


def _linear_density_state(n: int) -> State:
    x = np.linspace(0.0, 1.0, n + 1)
    return State(0.0, 0.5 + x, np.full(n + 1, 2.0), np.sin(np.pi * x), 0.0 * x)


def test_chart_of_constant_density_is_scaled_identity(constant_state):
    chart = build_chart(constant_state(16, rho=2.0), 1)
    assert chart.d_m == pytest.approx(2.0)
    np.testing.assert_allclose(chart.y_nodes, 2.0 * chart.x_nodes, atol=1e-14)
    assert chart.inverse(1.0) == pytest.approx(0.5)
    assert chart.forward(0.25) == pytest.approx(0.5)


def test_chart_of_linear_density():
    """rho = 1/2 + x gives y = x/2 + x^2/2, exactly integrated by the trapezoid rule."""
    state = _linear_density_state(20)
    chart = build_chart(state, 1)
    x = chart.x_nodes
    np.testing.assert_allclose(chart.y_nodes, 0.5 * x + 0.5 * x**2, atol=1e-14)
    assert chart.d_m == pytest.approx(1.0)
    assert np.all(np.diff(chart.y_nodes) > 0.0)


def test_chart_requires_positive_density(constant_state):
    with pytest.raises(VacuumError) as info:
        build_chart(constant_state(8, rho=0.0), 2)
    assert info.value.code == "nonpositive_density"


def test_unknown_resampling_method(constant_state):
    with pytest.raises(ParameterError):
        build_chart(constant_state(8), 1, method="spline")


@pytest.mark.parametrize("method", ["linear", "pchip"])
def test_resample_on_identity_chart_returns_nodal_values(method, constant_state):
    state = constant_state(16)
    field = np.cos(np.pi * state.grid.nodes)
    chart = build_chart(state, 1, method)
    np.testing.assert_allclose(resample(field, chart, 16, method), field, atol=1e-12)


def test_resample_onto_shorter_mass_grid(constant_state):
    state = constant_state(16)
    chart = build_chart(state, 1)
    values = resample(np.asarray(state.grid.nodes), chart, 4, d=0.5)
    np.testing.assert_allclose(values, np.linspace(0.0, 0.5, 5), atol=1e-14)


def test_transformed_energy_matches_at_rest(params, constant_state):
    state = constant_state(16, rho=1.5)
    assert transformed_energy(state, params, 1) == pytest.approx(2.0 * 1.5**2, rel=1e-12)
    assert verify_transformed_energy(state, params, 2) < 1e-12


def test_transformed_energy_error_shrinks_with_refinement(params):
    """The change-of-variables residual is an interpolation error of order h^2."""
    coarse = verify_transformed_energy(sample_initial(get_preset("smooth"), Grid(32)), params, 1)
    fine = verify_transformed_energy(sample_initial(get_preset("smooth"), Grid(128)), params, 1)
    assert fine < coarse / 4.0
    assert coarse < 50.0 / 32**2


def test_resample_converges_at_second_order():
    """rho = 1 + x gives y = x + x^2/2, so u = sin(pi x) reads sin(pi (sqrt(1 + 2y) - 1)) on the mass grid."""
    errors = []
    for n in (16, 32, 64):
        x = np.linspace(0.0, 1.0, n + 1)
        state = State(0.0, 1.0 + x, 1.0 + x, np.sin(np.pi * x), 0.0 * x)
        chart = build_chart(state, 1)
        y = chart.y_grid(n)
        exact = np.sin(np.pi * (np.sqrt(1.0 + 2.0 * y) - 1.0))
        errors.append(float(np.max(np.abs(resample(state.u1, chart, n) - exact))))
    assert errors[0] < 5e-3
    assert errors[0] / errors[1] > 3.0
    assert errors[1] / errors[2] > 3.0


def test_mean_value_point_of_linear_density():
    assert mean_value_point(_linear_density_state(20), 1) == pytest.approx(0.5, abs=1e-12)


def test_mean_value_point_of_decreasing_density():
    """rho = 2 - x has mean 3/2, reached at the midpoint."""
    x = np.linspace(0.0, 1.0, 21)
    state = State(0.0, 2.0 - x, 2.0 - x, 0 * x, 0 * x)
    assert mean_value_point(state, 1) == pytest.approx(0.5, abs=1e-12)
    assert mean_value_point(state, 2) == pytest.approx(0.5, abs=1e-12)


def test_mean_value_point_of_constant_density_is_left_end(constant_state):
    assert mean_value_point(constant_state(16, rho=3.0), 2) == 0.0


def test_mean_value_point_interpolates_inside_cell():
    x = np.linspace(0.0, 1.0, 5)
    rho = np.where(x < 0.4, 1.0, 3.0)
    state = State(0.0, rho, rho, 0 * x, 0 * x)
    s = mean_value_point(state, 1)
    # d = 2.25 lies between the nodes 0.25 and 0.5
    assert 0.25 < s < 0.5
    assert np.interp(s, x, rho) == pytest.approx(2.25)


def test_transformed_residual_vanishes_at_rest(params, constant_state):
    res = transformed_residual(constant_state(16), constant_state(16, t=0.1), params, 1, 2)
    assert res.nonconservative == 0.0
    assert res.divergence == 0.0


def test_transformed_residual_of_a_solver_step(params):
    grid = Grid(64)
    prev = sample_initial(get_preset("gentle"), grid)
    curr = step(prev, params, 1e-3)
    own = transformed_residual(prev, curr, params, 1, 1)
    # rho_1 / rho_1 = 1 with no relative flux
    assert own.divergence == 0.0
    assert own.nonconservative < 1e-2
    other = transformed_residual(prev, curr, params, 1, 2)
    assert other.nonconservative < 1e-2
    assert other.divergence < 1e-2


def test_transformed_residual_shrinks_under_joint_refinement(params):
    """One solver step with dt proportional to h: the residual is O(h + dt)."""
    residuals = []
    for n in (32, 64, 128):
        grid = Grid(n)
        prev = sample_initial(get_preset("smooth"), grid)
        curr = step(prev, params, 0.2 * grid.h)
        residuals.append(transformed_residual(prev, curr, params, 1, 2).nonconservative)
    assert residuals[0] > residuals[1] > residuals[2]


def test_transformed_residual_needs_increasing_time(params, constant_state):
    with pytest.raises(ParameterError):
        transformed_residual(constant_state(8), constant_state(8), params, 1, 2)


def test_chart_frame_columns(smooth_state):
    frame = chart_frame(smooth_state, 2, n_y=10)
    assert list(frame.columns) == ["t", "coordinate", "y", "x", "rho1", "rho2", "u1", "u2"]
    assert len(frame) == 11
    assert set(frame["coordinate"]) == {"y2"}
    assert frame["x"].iloc[0] == pytest.approx(0.0)
    assert frame["x"].iloc[-1] == pytest.approx(1.0)


def test_lagrangian_report_on_smooth_run(params, smooth_state):
    traj = run(smooth_state, params, StepControl(t_end=0.1), smooth_state.grid)
    entries = {e.name: e for e in lagrangian_report(traj, params)}
    assert set(entries) == {
        "mass_drift_rho1",
        "mass_drift_rho2",
        "transformed_energy_y1",
        "transformed_energy_y2",
        "mean_value_point_rho1",
        "mean_value_point_rho2",
        "transformed_continuity_y1",
        "transformed_continuity_y2",
        "transformed_divergence_y1",
        "transformed_divergence_y2",
    }
    assert entries["mass_drift_rho1"].observed < 1e-8
    assert entries["transformed_divergence_y1"].observed > 0.0
    assert all(e.passed for e in entries.values())


def test_lagrangian_report_at_rest(params, equilibrium_state):
    traj = run(equilibrium_state, params, StepControl(t_end=0.01), equilibrium_state.grid)
    assert all(e.passed for e in lagrangian_report(traj, params))
