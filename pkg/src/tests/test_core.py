import logging

import numpy as np
import pytest

from src.model.core import (
    Grid,
    InitialData,
    MixtureParams,
    State,
    compute_M0,
    sample_initial,
    state_from_fields,
    validate_params,
)
from src.model.errors import InitialDataError, ParameterError


def _params(**overrides):
    values = dict(a=1.0, K1=1.0, K2=1.0, gamma1=2.0, gamma2=2.0, mu=((1.0, 0.0), (0.0, 1.0)))
    values.update(overrides)
    return MixtureParams(**values)


def test_m0_of_identity_is_one():
    """The identity viscosity matrix has coercivity constant 1."""
    assert compute_M0(((1.0, 0.0), (0.0, 1.0))) == pytest.approx(1.0)


def test_m0_uses_symmetric_part():
    """Only the symmetric part contributes to (mu xi, xi)."""
    # symmetric part [[1, 0.25], [0.25, 1]] has eigenvalues 0.75 and 1.25
    assert compute_M0(((1.0, 0.0), (0.5, 1.0))) == pytest.approx(0.75)


@pytest.mark.parametrize("mu", [((1.0, 0.0), (0.5, 1.0)), ((2.0, 0.3), (-0.1, 1.5)), ((1.0, 0.0), (0.0, 3.0))])
def test_m0_is_a_coercivity_constant(mu):
    m0 = compute_M0(mu)
    assert compute_M0(np.transpose(mu)) == pytest.approx(m0, abs=1e-15)
    xi = np.random.default_rng(0).normal(size=(1000, 2))
    quadratic = np.einsum("ki,ij,kj->k", xi, np.asarray(mu), xi)
    assert np.all(quadratic >= m0 * np.sum(xi**2, axis=1) - 1e-12)


@pytest.mark.parametrize(
    "overrides, code",
    [
        ({"a": 0.0}, "drag_nonpositive"),
        ({"K2": -1.0}, "pressure_nonpositive"),
        ({"gamma1": 1.0}, "exponent_too_small"),
        ({"mu": ((1.0, 2.0), (2.0, 1.0))}, "not_positive_definite"),
        ({"mu": ((1.0, 0.1), (0.0, 1.0)), "triangular_enforced": True}, "triangular_required"),
    ],
)
def test_validate_rejects_bad_parameters(overrides, code):
    """Each standing hypothesis has its own error code."""
    with pytest.raises(ParameterError) as info:
        validate_params(_params(**overrides))
    assert info.value.code == code


def test_validate_reports_adiabatic_exponent():
    with pytest.raises(ParameterError, match="adiabatic exponent must exceed 1"):
        validate_params(_params(gamma1=1.0))


def test_validate_is_idempotent():
    """Validating twice returns an equal record."""
    p = validate_params(_params())
    assert validate_params(p) == p
    assert p.M0 == pytest.approx(1.0)


def test_non_triangular_matrix_warns(caplog):
    """mu12 != 0 is accepted with a warning unless triangularity is enforced."""
    with caplog.at_level(logging.WARNING, logger="src.model.core"):
        p = validate_params(_params(mu=((1.0, 0.2), (0.0, 1.0))))
    assert p.outside_theorem
    assert "non-triangular" in caplog.text


def test_grid_rejects_too_few_cells():
    with pytest.raises(ParameterError):
        Grid(3)


def test_grid_weights_integrate_constants():
    grid = Grid(10)
    assert grid.weights.sum() == pytest.approx(1.0)
    assert grid.nodes[0] == 0.0 and grid.nodes[-1] == 1.0
    assert grid.h == pytest.approx(0.1)


def test_sample_initial_pins_boundary_velocities():
    """Velocities are exactly zero at both walls even when the data is not."""
    data = InitialData(
        rho01=lambda x: 1.0 + x,
        rho02=lambda x: 2.0 - x,
        u01=lambda x: np.sin(np.pi * x),
        u02=lambda x: 1.0 + 0 * x,
    )
    state = sample_initial(data, Grid(16))
    for u in state.u:
        assert u[0] == 0.0 and u[-1] == 0.0
    np.testing.assert_allclose(state.rho1, 1.0 + state.grid.nodes)
    assert state.u2[5] == 1.0


def test_sample_initial_rejects_nonpositive_density():
    data = InitialData(lambda x: x, lambda x: 1.0 + x, lambda x: 0 * x, lambda x: 0 * x)
    with pytest.raises(InitialDataError) as info:
        sample_initial(data, Grid(8))
    assert info.value.code == "nonpositive_density"
    assert info.value.exit_code == 2


def test_tabulated_data_must_match_grid():
    data = InitialData(np.ones(5), np.ones(9), np.zeros(9), np.zeros(9))
    with pytest.raises(InitialDataError):
        sample_initial(data, Grid(8))


def test_state_arrays_are_read_only(smooth_state):
    with pytest.raises(ValueError):
        smooth_state.rho1[3] = 0.0


def test_state_swap_relabels_components(smooth_state):
    swapped = smooth_state.swapped()
    assert np.array_equal(swapped.rho1, smooth_state.rho2)
    assert np.array_equal(swapped.u2, smooth_state.u1)
    assert swapped.swapped().same_fields(smooth_state)


def test_state_rejects_mismatched_shapes():
    with pytest.raises(ParameterError):
        State(0.0, np.ones(9), np.ones(8), np.zeros(9), np.zeros(9))


def test_state_from_fields_respects_floor():
    ones = np.ones(9)
    with pytest.raises(InitialDataError):
        state_from_fields(1e-13 * ones, ones, 0 * ones, 0 * ones)
