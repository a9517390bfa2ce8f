import math

import numpy as np
import pytest

from src.model.core import Grid, InitialData, sample_initial
from src.model.errors import ParameterError, SamplingError
from src.model.solver import StepControl, run
from src.utils.presets import get_preset
from src.verification.galerkin import (
    SineBasis,
    fd_heat_mode_error,
    galerkin_compare,
    galerkin_solve,
    heat_mode_error,
    l2_distance,
)
from src.verification.mms import canonical_case, check_sources, equilibrium_case, get_case, mms_convergence
from src.verification.uniqueness import (
    COEFFICIENT_COLUMNS,
    assemble_gronwall_coefficient,
    difference_functionals,
    gronwall_bound_check,
    perturbed_initial,
    ratio_spread,
    uniqueness_experiment,
)


def _zero(x):
    return np.zeros_like(x)


VELOCITY_KICK = InitialData(_zero, _zero, lambda x: np.sin(np.pi * x), _zero, label="kick")


class TestManufacturedSolutions:
    def test_sources_match_finite_differences(self):
        assert check_sources(canonical_case()) < 1e-5

    def test_equilibrium_sources_vanish(self):
        case = equilibrium_case()
        for source in case.forcing(np.linspace(0.0, 1.0, 5), 0.3):
            assert np.all(source == 0.0)

    def test_exact_fields_satisfy_the_walls(self):
        grid = Grid(16)
        state = canonical_case().initial_state(grid)
        assert state.u1[0] == 0.0 and state.u2[-1] == 0.0
        np.testing.assert_allclose(state.rho1, 2.0 + 0.1 * np.sin(2 * np.pi * grid.nodes))

    def test_unknown_case(self):
        with pytest.raises(ParameterError):
            get_case("vortex")

    def test_needs_three_resolutions(self):
        with pytest.raises(ParameterError):
            mms_convergence(equilibrium_case(), (16, 32))

    def test_equilibrium_is_reproduced_exactly(self):
        result = mms_convergence(equilibrium_case(), (8, 16, 32), t_end=0.1)
        assert (result.table["err"] == 0.0).all()
        assert math.isinf(result.order)

    @pytest.mark.parametrize("convection", ["upwind", "central"])
    def test_canonical_case_converges_at_first_order(self, convection):
        result = mms_convergence(canonical_case(), (32, 64, 128), t_end=0.25, convection=convection)
        assert list(result.table.columns) == ["n", "h", "dt", "err_rho1", "err_rho2", "err_u1", "err_u2", "err", "order"]
        errors = result.table["err"].to_numpy()
        assert np.all(np.diff(errors) < 0.0)
        assert result.order >= 0.9


class TestGalerkin:
    def test_sine_basis_projection(self):
        nodes = np.linspace(0.0, 1.0, 65)
        basis = SineBasis(3, nodes)
        f = 2.0 * np.sin(np.pi * nodes) - 0.5 * np.sin(3 * np.pi * nodes)
        np.testing.assert_allclose(basis.project(f), [2.0, 0.0, -0.5], atol=1e-12)

    def test_equilibrium_stays_at_rest(self, params, equilibrium_state):
        traj = galerkin_solve(equilibrium_state, params, 4, 0.1)
        assert len(traj) == 11
        for state in traj.states:
            np.testing.assert_allclose(state.u1, 0.0, atol=1e-10)
            np.testing.assert_allclose(state.rho2, 1.0, atol=1e-10)

    def test_heat_mode_decays_exactly(self):
        assert heat_mode_error() < 1e-6

    def test_finite_difference_heat_mode_converges(self):
        coarse = fd_heat_mode_error(n=32)
        fine = fd_heat_mode_error(n=64)
        assert fine < coarse < 0.05
        assert coarse / fine > 1.6

    def test_rejects_zero_modes(self, params, equilibrium_state):
        with pytest.raises(ParameterError):
            galerkin_solve(equilibrium_state, params, 0, 0.1)

    def test_distance_to_finite_differences_shrinks(self, params):
        table = galerkin_compare(get_preset("gentle"), params, [(4, 16), (8, 32)], 0.05)
        assert list(table.columns) == ["modes", "n", "distance"]
        distances = table["distance"].to_numpy()
        assert distances[1] < distances[0]

    def test_l2_distance_of_identical_states(self, smooth_state):
        assert l2_distance(smooth_state, smooth_state) == 0.0


class TestUniqueness:
    @pytest.fixture
    def ctl(self):
        return StepControl(t_end=0.1)

    def test_perturbed_initial_pins_walls(self, grid):
        state = perturbed_initial(get_preset("smooth"), VELOCITY_KICK, 0.1, grid)
        base = sample_initial(get_preset("smooth"), grid)
        np.testing.assert_allclose(state.u1 - base.u1, 0.1 * np.sin(np.pi * grid.nodes), atol=1e-14)
        assert state.u1[-1] == 0.0

    def test_zero_perturbation_gives_zero_functionals(self, params, ctl, grid):
        table, pairs = uniqueness_experiment(get_preset("smooth"), VELOCITY_KICK, [0.0], params, ctl, grid)
        assert table.loc[0, "sup_total"] == 0.0
        assert math.isnan(table.loc[0, "ratio"])
        reference, other, funcs = pairs[0.0]
        entry = gronwall_bound_check(funcs, (reference, other), params)
        assert entry.observed == 0.0
        assert entry.passed

    def test_functionals_scale_quadratically(self, params, ctl, grid):
        eps_list = [1e-2, 1e-3, 1e-4]
        table, pairs = uniqueness_experiment(get_preset("smooth"), VELOCITY_KICK, eps_list, params, ctl, grid)
        ratios = table["ratio"].to_numpy()
        assert ratios.max() / ratios.min() < 2.0
        funcs = pairs[1e-3][2]
        assert funcs.eta11[0] == 0.0 and funcs.eta12[0] == 0.0
        assert funcs.eta2[0] > 0.0
        assert np.all(np.diff(funcs.eta3) >= 0.0)

    def test_gronwall_integral_form_holds(self, params, ctl, grid):
        _, pairs = uniqueness_experiment(get_preset("smooth"), VELOCITY_KICK, [1e-3], params, ctl, grid)
        reference, other, funcs = pairs[1e-3]
        coefficient = assemble_gronwall_coefficient(reference, other, funcs, params)
        assert list(coefficient.columns) == COEFFICIENT_COLUMNS
        assert len(coefficient) == len(reference)
        entry = gronwall_bound_check(funcs, (reference, other), params)
        assert entry.name == "gronwall_integral_form"
        assert entry.passed

    @pytest.mark.parametrize(
        "ratios, spread",
        [([0.0, 0.0, 0.0], 1.0), ([], 1.0), ([2.0, 1.0, 1.5], 2.0), ([0.0, 1.0], math.inf)],
    )
    def test_ratio_spread(self, ratios, spread):
        assert ratio_spread(np.array(ratios)) == spread

    def test_mismatched_times_are_rejected(self, params, smooth_state):
        grid = smooth_state.grid
        first = run(smooth_state, params, StepControl(t_end=0.02, fixed_dt=0.01), grid)
        second = run(smooth_state, params, StepControl(t_end=0.02, fixed_dt=0.005), grid)
        with pytest.raises(SamplingError):
            difference_functionals(first, second, params)
