import sys
from textwrap import dedent

import numpy as np
import pytest

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from src.model.core import sample_initial
from src.model.errors import ConfigError, InitialDataError, ParameterError
from src.utils.config import config_to_dict, dump_config, load_config, parse_config
from src.utils.expressions import compile_expression, parse_expression, x


@pytest.fixture
def write_config(tmp_path):
    """Write a TOML document to a temporary run.toml."""

    def write(text: str):
        path = tmp_path / "run.toml"
        path.write_text(dedent(text), encoding="utf-8")
        return path

    return write


def test_empty_document_uses_defaults():
    config = parse_config({})
    assert config.n == 64
    assert config.params.a == 1.0
    assert config.params.K == (1.0, 1.0)
    assert config.params.mu == ((1.0, 0.0), (0.0, 1.0))
    assert config.control.t_end == 1.0
    assert config.initial.preset == "smooth"
    assert config.output.stride is None
    assert config.coupling == "auto"
    assert config.mms.resolutions == (64, 128, 256)


def test_full_document(write_config):
    path = write_config(
        """
        [params]
        a = 2.0
        K = [1.0, 0.5]
        gamma = [1.4, 2.0]
        mu = [[1.0, 0.0], [0.3, 2.0]]

        [grid]
        n = 32

        [control]
        t_end = 0.5
        coupling = "block"
        drag_coupling = "full"

        [output]
        stride = 5
        """
    )
    config = load_config(path)
    assert config.params.gamma1 == 1.4
    assert config.params.mu[1] == (0.3, 2.0)
    assert config.grid.n == 32
    assert config.solver_options == {"coupling": "block", "drag_coupling": "full", "convection": "upwind"}
    assert config.control.t_end == 0.5
    assert config.output.stride == 5


def test_isothermal_exponent_is_rejected():
    with pytest.raises(ParameterError) as info:
        parse_config({"params": {"gamma": [1.0, 2.0]}})
    assert info.value.code == "exponent_too_small"


def test_expression_initial_data():
    config = parse_config(
        {"initial": {"rho01": "1 + 0.5*x", "rho02": "2", "u01": "sin(pi*x)", "u02": "0"}, "grid": {"n": 8}}
    )
    assert config.initial.preset is None
    state = sample_initial(config.initial_data(), config.grid)
    assert state.rho1[-1] == pytest.approx(1.5)
    np.testing.assert_allclose(state.rho2, 2.0)
    assert state.u1[4] == pytest.approx(1.0)


def test_expression_overrides_preset_field():
    config = parse_config({"initial": {"preset": "equilibrium", "u01": "0.1*sin(2*pi*x)"}})
    state = sample_initial(config.initial_data(), config.grid)
    assert state.rho1[10] == 1.0
    assert state.u1[16] == pytest.approx(0.1)


def test_nonpositive_initial_density_is_rejected():
    with pytest.raises(InitialDataError):
        parse_config({"initial": {"preset": "smooth", "rho01": "x - 0.5"}})


@pytest.mark.parametrize(
    "document, fragment",
    [
        ({"params": {"drag": 1.0}}, "unknown key params.drag"),
        ({"solver": {}}, "unknown section [solver]"),
        ({"grid": {"n": "64"}}, "grid.n: expected an integer"),
        ({"control": {"coupling": "jacobi"}}, "control.coupling: expected one of"),
        ({"output": {"stride": 0}}, "output.stride"),
        ({"mms": {"resolutions": [16, 32]}}, "at least 3 resolutions"),
        ({"galerkin": {"modes": [4], "n": [16, 32]}}, "galerkin.n"),
        ({"initial": {"preset": "vortex"}}, "unknown preset"),
    ],
)
def test_schema_violations(document, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(document)
    assert fragment in info.value.message
    assert info.value.exit_code == 2


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError) as info:
        load_config(tmp_path / "absent.toml")
    assert info.value.code == "missing_file"


def test_syntax_error_reports_line(write_config):
    path = write_config("[grid]\nn = = 4\n")
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert info.value.code == "parse_error"
    assert "line 2" in info.value.message


def test_resolved_config_round_trips():
    config = parse_config(
        {
            "params": {"mu": [[1.0, 0.0], [0.5, 1.0]]},
            "control": {"fixed_dt": 0.001, "convection": "central"},
            "uniqueness": {"eps": [0.1, 0.01]},
        }
    )
    text = dump_config(config)
    assert parse_config(tomllib.loads(text)) == config
    assert config_to_dict(config)["output"]["stride"] == "auto"
    assert "fixed_dt = 0.001" in text


def test_random_perturbation_modes_are_seeded():
    config = parse_config({"uniqueness": {"random_modes": 3}})
    nodes = np.linspace(0.0, 1.0, 9)
    first = config.uniqueness.perturbation(7).u01(nodes)
    again = config.uniqueness.perturbation(7).u01(nodes)
    other = config.uniqueness.perturbation(8).u01(nodes)
    np.testing.assert_array_equal(first, again)
    assert not np.array_equal(first, other)


class TestExpressions:
    def test_constant_is_broadcast(self):
        f = compile_expression("2")
        np.testing.assert_array_equal(f(np.zeros(4)), [2.0, 2.0, 2.0, 2.0])

    def test_power_operator(self):
        f = compile_expression("1 + x^2")
        assert f(np.array([3.0]))[0] == pytest.approx(10.0)

    def test_exp_and_e(self):
        assert float(parse_expression("exp(x) - e").subs(x, 1)) == pytest.approx(0.0)

    @pytest.mark.parametrize("text", ["", "y + 1", "log(x)", "__import__('os')", "lambda: 1", "sin(", "x +* 2"])
    def test_rejected(self, text):
        with pytest.raises(ConfigError) as info:
            parse_expression(text, "initial.u01")
        assert info.value.code == "bad_expression"
        assert "initial.u01" in info.value.message
