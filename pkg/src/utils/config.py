"""TOML run configuration: schema, defaults, validation and the resolved echo."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Union

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib  # type: ignore[no-redef]

import numpy as np
import tomli_w

from src.model.core import Grid, InitialData, MixtureParams, sample_fields, state_from_fields, validate_params
from src.model.errors import ConfigError
from src.model.solver import CONVECTIONS, COUPLINGS, DRAG_COUPLINGS, StepControl
from src.utils.expressions import compile_expression
from src.utils.presets import get_preset

logger = logging.getLogger(__name__)

FIELD_KEYS = ("rho01", "rho02", "u01", "u02")


@dataclass(frozen=True)
class InitialConfig:
    """A named preset, optionally overridden field by field with expressions over x."""

    preset: Optional[str] = "smooth"
    rho01: Optional[str] = None
    rho02: Optional[str] = None
    u01: Optional[str] = None
    u02: Optional[str] = None

    def build(self) -> InitialData:
        if self.preset is not None:
            base = get_preset(self.preset)
            specs = {k: getattr(base, k) for k in FIELD_KEYS}
            label = self.preset
        else:
            specs = {}
            label = "expressions"
        for key in FIELD_KEYS:
            text = getattr(self, key)
            if text is not None:
                specs[key] = compile_expression(text, f"initial.{key}")
        missing = [k for k in FIELD_KEYS if k not in specs]
        if missing:
            raise ConfigError(f"initial.{missing[0]}: required when no preset is given", code="missing_key")
        return InitialData(label=label, **specs)


@dataclass(frozen=True)
class MonitorConfig:
    energy: bool = True
    velocity: bool = True
    density: bool = True
    norms: bool = False
    log_density: bool = False
    lagrangian: bool = False
    tol_scale: float = 2.0


@dataclass(frozen=True)
class OutputConfig:
    stride: Optional[int] = None  # None keeps at most max_levels states
    max_levels: int = 1000
    seed: int = 0
    plots: bool = False


@dataclass(frozen=True)
class MmsConfig:
    case: str = "canonical"
    resolutions: Tuple[int, ...] = (64, 128, 256)
    t_end: float = 1.0
    dt_factor: float = 0.2
    convection: str = "upwind"
    min_order: float = 0.9


@dataclass(frozen=True)
class UniquenessConfig:
    eps: Tuple[float, ...] = (1e-2, 1e-3, 1e-4)
    delta_rho01: str = "0"
    delta_rho02: str = "0"
    delta_u01: str = "sin(pi*x)"
    delta_u02: str = "0"
    random_modes: int = 0
    max_spread: float = 2.0
    tol_scale: float = 5.0

    def perturbation(self, seed: int) -> InitialData:
        """Perturbation direction; random_modes > 0 adds a seeded sine series to both velocities."""
        specs = {k: compile_expression(getattr(self, f"delta_{k}"), f"uniqueness.delta_{k}") for k in FIELD_KEYS}
        if self.random_modes > 0:
            rng = np.random.default_rng(seed)
            for key in ("u01", "u02"):
                coefs = rng.normal(size=self.random_modes) / np.arange(1, self.random_modes + 1) ** 2
                specs[key] = _with_sine_series(specs[key], coefs)
        return InitialData(label="perturbation", **specs)


def _with_sine_series(f: Callable, coefs: np.ndarray) -> Callable:
    def g(x):
        k = np.arange(1, len(coefs) + 1)
        return f(x) + np.sin(np.pi * np.outer(x, k)) @ coefs

    return g


@dataclass(frozen=True)
class GalerkinConfig:
    preset: str = "gentle"
    modes: Tuple[int, ...] = (4, 8)
    n: Tuple[int, ...] = (16, 32)
    t_end: float = 0.05
    heat_t_end: float = 0.1
    heat_tolerance: float = 1e-6


@dataclass(frozen=True)
class RunConfig:
    params: MixtureParams
    n: int = 64
    control: StepControl = field(default_factory=StepControl)
    coupling: str = "auto"
    drag_coupling: str = "lagged"
    convection: str = "upwind"
    initial: InitialConfig = field(default_factory=InitialConfig)
    monitors: MonitorConfig = field(default_factory=MonitorConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    mms: MmsConfig = field(default_factory=MmsConfig)
    uniqueness: UniquenessConfig = field(default_factory=UniquenessConfig)
    galerkin: GalerkinConfig = field(default_factory=GalerkinConfig)

    @property
    def grid(self) -> Grid:
        return Grid(self.n)

    def initial_data(self) -> InitialData:
        return self.initial.build()

    @property
    def solver_options(self) -> Dict[str, str]:
        return {"coupling": self.coupling, "drag_coupling": self.drag_coupling, "convection": self.convection}


# converters


def _bool(key: str, value: Any) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{key}: expected true or false, got {value!r}", code="bad_value")
    return value


def _int(key: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key}: expected an integer, got {value!r}", code="bad_value")
    return value


def _float(key: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}", code="bad_value")
    return float(value)


def _str(key: str, value: Any) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"{key}: expected a string, got {value!r}", code="bad_value")
    return value


def _list(item: Callable[[str, Any], Any], length: Optional[int] = None) -> Callable[[str, Any], tuple]:
    def convert(key: str, value: Any) -> tuple:
        if not isinstance(value, list):
            raise ConfigError(f"{key}: expected a list, got {value!r}", code="bad_value")
        if length is not None and len(value) != length:
            raise ConfigError(f"{key}: expected {length} entries, got {len(value)}", code="bad_value")
        return tuple(item(key, v) for v in value)

    return convert


def _stride(key: str, value: Any) -> Optional[int]:
    if value == "auto":
        return None
    stride = _int(key, value)
    if stride < 1:
        raise ConfigError(f"{key}: must be >= 1 or \"auto\", got {stride}", code="bad_value")
    return stride


def _choice(options: Tuple[str, ...]) -> Callable[[str, Any], str]:
    def convert(key: str, value: Any) -> str:
        text = _str(key, value)
        if text not in options:
            raise ConfigError(f"{key}: expected one of {', '.join(options)}, got {text!r}", code="bad_value")
        return text

    return convert


_MATRIX = _list(_list(_float, 2), 2)

SCHEMA: Dict[str, Dict[str, Callable[[str, Any], Any]]] = {
    "params": {
        "a": _float,
        "K": _list(_float, 2),
        "gamma": _list(_float, 2),
        "mu": _MATRIX,
        "triangular_enforced": _bool,
    },
    "grid": {"n": _int},
    "control": {
        "cfl_safety": _float,
        "dt_max": _float,
        "t_end": _float,
        "drag_implicit": _bool,
        "density_floor": _float,
        "fixed_dt": _float,
        "coupling": _choice(COUPLINGS),
        "drag_coupling": _choice(DRAG_COUPLINGS),
        "convection": _choice(CONVECTIONS),
    },
    "initial": {"preset": _str, **{k: _str for k in FIELD_KEYS}},
    "monitors": {
        "energy": _bool,
        "velocity": _bool,
        "density": _bool,
        "norms": _bool,
        "log_density": _bool,
        "lagrangian": _bool,
        "tol_scale": _float,
    },
    "output": {"stride": _stride, "max_levels": _int, "seed": _int, "plots": _bool},
    "mms": {
        "case": _str,
        "resolutions": _list(_int),
        "t_end": _float,
        "dt_factor": _float,
        "convection": _choice(CONVECTIONS),
        "min_order": _float,
    },
    "uniqueness": {
        "eps": _list(_float),
        "delta_rho01": _str,
        "delta_rho02": _str,
        "delta_u01": _str,
        "delta_u02": _str,
        "random_modes": _int,
        "max_spread": _float,
        "tol_scale": _float,
    },
    "galerkin": {
        "preset": _str,
        "modes": _list(_int),
        "n": _list(_int),
        "t_end": _float,
        "heat_t_end": _float,
        "heat_tolerance": _float,
    },
}


def _read_sections(data: Dict[str, Any]) -> Dict[str, Dict[str, Any]]:
    sections: Dict[str, Dict[str, Any]] = {}
    for name, body in data.items():
        if name not in SCHEMA:
            raise ConfigError(f"unknown section [{name}]", code="unknown_key")
        if not isinstance(body, dict):
            raise ConfigError(f"{name}: expected a table", code="bad_value")
        converted = {}
        for key, value in body.items():
            if key not in SCHEMA[name]:
                raise ConfigError(f"unknown key {name}.{key}", code="unknown_key")
            converted[key] = SCHEMA[name][key](f"{name}.{key}", value)
        sections[name] = converted
    return sections


def parse_config(data: Dict[str, Any]) -> RunConfig:
    """Validate a parsed TOML document and fill the defaults.

    Raises:
        ConfigError: unknown sections or keys, wrong value types
        ParameterError: physical parameters or controls violating the standing hypotheses
        InitialDataError: initial data not admissible on the configured grid
    """
    s = _read_sections(data)
    p = s.get("params", {})
    K = p.get("K", (1.0, 1.0))
    gamma = p.get("gamma", (2.0, 2.0))
    params = validate_params(
        MixtureParams(
            a=p.get("a", 1.0),
            K1=K[0],
            K2=K[1],
            gamma1=gamma[0],
            gamma2=gamma[1],
            mu=p.get("mu", ((1.0, 0.0), (0.0, 1.0))),
            triangular_enforced=p.get("triangular_enforced", False),
        )
    )
    n = s.get("grid", {}).get("n", 64)
    grid = Grid(n)

    control = dict(s.get("control", {}))
    options = {k: control.pop(k) for k in ("coupling", "drag_coupling", "convection") if k in control}
    ctl = StepControl(**control)

    initial_section = dict(s.get("initial", {}))
    if "preset" not in initial_section and all(k in initial_section for k in FIELD_KEYS):
        initial_section["preset"] = None
    initial = InitialConfig(**initial_section)

    mms = MmsConfig(**s.get("mms", {}))
    if len(mms.resolutions) < 3:
        raise ConfigError("mms.resolutions: at least 3 resolutions are needed", code="bad_value")
    uniqueness = UniquenessConfig(**s.get("uniqueness", {}))
    if not uniqueness.eps or any(e < 0.0 for e in uniqueness.eps):
        raise ConfigError("uniqueness.eps: expected a non-empty list of non-negative numbers", code="bad_value")
    galerkin = GalerkinConfig(**s.get("galerkin", {}))
    if len(galerkin.modes) != len(galerkin.n):
        raise ConfigError("galerkin.n: must have as many entries as galerkin.modes", code="bad_value")

    config = RunConfig(
        params=params,
        n=n,
        control=ctl,
        initial=initial,
        monitors=MonitorConfig(**s.get("monitors", {})),
        output=OutputConfig(**s.get("output", {})),
        mms=mms,
        uniqueness=uniqueness,
        galerkin=galerkin,
        **options,
    )
    # every referenced preset and expression must evaluate to admissible data
    state_from_fields(*sample_fields(config.initial_data(), grid), density_floor=ctl.density_floor)
    uniqueness.perturbation(config.output.seed)
    get_preset(galerkin.preset)
    return config


def load_config(path: Union[str, Path]) -> RunConfig:
    """Read and validate a TOML configuration file.

    Raises:
        ConfigError: missing file, TOML syntax error (with line number) or schema violation
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError(f"configuration file not found: {path}", code="missing_file") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}", code="parse_error") from exc
    config = parse_config(data)
    logger.info("loaded configuration %s (n = %d, t_end = %g)", path, config.n, config.control.t_end)
    return config


def config_to_dict(config: RunConfig) -> Dict[str, Dict[str, Any]]:
    """Fully resolved configuration as TOML-ready tables (None values are omitted)."""
    p = config.params
    ctl = config.control
    control: Dict[str, Any] = {
        "cfl_safety": ctl.cfl_safety,
        "dt_max": ctl.dt_max,
        "t_end": ctl.t_end,
        "drag_implicit": ctl.drag_implicit,
        "density_floor": ctl.density_floor,
        "coupling": config.coupling,
        "drag_coupling": config.drag_coupling,
        "convection": config.convection,
    }
    if ctl.fixed_dt is not None:
        control["fixed_dt"] = ctl.fixed_dt
    initial = {k: v for k, v in vars(config.initial).items() if v is not None}
    output = dict(vars(config.output))
    output["stride"] = "auto" if config.output.stride is None else config.output.stride
    return {
        "params": {
            "a": p.a,
            "K": list(p.K),
            "gamma": list(p.gamma),
            "mu": [list(row) for row in p.mu],
            "triangular_enforced": p.triangular_enforced,
        },
        "grid": {"n": config.n},
        "control": control,
        "initial": initial,
        "monitors": dict(vars(config.monitors)),
        "output": output,
        "mms": {k: list(v) if isinstance(v, tuple) else v for k, v in vars(config.mms).items()},
        "uniqueness": {k: list(v) if isinstance(v, tuple) else v for k, v in vars(config.uniqueness).items()},
        "galerkin": {k: list(v) if isinstance(v, tuple) else v for k, v in vars(config.galerkin).items()},
    }


def dump_config(config: RunConfig) -> str:
    return tomli_w.dumps(config_to_dict(config))
