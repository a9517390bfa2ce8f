"""Named initial data."""

from typing import Callable, Dict

import numpy as np

from src.model.core import InitialData
from src.model.errors import ConfigError


def _const(value: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: np.full_like(x, value, dtype=float)


def equilibrium() -> InitialData:
    """Constant densities at rest."""
    return InitialData(_const(1.0), _const(1.0), _const(0.0), _const(0.0), label="equilibrium")


def smooth() -> InitialData:
    return InitialData(
        rho01=lambda x: 1.0 + 0.5 * np.sin(2.0 * np.pi * x),
        rho02=lambda x: 1.0 + 0.3 * np.cos(np.pi * x),
        u01=lambda x: np.sin(np.pi * x),
        u02=lambda x: -0.5 * np.sin(2.0 * np.pi * x),
        label="smooth",
    )


def canonical() -> InitialData:
    """t = 0 slice of the canonical manufactured solution."""
    return InitialData(
        rho01=lambda x: 2.0 + 0.1 * np.sin(2.0 * np.pi * x),
        rho02=lambda x: 2.0 + 0.1 * np.sin(2.0 * np.pi * x),
        u01=_const(0.0),
        u02=_const(0.0),
        label="canonical",
    )


def gentle() -> InitialData:
    """Uniform densities with a small first velocity."""
    return InitialData(_const(1.0), _const(1.0), lambda x: 0.01 * np.sin(np.pi * x), _const(0.0), label="gentle")


def heat_mode() -> InitialData:
    return InitialData(_const(1.0), _const(1.0), lambda x: np.sin(np.pi * x), _const(0.0), label="heat_mode")


def cavitation() -> InitialData:
    """Near-vacuum centre with a sharp outflow around it.

    On grids with a node at x = 0.5 the two neighbouring velocities are close
    to the largest speed, so one CFL step drains the centre by a factor of
    1 - cfl_safety and the default floor is crossed on the first step.
    """
    return InitialData(
        rho01=lambda x: 1.5e-12 + 100.0 * (x - 0.5) ** 2,
        rho02=lambda x: 1.5e-12 + 100.0 * (x - 0.5) ** 2,
        u01=_outflow,
        u02=_outflow,
        label="cavitation",
    )


def _outflow(x: np.ndarray) -> np.ndarray:
    return 100.0 * np.tanh((x - 0.5) / 1e-4) * np.sin(np.pi * x)


PRESETS: Dict[str, Callable[[], InitialData]] = {
    "equilibrium": equilibrium,
    "smooth": smooth,
    "canonical": canonical,
    "gentle": gentle,
    "heat_mode": heat_mode,
    "cavitation": cavitation,
}


def get_preset(name: str) -> InitialData:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r} (choose from {', '.join(sorted(PRESETS))})", code="unknown_preset")
    return PRESETS[name]()
