"""Physical parameters, grid and state records shared by the whole package."""

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Sequence, Tuple, Union

import numpy as np

from src.model.errors import InitialDataError, ParameterError

logger = logging.getLogger(__name__)

DENSITY_FLOOR = 1e-12
MIN_CELLS = 4

Matrix2 = Tuple[Tuple[float, float], Tuple[float, float]]
FieldSpec = Union[Callable[[np.ndarray], np.ndarray], Sequence[float], np.ndarray]


def _as_matrix(mu) -> np.ndarray:
    arr = np.asarray(mu, dtype=float)
    if arr.shape != (2, 2):
        raise ParameterError(f"viscosity matrix must be 2x2, got shape {arr.shape}", code="bad_shape")
    if not np.all(np.isfinite(arr)):
        raise ParameterError("viscosity matrix must be finite", code="bad_shape")
    return arr


def compute_M0(mu) -> float:
    """Coercivity constant of the viscosity matrix.

    The largest M0 with (mu xi, xi) >= M0 |xi|^2 is the smallest eigenvalue of
    the symmetric part (mu + mu^T) / 2.

    Args:
        mu: 2x2 viscosity matrix, row i and column j holding mu_ij

    Returns:
        float: the coercivity constant

    Raises:
        ParameterError: if the matrix is not positive definite
    """
    arr = _as_matrix(mu)
    sym = 0.5 * (arr + arr.T)
    m0 = float(np.linalg.eigvalsh(sym)[0])
    if m0 <= 0.0:
        raise ParameterError(
            f"viscosity matrix must be positive definite (M0 = {m0:.6g})",
            code="not_positive_definite",
        )
    return m0


@dataclass(frozen=True)
class MixtureParams:
    """Physical constants of the two-component mixture.

    The record is a raw value; `validate_params` checks the standing hypotheses.
    Unvalidated records (for example K = 0) are allowed for test modes.
    """

    a: float
    K1: float
    K2: float
    gamma1: float
    gamma2: float
    mu: Matrix2 = ((1.0, 0.0), (0.0, 1.0))
    triangular_enforced: bool = False

    def __post_init__(self):
        arr = _as_matrix(self.mu)
        object.__setattr__(self, "mu", tuple(tuple(float(v) for v in row) for row in arr))
        for name in ("a", "K1", "K2", "gamma1", "gamma2"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @cached_property
    def M0(self) -> float:
        return compute_M0(self.mu)

    @property
    def K(self) -> Tuple[float, float]:
        return (self.K1, self.K2)

    @property
    def gamma(self) -> Tuple[float, float]:
        return (self.gamma1, self.gamma2)

    @property
    def mu_matrix(self) -> np.ndarray:
        return np.array(self.mu, dtype=float)

    @property
    def is_triangular(self) -> bool:
        return self.mu[0][1] == 0.0

    @property
    def outside_theorem(self) -> bool:
        """True when mu_12 != 0: no existence/uniqueness guarantee is inherited."""
        return not self.is_triangular

    def swapped(self) -> "MixtureParams":
        """Relabel the components (1 <-> 2)."""
        (m11, m12), (m21, m22) = self.mu
        return MixtureParams(
            a=self.a,
            K1=self.K2,
            K2=self.K1,
            gamma1=self.gamma2,
            gamma2=self.gamma1,
            mu=((m22, m21), (m12, m11)),
            triangular_enforced=False,
        )


def validate_params(params: MixtureParams) -> MixtureParams:
    """Check the standing hypotheses a > 0, K_i > 0, gamma_i > 1, M > 0.

    Validation is idempotent: the record is immutable and returned unchanged
    once every check passes (with M0 computed and cached).
    """
    if not params.a > 0:
        raise ParameterError("drag must be positive", code="drag_nonpositive")
    for i, k in enumerate(params.K, start=1):
        if not k > 0:
            raise ParameterError(f"pressure coefficient K{i} must be positive", code="pressure_nonpositive")
    for i, g in enumerate(params.gamma, start=1):
        if not g > 1:
            raise ParameterError(f"adiabatic exponent must exceed 1 (gamma{i} = {g:g})", code="exponent_too_small")
    _ = params.M0  # raises not_positive_definite
    if params.outside_theorem:
        if params.triangular_enforced:
            raise ParameterError("mu12 must vanish when triangular_enforced is set", code="triangular_required")
        logger.warning(
            "mu12 = %g != 0: non-triangular viscosity matrix, outside the uniqueness guarantee", params.mu[0][1]
        )
    return params


@dataclass(frozen=True)
class Grid:
    """Uniform collocated grid on [0, 1] with n cells and n + 1 nodes."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < MIN_CELLS:
            raise ParameterError(f"grid needs at least {MIN_CELLS} cells, got n = {self.n}", code="grid_too_small")
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        x = np.linspace(0.0, 1.0, self.n + 1)
        x.flags.writeable = False
        return x

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights."""
        w = np.full(self.n + 1, self.h)
        w[0] = w[-1] = 0.5 * self.h
        w.flags.writeable = False
        return w


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class State:
    """Nodal values of (rho1, rho2, u1, u2) at one time level."""

    t: float
    rho1: np.ndarray
    rho2: np.ndarray
    u1: np.ndarray
    u2: np.ndarray

    def __post_init__(self):
        arrays = [_frozen(getattr(self, name)) for name in ("rho1", "rho2", "u1", "u2")]
        shapes = {arr.shape for arr in arrays}
        if len(shapes) != 1 or arrays[0].ndim != 1 or arrays[0].size < MIN_CELLS + 1:
            raise ParameterError(f"state arrays must be 1-D of equal length >= {MIN_CELLS + 1}", code="bad_shape")
        for name, arr in zip(("rho1", "rho2", "u1", "u2"), arrays):
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "t", float(self.t))

    @property
    def n(self) -> int:
        return self.rho1.size - 1

    @property
    def grid(self) -> Grid:
        return Grid(self.n)

    @property
    def rho(self) -> Tuple[np.ndarray, np.ndarray]:
        return (self.rho1, self.rho2)

    @property
    def u(self) -> Tuple[np.ndarray, np.ndarray]:
        return (self.u1, self.u2)

    def density(self, m: int) -> np.ndarray:
        return self.rho[_index(m)]

    def velocity(self, m: int) -> np.ndarray:
        return self.u[_index(m)]

    def min_density(self) -> float:
        return float(min(self.rho1.min(), self.rho2.min()))

    def with_time(self, t: float) -> "State":
        return replace(self, t=t)

    def swapped(self) -> "State":
        return State(self.t, self.rho2, self.rho1, self.u2, self.u1)

    def same_fields(self, other: "State") -> bool:
        """Bit-for-bit comparison of the four nodal arrays."""
        return all(np.array_equal(a, b) for a, b in zip(self.fields(), other.fields()))

    def fields(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return (self.rho1, self.rho2, self.u1, self.u2)


def _index(m: int) -> int:
    if m not in (1, 2):
        raise ValueError(f"component index must be 1 or 2, got {m}")
    return m - 1


@dataclass(frozen=True)
class InitialData:
    """Initial densities and velocities, as callables of x or nodal arrays."""

    rho01: FieldSpec
    rho02: FieldSpec
    u01: FieldSpec
    u02: FieldSpec
    label: str = field(default="custom", compare=False)


def _evaluate(spec: FieldSpec, nodes: np.ndarray, name: str) -> np.ndarray:
    if callable(spec):
        values = np.asarray(spec(nodes), dtype=float)
        values = np.broadcast_to(values, nodes.shape).copy()
    else:
        values = np.array(spec, dtype=float)
        if values.shape != nodes.shape:
            raise InitialDataError(
                f"{name}: tabulated data has {values.size} values, grid has {nodes.size} nodes", code="bad_shape"
            )
    if not np.all(np.isfinite(values)):
        raise InitialDataError(f"{name}: initial data must be finite on [0, 1]", code="non_finite")
    return values


def sample_fields(data: InitialData, grid: Grid) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Evaluate the four initial fields at the grid nodes without any admissibility check."""
    x = grid.nodes
    return (
        _evaluate(data.rho01, x, "rho01"),
        _evaluate(data.rho02, x, "rho02"),
        _evaluate(data.u01, x, "u01"),
        _evaluate(data.u02, x, "u02"),
    )


def state_from_fields(rho1, rho2, u1, u2, t: float = 0.0, density_floor: float = DENSITY_FLOOR) -> State:
    """Build an admissible State: endpoint velocities pinned to zero, densities checked."""
    u1 = np.array(u1, dtype=float)
    u2 = np.array(u2, dtype=float)
    u1[0] = u1[-1] = 0.0
    u2[0] = u2[-1] = 0.0
    for i, rho in enumerate((rho1, rho2), start=1):
        low = float(np.min(rho))
        if not low > density_floor:
            raise InitialDataError(
                f"initial density rho0{i} must be positive (min = {low:.6g})", code="nonpositive_density"
            )
    return State(t, rho1, rho2, u1, u2)


def sample_initial(data: InitialData, grid: Grid, density_floor: float = DENSITY_FLOOR) -> State:
    """Sample initial data onto the grid at t = 0.

    Args:
        data: closed-form or tabulated initial data
        grid: target grid
        density_floor: densities at or below this value are rejected

    Returns:
        State: admissible state at t = 0 with exactly zero endpoint velocities
    """
    return state_from_fields(*sample_fields(data, grid), t=0.0, density_floor=density_floor)
