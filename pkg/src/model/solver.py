"""Semi-implicit finite-difference solver for the two-velocity barotropic system.

Each step is split into
  (a) a conservative first-order upwind update of both densities,
  (b) a velocity update with explicit convection and pressure, backward-Euler
      viscosity and semi-implicit drag.

With mu_12 = 0 the viscous stage is solved component by component: the u1
tridiagonal system first, then the u2 system with mu_21 d_xx u1 as a known
source. The fully coupled block solve is kept as an oracle and is used
automatically for non-triangular viscosity matrices.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

from src.model.core import DENSITY_FLOOR, Grid, MixtureParams, State
from src.model.errors import BifluidError, LinearSolverError, ParameterError, VacuumError

logger = logging.getLogger(__name__)

# (s_rho1, s_rho2, s_u1, s_u2) evaluated at the nodes at time t
Forcing = Callable[[np.ndarray, float], Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]
Monitor = Callable[[State, float], None]

COUPLINGS = ("auto", "sequential", "block")
DRAG_COUPLINGS = ("lagged", "full")
CONVECTIONS = ("upwind", "central")


@dataclass(frozen=True)
class StepControl:
    """Time-step control for `run`."""

    cfl_safety: float = 0.4
    dt_max: float = 0.01
    t_end: float = 1.0
    drag_implicit: bool = True
    density_floor: float = DENSITY_FLOOR
    fixed_dt: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ParameterError("cfl_safety must lie in (0, 1]", code="bad_control")
        if not self.dt_max > 0.0:
            raise ParameterError("dt_max must be positive", code="bad_control")
        if not self.t_end > 0.0:
            raise ParameterError("t_end must be positive", code="bad_control")
        if self.fixed_dt is not None and not self.fixed_dt > 0.0:
            raise ParameterError("fixed_dt must be positive", code="bad_control")
        if not self.density_floor >= 0.0:
            raise ParameterError("density_floor must be non-negative", code="bad_control")


@dataclass(frozen=True)
class StepRecord:
    t: float
    dt: float
    cfl: float
    residual: float
    min_density: float


@dataclass
class Trajectory:
    """Stored states (possibly strided) and the complete per-step log."""

    states: List[State]
    step_log: List[StepRecord] = field(default_factory=list)
    stride: int = 1

    def __len__(self) -> int:
        return len(self.states)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def initial(self) -> State:
        return self.states[0]

    @property
    def final(self) -> State:
        return self.states[-1]

    @property
    def grid(self) -> Grid:
        return self.states[0].grid

    @property
    def dt_max_used(self) -> float:
        return max((r.dt for r in self.step_log), default=0.0)


def solve_tridiagonal(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a tridiagonal system with banded LU elimination.

    Args:
        lower: sub-diagonal, length N - 1
        diag: main diagonal, length N
        upper: super-diagonal, length N - 1
        rhs: right-hand side, length N

    Returns:
        np.ndarray: the solution

    Raises:
        LinearSolverError: if the system is singular or the result is not finite
    """
    ab = np.zeros((3, diag.size))
    ab[0, 1:] = upper
    ab[1] = diag
    ab[2, :-1] = lower
    return _solve_banded((1, 1), ab, rhs)


def _solve_banded(bands: Tuple[int, int], ab: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        x = solve_banded(bands, ab, rhs)
    except (LinAlgError, ValueError) as exc:
        raise LinearSolverError(f"singular viscous system ({exc}); reduce dt", code="singular") from exc
    if not np.all(np.isfinite(x)):
        raise LinearSolverError("viscous system produced non-finite values; reduce dt", code="non_finite")
    return x


def second_difference(u: np.ndarray, h: float) -> np.ndarray:
    """Central second difference at the interior nodes."""
    return (u[:-2] - 2.0 * u[1:-1] + u[2:]) / (h * h)


def continuity_update(
    rho: np.ndarray,
    u: np.ndarray,
    dt: float,
    grid: Grid,
    convection: str = "upwind",
    source: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Conservative update of one density on the trapezoidal control volumes.

    Interface fluxes use the averaged velocity and the upwind density; the
    boundary fluxes vanish because u = 0 there, so sum(w * rho) is conserved.
    """
    ubar = 0.5 * (u[:-1] + u[1:])
    if convection == "upwind":
        rho_face = np.where(ubar >= 0.0, rho[:-1], rho[1:])
    else:
        rho_face = 0.5 * (rho[:-1] + rho[1:])
    flux = ubar * rho_face
    net = np.zeros_like(rho)
    net[:-1] += flux
    net[1:] -= flux
    new = rho - dt * net / grid.weights
    if source is not None:
        new = new + dt * source
    return new


def _convection(u: np.ndarray, h: float, convection: str) -> np.ndarray:
    """u d_x u at the interior nodes."""
    ui = u[1:-1]
    if convection == "central":
        return ui * (u[2:] - u[:-2]) / (2.0 * h)
    backward = (u[1:-1] - u[:-2]) / h
    forward = (u[2:] - u[1:-1]) / h
    return ui * np.where(ui > 0.0, backward, forward)


def _pressure_gradient(rho: np.ndarray, K: float, gamma: float, h: float) -> np.ndarray:
    p = K * rho**gamma
    return (p[2:] - p[:-2]) / (2.0 * h)


@dataclass
class _Stage:
    """Interior-node pieces of one momentum equation shared by both solvers."""

    mass: np.ndarray  # rho_new / dt
    rhs: np.ndarray


def _explicit_stage(
    state: State,
    rho_new: Tuple[np.ndarray, np.ndarray],
    params: MixtureParams,
    dt: float,
    convection: str,
    momentum_source: Optional[Tuple[np.ndarray, np.ndarray]],
) -> Tuple[_Stage, _Stage]:
    h = 1.0 / state.n
    stages = []
    for i in range(2):
        rho = rho_new[i][1:-1]
        u_old = state.u[i]
        rhs = rho / dt * u_old[1:-1]
        rhs -= rho * _convection(u_old, h, convection)
        rhs -= _pressure_gradient(rho_new[i], params.K[i], params.gamma[i], h)
        if momentum_source is not None:
            rhs += momentum_source[i][1:-1]
        stages.append(_Stage(mass=rho / dt, rhs=rhs))
    return stages[0], stages[1]


def _sequential_velocities(
    state: State,
    stages: Tuple[_Stage, _Stage],
    params: MixtureParams,
    drag_implicit: bool,
) -> Tuple[np.ndarray, np.ndarray, float]:
    h2 = (1.0 / state.n) ** 2
    (m11, m12), (m21, m22) = params.mu
    a = params.a
    u1_old, u2_old = state.u1, state.u2
    N = state.n - 1

    # component 1: mu_12 = 0 in the triangular case, otherwise lagged
    s1 = stages[0]
    rhs1 = s1.rhs.copy()
    if m12 != 0.0:
        rhs1 += m12 * second_difference(u2_old, 1.0 / state.n)
    diag1 = s1.mass + 2.0 * m11 / h2
    if drag_implicit:
        diag1 = diag1 + a
        rhs1 += a * u2_old[1:-1]
    else:
        rhs1 += a * (u2_old[1:-1] - u1_old[1:-1])
    off1 = np.full(N - 1, -m11 / h2)
    u1_int = solve_tridiagonal(off1, diag1, off1, rhs1)
    u1_new = np.zeros(state.n + 1)
    u1_new[1:-1] = u1_int

    # component 2: mu_21 d_xx u1 is known now
    s2 = stages[1]
    rhs2 = s2.rhs + m21 * second_difference(u1_new, 1.0 / state.n)
    diag2 = s2.mass + 2.0 * m22 / h2
    if drag_implicit:
        diag2 = diag2 + a
        rhs2 += a * u1_int
    else:
        rhs2 += a * (u1_old[1:-1] - u2_old[1:-1])
    off2 = np.full(N - 1, -m22 / h2)
    u2_int = solve_tridiagonal(off2, diag2, off2, rhs2)
    u2_new = np.zeros(state.n + 1)
    u2_new[1:-1] = u2_int

    residual = max(
        _tridiag_residual(off1, diag1, off1, u1_int, rhs1),
        _tridiag_residual(off2, diag2, off2, u2_int, rhs2),
    )
    return u1_new, u2_new, residual


def _tridiag_residual(lower, diag, upper, x, rhs) -> float:
    r = diag * x - rhs
    r[1:] += lower * x[:-1]
    r[:-1] += upper * x[1:]
    return float(np.max(np.abs(r))) if r.size else 0.0


def _block_velocities(
    state: State,
    stages: Tuple[_Stage, _Stage],
    params: MixtureParams,
    drag_implicit: bool,
    drag_coupling: str,
) -> Tuple[np.ndarray, np.ndarray, float]:
    """Solve both momentum equations at once as a 2x2-block tridiagonal system.

    Unknowns are interleaved (u1_1, u2_1, u1_2, u2_2, ...), giving a banded
    matrix with three sub- and three super-diagonals.
    """
    h2 = (1.0 / state.n) ** 2
    mu = params.mu
    a = params.a
    N = state.n - 1
    size = 2 * N
    ab = np.zeros((7, size))
    dense_rows: List[np.ndarray] = []
    dense_cols: List[np.ndarray] = []
    dense_vals: List[np.ndarray] = []

    def put(rows, cols, vals):
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        vals = np.broadcast_to(np.asarray(vals, dtype=float), rows.shape)
        np.add.at(ab, (3 + rows - cols, cols), vals)
        dense_rows.append(rows)
        dense_cols.append(cols)
        dense_vals.append(vals)

    k = np.arange(N)
    rhs = np.zeros(size)
    u_old = (state.u1, state.u2)
    for i in range(2):
        row = 2 * k + i
        rhs[row] = stages[i].rhs
        put(row, row, stages[i].mass)
        for j in range(2):
            coef = mu[i][j] / h2
            if coef == 0.0:
                continue
            col = 2 * k + j
            put(row, col, 2.0 * coef)
            put(row[1:], col[:-1], -coef)
            put(row[:-1], col[1:], -coef)
        other = 1 - i
        sign = 1.0 if i == 0 else -1.0
        if not drag_implicit:
            rhs[row] += sign * a * (u_old[1][1:-1] - u_old[0][1:-1])
        elif drag_coupling == "lagged" and i == 0:
            put(row, row, a)
            rhs[row] += a * u_old[other][1:-1]
        else:
            put(row, row, a)
            put(row, 2 * k + other, -a)

    z = _solve_banded((3, 3), ab, rhs)
    rows = np.concatenate(dense_rows)
    cols = np.concatenate(dense_cols)
    vals = np.concatenate(dense_vals)
    r = -rhs
    np.add.at(r, rows, vals * z[cols])
    residual = float(np.max(np.abs(r))) if r.size else 0.0

    u1_new = np.zeros(state.n + 1)
    u2_new = np.zeros(state.n + 1)
    u1_new[1:-1] = z[0::2]
    u2_new[1:-1] = z[1::2]
    return u1_new, u2_new, residual


def _advance(
    state: State,
    params: MixtureParams,
    dt: float,
    drag_implicit: bool = True,
    density_floor: float = DENSITY_FLOOR,
    coupling: str = "auto",
    drag_coupling: str = "lagged",
    convection: str = "upwind",
    forcing: Optional[Forcing] = None,
) -> Tuple[State, float]:
    if not dt > 0.0:
        raise ParameterError("dt must be positive", code="bad_control")
    if coupling not in COUPLINGS:
        raise ParameterError(f"unknown coupling {coupling!r}", code="bad_control")
    if drag_coupling not in DRAG_COUPLINGS:
        raise ParameterError(f"unknown drag coupling {drag_coupling!r}", code="bad_control")
    if convection not in CONVECTIONS:
        raise ParameterError(f"unknown convection {convection!r}", code="bad_control")

    grid = state.grid
    sources = None
    momentum_source = None
    if forcing is not None:
        s_rho1, s_rho2, _, _ = forcing(grid.nodes, state.t)
        _, _, s_u1, s_u2 = forcing(grid.nodes, state.t + dt)
        sources = (s_rho1, s_rho2)
        momentum_source = (s_u1, s_u2)

    rho_new = []
    for i in range(2):
        src = sources[i] if sources is not None else None
        rho = continuity_update(state.rho[i], state.u[i], dt, grid, convection, src)
        low = float(rho.min())
        if not low > density_floor:
            logger.debug("rho%d = %.3e at x = %.4f", i + 1, low, grid.nodes[int(np.argmin(rho))])
            raise VacuumError()
        rho_new.append(rho)

    stages = _explicit_stage(state, (rho_new[0], rho_new[1]), params, dt, convection, momentum_source)
    if coupling == "auto":
        coupling = "sequential" if params.is_triangular else "block"
    if coupling == "sequential":
        u1, u2, residual = _sequential_velocities(state, stages, params, drag_implicit)
    else:
        u1, u2, residual = _block_velocities(state, stages, params, drag_implicit, drag_coupling)
    return State(state.t + dt, rho_new[0], rho_new[1], u1, u2), residual


def step(
    state: State,
    params: MixtureParams,
    dt: float,
    *,
    drag_implicit: bool = True,
    density_floor: float = DENSITY_FLOOR,
    coupling: str = "auto",
    drag_coupling: str = "lagged",
    convection: str = "upwind",
    forcing: Optional[Forcing] = None,
) -> State:
    """Advance the state by one time step.

    Args:
        state: admissible state at time t
        params: mixture constants
        dt: time step (> 0)
        drag_implicit: treat the drag term semi-implicitly (u2 old in the u1
            equation, u1 new in the u2 equation)
        density_floor: densities at or below this value abort the step
        coupling: "sequential" (triangular split), "block" (coupled oracle)
            or "auto" (sequential iff mu_12 = 0)
        drag_coupling: for the block solve, "lagged" reproduces the sequential
            drag structure and "full" makes both drag terms implicit
        convection: "upwind" or the "central" test mode
        forcing: optional source terms, e.g. for manufactured solutions

    Returns:
        State: the state at t + dt

    Raises:
        VacuumError: a density fell below the floor
        LinearSolverError: a viscous system was singular
    """
    new, _ = _advance(
        state,
        params,
        dt,
        drag_implicit=drag_implicit,
        density_floor=density_floor,
        coupling=coupling,
        drag_coupling=drag_coupling,
        convection=convection,
        forcing=forcing,
    )
    return new


def max_speed(state: State, params: MixtureParams) -> float:
    """Largest of |u_i| and the barotropic sound speeds sqrt(K_i gamma_i rho_i^(gamma_i - 1))."""
    speed = max(float(np.max(np.abs(state.u1))), float(np.max(np.abs(state.u2))))
    for rho, K, gamma in zip(state.rho, params.K, params.gamma):
        if K > 0.0:
            speed = max(speed, float(np.sqrt(K * gamma * np.max(rho ** (gamma - 1.0)))))
    return speed


def stable_dt(state: State, ctl: StepControl, grid: Grid, params: MixtureParams) -> float:
    """CFL-limited time step, capped at ctl.dt_max (dt_max when nothing moves)."""
    speed = max_speed(state, params)
    if speed == 0.0:
        return ctl.dt_max
    return min(ctl.dt_max, ctl.cfl_safety * grid.h / speed)


def run(
    initial: State,
    params: MixtureParams,
    ctl: StepControl,
    grid: Grid,
    monitors: Sequence[Monitor] = (),
    *,
    stride: Optional[int] = 1,
    max_levels: int = 1000,
    coupling: str = "auto",
    drag_coupling: str = "lagged",
    convection: str = "upwind",
    forcing: Optional[Forcing] = None,
) -> Trajectory:
    """Integrate from the initial state to ctl.t_end.

    Monitors are called as monitor(state, dt) for the initial state (dt = 0)
    and after every step. With stride=None the storage stride doubles whenever
    more than max_levels states would be kept.

    Raises:
        BifluidError: step errors, annotated with the failing time
    """
    if grid.n != initial.n:
        raise ParameterError(f"grid has {grid.n} cells but the state has {initial.n}", code="bad_shape")
    if stride is not None and stride < 1:
        raise ParameterError("stride must be >= 1", code="bad_control")
    adaptive = stride is None
    current_stride = 1 if adaptive else stride

    state = initial
    states = [initial]
    step_log: List[StepRecord] = []
    for monitor in monitors:
        monitor(initial, 0.0)

    t_end = ctl.t_end
    eps = 1e-12 * max(1.0, t_end)
    next_report = 0.1 * t_end
    count = 0
    while t_end - state.t > eps:
        dt = ctl.fixed_dt if ctl.fixed_dt is not None else stable_dt(state, ctl, grid, params)
        dt = min(dt, t_end - state.t)
        try:
            new, residual = _advance(
                state,
                params,
                dt,
                drag_implicit=ctl.drag_implicit,
                density_floor=ctl.density_floor,
                coupling=coupling,
                drag_coupling=drag_coupling,
                convection=convection,
                forcing=forcing,
            )
        except BifluidError as exc:
            raise exc.with_time(state.t + dt) from exc
        count += 1
        speed = max_speed(state, params)
        step_log.append(StepRecord(new.t, dt, speed * dt / grid.h, residual, new.min_density()))
        for monitor in monitors:
            monitor(new, dt)
        state = new

        if count % current_stride == 0:
            states.append(new)
            if adaptive and len(states) > max_levels:
                states = states[::2]
                current_stride *= 2
        if state.t >= next_report:
            logger.info("t = %.4g / %.4g (%d steps, dt = %.3e)", state.t, t_end, count, dt)
            next_report += 0.1 * t_end

    if states[-1] is not state:
        states.append(state)
    return Trajectory(states=states, step_log=step_log, stride=current_stride)
