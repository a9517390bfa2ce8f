"""Sine-basis Galerkin oracle for the velocities with collocated densities.

Velocities are expanded as u_i = sum_l c_il sin(l pi x), so every basis
function vanishes at both walls. Projecting the momentum equations onto the
basis gives density-weighted mass matrices and an ODE system for the
coefficients; the densities are advanced pointwise on a collocation grid.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp, trapezoid

from src.model.core import DENSITY_FLOOR, Grid, InitialData, MixtureParams, State, sample_initial
from src.model.errors import GalerkinError, ParameterError, VacuumError
from src.model.solver import StepControl, Trajectory, run

logger = logging.getLogger(__name__)

# small enough that convection and density changes stay below the discretisation error
HEAT_AMPLITUDE = 1e-3


@dataclass(frozen=True)
class SineBasis:
    """sin(l pi x), l = 1..modes, tabulated on a set of nodes."""

    modes: int
    nodes: np.ndarray

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.pi * np.arange(1, self.modes + 1)

    @property
    def values(self) -> np.ndarray:
        return np.sin(np.outer(self.wavenumbers, self.nodes))

    @property
    def derivatives(self) -> np.ndarray:
        k = self.wavenumbers
        return k[:, None] * np.cos(np.outer(k, self.nodes))

    def project(self, f: np.ndarray) -> np.ndarray:
        """Unweighted L2 projection: c_l = 2 int f sin(l pi x) dx."""
        return 2.0 * trapezoid(self.values * f, self.nodes, axis=1)


class _GalerkinSystem:
    """Right-hand side of the coefficient and collocated-density ODEs."""

    def __init__(self, params: MixtureParams, basis: SineBasis, freeze_density: bool):
        self.params = params
        self.basis = basis
        self.freeze_density = freeze_density
        self.phi = basis.values
        self.dphi = basis.derivatives
        h = basis.nodes[1] - basis.nodes[0]
        self.h = h
        w = np.full(basis.nodes.size, h)
        w[0] = w[-1] = 0.5 * h
        self.weighted_phi = self.phi * w
        self.weighted_dphi = self.dphi * w
        self.stiffness = 0.5 * basis.wavenumbers**2
        self.size = basis.nodes.size

    def split(self, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        M = self.basis.modes
        return y[: 2 * M].reshape(2, M), y[2 * M :].reshape(2, self.size)

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        c, rho = self.split(y)
        p = self.params
        u = c @ self.phi
        ux = c @ self.dphi
        dc = np.empty_like(c)
        for i in range(2):
            mass = (self.weighted_phi * rho[i]) @ self.phi.T
            f = -self.weighted_phi @ (rho[i] * u[i] * ux[i])
            f += self.weighted_dphi @ (p.K[i] * rho[i] ** p.gamma[i])
            f -= self.stiffness * (p.mu[i][0] * c[0] + p.mu[i][1] * c[1])
            sign = 1.0 if i == 0 else -1.0
            f += sign * p.a * 0.5 * (c[1] - c[0])
            dc[i] = np.linalg.solve(mass, f)
        if self.freeze_density:
            drho = np.zeros_like(rho)
        else:
            drho = -np.gradient(rho * u, self.h, axis=1, edge_order=2)
        return np.concatenate([dc.ravel(), drho.ravel()])


def galerkin_solve(
    initial: State,
    params: MixtureParams,
    modes: int,
    t_end: float,
    *,
    refine: int = 1,
    freeze_density: bool = False,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    n_eval: int = 10,
    density_floor: float = DENSITY_FLOOR,
) -> Trajectory:
    """Integrate the Galerkin system with an adaptive explicit Runge-Kutta method.

    Args:
        initial: initial state on the Eulerian output grid
        params: mixture constants (any coercive viscosity matrix)
        modes: number of sine modes per velocity
        t_end: final time
        refine: collocation grid refinement factor relative to the output grid
        freeze_density: keep the densities at their initial values (linear test mode)
        rtol: relative tolerance of the integrator
        atol: absolute tolerance of the integrator
        n_eval: number of equal output intervals
        density_floor: positivity threshold for the collocated densities

    Returns:
        Trajectory: n_eval + 1 states resampled to the output grid

    Raises:
        VacuumError: a collocated density reached the floor, with the failing time
        GalerkinError: the integrator did not converge
    """
    if modes < 1 or refine < 1 or n_eval < 1:
        raise ParameterError("modes, refine and n_eval must be >= 1", code="bad_galerkin")
    if not t_end > 0.0:
        raise ParameterError("t_end must be positive", code="bad_galerkin")
    out_grid = initial.grid
    fine = Grid(out_grid.n * refine)
    basis = SineBasis(modes, np.asarray(fine.nodes))
    rho0 = np.vstack([np.interp(fine.nodes, out_grid.nodes, r) for r in initial.rho])
    u0 = [np.interp(fine.nodes, out_grid.nodes, v) for v in initial.u]
    c0 = np.vstack([basis.project(v) for v in u0])
    system = _GalerkinSystem(params, basis, freeze_density)

    def positivity(t, y):
        return float(np.min(system.split(y)[1])) - density_floor

    positivity.terminal = True  # type: ignore[attr-defined]
    positivity.direction = -1  # type: ignore[attr-defined]

    t_eval = np.linspace(0.0, t_end, n_eval + 1)
    sol = solve_ivp(
        system,
        (0.0, t_end),
        np.concatenate([c0.ravel(), rho0.ravel()]),
        method="RK45",
        t_eval=t_eval,
        events=positivity,
        rtol=rtol,
        atol=atol,
    )
    if sol.status == 1:
        raise VacuumError(t=float(sol.t_events[0][0]))
    if sol.status != 0:
        raise GalerkinError(f"coefficient integration failed: {sol.message}", code="integrator")
    logger.info("galerkin: %d modes, %d right-hand side evaluations", modes, sol.nfev)

    out_basis = SineBasis(modes, np.asarray(out_grid.nodes))
    states = []
    for k, tk in enumerate(sol.t):
        c, rho = system.split(sol.y[:, k])
        u = c @ out_basis.values
        u[:, 0] = u[:, -1] = 0.0
        states.append(State(float(tk), rho[0][::refine], rho[1][::refine], u[0], u[1]))
    return Trajectory(states=states, stride=1)


def l2_distance(a: State, b: State) -> float:
    """(sum over the four fields of int |a - b|^2 dx)^(1/2)."""
    h = 1.0 / a.n
    return math.sqrt(sum(float(trapezoid((fa - fb) ** 2, dx=h)) for fa, fb in zip(a.fields(), b.fields())))


def _heat_problem(mu11: float, amplitude: float) -> Tuple[MixtureParams, InitialData]:
    """No pressure, no drag, unit densities and a single decaying sine mode in u1."""
    params = MixtureParams(a=0.0, K1=0.0, K2=0.0, gamma1=2.0, gamma2=2.0, mu=((mu11, 0.0), (0.0, 1.0)))
    data = InitialData(
        rho01=lambda x: np.ones_like(x),
        rho02=lambda x: np.ones_like(x),
        u01=lambda x: amplitude * np.sin(np.pi * x),
        u02=lambda x: np.zeros_like(x),
        label="heat_mode",
    )
    return params, data


def heat_mode_error(mu11: float = 1.0, t_end: float = 0.1, n: int = 64, modes: int = 1) -> float:
    """Max nodal error of the Galerkin velocity against exp(-mu11 pi^2 t) sin(pi x).

    Densities are frozen at 1 and drag and pressure are switched off, which
    leaves a scalar heat equation for the first velocity.
    """
    params, data = _heat_problem(mu11, 1.0)
    grid = Grid(n)
    traj = galerkin_solve(sample_initial(data, grid), params, modes, t_end, freeze_density=True)
    worst = 0.0
    for state in traj.states:
        exact = math.exp(-mu11 * math.pi**2 * state.t) * np.sin(np.pi * grid.nodes)
        worst = max(worst, float(np.max(np.abs(state.u1 - exact))), float(np.max(np.abs(state.u2))))
    return worst


def fd_heat_mode_error(mu11: float = 1.0, t_end: float = 0.1, n: int = 64, dt: Optional[float] = None) -> float:
    """Relative max error of the finite-difference solver on the heat mode at t_end.

    The finite-difference run keeps convection and the density update, so the
    mode is scaled by HEAT_AMPLITUDE to leave only the O(h^2 + dt) error.
    dt defaults to h / 4.
    """
    params, data = _heat_problem(mu11, HEAT_AMPLITUDE)
    grid = Grid(n)
    dt = 0.25 * grid.h if dt is None else dt
    ctl = StepControl(t_end=t_end, dt_max=dt, fixed_dt=dt)
    final = run(sample_initial(data, grid), params, ctl, grid, stride=None, max_levels=2).final
    exact = HEAT_AMPLITUDE * math.exp(-mu11 * math.pi**2 * final.t) * np.sin(np.pi * grid.nodes)
    return float(np.max(np.abs(final.u1 - exact))) / HEAT_AMPLITUDE


def galerkin_compare(
    data: InitialData,
    params: MixtureParams,
    pairs: Sequence[Tuple[int, int]],
    t_end: float,
    ctl: Optional[StepControl] = None,
) -> pd.DataFrame:
    """L2 distance between the Galerkin oracle and the finite-difference solver at t_end.

    Args:
        data: initial data sampled at every resolution
        params: mixture constants
        pairs: (modes, n) refinement pairs
        t_end: comparison time
        ctl: step control for the finite-difference runs (t_end is overridden)

    Returns:
        pd.DataFrame: columns modes, n, distance
    """
    ctl = replace(StepControl() if ctl is None else ctl, t_end=t_end)
    rows = []
    for modes, n in pairs:
        grid = Grid(n)
        initial = sample_initial(data, grid)
        fd = run(initial, params, ctl, grid, stride=None, max_levels=2).final
        oracle = galerkin_solve(initial, params, modes, t_end, n_eval=1).final
        distance = l2_distance(fd, oracle)
        logger.info("galerkin vs fd: modes=%d n=%d distance=%.3e", modes, n, distance)
        rows.append({"modes": modes, "n": n, "distance": distance})
    return pd.DataFrame(rows, columns=["modes", "n", "distance"])
