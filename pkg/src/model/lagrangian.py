"""Lagrangian mass coordinates y_m(x, t) = int_0^x rho_m ds, one chart per component.

The solver works in Eulerian coordinates; the charts here are diagnostic and
are used to check the change-of-variables identities behind the estimates.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.interpolate import PchipInterpolator

from src.model.core import MixtureParams, State
from src.model.diagnostics import NO_BOUND, ReportEntry, energy
from src.model.errors import ParameterError, VacuumError
from src.model.solver import Trajectory

logger = logging.getLogger(__name__)

RESAMPLE_METHODS = ("linear", "pchip")
MASS_DRIFT_TOL = 1e-8
# quadrature plus interpolation constant of the transformed-energy identity
ENERGY_RESIDUAL_CONSTANT = 25.0
# a constant density has no nodal jump, only quadrature roundoff
ROUNDOFF = 1e-12


def _check_method(method: str) -> None:
    if method not in RESAMPLE_METHODS:
        raise ParameterError(f"resampling method must be one of {RESAMPLE_METHODS}, got {method!r}", code="bad_method")


@dataclass(frozen=True, eq=False)
class MassChart:
    """Mass coordinate of component m at one time level."""

    m: int
    t: float
    d_m: float
    x_nodes: np.ndarray
    y_nodes: np.ndarray
    method: str = "linear"

    def inverse(self, y) -> np.ndarray:
        """x(y), monotone in y."""
        y = np.asarray(y, dtype=float)
        if self.method == "pchip":
            return PchipInterpolator(self.y_nodes, self.x_nodes)(y)
        return np.interp(y, self.y_nodes, self.x_nodes)

    def forward(self, x) -> np.ndarray:
        return np.interp(np.asarray(x, dtype=float), self.x_nodes, self.y_nodes)

    def y_grid(self, n_y: int, d: Optional[float] = None) -> np.ndarray:
        return np.linspace(0.0, self.d_m if d is None else d, n_y + 1)


def build_chart(state: State, m: int, method: str = "linear") -> MassChart:
    """Cumulative trapezoidal mass coordinate of component m.

    Raises:
        VacuumError: the density is not positive everywhere
    """
    _check_method(method)
    rho = state.density(m)
    if not float(np.min(rho)) > 0.0:
        raise VacuumError(f"mass chart of component {m} needs a positive density", code="nonpositive_density")
    x = state.grid.nodes
    y = cumulative_trapezoid(rho, x, initial=0.0)
    # positivity of every cell contribution makes y strictly increasing
    assert np.all(np.diff(y) > 0.0)
    return MassChart(m=m, t=state.t, d_m=float(y[-1]), x_nodes=np.asarray(x), y_nodes=y, method=method)


def resample(field: np.ndarray, chart: MassChart, n_y: int, method: str = "linear", d: Optional[float] = None) -> np.ndarray:
    """Values of an Eulerian nodal field at x(y_j), y_j uniform on [0, d_m].

    Args:
        field: nodal values on the chart's Eulerian grid
        chart: mass chart of the same time level
        n_y: number of cells of the uniform mass grid
        method: "linear" (positivity preserving) or "pchip" (monotone cubic)
        d: right end of the mass grid, defaults to the chart's own d_m

    Returns:
        np.ndarray: n_y + 1 resampled values
    """
    _check_method(method)
    x = chart.inverse(chart.y_grid(n_y, d))
    if method == "pchip":
        return PchipInterpolator(chart.x_nodes, field)(x)
    return np.interp(x, chart.x_nodes, field)


def transformed_energy(state: State, params: MixtureParams, m: int, n_y: Optional[int] = None, method: str = "linear") -> float:
    """Energy written in the mass coordinate of component m.

    sum_i int_0^{d_m} (rho_i u_i^2 / 2 + K_i / (gamma_i - 1) rho_i^gamma_i) / rho_m dy_m
    """
    n_y = state.n if n_y is None else n_y
    chart = build_chart(state, m, method)
    y = chart.y_grid(n_y)
    rho_m = resample(state.density(m), chart, n_y, method)
    total = 0.0
    for i, K, gamma in zip((1, 2), params.K, params.gamma):
        rho = resample(state.density(i), chart, n_y, method)
        u = resample(state.velocity(i), chart, n_y, method)
        integrand = (0.5 * rho * u * u + K / (gamma - 1.0) * rho**gamma) / rho_m
        total += float(trapezoid(integrand, y))
    return total


def verify_transformed_energy(
    state: State, params: MixtureParams, m: int, n_y: Optional[int] = None, method: str = "linear"
) -> float:
    """Absolute difference between the Eulerian energy and its mass-coordinate form."""
    return abs(energy(state, params) - transformed_energy(state, params, m, n_y, method))


def mean_value_point(state: State, m: int) -> float:
    """A position where rho_m equals its mean d_m.

    The first exact hit or sign change of rho_m - d_m (left to right) is
    returned, linearly interpolated inside the bracketing cell. Without any
    discrete crossing the node closest to d_m is returned, node 0 on ties.
    """
    x = state.grid.nodes
    rho = state.density(m)
    d = float(trapezoid(rho, x))
    g = rho - d
    zeros = np.flatnonzero(g == 0.0)
    changes = np.flatnonzero(g[:-1] * g[1:] < 0.0)
    if zeros.size and (not changes.size or zeros[0] <= changes[0]):
        return float(x[zeros[0]])
    if changes.size:
        k = int(changes[0])
        return float(x[k] + (x[k + 1] - x[k]) * g[k] / (g[k] - g[k + 1]))
    return float(x[int(np.argmin(np.abs(g)))])


@dataclass(frozen=True)
class TransformedResidual:
    """Max-norm residuals of the continuity equation of component i in the chart of component m."""

    m: int
    i: int
    nonconservative: float
    divergence: float


def transformed_residual(
    prev: State,
    curr: State,
    params: MixtureParams,
    m: int,
    i: int,
    n_y: Optional[int] = None,
) -> TransformedResidual:
    """Residuals of the transformed continuity equations between two time levels.

    In the chart of component m the continuity equation of component i reads
        d_t rho_i + rho_m d_y (rho_i (u_i - u_m)) + rho_i rho_m d_y u_m = 0,
    and in divergence form
        d_t (rho_i / rho_m) + d_y (rho_i (u_i - u_m)) = 0.
    Both levels are resampled onto one uniform mass grid; time derivatives are
    forward differences, spatial terms are averaged over the two levels.
    """
    dt = curr.t - prev.t
    if not dt > 0.0:
        raise ParameterError("transformed residual needs increasing times", code="bad_control")
    n_y = prev.n if n_y is None else n_y
    charts = (build_chart(prev, m), build_chart(curr, m))
    d = min(c.d_m for c in charts)
    dy = d / n_y

    levels = []
    for state, chart in zip((prev, curr), charts):
        rho_i = resample(state.density(i), chart, n_y, d=d)
        rho_m = resample(state.density(m), chart, n_y, d=d)
        u_i = resample(state.velocity(i), chart, n_y, d=d)
        u_m = resample(state.velocity(m), chart, n_y, d=d)
        flux_y = np.gradient(rho_i * (u_i - u_m), dy, edge_order=2)
        stretch = rho_i * rho_m * np.gradient(u_m, dy, edge_order=2)
        levels.append((rho_i, rho_i / rho_m, rho_m * flux_y + stretch, flux_y))

    (rho_old, q_old, spatial_old, div_old), (rho_new, q_new, spatial_new, div_new) = levels
    nonconservative = (rho_new - rho_old) / dt + 0.5 * (spatial_old + spatial_new)
    divergence = (q_new - q_old) / dt + 0.5 * (div_old + div_new)
    return TransformedResidual(
        m=m,
        i=i,
        nonconservative=float(np.max(np.abs(nonconservative))),
        divergence=float(np.max(np.abs(divergence))),
    )


def residual_entries(traj: Trajectory, params: MixtureParams, m: int) -> List[ReportEntry]:
    """Worst transformed continuity residuals in the chart of component m.

    Taken over both components and every pair of consecutive stored levels.
    The residuals are O(h + dt) with no closed-form constant, so the entries
    are observed values only.
    """
    states = traj.states
    worst = [0.0, 0.0]
    for prev, curr in zip(states[:-1], states[1:]):
        for i in (1, 2):
            res = transformed_residual(prev, curr, params, m, i)
            worst[0] = max(worst[0], res.nonconservative)
            worst[1] = max(worst[1], res.divergence)
    return [
        ReportEntry(name=f"transformed_continuity_y{m}", bound=math.nan, observed=worst[0], slack=0.0, note=NO_BOUND),
        ReportEntry(name=f"transformed_divergence_y{m}", bound=math.nan, observed=worst[1], slack=0.0, note=NO_BOUND),
    ]


def chart_frame(state: State, m: int, n_y: Optional[int] = None, method: str = "linear") -> pd.DataFrame:
    """Fields resampled on the mass grid of component m, tagged with a coordinate column."""
    n_y = state.n if n_y is None else n_y
    chart = build_chart(state, m, method)
    y = chart.y_grid(n_y)
    frame = pd.DataFrame(
        {
            "t": np.full(y.size, state.t),
            "coordinate": f"y{m}",
            "y": y,
            "x": chart.inverse(y),
        }
    )
    for name in ("rho1", "rho2", "u1", "u2"):
        frame[name] = resample(getattr(state, name), chart, n_y, method)
    return frame


def lagrangian_report(traj: Trajectory, params: MixtureParams, tol_scale: float = 2.0) -> List[ReportEntry]:
    """Chart identities checked on every stored state.

    Per component: mass drift of d_m against t = 0 (relative, 1e-8), the
    transformed-energy residual against C tol_scale h^2 max(E, 1), the
    mean-value point bracketing |rho_m(s) - d_m| <= largest nodal jump, and the
    worst transformed continuity residuals between stored levels.
    """
    h = traj.grid.h
    entries = []
    for m in (1, 2):
        d0 = build_chart(traj.initial, m).d_m
        drift = max(abs(build_chart(s, m).d_m - d0) / d0 for s in traj.states)
        entries.append(ReportEntry(name=f"mass_drift_rho{m}", bound=MASS_DRIFT_TOL, observed=drift, slack=MASS_DRIFT_TOL - drift))

        worst_energy = (math.inf, 0.0, 0.0)
        worst_gap = (math.inf, 0.0, 0.0)
        for state in traj.states:
            bound = ENERGY_RESIDUAL_CONSTANT * tol_scale * h * h * max(energy(state, params), 1.0)
            residual = verify_transformed_energy(state, params, m)
            if bound - residual < worst_energy[0]:
                worst_energy = (bound - residual, residual, bound)
            rho = state.density(m)
            s = mean_value_point(state, m)
            d = float(trapezoid(rho, state.grid.nodes))
            miss = abs(float(np.interp(s, state.grid.nodes, rho)) - d)
            gap = float(np.max(np.abs(np.diff(rho))))
            if gap - miss < worst_gap[0]:
                worst_gap = (gap - miss, miss, gap)
        entries.append(
            ReportEntry(name=f"transformed_energy_y{m}", bound=worst_energy[2], observed=worst_energy[1], slack=worst_energy[0])
        )
        entries.append(
            ReportEntry(
                name=f"mean_value_point_rho{m}",
                bound=worst_gap[2],
                observed=worst_gap[1],
                slack=worst_gap[0],
                tolerance=ROUNDOFF * d0,
            )
        )
        entries.extend(residual_entries(traj, params, m))
    return entries
