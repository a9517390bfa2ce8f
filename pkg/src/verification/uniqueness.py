"""Continuous dependence on the initial data, measured by difference functionals.

Two trajectories started from base and base + eps * delta are compared through
    eta11, eta12 = int |rho_i^(1) - rho_i^(2)|^2 dx,
    eta2         = 1/2 sum_i int rho_i^(1) |u_i^(1) - u_i^(2)|^2 dx,
    eta3         = M0 sum_i int_0^t int |d_x (u_i^(1) - u_i^(2))|^2 dx dtau.
Identical trajectories give identically vanishing functionals.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid, trapezoid

from src.model.core import Grid, InitialData, MixtureParams, State, sample_fields, state_from_fields
from src.model.diagnostics import ReportEntry, gradient
from src.model.errors import SamplingError
from src.model.solver import StepControl, Trajectory, run, stable_dt

logger = logging.getLogger(__name__)

COEFFICIENT_COLUMNS = [
    "t",
    "pressure_term",
    "time_derivative_term",
    "gradient_term",
    "convection_term",
    "inverse_density_term",
    "density_difference_ratio",
    "total",
]


@dataclass(frozen=True)
class DifferenceFunctionals:
    t: np.ndarray
    eta11: np.ndarray
    eta12: np.ndarray
    eta2: np.ndarray
    eta3: np.ndarray

    @property
    def total(self) -> np.ndarray:
        """eta11 + eta12 + 2 eta2 + eta3."""
        return self.eta11 + self.eta12 + 2.0 * self.eta2 + self.eta3

    @property
    def energy_part(self) -> np.ndarray:
        """eta2 + eta3 / 2, the quantity controlled by the Gronwall argument."""
        return self.eta2 + 0.5 * self.eta3


def _check_pair(first: Trajectory, second: Trajectory) -> None:
    if len(first) != len(second) or not np.array_equal(first.times, second.times):
        raise SamplingError("trajectories must be stored at identical times (use a fixed dt)", code="mismatched_times")
    if first.grid.n != second.grid.n:
        raise SamplingError("trajectories must share one grid", code="mismatched_grid")


def difference_functionals(first: Trajectory, second: Trajectory, params: MixtureParams) -> DifferenceFunctionals:
    """Difference functionals of two trajectories at their common stored times."""
    _check_pair(first, second)
    h = first.grid.h
    size = len(first)
    eta11 = np.empty(size)
    eta12 = np.empty(size)
    eta2 = np.empty(size)
    dissipation = np.empty(size)
    for k, (a, b) in enumerate(zip(first.states, second.states)):
        eta11[k] = trapezoid((a.rho1 - b.rho1) ** 2, dx=h)
        eta12[k] = trapezoid((a.rho2 - b.rho2) ** 2, dx=h)
        du = (a.u1 - b.u1, a.u2 - b.u2)
        eta2[k] = 0.5 * sum(trapezoid(rho * d * d, dx=h) for rho, d in zip(a.rho, du))
        dissipation[k] = sum(trapezoid(gradient(d, h) ** 2, dx=h) for d in du)
    eta3 = params.M0 * cumulative_trapezoid(dissipation, first.times, initial=0.0)
    return DifferenceFunctionals(t=first.times, eta11=eta11, eta12=eta12, eta2=eta2, eta3=eta3)


def perturbed_initial(base: InitialData, delta: InitialData, eps: float, grid: Grid) -> State:
    """Admissible state sampled from base + eps * delta."""
    b = sample_fields(base, grid)
    d = sample_fields(delta, grid)
    return state_from_fields(*(fb + eps * fd for fb, fd in zip(b, d)))


def _paired_control(ctl: StepControl, base: InitialData, grid: Grid, params: MixtureParams) -> StepControl:
    if ctl.fixed_dt is not None:
        return ctl
    dt = stable_dt(state_from_fields(*sample_fields(base, grid)), ctl, grid, params)
    logger.info("paired runs use fixed dt = %.4g", dt)
    return replace(ctl, fixed_dt=dt)


def uniqueness_experiment(
    base: InitialData,
    perturbation: InitialData,
    eps_list: Sequence[float],
    params: MixtureParams,
    ctl: StepControl,
    grid: Grid,
) -> Tuple[pd.DataFrame, dict]:
    """Scaling of the difference functionals with the perturbation size.

    Both runs of a pair use one fixed time step so that the stored times
    coincide; without ctl.fixed_dt the CFL step of the base data is used.

    Returns:
        Tuple[pd.DataFrame, dict]: a table with columns eps, sup_eta11,
            sup_eta12, sup_eta2, sup_eta3, sup_total and ratio (sup_total / eps^2,
            NaN for eps = 0), and the trajectory pairs keyed by eps
    """
    ctl = _paired_control(ctl, base, grid, params)
    reference = run(state_from_fields(*sample_fields(base, grid)), params, ctl, grid)
    rows = []
    pairs = {}
    for eps in eps_list:
        other = run(perturbed_initial(base, perturbation, eps, grid), params, ctl, grid)
        funcs = difference_functionals(reference, other, params)
        sup_total = float(np.max(funcs.total))
        ratio = sup_total / eps**2 if eps != 0.0 else math.nan
        rows.append(
            {
                "eps": eps,
                "sup_eta11": float(np.max(funcs.eta11)),
                "sup_eta12": float(np.max(funcs.eta12)),
                "sup_eta2": float(np.max(funcs.eta2)),
                "sup_eta3": float(np.max(funcs.eta3)),
                "sup_total": sup_total,
                "ratio": ratio,
            }
        )
        pairs[eps] = (reference, other, funcs)
        logger.info("eps = %g: sup functional %.3e, ratio %.4g", eps, sup_total, ratio)
    return pd.DataFrame(rows), pairs


def _time_derivative_norms(traj: Trajectory, component: int) -> np.ndarray:
    """||d_t u||_{L2} per stored time: forward differences, backward at the last level."""
    h = traj.grid.h
    u = np.array([s.velocity(component) for s in traj.states])
    du = np.diff(u, axis=0) / np.diff(traj.times)[:, None]
    du = np.vstack([du, du[-1:]])
    return np.sqrt(trapezoid(du * du, dx=h, axis=1))


def assemble_gronwall_coefficient(
    first: Trajectory, second: Trajectory, funcs: DifferenceFunctionals, params: MixtureParams
) -> pd.DataFrame:
    """Empirical growth coefficient of eta2 + eta3 / 2 along the pair.

    The terms follow the term-by-term estimate of the difference equations:
    pressure (Lipschitz constant of K rho^gamma over the density range),
    time derivative of the second velocity, its gradient, the convection
    product, the inverse density weight and the ratio tying the density
    differences to eta3. Splittings use the weight M0 / 4.
    """
    _check_pair(first, second)
    if len(first) < 2:
        raise SamplingError("the growth coefficient needs at least 2 stored levels", code="too_few_levels")
    h = first.grid.h
    M0 = params.M0
    size = len(first)
    dt_norm = np.max([_time_derivative_norms(second, i) for i in (1, 2)], axis=0)

    pressure = np.empty(size)
    grad = np.empty(size)
    conv = np.empty(size)
    inverse = np.empty(size)
    for k, (a, b) in enumerate(zip(first.states, second.states)):
        lipschitz = 0.0
        for i in range(2):
            top = max(float(np.max(a.rho[i])), float(np.max(b.rho[i])))
            lipschitz = max(lipschitz, params.K[i] * params.gamma[i] * top ** (params.gamma[i] - 1.0))
        pressure[k] = lipschitz**2 / M0
        sup_grad = [float(np.max(np.abs(gradient(v, h)))) for v in b.u]
        products = [float(np.max(np.abs(v))) * g for v, g in zip(b.u, sup_grad)]
        grad[k] = 2.0 * max(sup_grad)
        conv[k] = 0.5 * max(products)
        inverse[k] = max(c / float(np.min(r)) for c, r in zip(products, a.rho))

    eta1 = funcs.eta11 + funcs.eta12
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(funcs.eta3 > 0.0, eta1 / funcs.eta3, 0.0)
    ratio = np.maximum.accumulate(ratio)
    time_term = dt_norm**2 / M0
    total = grad + inverse + 2.0 * ratio * (pressure + time_term + conv)
    return pd.DataFrame(
        {
            "t": funcs.t,
            "pressure_term": pressure,
            "time_derivative_term": time_term,
            "gradient_term": grad,
            "convection_term": conv,
            "inverse_density_term": inverse,
            "density_difference_ratio": ratio,
            "total": total,
        },
        columns=COEFFICIENT_COLUMNS,
    )


def gronwall_bound_check(
    funcs: DifferenceFunctionals,
    traj_pair: Tuple[Trajectory, Trajectory],
    params: MixtureParams,
    tol_scale: float = 5.0,
) -> ReportEntry:
    """Integral form of the Gronwall inequality for eta2 + eta3 / 2.

    The worst ratio of the left side to (eta2(0) + eta3(0) / 2) exp(int_0^t G)
    is reported, with the initial density differences added to the anchor.
    The entry passes when it stays below 1 + tol_scale (h + dt).
    """
    first, second = traj_pair
    coefficient = assemble_gronwall_coefficient(first, second, funcs, params)
    growth = cumulative_trapezoid(coefficient["total"].to_numpy(), funcs.t, initial=0.0)
    lhs = funcs.energy_part
    anchor = lhs[0] + funcs.eta11[0] + funcs.eta12[0]
    rhs = anchor * np.exp(growth)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(lhs > 0.0, lhs / rhs, 0.0)
    worst = float(np.max(ratios))
    dt = float(np.max(np.diff(funcs.t)))
    tolerance = tol_scale * (first.grid.h + dt)
    return ReportEntry(
        name="gronwall_integral_form",
        bound=1.0,
        observed=worst,
        slack=1.0 - worst,
        tolerance=tolerance,
    )


def ratio_spread(ratios: np.ndarray) -> float:
    """max / min of the sup_total / eps^2 ratios over eps > 0.

    All-zero ratios (a perturbation that changes nothing) count as bounded and
    give 1; a mix of zero and nonzero ratios gives inf.
    """
    ratios = np.asarray(ratios, dtype=float)
    if ratios.size == 0 or float(ratios.max()) == 0.0:
        return 1.0
    low = float(ratios.min())
    return float(ratios.max()) / low if low > 0.0 else math.inf
