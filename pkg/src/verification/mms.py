"""Manufactured-solution convergence studies for the finite-difference solver."""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import sympy as sp
from scipy.integrate import trapezoid

from src.model.core import Grid, MixtureParams, State, state_from_fields
from src.model.errors import ParameterError
from src.model.solver import StepControl, run

logger = logging.getLogger(__name__)

x, t = sp.symbols("x t", real=True)

FIELD_NAMES = ("rho1", "rho2", "u1", "u2")

Arrays4 = Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]


def manufactured_sources(rho: Sequence[sp.Expr], u: Sequence[sp.Expr], params: MixtureParams) -> Tuple[sp.Expr, ...]:
    """Residuals of the mixture equations for closed-form fields.

    Continuity:  d_t rho_i + d_x (rho_i u_i)
    Momentum:    rho_i (d_t u_i + u_i d_x u_i) + d_x (K_i rho_i^gamma_i)
                 - sum_j mu_ij d_xx u_j -+ a (u_2 - u_1)
    """
    mu = params.mu
    s_rho = [sp.diff(rho[i], t) + sp.diff(rho[i] * u[i], x) for i in range(2)]
    s_u = []
    for i in range(2):
        other = 1 - i
        sign = 1 if i == 0 else -1
        expr = rho[i] * (sp.diff(u[i], t) + u[i] * sp.diff(u[i], x))
        expr += sp.diff(params.K[i] * rho[i] ** params.gamma[i], x)
        expr -= sum(mu[i][j] * sp.diff(u[j], x, 2) for j in range(2))
        expr -= sign * params.a * (u[other] - u[i])
        s_u.append(expr)
    return (s_rho[0], s_rho[1], s_u[0], s_u[1])


def _vectorize(exprs: Sequence[sp.Expr]) -> Callable[[np.ndarray, float], Arrays4]:
    functions = [sp.lambdify((x, t), e, modules="numpy") for e in exprs]

    def evaluate(nodes: np.ndarray, time: float) -> Arrays4:
        nodes = np.asarray(nodes, dtype=float)
        out = [np.broadcast_to(np.asarray(f(nodes, time), dtype=float), nodes.shape).copy() for f in functions]
        return (out[0], out[1], out[2], out[3])

    return evaluate


@dataclass(frozen=True)
class ManufacturedCase:
    """Closed-form densities and velocities together with their exact sources.

    Densities must stay positive and velocities must vanish at x = 0 and x = 1.
    """

    name: str
    rho: Tuple[sp.Expr, sp.Expr]
    u: Tuple[sp.Expr, sp.Expr]
    params: MixtureParams

    @cached_property
    def sources(self) -> Tuple[sp.Expr, ...]:
        return manufactured_sources(self.rho, self.u, self.params)

    @cached_property
    def _exact(self) -> Callable[[np.ndarray, float], Arrays4]:
        return _vectorize(list(self.rho) + list(self.u))

    @cached_property
    def _forcing(self) -> Callable[[np.ndarray, float], Arrays4]:
        return _vectorize(self.sources)

    def exact(self, nodes: np.ndarray, time: float) -> Arrays4:
        return self._exact(nodes, time)

    def forcing(self, nodes: np.ndarray, time: float) -> Arrays4:
        return self._forcing(nodes, time)

    def initial_state(self, grid: Grid) -> State:
        return state_from_fields(*self.exact(grid.nodes, 0.0))


def canonical_case(params: Optional[MixtureParams] = None) -> ManufacturedCase:
    """rho_i = 2 + 0.1 sin(2 pi x) cos t, u_i = sin(pi x) sin t."""
    if params is None:
        params = MixtureParams(a=1.0, K1=1.0, K2=1.0, gamma1=2.0, gamma2=2.0, mu=((1.0, 0.0), (0.5, 1.0)))
    rho = 2 + sp.Rational(1, 10) * sp.sin(2 * sp.pi * x) * sp.cos(t)
    u = sp.sin(sp.pi * x) * sp.sin(t)
    return ManufacturedCase("canonical", (rho, rho), (u, u), params)


def equilibrium_case(params: Optional[MixtureParams] = None) -> ManufacturedCase:
    """Constant densities at rest: every source vanishes."""
    if params is None:
        params = MixtureParams(a=1.0, K1=1.0, K2=1.0, gamma1=2.0, gamma2=2.0)
    one = sp.Integer(1)
    zero = sp.Integer(0)
    return ManufacturedCase("equilibrium", (one, one), (zero, zero), params)


CASES: Dict[str, Callable[..., ManufacturedCase]] = {
    "canonical": canonical_case,
    "equilibrium": equilibrium_case,
}


def get_case(name: str, params: Optional[MixtureParams] = None) -> ManufacturedCase:
    if name not in CASES:
        raise ParameterError(f"unknown manufactured case {name!r} (choose from {sorted(CASES)})", code="unknown_case")
    return CASES[name](params)


def check_sources(case: ManufacturedCase, samples: int = 16, eps: float = 1e-4, seed: int = 0) -> float:
    """Largest discrepancy between the symbolic sources and central differences of the closed forms.

    Points are drawn uniformly in (0.05, 0.95) x (0.05, 1). Agreement is O(eps^2)
    up to roundoff in the second differences.
    """
    rng = np.random.default_rng(seed)
    xs = rng.uniform(0.05, 0.95, samples)
    ts = rng.uniform(0.05, 1.0, samples)
    p = case.params
    worst = 0.0
    for xk, tk in zip(xs, ts):
        c = case.exact(np.array([xk - eps, xk, xk + eps]), tk)
        before = case.exact(np.array([xk]), tk - eps)
        after = case.exact(np.array([xk]), tk + eps)
        rho = [c[0][1], c[1][1]]
        u = [c[2][1], c[3][1]]
        rho_t = [(after[i][0] - before[i][0]) / (2 * eps) for i in range(2)]
        u_t = [(after[2 + i][0] - before[2 + i][0]) / (2 * eps) for i in range(2)]
        rho_x = [(c[i][2] - c[i][0]) / (2 * eps) for i in range(2)]
        u_x = [(c[2 + i][2] - c[2 + i][0]) / (2 * eps) for i in range(2)]
        u_xx = [(c[2 + i][2] - 2 * c[2 + i][1] + c[2 + i][0]) / eps**2 for i in range(2)]
        numeric = []
        for i in range(2):
            numeric.append(rho_t[i] + rho_x[i] * u[i] + rho[i] * u_x[i])
        for i in range(2):
            sign = 1.0 if i == 0 else -1.0
            p_x = p.K[i] * p.gamma[i] * rho[i] ** (p.gamma[i] - 1.0) * rho_x[i]
            viscous = sum(p.mu[i][j] * u_xx[j] for j in range(2))
            drag = sign * p.a * (u[1 - i] - u[i])
            numeric.append(rho[i] * (u_t[i] + u[i] * u_x[i]) + p_x - viscous - drag)
        symbolic = case.forcing(np.array([xk]), tk)
        worst = max(worst, max(abs(numeric[k] - symbolic[k][0]) for k in range(4)))
    return float(worst)


@dataclass
class ConvergenceResult:
    """Errors at t_end per resolution and least-squares orders."""

    table: pd.DataFrame
    order: float
    field_orders: Dict[str, float] = field(default_factory=dict)


def _fit_order(h: np.ndarray, err: np.ndarray) -> float:
    if np.all(err == 0.0):
        return math.inf
    if np.any(err <= 0.0):
        return math.nan
    slope, _ = np.polyfit(np.log(h), np.log(err), 1)
    return float(slope)


def mms_convergence(
    case: ManufacturedCase,
    resolutions: Sequence[int],
    t_end: float = 1.0,
    dt_factor: float = 0.2,
    convection: str = "upwind",
    coupling: str = "auto",
) -> ConvergenceResult:
    """Run the forced solver at each resolution with dt = t_end / ceil(t_end / (dt_factor h)).

    Args:
        case: manufactured solution with its sources
        resolutions: at least 3 cell counts, geometrically spaced
        t_end: final time where the errors are measured
        dt_factor: ratio dt / h
        convection: "upwind" or the "central" test mode
        coupling: viscous solve coupling passed to the solver

    Returns:
        ConvergenceResult: table with columns n, h, dt, err_rho1, err_rho2,
            err_u1, err_u2, err and the fitted orders
    """
    if len(resolutions) < 3:
        raise ParameterError("a convergence study needs at least 3 resolutions", code="too_few_resolutions")
    rows: List[dict] = []
    for n in sorted(resolutions):
        grid = Grid(n)
        steps = max(1, math.ceil(t_end / (dt_factor * grid.h) - 1e-9))
        dt = t_end / steps
        ctl = StepControl(dt_max=dt, t_end=t_end, fixed_dt=dt, density_floor=0.0)
        traj = run(
            case.initial_state(grid),
            case.params,
            ctl,
            grid,
            stride=None,
            max_levels=2,
            coupling=coupling,
            convection=convection,
            forcing=case.forcing,
        )
        final = traj.final
        exact = case.exact(grid.nodes, final.t)
        row = {"n": n, "h": grid.h, "dt": dt}
        squares = 0.0
        for name, approx, ref in zip(FIELD_NAMES, final.fields(), exact):
            e = float(trapezoid((approx - ref) ** 2, dx=grid.h))
            row[f"err_{name}"] = math.sqrt(e)
            squares += e
        row["err"] = math.sqrt(squares)
        logger.info("mms %s n=%d: L2 error %.3e", case.name, n, row["err"])
        rows.append(row)

    table = pd.DataFrame(rows)
    h = table["h"].to_numpy()
    field_orders = {name: _fit_order(h, table[f"err_{name}"].to_numpy()) for name in FIELD_NAMES}
    order = _fit_order(h, table["err"].to_numpy())
    table["order"] = order
    return ConvergenceResult(table=table, order=order, field_orders=field_orders)
