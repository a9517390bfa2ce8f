"""Command-line entry point: python -m src.app <simulate|verify|mms|uniqueness|galerkin>."""

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import pandas as pd
from dotenv import load_dotenv

from src.model.core import sample_initial
from src.model.diagnostics import EnergyMonitor, EstimateReport, alpha_series, b1, beta_series, build_report
from src.model.errors import BifluidError
from src.model.lagrangian import lagrangian_report
from src.model.solver import Trajectory, run
from src.utils.config import RunConfig, dump_config, load_config
from src.utils.output import atomic_write_text, charts_frame, energy_frame, fields_frame, plot_energy, write_frame
from src.utils.presets import get_preset
from src.verification.galerkin import fd_heat_mode_error, galerkin_compare, heat_mode_error
from src.verification.mms import check_sources, get_case, mms_convergence
from src.verification.uniqueness import gronwall_bound_check, ratio_spread, uniqueness_experiment

logger = logging.getLogger("bifluid")

EXIT_PASS = 0
EXIT_MONITOR_FAILURE = 1

SOURCE_CHECK_TOLERANCE = 1e-5


def _finish(out: Path, name: str, passed: bool, line: str) -> int:
    status = "PASS" if passed else "FAIL"
    summary = f"{name}: {status} {line}"
    atomic_write_text(out / "summary.txt", summary + "\n")
    print(summary)
    return EXIT_PASS if passed else EXIT_MONITOR_FAILURE


def _log_failures(report: EstimateReport) -> None:
    for entry in report.failures:
        logger.error("monitor %s failed: observed %.6g, bound %.6g, slack %.3g", entry.name, entry.observed, entry.bound, entry.slack)


def _simulate(config: RunConfig, *, all_monitors: bool) -> Tuple[Trajectory, EnergyMonitor, EstimateReport]:
    params = config.params
    grid = config.grid
    monitors = config.monitors
    if all_monitors:
        monitors = replace(monitors, energy=True, velocity=True, density=True, norms=True, log_density=True, lagrangian=True)
    # time-derivative norms need every step
    stride = 1 if monitors.norms else config.output.stride
    initial = sample_initial(config.initial_data(), grid, config.control.density_floor)
    energy_monitor = EnergyMonitor(params)
    traj = run(
        initial,
        params,
        config.control,
        grid,
        [energy_monitor],
        stride=stride,
        max_levels=config.output.max_levels,
        **config.solver_options,
    )
    report = build_report(
        traj,
        params,
        energy_check=monitors.energy,
        velocity=monitors.velocity,
        density=monitors.density,
        norms=monitors.norms,
        log_density=monitors.log_density,
        tol_scale=monitors.tol_scale,
        records=energy_monitor.records,
    )
    if monitors.lagrangian:
        report.extend(lagrangian_report(traj, params, monitors.tol_scale))
    return traj, energy_monitor, report


def _write_run(
    out: Path, config: RunConfig, traj: Trajectory, monitor: EnergyMonitor, report: EstimateReport, *, charts: bool
) -> None:
    write_frame(fields_frame(traj), out / "fields.csv")
    write_frame(energy_frame(monitor.records), out / "energy.csv")
    write_frame(report.to_frame(), out / "estimates.csv")
    atomic_write_text(out / "estimates.txt", report.summary() + "\n")
    if charts:
        write_frame(charts_frame(traj), out / "charts.csv")
    if config.output.plots:
        plot_energy(monitor.records, b1(traj.initial, config.params), out / "energy.png")


def command_simulate(config: RunConfig, out: Path) -> int:
    traj, monitor, report = _simulate(config, all_monitors=False)
    _write_run(out, config, traj, monitor, report, charts=config.monitors.lagrangian)
    _log_failures(report)
    passed = sum(e.passed for e in report.entries)
    return _finish(out, "simulate", report.passed, f"{passed}/{len(report.entries)} estimates, t = {traj.final.t:.6g}")


def command_verify(config: RunConfig, out: Path) -> int:
    traj, monitor, report = _simulate(config, all_monitors=True)
    _write_run(out, config, traj, monitor, report, charts=True)
    series = pd.DataFrame({"t": traj.times, "alpha": alpha_series(traj, config.params), "beta": beta_series(traj, config.params)})
    write_frame(series, out / "norms.csv")
    _log_failures(report)
    passed = sum(e.passed for e in report.entries)
    return _finish(out, "verify", report.passed, f"{passed}/{len(report.entries)} estimates")


def command_mms(config: RunConfig, out: Path) -> int:
    settings = config.mms
    case = get_case(settings.case, config.params)
    source_error = check_sources(case, seed=config.output.seed)
    result = mms_convergence(
        case,
        settings.resolutions,
        t_end=settings.t_end,
        dt_factor=settings.dt_factor,
        convection=settings.convection,
        coupling=config.coupling,
    )
    write_frame(result.table, out / "mms.csv")
    if source_error > SOURCE_CHECK_TOLERANCE:
        logger.error("manufactured sources disagree with finite differences by %.3e", source_error)
    order_ok = result.order >= settings.min_order
    if not order_ok:
        logger.error("observed order %.3f below %.3f", result.order, settings.min_order)
    passed = order_ok and source_error <= SOURCE_CHECK_TOLERANCE
    return _finish(out, "mms", passed, f"order = {result.order:.4g} (min {settings.min_order:g}), source check {source_error:.2e}")


def command_uniqueness(config: RunConfig, out: Path) -> int:
    settings = config.uniqueness
    table, pairs = uniqueness_experiment(
        config.initial_data(),
        settings.perturbation(config.output.seed),
        settings.eps,
        config.params,
        config.control,
        config.grid,
    )
    gronwall: List[float] = []
    passed = True
    for eps in table["eps"]:
        first, second, funcs = pairs[eps]
        entry = gronwall_bound_check(funcs, (first, second), config.params, settings.tol_scale)
        gronwall.append(entry.observed)
        if not entry.passed:
            logger.error("eps = %g: Gronwall ratio %.4g exceeds 1 + %.3g", eps, entry.observed, entry.tolerance)
            passed = False
        if eps == 0.0 and float(table.loc[table["eps"] == eps, "sup_total"].iloc[0]) != 0.0:
            logger.error("eps = 0 produced nonzero difference functionals")
            passed = False
    table["gronwall_ratio"] = gronwall
    write_frame(table, out / "uniqueness.csv")

    ratios = table.loc[table["eps"] > 0.0, "ratio"].to_numpy()
    spread = ratio_spread(ratios)
    if spread >= settings.max_spread:
        logger.error("ratio spread %.4g across eps exceeds %.4g", spread, settings.max_spread)
        passed = False
    return _finish(out, "uniqueness", passed, f"ratio spread = {spread:.4g}, worst Gronwall ratio = {max(gronwall):.4g}")


def command_galerkin(config: RunConfig, out: Path) -> int:
    settings = config.galerkin
    heat_error = heat_mode_error(mu11=config.params.mu[0][0], t_end=settings.heat_t_end, n=config.n)
    table = galerkin_compare(
        get_preset(settings.preset),
        config.params,
        list(zip(settings.modes, settings.n)),
        settings.t_end,
        ctl=config.control,
    )
    table["heat_mode_error"] = heat_error
    # observed only: the scheme is O(h^2 + dt) on this mode
    table["fd_heat_mode_error"] = fd_heat_mode_error(mu11=config.params.mu[0][0], t_end=settings.heat_t_end, n=config.n)
    write_frame(table, out / "galerkin.csv")
    distances = table["distance"].to_numpy()
    decreasing = bool(all(b < a for a, b in zip(distances[:-1], distances[1:])))
    heat_ok = heat_error < settings.heat_tolerance
    if not heat_ok:
        logger.error("heat-mode error %.3e exceeds %.3e", heat_error, settings.heat_tolerance)
    if not decreasing:
        logger.error("Galerkin/finite-difference distance does not decrease under refinement: %s", ", ".join(f"{d:.3e}" for d in distances))
    return _finish(out, "galerkin", heat_ok and decreasing, f"heat-mode error = {heat_error:.3e}, distances = " + ", ".join(f"{d:.3e}" for d in distances))


HELP = {
    "simulate": "run the solver and the enabled estimate monitors",
    "verify": "run with every monitor, including norms and mass-coordinate checks",
    "mms": "manufactured-solution convergence study",
    "uniqueness": "continuous dependence on the initial data",
    "galerkin": "heat-mode check and Galerkin cross-check",
}

COMMANDS: Dict[str, Callable[[RunConfig, Path], int]] = {
    "simulate": command_simulate,
    "verify": command_verify,
    "mms": command_mms,
    "uniqueness": command_uniqueness,
    "galerkin": command_galerkin,
}


def _configure_logging(quiet: bool) -> None:
    level = logging.WARNING if quiet else getattr(logging, os.getenv("BIFLUID_LOG_LEVEL", "INFO").upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Two-velocity barotropic mixture solver and verification suite")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", type=str, required=True, help="TOML run configuration")
        p.add_argument("--out", type=str, default=None, help="output directory (default: $BIFLUID_OUTPUT_DIR or ./output)")
        p.add_argument("--quiet", action="store_true", help="only warnings and errors on stderr")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    _configure_logging(args.quiet)
    out = Path(args.out or os.getenv("BIFLUID_OUTPUT_DIR", "output"))
    try:
        config = load_config(args.config)
        atomic_write_text(out / "resolved_config.toml", dump_config(config))
        return COMMANDS[args.command](config, out)
    except BifluidError as exc:
        logger.error("%s failed: %s", args.command, exc.message)
        atomic_write_text(out / "summary.txt", f"{args.command}: ERROR {exc.message}\n")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
