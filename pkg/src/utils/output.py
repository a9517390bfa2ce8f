"""Artifact writers: fixed-format CSV tables, the resolved configuration and report figures."""

import io
import logging
import os
import tempfile
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
import pandas as pd

from src.model.diagnostics import EnergyRecord
from src.model.lagrangian import chart_frame
from src.model.solver import Trajectory

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
FIELD_COLUMNS = ["t", "x", "rho1", "rho2", "u1", "u2"]
ENERGY_COLUMNS = ["t", "E", "D", "D_int"]

PathLike = Union[str, Path]


def atomic_write_text(path: PathLike, text: str) -> Path:
    """Write a file through a temporary sibling and an atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def frame_to_csv(frame: pd.DataFrame) -> str:
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return buffer.getvalue()


def write_frame(frame: pd.DataFrame, path: PathLike) -> Path:
    path = atomic_write_text(path, frame_to_csv(frame))
    logger.debug("wrote %s (%d rows)", path, len(frame))
    return path


def fields_frame(traj: Trajectory) -> pd.DataFrame:
    """Stored states stacked row-wise: one row per (t, x)."""
    x = np.asarray(traj.grid.nodes)
    blocks = []
    for state in traj.states:
        blocks.append(
            pd.DataFrame(
                {
                    "t": np.full(x.size, state.t),
                    "x": x,
                    "rho1": state.rho1,
                    "rho2": state.rho2,
                    "u1": state.u1,
                    "u2": state.u2,
                },
                columns=FIELD_COLUMNS,
            )
        )
    return pd.concat(blocks, ignore_index=True)


def charts_frame(traj: Trajectory) -> pd.DataFrame:
    """Every stored state resampled on the mass grids of both components."""
    return pd.concat([chart_frame(state, m) for m in (1, 2) for state in traj.states], ignore_index=True)


def energy_frame(records: Sequence[EnergyRecord]) -> pd.DataFrame:
    return pd.DataFrame([[r.t, r.E, r.D, r.D_int] for r in records], columns=ENERGY_COLUMNS)


def plot_energy(records: List[EnergyRecord], bound: float, path: PathLike) -> Path:
    """Energy, energy plus dissipation integral and the initial-energy bound over time."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t = [r.t for r in records]
    fig, ax = plt.subplots(figsize=(10, 6))
    ax.plot(t, [r.E for r in records], label="E(t)")
    ax.plot(t, [r.E + r.D_int for r in records], label="E(t) + int D")
    ax.axhline(bound, color="k", linestyle="--", label="B1")
    ax.set_title("Energy balance")
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path
