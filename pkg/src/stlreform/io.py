"""Run configuration plus the trajectory CSV and JSON report writers."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .formula import Trajectory
from .solver import SolverOptions

METHODS = ("exact", "smooth-approx", "both")


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    method: str = "exact"
    k: Optional[float] = None       # None: the scenario's choice (a fixed k or the grid search)
    horizon: Optional[int] = None
    seed: int = 0
    init: str = "reference"
    scale: float = 1.0
    out: Optional[str] = None
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {', '.join(METHODS)}, got {self.method!r}")
        if self.k is not None and not self.k > 0:
            raise ValueError(f"k must be positive, got {self.k}")
        if self.horizon is not None and self.horizon < 0:
            raise ValueError(f"horizon must be non-negative, got {self.horizon}")
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    def to_dict(self) -> dict:
        return asdict(self)


def write_trajectory_csv(path, traj: Trajectory, state_names, input_names) -> None:
    """Header ``t,<states>,<inputs>``; floats are written with full precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *state_names, *input_names])
        U = traj.inputs if traj.m else np.zeros((0, traj.T + 1))
        for t in range(traj.T + 1):
            w.writerow([t, *map(repr, traj.states[:, t].tolist()), *map(repr, U[:, t].tolist())])


def read_trajectory_csv(path, n: int) -> Trajectory:
    """Inverse of :func:`write_trajectory_csv`; the first ``n`` value columns are states."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return Trajectory(data[:, :n].T.copy(), data[:, n:].T.copy())


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def write_report(path, report: dict) -> None:
    Path(path).write_text(json.dumps(_clean(report), indent=2) + "\n")
