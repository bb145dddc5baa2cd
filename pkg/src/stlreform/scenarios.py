"""Benchmark scenarios and the JSON scenario file format.

A scenario file looks like::

    {"name": ..., "description": ...,
     "dynamics": {"type": "double_integrator" | "lti" | "unicycle", "params": {...}},
     "T": 25, "x0": [...], "alpha": 1.0, "Q": [[...]], "R": [[...]],
     "input_box": [lo, hi] | null, "state_box": [lo, hi] | null,
     "predicates": [{"name": ..., "type": "circle" | "halfplane", "params": {...}}],
     "formula": "F[0,{T}] goal and ...",
     "k": 25 | "grid", "state_names": [...],
     "reference": {"T": 25, "waypoints": [[t, px, py], ...]}}

``{T}`` in the formula is replaced by the horizon, so one file serves every T.
Box bounds may be scalars or per-coordinate lists.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .assemble import Boxes, Weights
from .dynamics import LtiDynamics, UnicycleDynamics, double_integrator, dynamics_from_dict, dynamics_to_dict, rollout
from .formula import Formula, Trajectory, horizon, parse
from .predicates import CirclePredicate, HalfplanePredicate, circle_predicate, halfplane_predicate

BUILTIN_NAMES = ("two-target", "many-target", "narrow-passage", "door-puzzle", "nonlinear")
_FILES = {name: name.replace("-", "_") + ".json" for name in BUILTIN_NAMES}


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    dynamics: object
    T: int
    x0: np.ndarray
    weights: Weights
    predicates: dict
    formula_text: str
    input_box: Optional[tuple] = None
    state_box: Optional[tuple] = None
    k: object = "grid"
    reference: Optional[dict] = None
    state_names: Optional[list] = None
    description: str = ""

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float).ravel()
        if x0.shape != (self.dynamics.n,):
            raise ValueError(f"x0 has dimension {x0.size}, dynamics need {self.dynamics.n}")
        object.__setattr__(self, "x0", x0)
        if horizon(self.formula) > self.T:
            raise ValueError(f"formula horizon {horizon(self.formula)} exceeds T={self.T}")

    @property
    def n(self) -> int:
        return self.dynamics.n

    @property
    def m(self) -> int:
        return self.dynamics.m

    @property
    def formula(self) -> Formula:
        return parse(self.formula_text.replace("{T}", str(self.T)), self.predicates)

    @property
    def boxes(self) -> Boxes:
        return Boxes.make(self.n, self.m, self.state_box, self.input_box)

    def with_horizon(self, T: int) -> "Scenario":
        return replace(self, T=int(T))

    def names(self):
        states = self.state_names or [f"x{i + 1}" for i in range(self.n)]
        return list(states), [f"u{j + 1}" for j in range(self.m)]

    def reference_trajectory(self) -> Optional[Trajectory]:
        """Dynamically consistent reference built from waypoints, rescaled in time to ``T``."""
        if not self.reference:
            return None
        if "states" in self.reference:
            traj = Trajectory(np.asarray(self.reference["states"]), np.asarray(self.reference["inputs"]))
            return traj if traj.T == self.T else _resample(traj, self.T)
        pts = np.asarray(self.reference["waypoints"], dtype=float)
        scale = self.T / float(self.reference.get("T", self.T))
        return waypoint_trajectory(self.dynamics, self.x0, self.T, pts[:, 0] * scale, pts[:, 1:])

    def default_k(self) -> Optional[float]:
        return None if self.k == "grid" else float(self.k)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "dynamics": dynamics_to_dict(self.dynamics),
            "T": self.T,
            "x0": self.x0.tolist(),
            "alpha": self.weights.alpha,
            "Q": self.weights.Q.tolist(),
            "R": self.weights.R.tolist(),
            "input_box": _box_json(self.input_box),
            "state_box": _box_json(self.state_box),
            "predicates": [predicate_to_dict(p) for p in self.predicates.values()],
            "formula": self.formula_text,
            "k": self.k,
            "state_names": self.state_names,
            "reference": self.reference,
        }


def _box_json(box):
    if box is None:
        return None
    return [np.asarray(b, dtype=float).tolist() for b in box]


def predicate_to_dict(p) -> dict:
    if isinstance(p, CirclePredicate):
        params = {"center": list(p.center), "radius": p.radius, "inside": p.inside}
        kind = "circle"
    elif isinstance(p, HalfplanePredicate):
        params = {"normal": list(p.normal), "offset": p.offset}
        kind = "halfplane"
    else:
        raise ValueError(f"predicate {p.name!r} has no file representation")
    if tuple(p.indices) != (0, 1):
        params["indices"] = list(p.indices)
    return {"name": p.name, "type": kind, "params": params}


def predicate_from_dict(d: dict):
    params = d.get("params", {})
    idx = tuple(params.get("indices", (0, 1)))
    if d["type"] == "circle":
        return circle_predicate(params["center"], float(params["radius"]),
                                bool(params.get("inside", True)), name=d["name"], indices=idx)
    if d["type"] == "halfplane":
        return halfplane_predicate(params["normal"], float(params["offset"]), name=d["name"], indices=idx)
    raise ValueError(f"unknown predicate type {d['type']!r}")


def scenario_from_dict(d: dict) -> Scenario:
    dyn = dynamics_from_dict(d["dynamics"])
    preds = {}
    for pd in d["predicates"]:
        p = predicate_from_dict(pd)
        if p.name in preds:
            raise ValueError(f"duplicate predicate name {p.name!r}")
        preds[p.name] = p
    box = lambda b: None if b is None else tuple(b)
    return Scenario(
        name=d["name"],
        description=d.get("description", ""),
        dynamics=dyn,
        T=int(d["T"]),
        x0=d["x0"],
        weights=Weights(d["alpha"], d["Q"], d["R"]),
        predicates=preds,
        formula_text=d["formula"],
        input_box=box(d.get("input_box")),
        state_box=box(d.get("state_box")),
        k=d.get("k", "grid"),
        reference=d.get("reference"),
        state_names=d.get("state_names"),
    )


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=2) + "\n")


def builtin_scenario(name: str, T: Optional[int] = None) -> Scenario:
    if name not in _FILES:
        raise KeyError(f"unknown builtin scenario {name!r}; choose from {', '.join(BUILTIN_NAMES)}")
    text = resources.files("stlreform").joinpath("data").joinpath(_FILES[name]).read_text()
    sc = scenario_from_dict(json.loads(text))
    return sc if T is None else sc.with_horizon(T)


def builtin_scenarios(T: Optional[int] = None) -> list:
    """The four linear stand-in benchmarks (optionally at horizon T) and the unicycle case study."""
    out = [builtin_scenario(n, T) for n in BUILTIN_NAMES if n != "nonlinear"]
    out.append(builtin_scenario("nonlinear"))
    return out


def resolve_scenario(spec: str, T: Optional[int] = None) -> Scenario:
    """A builtin name or a path to a scenario file."""
    if spec in _FILES:
        return builtin_scenario(spec, T)
    path = Path(spec)
    if not path.exists():
        raise FileNotFoundError(f"scenario file not found: {spec}")
    sc = load_scenario(path)
    return sc if T is None else sc.with_horizon(T)


def rectangle(prefix: str, xlo: float, xhi: float, ylo: float, yhi: float):
    """Four halfplane predicates whose conjunction is the box; returns (predicates, formula text)."""
    preds = [
        halfplane_predicate((1.0, 0.0), xlo, name=f"{prefix}_xlo"),
        halfplane_predicate((-1.0, 0.0), -xhi, name=f"{prefix}_xhi"),
        halfplane_predicate((0.0, 1.0), ylo, name=f"{prefix}_ylo"),
        halfplane_predicate((0.0, -1.0), -yhi, name=f"{prefix}_yhi"),
    ]
    return preds, "(" + " and ".join(p.name for p in preds) + ")"


def waypoint_trajectory(dynamics, x0, T: int, times, points) -> Trajectory:
    """Piecewise-linear position path through waypoints, made dynamically consistent.

    For the planar double integrator the velocities are the position increments
    and the inputs their differences. The first increment is fixed by the
    initial velocity, so the path starts interpolating from step 1.
    """
    if not (isinstance(dynamics, LtiDynamics) and dynamics == double_integrator()):
        raise ValueError("waypoint references are only defined for the planar double integrator")
    x0 = np.asarray(x0, dtype=float)
    times = np.asarray(times, dtype=float).copy()
    points = np.asarray(points, dtype=float).copy()
    if T >= 1 and len(times) > 1 and times[0] <= 0 and times[1] > 1:
        times[0], points[0] = 1.0, x0[:2] + x0[2:]
    grid = np.arange(T + 1)
    pos = np.vstack([np.interp(grid, times, points[:, i]) for i in range(2)])
    pos[:, 0] = x0[:2]
    if T >= 1:
        pos[:, 1] = x0[:2] + x0[2:]
    vel = np.zeros((2, T + 1))
    vel[:, 0] = x0[2:]
    vel[:, 1:T] = np.diff(pos[:, 1:], axis=1)
    if T >= 1:
        vel[:, T] = vel[:, T - 1]
    u = np.zeros((2, T + 1))
    u[:, :T] = np.diff(vel, axis=1)
    X = rollout(dynamics, x0, u)
    return Trajectory(X, u)


def _resample(traj: Trajectory, T: int) -> Trajectory:
    old = np.linspace(0.0, 1.0, traj.T + 1)
    new = np.linspace(0.0, 1.0, T + 1)
    S = np.vstack([np.interp(new, old, r) for r in traj.states])
    U = np.vstack([np.interp(new, old, r) for r in traj.inputs]) if traj.m else None
    return Trajectory(S, U)
