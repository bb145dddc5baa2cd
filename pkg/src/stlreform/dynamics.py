"""Discrete-time dynamics ``x_{t+1} = f(x_t, u_t)`` with batched Jacobians."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class LtiDynamics:
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float).reshape(A.shape[0], -1)
        if A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    kind = "lti"
    linear = True

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def step(self, x, u):
        return self.A @ np.asarray(x, dtype=float) + self.B @ np.asarray(u, dtype=float)

    def jacobians(self, X, U):
        k = X.shape[1]
        return np.repeat(self.A[None], k, axis=0), np.repeat(self.B[None], k, axis=0)

    def params(self) -> dict:
        return {"A": self.A.tolist(), "B": self.B.tolist()}

    def __eq__(self, other):
        return isinstance(other, LtiDynamics) and np.array_equal(self.A, other.A) \
            and np.array_equal(self.B, other.B)


@dataclass(frozen=True)
class UnicycleDynamics:
    """Euler-discretized kinematic unicycle; state ``[px, py, theta]``, input ``[v, omega]``."""

    dt: float = 0.5

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    kind = "unicycle"
    linear = False
    n = 3
    m = 2

    def step(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return x + self.dt * np.array([u[0] * np.cos(x[2]), u[0] * np.sin(x[2]), u[1]])

    def jacobians(self, X, U):
        """Batched ``(k, n, n)`` and ``(k, n, m)`` Jacobians at columns of X, U."""
        k = X.shape[1]
        c, s = np.cos(X[2]), np.sin(X[2])
        fx = np.repeat(np.eye(3)[None], k, axis=0)
        fx[:, 0, 2] = -self.dt * U[0] * s
        fx[:, 1, 2] = self.dt * U[0] * c
        fu = np.zeros((k, 3, 2))
        fu[:, 0, 0] = self.dt * c
        fu[:, 1, 0] = self.dt * s
        fu[:, 2, 1] = self.dt
        return fx, fu

    def params(self) -> dict:
        return {"dt": self.dt}


def double_integrator() -> LtiDynamics:
    """Planar double integrator: state ``[px, py, vx, vy]``, input ``[ax, ay]``, unit step."""
    I, Z = np.eye(2), np.zeros((2, 2))
    return LtiDynamics(np.block([[I, I], [Z, I]]), np.vstack([Z, I]))


def unicycle_step(x, u, dt: float = 0.5):
    return UnicycleDynamics(dt).step(x, u)


def rollout(dynamics, x0, inputs):
    """States ``(n, T+1)`` from x0 under inputs ``(m, T+1)`` (last column unused)."""
    inputs = np.asarray(inputs, dtype=float)
    T = inputs.shape[1] - 1
    X = np.empty((dynamics.n, T + 1))
    X[:, 0] = x0
    for t in range(T):
        X[:, t + 1] = dynamics.step(X[:, t], inputs[:, t])
    return X


def dynamics_from_dict(d: dict):
    kind = d.get("type")
    params = d.get("params", {})
    if kind == "double_integrator":
        return double_integrator()
    if kind == "lti":
        return LtiDynamics(params["A"], params["B"])
    if kind == "unicycle":
        return UnicycleDynamics(float(params.get("dt", 0.5)))
    raise ValueError(f"unknown dynamics type {kind!r}")


def dynamics_to_dict(dyn) -> dict:
    if isinstance(dyn, LtiDynamics):
        if dyn == double_integrator():
            return {"type": "double_integrator", "params": {}}
        return {"type": "lti", "params": dyn.params()}
    return {"type": "unicycle", "params": dyn.params()}
