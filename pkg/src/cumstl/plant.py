"""Discrete-time plants ``x[k+1] = f(x[k], u[k])``, simulation and step costs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .lang import BinOp, Const, Formula, Globally, Interval, Pow, Pred, Var, conjunction
from .semantics import Trajectory


class NonFiniteStateError(FloatingPointError):
    def __init__(self, step: int):
        self.step = step
        super().__init__(f"non-finite state produced at step {step}")


@dataclass(frozen=True)
class SystemModel:
    """A smooth plant with analytic Jacobians.

    ``step(x, u)`` and ``jacobians(x, u)`` are vectorized: ``x`` is (n, K) and
    ``u`` is (m, K); Jacobians come back as (K, n, n) and (K, n, m).
    """

    name: str
    n: int
    m: int
    step: Callable
    jacobians: Callable
    u_low: np.ndarray
    u_high: np.ndarray
    x_low: np.ndarray
    x_high: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        for attr, size in (("u_low", self.m), ("u_high", self.m),
                           ("x_low", self.n), ("x_high", self.n)):
            a = np.broadcast_to(np.asarray(getattr(self, attr), dtype=float), (size,)).copy()
            a.setflags(write=False)
            object.__setattr__(self, attr, a)
        if not np.all(self.u_low < self.u_high):
            raise ValueError("control box needs u_low < u_high componentwise")
        if not np.all(self.x_low < self.x_high):
            raise ValueError("state box needs x_low < x_high componentwise")

    def f(self, x, u):
        """Single-step successor for one state vector."""
        x = np.asarray(x, dtype=float).reshape(self.n, 1)
        u = np.asarray(u, dtype=float).reshape(self.m, 1)
        return self.step(x, u)[:, 0]

    def project(self, u):
        """Clamp controls (m, L) into the control box."""
        u = np.asarray(u, dtype=float)
        return np.clip(u, self.u_low[:, None], self.u_high[:, None])

    def state_box_formula(self, steps: int) -> Formula | None:
        """``G[0, steps]`` of the affine predicates describing the state box.

        Returns ``None`` when the box is unbounded in every direction.
        """
        preds = []
        for i in range(self.n):
            if np.isfinite(self.x_low[i]):
                preds.append(Pred(BinOp("-", Var(i), Const(float(self.x_low[i])))))
            if np.isfinite(self.x_high[i]):
                preds.append(Pred(BinOp("-", Const(float(self.x_high[i])), Var(i))))
        if not preds:
            return None
        body = conjunction(preds)
        if steps < 1:
            return body
        return Globally(Interval(0, steps), body)


@dataclass(frozen=True)
class NoiseSpec:
    """I.i.d. Gaussian disturbance added to the state after every step."""

    std: np.ndarray
    seed: int = 0

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.std, dtype=float)).copy()
        if np.any(s < 0):
            raise ValueError("noise standard deviations must be >= 0")
        s.setflags(write=False)
        object.__setattr__(self, "std", s)

    @classmethod
    def from_variance(cls, variance, seed: int = 0) -> "NoiseSpec":
        return cls(np.sqrt(np.asarray(variance, dtype=float)), seed)

    def sample(self, step: int, n: int) -> np.ndarray:
        # one independent stream per (seed, step) keeps rollouts replayable
        rng = np.random.default_rng([self.seed & 0xFFFFFFFFFFFFFFFF, step])
        return np.broadcast_to(self.std, (n,)) * rng.standard_normal(n)


@dataclass(frozen=True)
class CostFunction:
    """Per-step cost ``J(x[k], u[k], x[k+1])`` with partials.

    ``value`` maps arrays (n, L), (m, L), (n, L) to per-step costs (L,);
    ``grad`` returns the partials with respect to each of the three arguments.
    """

    name: str
    value: Callable
    grad: Callable

    def total(self, states, policy) -> float:
        x = np.asarray(getattr(states, "values", states), dtype=float)
        u = np.asarray(policy, dtype=float)
        return float(np.sum(self.value(x[:, :-1], u, x[:, 1:])))

    def total_grad(self, states, policy):
        """Partials of the summed cost: (n, L+1) over states and (m, L) over controls."""
        x = np.asarray(getattr(states, "values", states), dtype=float)
        u = np.asarray(policy, dtype=float)
        dx, du, dxn = self.grad(x[:, :-1], u, x[:, 1:])
        gx = np.zeros_like(x)
        gx[:, :-1] += dx
        gx[:, 1:] += dxn
        return gx, du


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


def _as_policy(system: SystemModel, policy) -> np.ndarray:
    u = np.asarray(policy, dtype=float)
    if u.ndim == 1:
        u = u.reshape(system.m, -1) if system.m > 1 else u[None, :]
    if u.shape[0] != system.m:
        raise ValueError(f"policy must have {system.m} rows, got shape {u.shape}")
    return u


def simulate(system: SystemModel, gamma, policy, noise: NoiseSpec | None = None) -> Trajectory:
    """Roll the plant forward from ``gamma`` under ``policy`` (m, L)."""
    u = _as_policy(system, policy)
    L = u.shape[1]
    x = np.empty((system.n, L + 1))
    x[:, 0] = np.asarray(gamma, dtype=float).reshape(system.n)
    if not np.all(np.isfinite(x[:, 0])):
        raise NonFiniteStateError(0)
    step = system.step
    for k in range(L):
        x[:, k + 1:k + 2] = step(x[:, k:k + 1], u[:, k:k + 1])
        if noise is not None:
            x[:, k + 1] += noise.sample(k, system.n)
    finite = np.isfinite(x).all(axis=0)
    if not finite.all():
        raise NonFiniteStateError(int(np.argmin(finite)))
    return Trajectory(x, system.dt)


def simulate_noisy(system: SystemModel, noise: NoiseSpec, gamma, policy) -> Trajectory:
    return simulate(system, gamma, policy, noise=noise)


# ---------------------------------------------------------------------------
# Concrete plants
# ---------------------------------------------------------------------------


def dubins_model(dt: float = 0.1, v_max: float = 2.0, omega_max: float = 0.75,
                 workspace: float = 7.0, vehicles: int = 1) -> SystemModel:
    """Unicycle(s) with state (x, y, theta) and input (v, omega) per vehicle.

    Heading changes by ``v * omega * dt`` per step. With ``vehicles > 1`` the
    states and inputs of independent vehicles are stacked in order.
    """
    c = vehicles

    def step(x, u):
        th, v, w = x[2::3], u[0::2], u[1::2]
        out = np.empty_like(x, dtype=float)
        out[0::3] = x[0::3] + np.cos(th) * v * dt
        out[1::3] = x[1::3] + np.sin(th) * v * dt
        out[2::3] = th + v * w * dt
        return out

    def jacobians(x, u):
        K = x.shape[1]
        jx = np.zeros((K, 3 * c, 3 * c))
        ju = np.zeros((K, 3 * c, 2 * c))
        for j in range(c):
            th, v, w = x[3 * j + 2], u[2 * j], u[2 * j + 1]
            r, s = 3 * j, 2 * j
            jx[:, r, r] = jx[:, r + 1, r + 1] = jx[:, r + 2, r + 2] = 1.0
            jx[:, r, r + 2] = -np.sin(th) * v * dt
            jx[:, r + 1, r + 2] = np.cos(th) * v * dt
            ju[:, r, s] = np.cos(th) * dt
            ju[:, r + 1, s] = np.sin(th) * dt
            ju[:, r + 2, s] = w * dt
            ju[:, r + 2, s + 1] = v * dt
        return jx, ju

    name = "dubins" if c == 1 else f"dubins{c}"
    return SystemModel(name, 3 * c, 2 * c, step, jacobians,
                       u_low=np.tile([0.0, -omega_max], c),
                       u_high=np.tile([v_max, omega_max], c),
                       x_low=np.tile([0.0, 0.0, -np.inf], c),
                       x_high=np.tile([workspace, workspace, np.inf], c),
                       dt=dt)


def linear_model(A=((1.0, 0.5), (0.0, 0.8)), B=((0.0,), (1.0,)), u_bound: float = 10.0,
                 dt: float = 1.0, name: str = "linear") -> SystemModel:
    """``x[k+1] = A x[k] + B u[k]`` with a symmetric control box."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n, m = B.shape

    def step(x, u):
        return A @ x + B @ u

    def jacobians(x, u):
        K = x.shape[1]
        return (np.broadcast_to(A, (K, n, n)).copy(),
                np.broadcast_to(B, (K, n, m)).copy())

    return SystemModel(name, n, m, step, jacobians,
                       u_low=-u_bound, u_high=u_bound,
                       x_low=-np.inf, x_high=np.inf, dt=dt)


def integrator_model(u_bound: float = 1.0, dt: float = 1.0) -> SystemModel:
    """Scalar integrator ``x[k+1] = x[k] + u[k]``."""
    return linear_model([[1.0]], [[1.0]], u_bound=u_bound, dt=dt, name="integrator")


def product_model(systems: Sequence[SystemModel], name: str | None = None) -> SystemModel:
    """Independent plants stacked into one system (states and inputs concatenated)."""
    systems = list(systems)
    ns = np.cumsum([0] + [s.n for s in systems])
    ms = np.cumsum([0] + [s.m for s in systems])
    n, m = int(ns[-1]), int(ms[-1])

    def step(x, u):
        return np.concatenate([s.step(x[ns[i]:ns[i + 1]], u[ms[i]:ms[i + 1]])
                               for i, s in enumerate(systems)])

    def jacobians(x, u):
        K = x.shape[1]
        jx = np.zeros((K, n, n))
        ju = np.zeros((K, n, m))
        for i, s in enumerate(systems):
            a, b = s.jacobians(x[ns[i]:ns[i + 1]], u[ms[i]:ms[i + 1]])
            jx[:, ns[i]:ns[i + 1], ns[i]:ns[i + 1]] = a
            ju[:, ns[i]:ns[i + 1], ms[i]:ms[i + 1]] = b
        return jx, ju

    return SystemModel(name or "x".join(s.name for s in systems), n, m, step, jacobians,
                       u_low=np.concatenate([s.u_low for s in systems]),
                       u_high=np.concatenate([s.u_high for s in systems]),
                       x_low=np.concatenate([s.x_low for s in systems]),
                       x_high=np.concatenate([s.x_high for s in systems]),
                       dt=systems[0].dt)


def collision_avoidance(radius: float = 0.3, steps: int = 0,
                        first: tuple = (0, 1), second: tuple = (3, 4)) -> Formula:
    """Keep two disc footprints apart: ``dx^2 + dy^2 > (2 r)^2`` over ``[0, steps]``."""
    dx = BinOp("-", Var(first[0]), Var(second[0]))
    dy = BinOp("-", Var(first[1]), Var(second[1]))
    expr = BinOp("-", BinOp("+", Pow(dx, 2), Pow(dy, 2)), Const((2 * radius) ** 2))
    body = Pred(expr)
    return Globally(Interval(0, steps), body) if steps >= 1 else body


# ---------------------------------------------------------------------------
# Costs
# ---------------------------------------------------------------------------


def quadratic_motion_cost() -> CostFunction:
    """``J = ||x[k+1] - x[k]||^2``."""

    def value(x, u, xn):
        return np.sum((xn - x) ** 2, axis=0)

    def grad(x, u, xn):
        d = 2.0 * (xn - x)
        return -d, np.zeros_like(u), d

    return CostFunction("motion", value, grad)


def effort_cost() -> CostFunction:
    """``J = ||u[k]||^2``."""

    def value(x, u, xn):
        return np.sum(u ** 2, axis=0)

    def grad(x, u, xn):
        return np.zeros_like(x), 2.0 * u, np.zeros_like(xn)

    return CostFunction("effort", value, grad)


def zero_cost() -> CostFunction:
    def value(x, u, xn):
        return np.zeros(u.shape[1])

    def grad(x, u, xn):
        return np.zeros_like(x), np.zeros_like(u), np.zeros_like(xn)

    return CostFunction("none", value, grad)


PLANTS: dict = {
    "dubins": dubins_model,
    "linear": linear_model,
    "integrator": integrator_model,
}

COSTS: dict = {
    "motion": quadratic_motion_cost,
    "effort": effort_cost,
    "none": zero_cost,
}
