"""Projected gradient ascent on smooth robustness and the three-stage pipeline.

Stage 1 maximizes the smooth robustness until the exact robustness of the
simulated trajectory is positive, stage 2 maximizes the smooth cumulative
robustness until the projected gradient is small, and stage 3 lowers the
summed step cost for as long as the smooth cumulative robustness stays above
a floor.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import diff
from .lang import And, Formula, Globally, Interval, horizon
from .plant import CostFunction, SystemModel, simulate
from .semantics import (Trajectory, UnsupportedFormulaError, check_cumulative,
                        rho as exact_rho, smooth_robustness,
                        validate_smooth)
from .semantics import cumulative as exact_cumulative

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------


class Objective:
    """Smooth scalar objective Q(trajectory, policy) with partial derivatives."""

    def value(self, traj: Trajectory, u: np.ndarray) -> float:
        return self.value_and_grad(traj, u)[0]

    def value_and_grad(self, traj: Trajectory, u: np.ndarray):
        """Return ``(Q, dQ/dsigma (n, L+1), dQ/du (m, L))``."""
        raise NotImplementedError


@dataclass
class RobustnessObjective(Objective):
    """Smooth robustness of ``formula`` at step 0 of ``history ++ trajectory``.

    ``history`` holds fixed states (n, H) that precede the first trajectory
    sample; they enter the evaluation but receive no gradient.
    """

    formula: Formula
    beta: float = 10.0
    kind: str = "rho"
    history: np.ndarray | None = None
    beta_rect: float | None = None

    def __post_init__(self):
        if self.kind not in ("rho", "rho_plus", "rho_minus"):
            raise ValueError(f"unknown robustness kind {self.kind!r}")
        # validated once; evaluations below skip the tree walk
        validate_smooth(self.formula, self.kind)

    def _signal(self, traj):
        x = traj.values
        if self.history is None or self.history.shape[1] == 0:
            return x, 0
        return np.concatenate([self.history, x], axis=1), self.history.shape[1]

    def value(self, traj, u):
        sig, _ = self._signal(traj)
        tape = diff.Tape()
        node = smooth_robustness(self.formula, tape.variable(sig), self.beta,
                                 self.kind, 0, self.beta_rect, validate=False)
        return float(node.value)

    def value_and_grad(self, traj, u):
        sig, offset = self._signal(traj)
        q, g = diff.grad_wrt_signal(
            lambda s: smooth_robustness(self.formula, s, self.beta, self.kind, 0,
                                        self.beta_rect, validate=False), sig)
        return q, g[:, offset:], np.zeros_like(u)


@dataclass
class CostObjective(Objective):
    """Negated summed step cost."""

    cost: CostFunction

    def value(self, traj, u):
        return -self.cost.total(traj, u)

    def value_and_grad(self, traj, u):
        gx, gu = self.cost.total_grad(traj, u)
        return -self.cost.total(traj, u), -gx, -gu


@dataclass
class ClosurePenalty(Objective):
    """``-weight * ||sigma[start + period] - sigma[start]||^2``."""

    start: int
    period: int
    weight: float = 1.0

    def value_and_grad(self, traj, u):
        x = traj.values
        d = x[:, self.start + self.period] - x[:, self.start]
        gx = np.zeros_like(x)
        gx[:, self.start + self.period] = -2.0 * self.weight * d
        gx[:, self.start] += 2.0 * self.weight * d
        return -self.weight * float(d @ d), gx, np.zeros_like(u)


@dataclass
class SumObjective(Objective):
    terms: Sequence[Objective]

    def value(self, traj, u):
        return float(sum(t.value(traj, u) for t in self.terms))

    def value_and_grad(self, traj, u):
        q, gx, gu = 0.0, 0.0, 0.0
        for t in self.terms:
            a, b, c = t.value_and_grad(traj, u)
            q, gx, gu = q + a, gx + b, gu + c
        return q, gx, gu


# ---------------------------------------------------------------------------
# Ascent configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes alpha_i; ``kind`` is harmonic, geometric or constant."""

    alpha0: float = 1.0
    kind: str = "harmonic"
    kappa: float = 0.01
    ratio: float = 0.995
    backtracking: bool = True
    shrink: float = 0.5
    max_shrinks: int = 30

    def __post_init__(self):
        if not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")
        if self.kind not in ("harmonic", "geometric", "constant"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink factor must lie in (0, 1)")

    def alpha(self, i: int) -> float:
        if self.kind == "harmonic":
            return self.alpha0 / (1.0 + self.kappa * i)
        if self.kind == "geometric":
            return self.alpha0 * self.ratio ** i
        return self.alpha0


@dataclass
class Termination:
    """First-of stopping rule; ``max_iters`` always bounds the run.

    ``objective_above``, ``grad_norm_below`` and ``satisfied`` are tested on
    the current iterate. ``objective_below`` is tested on every candidate
    step against ``monitor`` (default: the objective); a crossing step is
    shrunk, and the run stops at the last iterate still above the floor once
    no admissible step is left.
    """

    max_iters: int = 1000
    objective_above: float | None = None
    grad_norm_below: float | None = None
    objective_below: float | None = None
    monitor: Callable | None = None
    satisfied: Callable | None = None

    def primary(self) -> bool:
        return any(v is not None for v in (self.objective_above, self.grad_norm_below,
                                           self.objective_below, self.satisfied))


@dataclass
class InputMap:
    """Linear map from decision variables (m, Lz) to applied inputs (m, L)."""

    columns: np.ndarray  # applied column j uses decision column columns[j]
    size: int

    def expand(self, z):
        return z[:, self.columns]

    def fold(self, g):
        out = np.zeros((g.shape[0], self.size))
        np.add.at(out.T, self.columns, g.T)
        return out


@dataclass
class AscentResult:
    policy: np.ndarray
    trajectory: Trajectory
    objective: float
    objective_trace: list
    grad_norm_trace: list
    iterations: int
    status: str  # converged | max_iters | stalled

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def project_controls(policy, box) -> np.ndarray:
    """Clamp each control into its interval; ``box`` is a system or (low, high)."""
    if isinstance(box, SystemModel):
        low, high = box.u_low, box.u_high
    else:
        low, high = box
    u = np.asarray(policy, dtype=float)
    low = np.asarray(low, dtype=float).reshape(-1, 1) if u.ndim == 2 else np.asarray(low)
    high = np.asarray(high, dtype=float).reshape(-1, 1) if u.ndim == 2 else np.asarray(high)
    return np.maximum(np.minimum(u, high), low)


def gradient_ascent(objective: Objective, u_init, termination: Termination,
                    system: SystemModel, gamma, schedule: StepSchedule | None = None,
                    guard: Callable | None = None,
                    input_map: InputMap | None = None) -> AscentResult:
    """Projected gradient ascent on ``objective`` over the control sequence.

    ``guard(traj, u)`` rejects candidate iterates (treated like a decrease
    of the objective under backtracking). Without a satisfied primary
    condition the best iterate seen is returned with status ``max_iters``
    or ``stalled``.
    """
    schedule = schedule or StepSchedule()
    expand = (lambda z: z) if input_map is None else input_map.expand
    fold = (lambda g: g) if input_map is None else input_map.fold

    def evaluate(z, with_grad):
        u = expand(z)
        traj = simulate(system, gamma, u)
        if not with_grad:
            return traj, objective.value(traj, u), None
        q, gx, gu = objective.value_and_grad(traj, u)
        g = diff.adjoint_controls(gx, system, traj, u, gu)
        return traj, q, fold(g)

    z = project_controls(np.asarray(u_init, dtype=float), system)
    traj, q, grad = evaluate(z, True)
    trace, norms = [], []
    best = (q, z, traj)
    status = "max_iters"
    monitor = termination.monitor or (lambda t, u: objective.value(t, u))

    if termination.objective_below is not None and \
            monitor(traj, expand(z)) < termination.objective_below:
        return AscentResult(z, traj, q, trace, norms, 0, "converged")

    i = 0
    while True:
        pg = float(np.max(np.abs(project_controls(z + grad, system) - z))) if z.size else 0.0
        norms.append(pg)
        if termination.satisfied is not None and termination.satisfied(traj, expand(z)):
            status = "converged"
            break
        if termination.objective_above is not None and q > termination.objective_above:
            status = "converged"
            break
        if termination.grad_norm_below is not None and pg < termination.grad_norm_below:
            status = "converged"
            break
        if i >= termination.max_iters:
            break

        alpha = schedule.alpha(i)
        accepted = None
        floor_hit = False
        for _ in range(schedule.max_shrinks + 1):
            z_new = project_controls(z + alpha * grad, system)
            traj_new, q_new, _ = evaluate(z_new, False)
            if termination.objective_below is not None and \
                    monitor(traj_new, expand(z_new)) < termination.objective_below:
                floor_hit = True
            elif (not schedule.backtracking or q_new >= q) and \
                    (guard is None or guard(traj_new, expand(z_new))):
                accepted = (z_new, traj_new, q_new)
                break
            alpha *= schedule.shrink
        if accepted is None:
            # no admissible step: either the floor is reached or ascent stalled
            status = "converged" if floor_hit else "stalled"
            break
        z_new, traj_new, q_new = accepted
        i += 1
        z = z_new
        traj, q, grad = evaluate(z, True)
        trace.append(q)
        if q > best[0]:
            best = (q, z, traj)

    if status != "converged" and best[0] > q:
        q, z, traj = best
    return AscentResult(expand(z), traj, q, trace, norms, len(trace), status)


# ---------------------------------------------------------------------------
# Three-stage pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    beta: float = 10.0
    beta_rect: float | None = None
    beta_refine: float | None = None  # stages 2 and 3; defaults to the stage-1 value
    robustness: str = "cumulative"  # or "traditional"
    schedule: StepSchedule = field(default_factory=StepSchedule)
    epsilon: float = 1e-3
    margin: float = 0.0  # stage 1 runs until exact robustness exceeds this
    xi: float | None = None
    xi_fraction: float = 0.5
    stage1_iters: int = 500
    stage2_iters: int = 300
    stage3_iters: int = 300
    seed: int = 0
    init: str = "random"  # or "zeros"
    anneal: bool = False
    beta_max: float = 80.0
    restarts: int = 1
    state_box: bool = True
    stage3: bool = True

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.beta_refine is not None and not self.beta_refine > 0:
            raise ValueError("beta_refine must be positive")
        if self.margin < 0:
            raise ValueError("margin must be nonnegative")
        if self.robustness not in ("cumulative", "traditional"):
            raise ValueError("robustness must be 'cumulative' or 'traditional'")
        if self.init not in ("random", "zeros"):
            raise ValueError("init must be 'random' or 'zeros'")


@dataclass
class StageReport:
    name: str
    iterations: int
    status: str
    objective_trace: list
    policy: np.ndarray
    objective: float
    beta: float


@dataclass
class SynthReport:
    policy: np.ndarray
    trajectory: Trajectory
    success: bool
    status: str  # success | infeasible
    formula: Formula
    stages: list
    rho: float
    rho_plus: float | None
    cost: float
    wall_time: float
    seed: int

    def stage(self, name: str) -> StageReport | None:
        for s in self.stages:
            if s.name == name:
                return s
        return None

    @property
    def iterations(self) -> dict:
        return {s.name: s.iterations for s in self.stages}

    def summary(self) -> dict:
        return {
            "status": self.status,
            "success": self.success,
            "rho": self.rho,
            "rho_plus": self.rho_plus,
            "cost": self.cost,
            "iterations": self.iterations,
            "stage_status": {s.name: s.status for s in self.stages},
            "seed": self.seed,
            "wall_time": round(self.wall_time, 3),
        }


def initial_policy(system: SystemModel, steps: int, seed: int, init: str = "random"):
    """Uniform random controls inside the box (zeros clipped into it for ``zeros``)."""
    if init == "zeros":
        return project_controls(np.zeros((system.m, steps)), system)
    rng = np.random.default_rng(seed)
    low = np.where(np.isfinite(system.u_low), system.u_low, -1.0)[:, None]
    high = np.where(np.isfinite(system.u_high), system.u_high, 1.0)[:, None]
    return low + (high - low) * rng.random((system.m, steps))


def augmented_formula(phi: Formula, system: SystemModel, history_len: int = 0,
                      state_box: bool = True) -> Formula:
    """Formula actually optimized: ``G[0,H] phi`` over the history, plus the state box."""
    target = phi if history_len == 0 else Globally(Interval(0, history_len), phi)
    if not state_box:
        return target
    box = system.state_box_formula(horizon(target))
    return target if box is None else And(target, box)


def _full_signal(history, traj):
    if history is None or history.shape[1] == 0:
        return traj.values
    return np.concatenate([history, traj.values], axis=1)


def smooth_optimization(phi: Formula, system: SystemModel, gamma, cost: CostFunction | None,
                        config: SynthConfig | None = None, u_init=None,
                        history=None) -> SynthReport:
    """Synthesize a policy of length ``horizon(phi)`` satisfying ``phi`` at step 0.

    ``history`` (n, H) are already-executed states preceding ``gamma``; the
    formula must then hold at every one of those H earlier steps as well.
    """
    config = config or SynthConfig()
    if config.restarts > 1:
        seeds = np.random.SeedSequence(config.seed).generate_state(config.restarts)
        reports = [smooth_optimization(phi, system, gamma, cost,
                                       replace(config, restarts=1, seed=int(s)),
                                       u_init=u_init if i == 0 else None, history=history)
                   for i, s in enumerate(seeds)]
        return max(reports, key=lambda r: (r.success, _final_objective(r)))
    return _smooth_optimization(phi, system, gamma, cost, config, u_init, history)


def _final_objective(report: SynthReport) -> float:
    s = report.stage("stage2") or report.stage("stage1")
    return s.objective if s is not None else -math.inf


def _smooth_optimization(phi, system, gamma, cost, config, u_init, history) -> SynthReport:
    t0 = time.perf_counter()
    cumulative = config.robustness == "cumulative"
    history = None if history is None else np.asarray(history, dtype=float).reshape(system.n, -1)
    hist_len = 0 if history is None else history.shape[1]
    target = augmented_formula(phi, system, hist_len, config.state_box)
    if cumulative:
        check_cumulative(target)
    steps = horizon(phi)
    if u_init is None:
        u0 = initial_policy(system, steps, config.seed, config.init)
    else:
        u0 = np.asarray(u_init, dtype=float).reshape(system.m, steps)

    def exact_ok(traj, u):
        return exact_rho(target, _full_signal(history, traj)) > 0

    def stage1_done(traj, u):
        return exact_rho(target, _full_signal(history, traj)) > config.margin

    stages = []
    schedule = config.schedule

    # stage 1: minimal satisfaction
    beta = config.beta
    u = u0
    while True:
        obj = RobustnessObjective(target, beta, "rho", history, config.beta_rect)
        res = gradient_ascent(obj, u, Termination(max_iters=config.stage1_iters,
                                                  satisfied=stage1_done),
                              system, gamma, schedule)
        stages.append(StageReport("stage1", res.iterations, res.status,
                                  res.objective_trace, res.policy, res.objective, beta))
        u = res.policy
        if res.converged or not config.anneal or beta * 2 > config.beta_max:
            break
        beta *= 2
        log.debug("stage 1 not converged, annealing beta to %g", beta)

    if not res.converged:
        traj = res.trajectory
        return _report(target, system, history, traj, res.policy, cost, stages, False,
                       "infeasible", t0, config.seed, cumulative)

    # stage 2: maximize the (cumulative) smooth robustness
    kind = "rho_plus" if cumulative else "rho"
    if config.beta_refine is not None:
        beta = config.beta_refine
    robust = RobustnessObjective(target, beta, kind, history, config.beta_rect)
    res2 = gradient_ascent(robust, u, Termination(max_iters=config.stage2_iters,
                                                  grad_norm_below=config.epsilon),
                           system, gamma, schedule, guard=exact_ok)
    stages.append(StageReport("stage2", res2.iterations, res2.status,
                              res2.objective_trace, res2.policy, res2.objective, beta))
    u, traj = res2.policy, res2.trajectory

    # stage 3: lower the cost while the smooth robustness stays above xi
    if cost is not None and config.stage3 and config.stage3_iters > 0:
        xi = config.xi if config.xi is not None else config.xi_fraction * res2.objective
        res3 = gradient_ascent(CostObjective(cost), u,
                               Termination(max_iters=config.stage3_iters, objective_below=xi,
                                           monitor=robust.value),
                               system, gamma, schedule, guard=exact_ok)
        stages.append(StageReport("stage3", res3.iterations, res3.status,
                                  res3.objective_trace, res3.policy, res3.objective, beta))
        u, traj = res3.policy, res3.trajectory

    success = exact_ok(traj, u)
    return _report(target, system, history, traj, u, cost, stages, success,
                   "success" if success else "infeasible", t0, config.seed, cumulative)


def _report(target, system, history, traj, u, cost, stages, success, status, t0, seed,
            cumulative) -> SynthReport:
    sig = _full_signal(history, traj)
    try:
        rp = exact_cumulative(target, sig).positive
    except UnsupportedFormulaError:
        rp = None
    return SynthReport(policy=np.asarray(u), trajectory=traj, success=bool(success),
                       status=status, formula=target, stages=stages,
                       rho=exact_rho(target, sig), rho_plus=rp,
                       cost=cost.total(traj, u) if cost is not None else 0.0,
                       wall_time=time.perf_counter() - t0, seed=seed)
