"""Receding-horizon synthesis and loop-closing policy search.

At every step the controller re-plans a full window with the three-stage
pipeline, executes only the first input and advances the plant. The planner
sees the already-executed states, so a window that started in the past and
is still pending keeps constraining the new plan.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .lang import Formula, Globally, Interval, horizon
from .plant import CostFunction, NoiseSpec, SystemModel, simulate
from .semantics import Trajectory, rho as exact_rho
from .synth import (ClosurePenalty, InputMap, RobustnessObjective,
                    SumObjective, SynthConfig, SynthReport, Termination,
                    augmented_formula, gradient_ascent, initial_policy,
                    smooth_optimization)

log = logging.getLogger(__name__)


def step_seed(seed: int, k: int) -> int:
    """Seed for step ``k``; step 0 keeps ``seed`` so a one-step run equals plain synthesis."""
    if k == 0:
        return seed
    return int(np.random.SeedSequence([seed, k]).generate_state(1, np.uint64)[0] >> 1)


# ---------------------------------------------------------------------------
# Receding horizon
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MpcConfig:
    h_m: int = 0
    synth: SynthConfig = field(default_factory=SynthConfig)
    warm_start: bool = True
    noise: NoiseSpec | None = None
    # Plan against the executed states too, so windows that opened in the past
    # keep constraining the plan. Off: each plan only needs phi at its own start.
    history: bool = True

    def __post_init__(self):
        if self.h_m < 0:
            raise ValueError("h_m must be >= 0")


@dataclass
class MpcResult:
    """Outcome of a receding-horizon run.

    ``executed`` holds the committed first inputs (m, steps run). On success
    ``policy`` appends the remaining inputs of the last plan, and
    ``trajectory`` is the plant response to ``policy`` (executed part as
    actually observed, tail as predicted).
    """

    executed: np.ndarray
    policy: np.ndarray
    trajectory: Trajectory
    reports: list
    success: bool
    failed_step: int | None
    cost: float
    wall_time: float

    @property
    def status(self) -> str:
        return "success" if self.success else "infeasible"


def _shifted(policy: np.ndarray) -> np.ndarray:
    return np.concatenate([policy[:, 1:], policy[:, -1:]], axis=1)


def mpc_synthesize(phi: Formula, system: SystemModel, gamma, cost: CostFunction | None,
                   config: MpcConfig | None = None) -> MpcResult:
    """Run the receding-horizon loop for steps ``0..h_m``.

    Returns early with ``success=False`` and ``failed_step`` set when a
    per-step synthesis is infeasible.
    """
    config = config or MpcConfig()
    t0 = time.perf_counter()
    h = horizon(phi)
    if h == 0:
        raise ValueError("formula has horizon 0; nothing to plan")
    x = np.asarray(gamma, dtype=float).reshape(system.n)
    states = [x]
    executed = []
    reports: list[SynthReport] = []
    plan = None
    for k in range(config.h_m + 1):
        past = None
        if config.history and k > 0:
            past = np.stack(states[max(0, k - h):k], axis=1)
        synth = replace(config.synth, seed=step_seed(config.synth.seed, k))
        warm = _shifted(plan) if (config.warm_start and plan is not None) else None
        report = smooth_optimization(phi, system, x, cost, synth, u_init=warm, history=past)
        reports.append(report)
        if not report.success:
            log.info("step %d infeasible (rho=%.4g)", k, report.rho)
            ex = np.stack(executed, axis=1) if executed else np.zeros((system.m, 0))
            traj = Trajectory(np.stack(states, axis=1), system.dt)
            return MpcResult(ex, ex, traj, reports, False, k,
                             cost.total(traj, ex) if cost is not None and ex.size else 0.0,
                             time.perf_counter() - t0)
        plan = report.policy
        u0 = plan[:, 0]
        executed.append(u0)
        x = system.f(x, u0)
        if config.noise is not None:
            x = x + config.noise.sample(k, system.n)
        states.append(x)

    ex = np.stack(executed, axis=1)
    tail = plan[:, 1:]
    tail_traj = simulate(system, states[-1], tail)
    values = np.concatenate([np.stack(states, axis=1), tail_traj.values[:, 1:]], axis=1)
    traj = Trajectory(values, system.dt)
    full = np.concatenate([ex, tail], axis=1)
    return MpcResult(ex, full, traj, reports, True, None,
                     cost.total(traj, full) if cost is not None else 0.0,
                     time.perf_counter() - t0)


def closed_loop_formula(phi: Formula, h_m: int) -> Formula:
    """``G[0,h_m] phi``, the requirement a receding-horizon run must meet."""
    return phi if h_m == 0 else Globally(Interval(0, h_m), phi)


# ---------------------------------------------------------------------------
# Loop search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LoopSearchConfig:
    """Candidate ranges and closure settings.

    ``k_range`` and ``period_range`` are inclusive (lo, hi) pairs; periods at
    or below the formula horizon are skipped.
    """

    k_range: tuple[int, int] = (0, 2)
    period_range: tuple[int, int] = (0, 12)
    weights: tuple[float, ...] = (1.0, 10.0, 100.0, 1e3, 1e4)
    iters_per_weight: int = 200
    eta: float = 1e-3
    refine: bool = True  # also maximize the cumulative robustness once closed
    noise: NoiseSpec | None = None

    def __post_init__(self):
        for name, (lo, hi) in (("k_range", self.k_range), ("period_range", self.period_range)):
            if lo < 0 or hi < lo:
                raise ValueError(f"{name} must satisfy 0 <= lo <= hi")
        if not self.weights or any(w <= 0 for w in self.weights):
            raise ValueError("weights must be positive")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")


@dataclass
class LoopResult:
    found: bool
    k: int | None
    period: int | None
    policy: np.ndarray | None  # prefix inputs followed by one period of loop inputs
    residual: float
    rho: float | None
    candidates_tried: int

    @property
    def status(self) -> str:
        return "loop-found" if self.found else "no-loop-found"

    def unroll(self, system: SystemModel, gamma, periods: int,
               noise: NoiseSpec | None = None) -> Trajectory:
        """Trajectory under the prefix then ``periods`` repetitions of the loop.

        The loop inputs keep repeating for one more partial period so every
        period start has a complete evaluation window.
        """
        if not self.found:
            raise ValueError("no loop to unroll")
        return simulate(system, gamma, self.repeated_policy(periods, extra=self.period),
                        noise=noise)

    def repeated_policy(self, periods: int, extra: int = 0) -> np.ndarray:
        prefix, loop = self.policy[:, :self.k], self.policy[:, self.k:]
        reps = -(-(periods * self.period + extra) // self.period)
        body = np.tile(loop, (1, reps))[:, :periods * self.period + extra]
        return np.concatenate([prefix, body], axis=1)


def _loop_map(k: int, period: int, steps: int) -> InputMap:
    cols = np.array([j if j < k else k + (j - k) % period for j in range(steps)])
    return InputMap(cols, k + period)


def _residual(traj: Trajectory, k: int, period: int) -> float:
    x = traj.values
    return float(np.max(np.abs(x[:, k + period] - x[:, k])))


def loop_search(phi: Formula, system: SystemModel, gamma,
                config: LoopSearchConfig | None = None,
                synth: SynthConfig | None = None) -> LoopResult:
    """Brute-force search over loop start ``k`` and period ``K > horizon(phi)``.

    For each candidate the inputs after ``k + K`` repeat the loop inputs, the
    requirement ``phi`` is imposed at every start in ``[0, k + K)``, and a
    quadratic closure penalty with increasing weight pulls ``sigma[k + K]``
    onto ``sigma[k]``.
    """
    config = config or LoopSearchConfig()
    synth = synth or SynthConfig()
    h = horizon(phi)
    schedule = synth.schedule
    best = LoopResult(False, None, None, None, float("inf"), None, 0)
    tried = 0
    for k in range(config.k_range[0], config.k_range[1] + 1):
        for period in range(max(config.period_range[0], h + 1), config.period_range[1] + 1):
            tried += 1
            target = augmented_formula(closed_loop_formula(phi, k + period - 1), system,
                                       state_box=synth.state_box)
            steps = horizon(target)
            imap = _loop_map(k, period, steps)
            z = initial_policy(system, k + period, step_seed(synth.seed, tried), synth.init)

            def accept(traj, u, k=k, period=period, target=target):
                if config.noise is not None:
                    traj = simulate(system, gamma, u, noise=config.noise)
                return (_residual(traj, k, period) <= config.eta
                        and exact_rho(target, traj) > 0)

            robust = RobustnessObjective(target, synth.beta, "rho", beta_rect=synth.beta_rect)
            res = None
            for w in config.weights:
                obj = SumObjective([robust, ClosurePenalty(k, period, w)])
                res = gradient_ascent(obj, z, Termination(max_iters=config.iters_per_weight,
                                                          satisfied=accept),
                                      system, gamma, schedule, input_map=imap)
                z = res.policy[:, :k + period]
                if res.converged:
                    break
            ok = res.converged and accept(res.trajectory, res.policy)
            if ok and config.refine and synth.robustness == "cumulative":
                cum = RobustnessObjective(target, synth.beta, "rho_plus",
                                          beta_rect=synth.beta_rect)
                obj = SumObjective([cum, ClosurePenalty(k, period, config.weights[-1])])
                res2 = gradient_ascent(obj, z, Termination(max_iters=synth.stage2_iters,
                                                           grad_norm_below=synth.epsilon),
                                       system, gamma, schedule, guard=accept, input_map=imap)
                z = res2.policy[:, :k + period]
                res = res2
            traj = res.trajectory
            if config.noise is not None:
                traj = simulate(system, gamma, res.policy, noise=config.noise)
            resid = _residual(traj, k, period)
            r = exact_rho(target, traj)
            if ok and accept(res.trajectory, res.policy):
                log.info("loop found at k=%d K=%d residual=%.3g", k, period, resid)
                return LoopResult(True, k, period, z, resid, r, tried)
            if resid < best.residual:
                best = LoopResult(False, k, period, z, resid, r, tried)
    best.candidates_tried = tried
    return best


def verify_loop(phi: Formula, result: LoopResult, system: SystemModel, gamma,
                periods: int = 3, tol: float | None = None) -> bool:
    """Exact check of ``phi`` at every step of ``periods`` unrolled loop periods.

    With ``tol`` set, the state at each period boundary must also repeat the
    previous boundary state within ``tol`` (infinity norm).
    """
    traj = result.unroll(system, gamma, periods)
    if any(exact_rho(phi, traj, j) <= 0 for j in range(result.k + periods * result.period)):
        return False
    if tol is not None:
        x = traj.values
        marks = result.k + result.period * np.arange(periods + 1)
        if np.max(np.abs(np.diff(x[:, marks], axis=1))) > tol:
            return False
    return True


__all__ = [
    "MpcConfig", "MpcResult", "mpc_synthesize", "closed_loop_formula",
    "LoopSearchConfig", "LoopResult", "loop_search", "verify_loop", "step_seed",
]
