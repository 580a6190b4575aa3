"""Bayesian statistical model checking of noisy closed-loop rollouts.

Trials are Bernoulli outcomes drawn in index order; after each one the Beta
posterior over the satisfaction probability is updated, and sampling stops
once the posterior puts at least ``confidence`` mass within ``delta`` of the
posterior mean.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.stats import beta as beta_dist

from .lang import Formula
from .mpc import MpcConfig, mpc_synthesize
from .plant import CostFunction, NoiseSpec, SystemModel, simulate
from .semantics import Verdict, sat

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SmcConfig:
    delta: float = 0.01
    confidence: float = 0.95
    prior: tuple[float, float] = (1.0, 1.0)
    max_samples: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.delta < 0.5:
            raise ValueError("delta must lie in (0, 0.5)")
        if not 0.5 < self.confidence < 1:
            raise ValueError("confidence must lie in (0.5, 1)")
        a, b = self.prior
        if not (a > 0 and b > 0):
            raise ValueError("Beta prior parameters must be positive")
        if self.max_samples < 1:
            raise ValueError("max_samples must be >= 1")


@dataclass(frozen=True)
class SmcResult:
    estimate: float
    samples: int
    successes: int
    terminated_by: str  # confidence_reached | max_samples
    posterior: tuple[float, float]
    mass: float
    delta: float

    @property
    def interval(self) -> tuple[float, float]:
        return max(0.0, self.estimate - self.delta), min(1.0, self.estimate + self.delta)

    @property
    def converged(self) -> bool:
        return self.terminated_by == "confidence_reached"


def posterior_mass(a: float, b: float, delta: float) -> tuple[float, float]:
    """Posterior mean of Beta(a, b) and its mass within ``delta`` of the mean."""
    mean = a / (a + b)
    lo, hi = max(0.0, mean - delta), min(1.0, mean + delta)
    return mean, float(beta_dist.cdf(hi, a, b) - beta_dist.cdf(lo, a, b))


def trial_seed(seed: int, i: int) -> int:
    """Sub-seed of trial ``i``; depends on nothing but ``(seed, i)``."""
    return int(np.random.SeedSequence([seed, i]).generate_state(1, np.uint64)[0] >> 1)


def bayesian_estimate(sampler: Callable[[int], bool], config: SmcConfig | None = None
                      ) -> SmcResult:
    """Sequential Bayesian estimate of ``P(sampler(seed) is True)``."""
    config = config or SmcConfig()
    a0, b0 = config.prior
    s = 0
    mean, mass = posterior_mass(a0, b0, config.delta)
    for n in range(1, config.max_samples + 1):
        s += bool(sampler(trial_seed(config.seed, n - 1)))
        a, b = a0 + s, b0 + n - s
        mean, mass = posterior_mass(a, b, config.delta)
        if mass >= config.confidence:
            return SmcResult(mean, n, s, "confidence_reached", (a, b), mass, config.delta)
    n = config.max_samples
    log.warning("max_samples reached with posterior mass %.4f", mass)
    return SmcResult(mean, n, s, "max_samples", (a0 + s, b0 + n - s), mass, config.delta)


def closed_loop_trial(system: SystemModel, noise_std, policy, phi: Formula, sub_seed: int,
                      gamma, k: int = 0) -> bool:
    """One noisy rollout of a fixed policy, judged by the exact monitor.

    An inconclusive verdict (robustness exactly zero) counts as a violation.
    """
    noise = NoiseSpec(noise_std, sub_seed)
    traj = simulate(system, gamma, policy, noise=noise)
    return sat(phi, traj, k) is Verdict.TRUE


def policy_sampler(system: SystemModel, noise_std, policy, phi: Formula, gamma,
                   k: int = 0) -> Callable[[int], bool]:
    """Sampler replaying ``policy`` open-loop under fresh noise per trial."""
    policy = np.array(policy, dtype=float)
    return lambda s: closed_loop_trial(system, noise_std, policy, phi, s, gamma, k)


def mpc_sampler(phi: Formula, check: Formula, system: SystemModel, gamma,
                cost: CostFunction | None, config: MpcConfig, noise_std
                ) -> Callable[[int], bool]:
    """Sampler re-planning every step against noise; much slower than replay.

    A run that becomes infeasible part-way counts as a violation.
    """
    def run(s: int) -> bool:
        cfg = replace(config, noise=NoiseSpec(noise_std, s))
        res = mpc_synthesize(phi, system, gamma, cost, cfg)
        return res.success and sat(check, res.trajectory) is Verdict.TRUE
    return run


def estimate_policy(system: SystemModel, noise_std, policy, phi: Formula, gamma,
                    config: SmcConfig | None = None, k: int = 0) -> SmcResult:
    return bayesian_estimate(policy_sampler(system, noise_std, policy, phi, gamma, k), config)
