import math

import numpy as np
import pytest

from cumstl.lang import parse
from cumstl.mpc import MpcConfig
from cumstl.plant import integrator_model, simulate
from cumstl.semantics import Verdict, sat
from cumstl.smc import (SmcConfig, bayesian_estimate, closed_loop_trial, estimate_policy,
                        mpc_sampler, policy_sampler, posterior_mass, trial_seed)
from cumstl.synth import SynthConfig


def _beta_mass_riemann(a, b, lo, hi, n=200_000):
    # midpoint rule on the Beta density, normalized with log-gamma
    x = lo + (np.arange(n) + 0.5) * (hi - lo) / n
    logc = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    dens = np.exp(logc + (a - 1) * np.log(x) + (b - 1) * np.log1p(-x))
    return float(dens.sum() * (hi - lo) / n)


@pytest.mark.parametrize("a,b,delta", [(1, 1, 0.1), (5, 3, 0.05), (40, 70, 0.02),
                                       (2, 30, 0.1)])
def test_posterior_mass_matches_quadrature(a, b, delta):
    mean, mass = posterior_mass(a, b, delta)
    assert mean == a / (a + b)
    lo, hi = max(0.0, mean - delta), min(1.0, mean + delta)
    assert mass == pytest.approx(_beta_mass_riemann(a, b, lo, hi), abs=1e-6)


def test_trial_seeds_are_stable_and_distinct():
    s = [trial_seed(5, i) for i in range(100)]
    assert len(set(s)) == 100 and s == [trial_seed(5, i) for i in range(100)]
    assert all(0 <= v < 2 ** 63 for v in s)


def _coin(p):
    return lambda s: np.random.default_rng(s).random() < p


def test_coin_estimate_and_stopping():
    res = bayesian_estimate(_coin(0.3), SmcConfig(delta=0.05, confidence=0.95, seed=2))
    assert res.converged and res.terminated_by == "confidence_reached"
    assert abs(res.estimate - 0.3) <= 0.05
    assert res.mass >= 0.95
    a, b = res.posterior
    assert (a, b) == (1 + res.successes, 1 + res.samples - res.successes)
    lo, hi = res.interval
    assert lo <= res.estimate <= hi and hi - lo <= 0.1 + 1e-12


def test_stops_on_first_sample_that_reaches_confidence():
    outcomes = []
    coin = _coin(0.5)

    def record(s):
        outcomes.append(coin(s))
        return outcomes[-1]
    res = bayesian_estimate(record, SmcConfig(delta=0.05, confidence=0.95, seed=4))
    assert len(outcomes) == res.samples
    succ = np.cumsum(outcomes)
    masses = [posterior_mass(1 + succ[i], 1 + i + 1 - succ[i], 0.05)[1]
              for i in range(len(outcomes))]
    assert masses[-1] >= 0.95 and max(masses[:-1]) < 0.95


def test_max_samples_cap():
    res = bayesian_estimate(_coin(0.5), SmcConfig(delta=0.01, max_samples=50))
    assert res.samples == 50 and res.terminated_by == "max_samples" and not res.converged


def test_extreme_probabilities_stop_early():
    res = bayesian_estimate(lambda s: True, SmcConfig(delta=0.05, confidence=0.95))
    assert res.estimate > 0.9 and res.samples < 100


def test_reproducible():
    cfg = SmcConfig(delta=0.05, seed=9)
    assert bayesian_estimate(_coin(0.6), cfg) == bayesian_estimate(_coin(0.6), cfg)


@pytest.mark.parametrize("bad", [dict(delta=0), dict(delta=0.6), dict(confidence=0.4),
                                 dict(confidence=1.0), dict(prior=(0, 1)),
                                 dict(max_samples=0)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        SmcConfig(**bad)


def test_trial_without_noise_is_nominal_verdict():
    sysm = integrator_model()
    phi = parse("F[0,3] x1 > 2", 1)
    u = np.ones((1, 3))
    nominal = sat(phi, simulate(sysm, [0.0], u)) is Verdict.TRUE
    assert closed_loop_trial(sysm, 0.0, u, phi, 123, [0.0]) == nominal


def test_policy_replay_estimate():
    sysm = integrator_model()
    phi = parse("F[0,3] x1 > 2", 1)
    u = np.ones((1, 3))
    res = estimate_policy(sysm, 0.5, u, phi, [0.0], SmcConfig(delta=0.05))
    # x[3] ~ N(3, 0.75): P(max(x1..x3) > 2) is high but below one
    assert 0.8 < res.estimate < 1.0
    sampler = policy_sampler(sysm, 0.5, u, phi, [0.0])
    assert sampler(17) == sampler(17)


def test_mpc_sampler_runs_a_closed_loop_trial():
    sysm = integrator_model()
    phi = parse("F[0,2] x1 > 1", 1)
    cfg = MpcConfig(h_m=1, synth=SynthConfig(stage2_iters=10, stage3=False))
    run = mpc_sampler(phi, parse("G[0,1] F[0,2] x1 > 1", 1), sysm, [0.0], None, cfg, 0.01)
    assert run(5) is True
