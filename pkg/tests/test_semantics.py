import math

import numpy as np
import pytest

from cumstl.lang import parse
from cumstl.semantics import (NegatedFinallyError, Trajectory, TrajectoryTooShortError,
                              UnsupportedFormulaError, Verdict, cumulative, cumulative_series,
                              dwell_time, rho, rho_minus, rho_minus_smooth, rho_plus,
                              rho_plus_smooth, rho_smooth, robustness_series, sat, smooth_max,
                              smooth_min)

from oracles import brute_cumulative, brute_rho, brute_sat, instances

PHI_E = "F[0,10] (x1 > 1 && x1 < 3)"
SIGMA1 = [0, 0.5, 1.5, 2, 2, 3.5, 4, 4, 4, 4, 4]
SIGMA2 = [0, 1.5, 2, 2, 2, 2, 2, 2, 2, 0, 0]


def test_example_signals():
    f = parse(PHI_E, 1)
    assert rho(f, SIGMA1) == 1.0 and rho(f, SIGMA2) == 1.0
    assert rho_plus(f, SIGMA1) == 2.5 and rho_plus(f, SIGMA2) == 7.5
    assert rho_minus(f, SIGMA1) == -7.0


def test_series_matches_brute_force():
    for f, x in instances(150, seed=11):
        r = robustness_series(f, x)
        p, n = cumulative_series(f, x)
        for k in range(len(r)):
            assert r[k] == brute_rho(f, x, k)
            bp, bn = brute_cumulative(f, x, k)
            assert abs(p[k] - bp) <= 1e-12 and abs(n[k] - bn) <= 1e-12


def test_signs_of_cumulative_parts():
    for f, x in instances(100, seed=12):
        c = cumulative(f, x)
        assert c.positive >= 0 >= c.negative


def test_verdicts_agree_with_boolean_semantics():
    for f, x in instances(150, seed=13, cumulative_safe=False, allow_true=True):
        v = sat(f, x)
        if v is Verdict.TRUE:
            assert brute_sat(f, x)
        elif v is Verdict.FALSE:
            assert not brute_sat(f, x)


def test_true_is_infinitely_robust():
    f = parse("true && x1 > 0.5", 1)
    assert rho(f, [1.0]) == 0.5
    assert rho(parse("true", 1), [0.0]) == math.inf
    with pytest.raises(UnsupportedFormulaError):
        rho_plus(f, [1.0])
    with pytest.raises(UnsupportedFormulaError):
        rho_smooth(f, [1.0])


def test_zero_robustness_is_inconclusive():
    assert sat(parse("x1 > 1", 1), [1.0]) is Verdict.INCONCLUSIVE


def test_negated_finally_rejected_for_cumulative():
    f = parse("!F[0,2] x1 > 0", 1)
    assert rho(f, [0.0, 0.0, 0.0]) == 0.0
    with pytest.raises(NegatedFinallyError):
        rho_plus(f, [0.0, 0.0, 0.0])


def test_short_trace():
    with pytest.raises(TrajectoryTooShortError):
        rho(parse("G[0,5] x1 > 0", 1), [1.0] * 5)
    with pytest.raises(TrajectoryTooShortError):
        rho(parse("x1 > 0", 1), [1.0, 1.0], k=2)


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory(np.array([[0.0, np.nan]]))
    t = Trajectory(np.zeros((2, 4)), dt=0.5)
    assert t.length == 3 and list(t.times) == [0, 0.5, 1.0, 1.5]
    assert not t.values.flags.writeable


def test_smooth_max_bound():
    rng = np.random.default_rng(0)
    for _ in range(500):
        v = rng.normal(size=rng.integers(1, 20)) * 10
        beta = float(rng.uniform(0.1, 100))
        gap = smooth_max(v, beta) - v.max()
        assert 0 <= gap <= math.log(len(v)) / beta + 1e-12
        assert smooth_min(v, beta) <= v.min()


def test_smooth_values_approach_exact():
    f = parse(PHI_E, 1)
    assert abs(rho_smooth(f, SIGMA1, beta=1e3) - 1.0) < 1e-2
    assert abs(rho_plus_smooth(f, SIGMA2, beta=1e3) - 7.5) < 1e-1
    assert rho_minus_smooth(f, SIGMA1, beta=50) < 0


def test_smooth_of_large_values_is_finite():
    f = parse("F[0,3] x1 > 0", 1)
    assert math.isfinite(rho_smooth(f, [1e5, -1e5, 3e5, 0.0], beta=100))


def test_dwell_time():
    assert dwell_time(parse("x1 > 1 && x1 < 3", 1), SIGMA2) == 8
