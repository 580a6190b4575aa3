import numpy as np
import pytest

from cumstl.lang import parse
from cumstl.plant import effort_cost, integrator_model, linear_model, simulate
from cumstl.semantics import dwell_time, rho, rho_plus_smooth
from cumstl.synth import (CostObjective, InputMap, RobustnessObjective, StepSchedule,
                          SynthConfig, Termination, augmented_formula, gradient_ascent,
                          initial_policy, project_controls, smooth_optimization)

BAND = "x1 > 1 && x1 < 3"
PHI = parse(f"F[0,8] ({BAND})", 1)
SYS = integrator_model(u_bound=1.0)


@pytest.fixture(scope="module")
def reports():
    return {mode: smooth_optimization(PHI, SYS, [0.0], effort_cost(),
                                      SynthConfig(robustness=mode, beta=10))
            for mode in ("cumulative", "traditional")}


def test_pipeline_satisfies_exactly(reports):
    for r in reports.values():
        assert r.success and r.status == "success"
        assert rho(PHI, r.trajectory) > 0
        assert [s.name for s in r.stages] == ["stage1", "stage2", "stage3"]
        assert np.all(np.abs(r.policy) <= 1.0)


def test_cumulative_objective_dwells_longer(reports):
    band = parse(BAND, 1)
    cum = dwell_time(band, reports["cumulative"].trajectory)
    trad = dwell_time(band, reports["traditional"].trajectory)
    assert cum > trad


def test_stage3_respects_floor_and_lowers_cost(reports):
    r = reports["cumulative"]
    s2, s3 = r.stage("stage2"), r.stage("stage3")
    xi = 0.5 * s2.objective
    traj3 = simulate(SYS, [0.0], s3.policy)
    assert rho_plus_smooth(r.formula, traj3, beta=10) >= xi
    assert effort_cost().total(traj3, s3.policy) <= effort_cost().total(
        simulate(SYS, [0.0], s2.policy), s2.policy)


def test_same_seed_same_policy():
    cfg = SynthConfig(seed=4, stage2_iters=20, stage3_iters=5)
    a = smooth_optimization(PHI, SYS, [0.0], effort_cost(), cfg)
    b = smooth_optimization(PHI, SYS, [0.0], effort_cost(), cfg)
    assert np.array_equal(a.policy, b.policy)


def test_infeasible_reported():
    phi = parse("G[0,3] x1 > 10", 1)
    r = smooth_optimization(phi, SYS, [0.0], None, SynthConfig(stage1_iters=30))
    assert not r.success and r.status == "infeasible"
    assert [s.name for s in r.stages] == ["stage1"]


def test_restarts_pick_a_success():
    r = smooth_optimization(PHI, SYS, [0.0], None,
                            SynthConfig(restarts=3, stage2_iters=10, stage3=False))
    assert r.success


def test_history_constrains_the_plan():
    # the window opened one step ago must still be met by the new plan
    phi = parse("F[0,3] x1 > 2", 1)
    hist = np.array([[1.0]])
    r = smooth_optimization(phi, SYS, [1.5], None, SynthConfig(stage3=False),
                            history=hist)
    assert r.success
    full = np.concatenate([hist, r.trajectory.values], axis=1)
    assert rho(parse("G[0,1] F[0,3] x1 > 2", 1), full) > 0
    late = smooth_optimization(phi, SYS, [1.5], None,
                               SynthConfig(stage3=False, stage1_iters=50),
                               history=np.array([[-3.0, -3.0, -3.0]]))
    assert not late.success


def test_config_validation():
    for bad in (dict(beta=0), dict(robustness="x"), dict(init="ones"), dict(margin=-1),
                dict(beta_refine=-2.0)):
        with pytest.raises(ValueError):
            SynthConfig(**bad)
    with pytest.raises(ValueError):
        StepSchedule(alpha0=0)
    with pytest.raises(ValueError):
        StepSchedule(kind="cubic")


def test_schedules():
    assert StepSchedule(alpha0=2, kappa=1).alpha(1) == 1.0
    assert StepSchedule(alpha0=2, kind="geometric", ratio=0.5).alpha(2) == 0.5
    assert StepSchedule(alpha0=2, kind="constant").alpha(50) == 2


def test_projection():
    u = project_controls(np.array([[-5.0, 0.3, 5.0]]), SYS)
    assert u.tolist() == [[-1.0, 0.3, 1.0]]


def test_gradient_ascent_converges_on_concave_objective():
    # maximize -sum u^2 on a linear plant: optimum is u = 0
    sysm = linear_model()
    res = gradient_ascent(CostObjective(effort_cost()), np.full((1, 5), 3.0),
                          Termination(max_iters=500, grad_norm_below=1e-8),
                          sysm, [0.0, 0.0], StepSchedule(alpha0=0.25, kind="constant"))
    assert res.converged
    assert np.allclose(res.policy, 0.0, atol=1e-8)
    assert all(b >= a for a, b in zip(res.objective_trace, res.objective_trace[1:]))


def test_guard_blocks_steps():
    obj = RobustnessObjective(PHI, 10.0)
    res = gradient_ascent(obj, np.zeros((1, 8)), Termination(max_iters=20), SYS, [0.0],
                          guard=lambda t, u: False)
    assert res.status == "stalled" and res.iterations == 0


def test_input_map_round_trip():
    imap = InputMap(np.array([0, 1, 2, 1, 2]), 3)
    z = np.array([[1.0, 2.0, 3.0]])
    assert imap.expand(z).tolist() == [[1, 2, 3, 2, 3]]
    assert imap.fold(np.ones((1, 5))).tolist() == [[1, 2, 2]]


def test_initial_policy_inside_box():
    u = initial_policy(linear_model(), 50, seed=1)
    assert u.shape == (1, 50) and np.all(np.abs(u) <= 10)
    assert np.array_equal(initial_policy(SYS, 4, 0, "zeros"), np.zeros((1, 4)))


def test_augmented_formula_adds_state_box():
    from cumstl.plant import dubins_model
    f = augmented_formula(parse("F[0,2] x1 > 3", 3), dubins_model())
    assert rho(f, np.array([[1.0, 2, 4], [1, 1, 1], [0, 0, 0]])) > 0
    assert rho(f, np.array([[1.0, 2, 8], [1, 1, 1], [0, 0, 0]])) < 0
