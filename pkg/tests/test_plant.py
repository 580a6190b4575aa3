import numpy as np
import pytest

from cumstl.plant import (COSTS, PLANTS, NoiseSpec, NonFiniteStateError, SystemModel,
                          collision_avoidance, dubins_model, effort_cost, integrator_model,
                          linear_model, product_model, quadratic_motion_cost, simulate)
from cumstl.semantics import rho

from oracles import finite_difference


def test_dubins_step():
    sys1 = dubins_model(dt=0.1)
    x = sys1.f([1.0, 2.0, 0.0], [2.0, 0.5])
    assert np.allclose(x, [1.2, 2.0, 0.1])


def test_linear_step():
    x = linear_model().f([1.0, 2.0], [3.0])
    assert np.allclose(x, [2.0, 4.6])


@pytest.mark.parametrize("system", [dubins_model(), dubins_model(vehicles=2), linear_model(),
                                    integrator_model()])
def test_jacobians_match_fd(system):
    rng = np.random.default_rng(0)
    x = rng.uniform(0.5, 2.0, (system.n, 1))
    u = rng.uniform(0.1, 0.6, (system.m, 1))
    jx, ju = system.jacobians(x, u)
    for i in range(system.n):
        fx = finite_difference(lambda v: system.step(v, u)[i, 0], x)
        fu = finite_difference(lambda v: system.step(x, v)[i, 0], u)
        assert np.allclose(jx[0, i], fx[:, 0], atol=1e-9)
        assert np.allclose(ju[0, i], fu[:, 0], atol=1e-9)


def test_product_model_stacks_independent_plants():
    two = product_model([dubins_model(), dubins_model()])
    ref = dubins_model(vehicles=2)
    x = np.array([[1.0], [2.0], [0.3], [4.0], [5.0], [-0.2]])
    u = np.array([[1.0], [0.2], [0.5], [-0.4]])
    assert np.allclose(two.step(x, u), ref.step(x, u))
    assert np.allclose(two.jacobians(x, u)[0], ref.jacobians(x, u)[0])


def test_simulate_shapes_and_initial_state():
    traj = simulate(linear_model(), [1.0, 0.0], np.zeros((1, 4)))
    assert traj.values.shape == (2, 5) and traj.values[0, 0] == 1.0


def test_simulate_rejects_wrong_policy_rows():
    with pytest.raises(ValueError):
        simulate(linear_model(), [0.0, 0.0], np.zeros((2, 3)))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_state_detected():
    with pytest.raises(NonFiniteStateError):
        simulate(linear_model(A=[[1e200, 0], [0, 1]]), [1e200, 0.0], np.zeros((1, 3)))


def test_noise_is_replayable_and_scaled():
    noise = NoiseSpec.from_variance(0.1, seed=42)
    a = simulate(integrator_model(), [0.0], np.zeros((1, 5)), noise)
    b = simulate(integrator_model(), [0.0], np.zeros((1, 5)), noise)
    assert np.array_equal(a.values, b.values)
    c = simulate(integrator_model(), [0.0], np.zeros((1, 5)), NoiseSpec(0.1 ** 0.5, seed=43))
    assert not np.array_equal(a.values, c.values)
    draws = np.concatenate([NoiseSpec(np.sqrt(0.1), s).sample(0, 1) for s in range(4000)])
    assert abs(draws.var() - 0.1) < 0.01


def test_noise_rejects_negative_std():
    with pytest.raises(ValueError):
        NoiseSpec(-1.0)


def test_control_box_validation():
    with pytest.raises(ValueError):
        SystemModel("bad", 1, 1, lambda x, u: x, lambda x, u: None, u_low=1.0, u_high=0.0,
                    x_low=-1.0, x_high=1.0)


def test_state_box_formula():
    box = dubins_model(workspace=7).state_box_formula(3)
    inside = simulate(dubins_model(), [1.0, 1.0, 0.0], np.tile([[1.0], [0.0]], 3))
    assert rho(box, inside) > 0
    assert linear_model().state_box_formula(3) is None


def test_collision_predicate():
    f = collision_avoidance(0.3)
    assert rho(f, np.array([[0.0], [0.0], [0], [1.0], [0.0], [0]])) == pytest.approx(1 - 0.36)
    assert rho(f, np.array([[0.0], [0.0], [0], [0.5], [0.0], [0]])) < 0


@pytest.mark.parametrize("cost", [quadratic_motion_cost(), effort_cost()])
def test_cost_gradients(cost):
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 5))
    u = rng.normal(size=(1, 4))
    gx, gu = cost.total_grad(x, u)
    assert np.allclose(gx, finite_difference(lambda v: cost.total(v, u), x), atol=1e-8)
    assert np.allclose(gu, finite_difference(lambda v: cost.total(x, v), u), atol=1e-8)


def test_registries():
    assert set(PLANTS) == {"dubins", "linear", "integrator"}
    assert set(COSTS) == {"motion", "effort", "none"}
    assert COSTS["none"]().total(np.zeros((1, 3)), np.ones((1, 2))) == 0.0
