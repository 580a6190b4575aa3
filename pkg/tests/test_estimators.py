import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.linear_model import LogisticRegression
from sklearn.pipeline import make_pipeline

from cumstl.estimators import RobustnessTransformer, check_modes, check_trajectories
from cumstl.semantics import Trajectory

X = np.array([[0, 0.5, 1.5, 2, 2, 3.5, 4, 4, 4, 4, 4],
              [0, 1.5, 2, 2, 2, 2, 2, 2, 2, 0, 0]], dtype=float)
PHI = "F[0,10] (x1 > 1 && x1 < 3)"


def test_transform_values():
    t = RobustnessTransformer(PHI, modes=("rho", "rho+", "rho-"))
    out = t.fit_transform(X)
    assert out.tolist() == [[1.0, 2.5, -7.0], [1.0, 7.5, -3.0]]
    assert list(t.get_feature_names_out()) == ["robustness_rho", "robustness_rho+",
                                               "robustness_rho-"]
    assert t.n_features_in_ == 1 and t.horizon_ == 10


def test_smooth_modes_bounded_by_exact():
    out = RobustnessTransformer(PHI, modes=("srho", "srho+"), beta=50).fit_transform(X)
    assert np.all(out[:, 0] >= 1.0)
    assert np.all(out[:, 1] > 0)


def test_accepts_trajectory_lists_of_mixed_length():
    t = RobustnessTransformer("F[0,2] x1 > 1", modes="rho").fit([X[0]])
    batch = [Trajectory(X[0]), X[1][:5]]
    assert t.transform(batch).shape == (2, 1)


def test_params_and_clone():
    t = RobustnessTransformer(PHI, beta=3.0)
    c = clone(t)
    assert c.get_params() == t.get_params()
    c.set_params(beta=7.0)
    assert c.beta == 7.0 and t.beta == 3.0


def test_not_fitted():
    with pytest.raises(NotFittedError):
        RobustnessTransformer(PHI).transform(X)


def test_state_dimension_checked():
    t = RobustnessTransformer("x1 > 0 && x2 > 0", modes="rho").fit(np.zeros((2, 2, 3)))
    with pytest.raises(ValueError):
        t.transform(np.zeros((2, 3, 3)))


@pytest.mark.parametrize("kwargs", [dict(modes=("rho", "max")), dict(beta=0), dict(k=-1),
                                    dict(modes=())])
def test_bad_params(kwargs):
    with pytest.raises(ValueError):
        RobustnessTransformer(PHI, **kwargs).fit(X)


def test_negated_finally_rejected_for_cumulative_modes():
    with pytest.raises(ValueError):
        RobustnessTransformer("!F[0,2] x1 > 0", modes="rho+").fit(X)
    RobustnessTransformer("!F[0,2] x1 > 0", modes="rho").fit(X)


def test_validation_helpers():
    with pytest.raises(ValueError):
        check_trajectories(np.zeros((2, 2, 2, 2)))
    with pytest.raises(ValueError):
        check_trajectories([np.array([[np.inf, 0.0]])])
    with pytest.raises(ValueError):
        check_trajectories([])
    assert check_modes("rho") == ("rho",)


def test_in_pipeline():
    rng = np.random.default_rng(0)
    sigs = rng.uniform(0, 3.2, size=(40, 11))
    y = (sigs.max(axis=1) > 3).astype(int)
    pipe = make_pipeline(RobustnessTransformer("F[0,10] x1 > 3", modes="rho"),
                         LogisticRegression(C=1e6))
    assert pipe.fit(sigs, y).score(sigs, y) == 1.0
