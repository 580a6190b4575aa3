"""scikit-learn compatible robustness features.

``RobustnessTransformer`` maps each trajectory in a batch to one column per
requested robustness measure, so a formula can sit at the front of an
ordinary pipeline (for example followed by a classifier).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .lang import Formula, horizon, parse
from .semantics import (Trajectory, cumulative, rho, rho_minus_smooth, rho_plus_smooth,
                        rho_smooth, validate_smooth)

_MODES = ("rho", "rho+", "rho-", "srho", "srho+", "srho-")


def check_trajectories(X, state_dim: int | None = None) -> list[np.ndarray]:
    """Batch of signals as a list of (n, L+1) float arrays.

    Accepts a 3-d array (samples, n, L+1), a 2-d array of scalar signals
    (samples, L+1), or a sequence of :class:`Trajectory` / 2-d arrays whose
    lengths may differ.
    """
    if isinstance(X, np.ndarray):
        if X.ndim == 2:
            X = X[:, None, :]
        if X.ndim != 3:
            raise ValueError(f"expected a 2-d or 3-d array of signals, got shape {X.shape}")
        items = [np.asarray(x, dtype=float) for x in X]
    else:
        items = []
        for x in X:
            v = x.values if isinstance(x, Trajectory) else np.asarray(x, dtype=float)
            items.append(v[None, :] if v.ndim == 1 else v)
    if not items:
        raise ValueError("empty batch of trajectories")
    for i, v in enumerate(items):
        if v.ndim != 2:
            raise ValueError(f"trajectory {i} must be 2-d, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"trajectory {i} contains non-finite values")
        if state_dim is not None and v.shape[0] != state_dim:
            raise ValueError(f"trajectory {i} has {v.shape[0]} state components, "
                             f"expected {state_dim}")
    return items


def check_modes(modes) -> tuple[str, ...]:
    modes = (modes,) if isinstance(modes, str) else tuple(modes)
    bad = [m for m in modes if m not in _MODES]
    if bad or not modes:
        raise ValueError(f"modes must be drawn from {_MODES}, got {modes}")
    return modes


class RobustnessTransformer(TransformerMixin, BaseEstimator):
    """Robustness of ``formula`` at step ``k`` as features.

    Parameters
    ----------
    formula : str or Formula
        Text is parsed against the state dimension seen in ``fit``.
    modes : sequence of str
        Any of rho, rho+, rho-, srho, srho+, srho-.
    beta : float
        Sharpness of the smooth modes.
    k : int
        Evaluation step.
    """

    def __init__(self, formula="x1 > 0", modes=("rho", "rho+"), beta: float = 10.0,
                 k: int = 0):
        self.formula = formula
        self.modes = modes
        self.beta = beta
        self.k = k

    def fit(self, X, y=None):
        modes = check_modes(self.modes)
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.k < 0:
            raise ValueError("k must be nonnegative")
        items = check_trajectories(X)
        n = items[0].shape[0]
        phi = self.formula if isinstance(self.formula, Formula) else parse(self.formula, n)
        if any(m != "rho" for m in modes):
            validate_smooth(phi, "rho_plus" if any("+" in m or "-" in m for m in modes)
                            else "rho")
        self.formula_ = phi
        self.modes_ = modes
        self.n_features_in_ = n
        self.horizon_ = horizon(phi)
        return self

    def _row(self, x: np.ndarray) -> list[float]:
        out = []
        cum = None
        for m in self.modes_:
            if m == "rho":
                out.append(rho(self.formula_, x, self.k))
            elif m in ("rho+", "rho-"):
                cum = cum or cumulative(self.formula_, x, self.k)
                out.append(cum.positive if m == "rho+" else cum.negative)
            elif m == "srho":
                out.append(rho_smooth(self.formula_, x, self.k, self.beta))
            elif m == "srho+":
                out.append(rho_plus_smooth(self.formula_, x, self.k, self.beta))
            else:
                out.append(rho_minus_smooth(self.formula_, x, self.k, self.beta))
        return out

    def transform(self, X):
        check_is_fitted(self, "formula_")
        items = check_trajectories(X, self.n_features_in_)
        return np.array([self._row(x) for x in items], dtype=float)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "modes_")
        return np.array([f"robustness_{m}" for m in self.modes_], dtype=object)


__all__ = ["RobustnessTransformer", "check_trajectories", "check_modes"]
