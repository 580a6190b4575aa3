"""Boolean, robustness and cumulative-robustness semantics over finite signals.

Every evaluator computes a table per subformula holding its value at each
time step where it is defined (a subformula with horizon ``h`` over a signal
of ``T`` samples has ``T - h`` entries), then reads off the requested step.
The same recursion runs over two backends: exact numpy arrays, and smooth
tape nodes (log-sum-exp max/min, softplus rectifiers) for gradients.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import diff
from .lang import (And, Finally, Formula, Globally, Not, Or, Pred, TrueF, Until,
                   horizon, subformulas, validate_no_neg_finally)


class TrajectoryTooShortError(ValueError):
    def __init__(self, required: int, actual: int):
        self.required = required
        self.actual = actual
        super().__init__(
            f"trajectory too short: need {required} samples, got {actual}")


class UnsupportedFormulaError(ValueError):
    """Formula outside the fragment a semantics is defined for."""


class NegatedFinallyError(UnsupportedFormulaError):
    pass


class Verdict(str, enum.Enum):
    TRUE = "true"
    FALSE = "false"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class Trajectory:
    """Discrete-time signal; ``values`` has shape (n, L+1)."""

    values: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2 or v.shape[1] < 1:
            raise ValueError(f"trajectory values must be (n, L+1), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("trajectory contains non-finite values")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        """Number of transitions L (the signal has L+1 samples)."""
        return self.values.shape[1] - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.shape[1]) * self.dt

    def __len__(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class CumulativeValue:
    positive: float
    negative: float


def _signal(traj) -> np.ndarray:
    if isinstance(traj, Trajectory):
        return traj.values
    v = np.asarray(traj, dtype=float)
    return v[None, :] if v.ndim == 1 else v


# ---------------------------------------------------------------------------
# Scalar smooth operators
# ---------------------------------------------------------------------------


def smooth_max(values, beta: float) -> float:
    """``(1/beta) log sum exp(beta a_i)``, shifted by the maximum."""
    a = np.asarray(values, dtype=float).ravel()
    if a.size == 0:
        raise ValueError("smooth_max of an empty sequence")
    if not beta > 0:
        raise ValueError("beta must be positive")
    top = a.max()
    return float(top + np.log(np.exp(beta * (a - top)).sum()) / beta)


def smooth_min(values, beta: float) -> float:
    return -smooth_max(-np.asarray(values, dtype=float), beta)


def rect_pos(a):
    return np.maximum(0.0, a)


def rect_neg(a):
    return np.minimum(0.0, a)


def rect_pos_smooth(a, beta: float):
    return np.logaddexp(0.0, beta * np.asarray(a, dtype=float)) / beta


def rect_neg_smooth(a, beta: float):
    return -np.logaddexp(0.0, -beta * np.asarray(a, dtype=float)) / beta


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------


def _window_index(n_out: int, lo: int, hi: int) -> np.ndarray:
    return np.arange(n_out)[:, None] + np.arange(lo, hi + 1)[None, :]


class _Exact:
    smooth = False

    def __init__(self, signal):
        self.signal = signal

    def pred(self, p):
        return np.asarray(p.value(self.signal), dtype=float)

    def top(self):
        return np.full(self.signal.shape[1], np.inf)

    def neg(self, v):
        return -v

    def head(self, v, n):
        return v[:n]

    def windows(self, v, lo, hi, n_out):
        return v[_window_index(n_out, lo, hi)]

    def cols(self, m, lo, hi):
        return m[:, lo:hi + 1]

    def reduce_max(self, m):
        return m.max(axis=1)

    def reduce_min(self, m):
        return m.min(axis=1)

    def reduce_sum(self, m):
        return m.sum(axis=1)

    def elem_max(self, vs):
        return np.max(np.stack(vs), axis=0)

    def elem_min(self, vs):
        return np.min(np.stack(vs), axis=0)

    def prefix_min(self, m):
        return np.minimum.accumulate(m, axis=1)

    def rect_pos(self, v):
        return rect_pos(v)

    def rect_neg(self, v):
        return rect_neg(v)


class _Smooth:
    smooth = True

    def __init__(self, signal: diff.Node, beta: float, beta_rect: float | None = None):
        if not beta > 0:
            raise ValueError("beta must be positive")
        self.signal = signal
        self.beta = beta
        self.beta_rect = beta if beta_rect is None else beta_rect

    def pred(self, p):
        return diff.predicate(p, self.signal)

    def top(self):
        raise UnsupportedFormulaError("'true' has no smooth robustness")

    def neg(self, v):
        return -v

    def head(self, v, n):
        return v if len(v) == n else v[:n]

    def windows(self, v, lo, hi, n_out):
        return v[_window_index(n_out, lo, hi)]

    def cols(self, m, lo, hi):
        return m[:, lo:hi + 1]

    def reduce_max(self, m):
        return diff.logsumexp(m, self.beta, axis=1)

    def reduce_min(self, m):
        return -diff.logsumexp(-m, self.beta, axis=1)

    def reduce_sum(self, m):
        return diff.total(m, axis=1)

    def elem_max(self, vs):
        return diff.logsumexp(diff.stack(vs), self.beta, axis=0)

    def elem_min(self, vs):
        return -diff.logsumexp(-diff.stack(vs), self.beta, axis=0)

    def prefix_min(self, m):
        return -diff.logcumsumexp(-m, self.beta, axis=1)

    def rect_pos(self, v):
        return diff.softplus(v, self.beta_rect)

    def rect_neg(self, v):
        return -diff.softplus(-v, self.beta_rect)


# ---------------------------------------------------------------------------
# Recursive evaluation
# ---------------------------------------------------------------------------


def _flatten(f, kind):
    if isinstance(f, kind):
        return _flatten(f.left, kind) + _flatten(f.right, kind)
    return [f]


def _align(B, vs):
    n = min(len(v) for v in vs)
    return [B.head(v, n) for v in vs]


def _traditional(f: Formula, B):
    if isinstance(f, TrueF):
        return B.top()
    if isinstance(f, Pred):
        return B.pred(f)
    if isinstance(f, Not):
        return B.neg(_traditional(f.arg, B))
    if isinstance(f, (And, Or)):
        kind = type(f)
        vs = _align(B, [_traditional(g, B) for g in _flatten(f, kind)])
        return B.elem_min(vs) if kind is And else B.elem_max(vs)
    if isinstance(f, (Finally, Globally)):
        c = _traditional(f.arg, B)
        iv = f.interval
        m = B.windows(c, iv.lo, iv.hi, len(c) - iv.hi)
        return B.reduce_max(m) if isinstance(f, Finally) else B.reduce_min(m)
    if isinstance(f, Until):
        a = _traditional(f.left, B)
        b = _traditional(f.right, B)
        return B.reduce_max(_until_terms(B, f.interval, a, b))
    raise TypeError(f"not a formula: {f!r}")


def _until_terms(B, iv, a, b):
    # term[k, j] = min(b[k + lo + j], min a[k .. k + lo + j])
    n_out = min(len(a), len(b)) - iv.hi
    prefix = B.cols(B.prefix_min(B.windows(a, 0, iv.hi, n_out)), iv.lo, iv.hi)
    return B.elem_min([B.windows(b, iv.lo, iv.hi, n_out), prefix])


def _cumulative(f: Formula, B):
    """Return the (positive, negative) cumulative tables."""
    if isinstance(f, TrueF):
        raise UnsupportedFormulaError("'true' has no cumulative robustness")
    if isinstance(f, Pred):
        v = B.pred(f)
        return B.rect_pos(v), B.rect_neg(v)
    if isinstance(f, Not):
        pos, neg = _cumulative(f.arg, B)
        return B.neg(neg), B.neg(pos)
    if isinstance(f, (And, Or)):
        kind = type(f)
        pairs = [_cumulative(g, B) for g in _flatten(f, kind)]
        pos = _align(B, [p for p, _ in pairs])
        neg = _align(B, [q for _, q in pairs])
        if kind is And:
            return B.elem_min(pos), B.elem_min(neg)
        return B.elem_max(pos), B.elem_max(neg)
    if isinstance(f, (Finally, Globally)):
        pos, neg = _cumulative(f.arg, B)
        iv = f.interval
        n_out = len(pos) - iv.hi
        mp = B.windows(pos, iv.lo, iv.hi, n_out)
        mn = B.windows(neg, iv.lo, iv.hi, n_out)
        if isinstance(f, Finally):
            return B.reduce_sum(mp), B.reduce_sum(mn)
        return B.reduce_min(mp), B.reduce_min(mn)
    if isinstance(f, Until):
        ap, an = _cumulative(f.left, B)
        bp, bn = _cumulative(f.right, B)
        return (B.reduce_sum(_until_terms(B, f.interval, ap, bp)),
                B.reduce_sum(_until_terms(B, f.interval, an, bn)))
    raise TypeError(f"not a formula: {f!r}")


def _check_length(f, signal, k):
    required = k + horizon(f) + 1
    if k < 0:
        raise ValueError("time step k must be non-negative")
    if signal.shape[1] < required:
        raise TrajectoryTooShortError(required, signal.shape[1])


def check_cumulative(f: Formula):
    """Raise if ``f`` is outside the fragment the cumulative semantics covers."""
    if any(isinstance(g, TrueF) for g in subformulas(f)):
        raise UnsupportedFormulaError("'true' has no cumulative robustness")
    path = validate_no_neg_finally(f)
    if path is not None:
        raise NegatedFinallyError(f"Finally under negation at subformula path {path}")


def _check_smooth(f: Formula):
    if any(isinstance(g, TrueF) for g in subformulas(f)):
        raise UnsupportedFormulaError("formula contains 'true', which has no smooth value")


# ---------------------------------------------------------------------------
# Public evaluators
# ---------------------------------------------------------------------------


def robustness_series(f: Formula, traj) -> np.ndarray:
    """Exact robustness at every step k with k + horizon(f) <= L."""
    x = _signal(traj)
    _check_length(f, x, 0)
    return _traditional(f, _Exact(x))


def rho(f: Formula, traj, k: int = 0) -> float:
    x = _signal(traj)
    _check_length(f, x, k)
    return float(_traditional(f, _Exact(x))[k])


def sat(f: Formula, traj, k: int = 0) -> Verdict:
    r = rho(f, traj, k)
    if r > 0:
        return Verdict.TRUE
    if r < 0:
        return Verdict.FALSE
    return Verdict.INCONCLUSIVE


def cumulative_series(f: Formula, traj) -> tuple[np.ndarray, np.ndarray]:
    x = _signal(traj)
    check_cumulative(f)
    _check_length(f, x, 0)
    return _cumulative(f, _Exact(x))


def cumulative(f: Formula, traj, k: int = 0) -> CumulativeValue:
    x = _signal(traj)
    check_cumulative(f)
    _check_length(f, x, k)
    pos, neg = _cumulative(f, _Exact(x))
    return CumulativeValue(float(pos[k]), float(neg[k]))


def rho_plus(f: Formula, traj, k: int = 0) -> float:
    return cumulative(f, traj, k).positive


def rho_minus(f: Formula, traj, k: int = 0) -> float:
    return cumulative(f, traj, k).negative


def validate_smooth(f: Formula, kind: str = "rho") -> None:
    """Raise if ``f`` has no smooth robustness of the given kind."""
    _check_smooth(f)
    if kind != "rho":
        check_cumulative(f)


def smooth_robustness(f: Formula, signal: diff.Node, beta: float, kind: str = "rho",
                      k: int = 0, beta_rect: float | None = None,
                      validate: bool = True) -> diff.Node:
    """Tape node for a smooth robustness of ``f`` at step ``k``.

    ``kind`` is ``"rho"``, ``"rho_plus"`` or ``"rho_minus"``. Callers that
    evaluate one formula repeatedly may validate it once and pass
    ``validate=False``.
    """
    if validate:
        validate_smooth(f, kind)
    _check_length(f, signal.value, k)
    B = _Smooth(signal, beta, beta_rect)
    if kind == "rho":
        return _traditional(f, B)[k]
    pos, neg = _cumulative(f, B)
    if kind == "rho_plus":
        return pos[k]
    if kind == "rho_minus":
        return neg[k]
    raise ValueError(f"unknown robustness kind {kind!r}")


def _smooth_value(f, traj, k, beta, kind, beta_rect=None) -> float:
    tape = diff.Tape()
    node = smooth_robustness(f, tape.variable(_signal(traj)), beta, kind, k, beta_rect)
    return float(node.value)


def rho_smooth(f: Formula, traj, k: int = 0, beta: float = 10.0) -> float:
    return _smooth_value(f, traj, k, beta, "rho")


def rho_plus_smooth(f: Formula, traj, k: int = 0, beta: float = 10.0,
                    beta_rect: float | None = None) -> float:
    return _smooth_value(f, traj, k, beta, "rho_plus", beta_rect)


def rho_minus_smooth(f: Formula, traj, k: int = 0, beta: float = 10.0,
                     beta_rect: float | None = None) -> float:
    return _smooth_value(f, traj, k, beta, "rho_minus", beta_rect)


def dwell_time(f: Formula, traj) -> int:
    """Number of steps at which ``f`` holds (positive robustness)."""
    return int(np.count_nonzero(robustness_series(f, traj) > 0))
