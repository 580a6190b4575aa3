"""Reverse-mode differentiation for smooth objectives over trajectories.

The tape records array-valued operations together with their vector-Jacobian
products; one backward sweep yields the gradient of a scalar output with
respect to every recorded input. Plant Jacobians are not taped: they are
applied by :func:`adjoint_controls` in the backward recursion through the
dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class NonSmoothError(TypeError):
    """An objective used a primitive the tape cannot differentiate."""


class Node:
    """A value recorded on a :class:`Tape`."""

    __slots__ = ("tape", "index", "value", "parents")
    __array_ufunc__ = None  # keep numpy from silently unwrapping nodes

    def __init__(self, tape: "Tape", value, parents=()):
        self.tape = tape
        self.value = np.asarray(value, dtype=float)
        self.parents = tuple(parents)  # (node, vjp) pairs
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Node(index={self.index}, shape={self.value.shape})"

    def __neg__(self):
        return Node(self.tape, -self.value, [(self, lambda g: -g)])

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, -other if isinstance(other, Node) else -np.asarray(other))

    def __rsub__(self, other):
        return add(-self, other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __getitem__(self, key):
        shape = self.value.shape

        def vjp(g):
            out = np.zeros(shape)
            np.add.at(out, key, g)
            return out

        return Node(self.tape, self.value[key], [(self, vjp)])

    def __float__(self):
        return float(self.value)

    def _nonsmooth(self, *args, **kwargs):
        raise NonSmoothError("comparison/exact max-min is not differentiable on the tape")

    __lt__ = __le__ = __gt__ = __ge__ = _nonsmooth


class Tape:
    """Append-only record of a forward evaluation."""

    def __init__(self):
        self.nodes: list[Node] = []

    def variable(self, value) -> Node:
        return Node(self, value)

    def constant(self, value) -> Node:
        return Node(self, value)

    def gradient(self, output: Node, wrt):
        """Backward sweep from scalar ``output``; returns d output / d ``wrt``.

        ``wrt`` is a node or a sequence of nodes.
        """
        if output.tape is not self:
            raise ValueError("output node belongs to a different tape")
        if output.value.size != 1:
            raise ValueError("gradient requires a scalar output")
        grads: list = [None] * len(self.nodes)
        grads[output.index] = np.ones_like(output.value)
        for node in reversed(self.nodes[: output.index + 1]):
            g = grads[node.index]
            if g is None:
                continue
            for parent, vjp in node.parents:
                contrib = vjp(g)
                if grads[parent.index] is None:
                    grads[parent.index] = np.array(contrib, dtype=float)
                else:
                    grads[parent.index] = grads[parent.index] + contrib
        single = isinstance(wrt, Node)
        nodes = [wrt] if single else list(wrt)
        out = [np.zeros_like(n.value) if grads[n.index] is None else grads[n.index]
               for n in nodes]
        return out[0] if single else out


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Node):
            return x.tape
    raise TypeError("at least one operand must be a Node")


def _unbroadcast(g, shape):
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b) -> Node:
    tape = _tape_of(a, b)
    av = a.value if isinstance(a, Node) else np.asarray(a, dtype=float)
    bv = b.value if isinstance(b, Node) else np.asarray(b, dtype=float)
    parents = []
    if isinstance(a, Node):
        parents.append((a, lambda g, s=av.shape: _unbroadcast(g, s)))
    if isinstance(b, Node):
        parents.append((b, lambda g, s=bv.shape: _unbroadcast(g, s)))
    return Node(tape, av + bv, parents)


def mul(a, b) -> Node:
    tape = _tape_of(a, b)
    av = a.value if isinstance(a, Node) else np.asarray(a, dtype=float)
    bv = b.value if isinstance(b, Node) else np.asarray(b, dtype=float)
    parents = []
    if isinstance(a, Node):
        parents.append((a, lambda g: _unbroadcast(g * bv, av.shape)))
    if isinstance(b, Node):
        parents.append((b, lambda g: _unbroadcast(g * av, bv.shape)))
    return Node(tape, av * bv, parents)


def total(x: Node, axis=None) -> Node:
    shape = x.value.shape

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape)

    return Node(x.tape, x.value.sum(axis=axis), [(x, vjp)])


def stack(xs, axis=0) -> Node:
    xs = list(xs)
    tape = _tape_of(*xs)
    vals = [x.value if isinstance(x, Node) else np.asarray(x, dtype=float) for x in xs]
    out = np.stack(vals, axis=axis)
    parents = []
    for i, x in enumerate(xs):
        if isinstance(x, Node):
            parents.append((x, lambda g, i=i: np.take(g, i, axis=axis)))
    return Node(tape, out, parents)


def concatenate(xs, axis=0) -> Node:
    xs = list(xs)
    tape = _tape_of(*xs)
    vals = [x.value if isinstance(x, Node) else np.asarray(x, dtype=float) for x in xs]
    out = np.concatenate(vals, axis=axis)
    bounds = np.cumsum([0] + [v.shape[axis] for v in vals])
    parents = []
    for i, x in enumerate(xs):
        if isinstance(x, Node):
            sl = [slice(None)] * out.ndim
            sl[axis] = slice(bounds[i], bounds[i + 1])
            parents.append((x, lambda g, sl=tuple(sl): g[sl]))
    return Node(tape, out, parents)


def logsumexp(x: Node, beta: float, axis: int = -1) -> Node:
    """Smooth maximum ``(1/beta) log sum exp(beta x)`` along ``axis``."""
    v = x.value
    top = v.max(axis=axis, keepdims=True)
    e = np.exp(beta * (v - top))
    s = e.sum(axis=axis, keepdims=True)
    out = top + np.log(s) / beta
    weights = e / s

    def vjp(g):
        return np.expand_dims(g, axis) * weights

    return Node(x.tape, np.squeeze(out, axis=axis), [(x, vjp)])


def softplus(x: Node, beta: float) -> Node:
    """Smooth positive rectifier ``(1/beta) log(1 + exp(beta x))``."""
    v = x.value
    out = np.logaddexp(0.0, beta * v) / beta
    sig = np.exp(-np.logaddexp(0.0, -beta * v))  # logistic(beta x)
    return Node(x.tape, out, [(x, lambda g: g * sig)])


def logcumsumexp(x: Node, beta: float, axis: int = -1) -> Node:
    """Running smooth maximum along ``axis``: entry j covers elements 0..j."""
    v = np.moveaxis(x.value, axis, -1)
    bv = beta * v
    out = np.logaddexp.accumulate(bv, axis=-1)

    def vjp(g):
        gm = np.moveaxis(g, axis, -1)
        # d out_j / d v_i = exp(beta v_i - out_j) for i <= j; those exponents are <= 0
        n = bv.shape[-1]
        upper = np.triu(np.ones((n, n), dtype=bool))
        w = np.exp(np.where(upper, bv[..., :, None] - out[..., None, :], -np.inf))
        return np.moveaxis(np.einsum("...ij,...j->...i", w, gm), -1, axis)

    return Node(x.tape, np.moveaxis(out / beta, -1, axis), [(x, vjp)])


def predicate(pred, signal: Node) -> Node:
    """Evaluate an atomic predicate on every column of an (n, T) signal node."""
    x = signal.value
    grad = pred.gradient(x)
    return Node(signal.tape, pred.value(x), [(signal, lambda g: grad * g)])


# ---------------------------------------------------------------------------
# Trajectory and control gradients
# ---------------------------------------------------------------------------


@dataclass
class AdjointState:
    """State adjoints ``delta`` (n x L+1) and control gradients ``zeta`` (m x L)."""

    delta: np.ndarray
    zeta: np.ndarray


def grad_wrt_signal(objective: Callable[[Node], Node], signal) -> tuple[float, np.ndarray]:
    """Value and gradient of a smooth scalar objective of an (n, T) signal."""
    tape = Tape()
    x = tape.variable(np.asarray(signal, dtype=float))
    out = objective(x)
    if not isinstance(out, Node) or out.tape is not tape:
        raise NonSmoothError(
            "objective must be built from smooth tape primitives on its input")
    return float(out.value), tape.gradient(out, x)


def adjoint_controls(signal_grads, system, states, policy, direct_grads=None,
                     return_state: bool = False):
    """Total derivative of an objective with respect to each control input.

    ``signal_grads`` holds the partials dQ/dsigma (n x L+1); ``direct_grads``
    the explicit partials dQ/du (m x L). The backward recursion is

        delta[L] = dQ/dsigma[L]
        delta[k] = dQ/dsigma[k] + J_x(k)^T delta[k+1]
        zeta[k]  = dQ/du[k]     + J_u(k)^T delta[k+1]

    with J_x, J_u the plant Jacobians at (sigma[k], u[k]).
    """
    g = np.asarray(signal_grads, dtype=float)
    x = np.asarray(getattr(states, "values", states), dtype=float)
    u = np.asarray(policy, dtype=float)
    if u.ndim == 1:
        u = u[None, :]
    n, T = x.shape
    L = u.shape[1]
    if T != L + 1 or g.shape != x.shape:
        raise ValueError(
            f"shape mismatch: states {x.shape}, policy {u.shape}, gradient {g.shape}")
    if direct_grads is None:
        direct = np.zeros_like(u)
    else:
        direct = np.asarray(direct_grads, dtype=float).reshape(u.shape)
    delta = np.zeros_like(x)
    zeta = np.zeros_like(u)
    delta[:, L] = g[:, L]
    jx, ju = system.jacobians(x[:, :L], u)
    for k in range(L - 1, -1, -1):
        zeta[:, k] = direct[:, k] + ju[k].T @ delta[:, k + 1]
        delta[:, k] = g[:, k] + jx[k].T @ delta[:, k + 1]
    if return_state:
        return AdjointState(delta=delta, zeta=zeta)
    return zeta
