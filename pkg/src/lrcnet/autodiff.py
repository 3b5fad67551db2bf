"""Reverse-mode automatic differentiation on an explicit op tape.

The tape is a flat list of nodes.  Each node records the op name, the parent
node indices, op-specific constants, and the computed value.  That makes the
three contract operations direct:

* forward is eager: building an expression evaluates it,
* ``replay`` re-executes every node in recording order and must reproduce the
  recorded values bit for bit,
* ``backward`` walks the node list once in reverse, accumulating
  vector-Jacobian products, so every node is visited exactly once and the
  result is deterministic for a fixed tape.

The public math functions (``sigmoid``, ``matmul``, ...) dispatch on their
arguments: called on plain numpy arrays they compute the value directly with
no recording, called on ``Var`` handles they append to the tape.  Cell and
solver code is written once against these functions and works in both modes.

``finite_difference_gradient`` is the independent oracle: central differences
on the raw parameter arrays, touching one scalar at a time.  It shares no
code with ``backward``.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import core

__all__ = [
    "Tape",
    "Var",
    "sigmoid",
    "tanh",
    "absolute",
    "matmul",
    "outer_affine",
    "weighted_reduce",
    "concat_last",
    "reduce_sum",
    "backward",
    "replay",
    "finite_difference_gradient",
    "max_relative_error",
]

# ---------------------------------------------------------------------------
# tape machinery


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _sign_plus(x: np.ndarray) -> np.ndarray:
    # subgradient of |x| with the value at 0 fixed to +1
    return np.where(x >= 0.0, 1.0, -1.0)


# Each op: forward(values, aux) -> value, and
# vjp(grad_out, out_value, values, aux) -> tuple of parent gradients
# (None for parents that get no gradient).

def _fw_add(v, aux):
    return v[0] + v[1]


def _bw_add(g, out, v, aux):
    return _unbroadcast(g, v[0].shape), _unbroadcast(g, v[1].shape)


def _fw_sub(v, aux):
    return v[0] - v[1]


def _bw_sub(g, out, v, aux):
    return _unbroadcast(g, v[0].shape), _unbroadcast(-g, v[1].shape)


def _fw_mul(v, aux):
    return v[0] * v[1]


def _bw_mul(g, out, v, aux):
    return _unbroadcast(g * v[1], v[0].shape), _unbroadcast(g * v[0], v[1].shape)


def _fw_div(v, aux):
    return v[0] / v[1]


def _bw_div(g, out, v, aux):
    return (
        _unbroadcast(g / v[1], v[0].shape),
        _unbroadcast(-g * v[0] / (v[1] * v[1]), v[1].shape),
    )


def _fw_neg(v, aux):
    return -v[0]


def _bw_neg(g, out, v, aux):
    return (-g,)


def _fw_sigmoid(v, aux):
    return core.sigmoid(v[0])


def _bw_sigmoid(g, out, v, aux):
    return (g * out * (1.0 - out),)


def _fw_tanh(v, aux):
    return np.tanh(v[0])


def _bw_tanh(g, out, v, aux):
    return (g * (1.0 - out * out),)


def _fw_abs(v, aux):
    return np.abs(v[0])


def _bw_abs(g, out, v, aux):
    return (g * _sign_plus(v[0]),)


def _fw_matmul(v, aux):
    return v[0] @ v[1]


def _bw_matmul(g, out, v, aux):
    x, w = v
    gx = g @ w.T
    xr = x.reshape(-1, x.shape[-1])
    gr = g.reshape(-1, g.shape[-1])
    return gx, xr.T @ gr


def _fw_outer_affine(v, aux):
    # out[..., j, i] = y[..., j] * A[j, i] + B[j, i]
    y, a, b = v
    return y[..., :, None] * a + b


def _bw_outer_affine(g, out, v, aux):
    y, a, b = v
    gy = np.einsum("...ji,ji->...j", g, a)
    gr = g.reshape(-1, *a.shape)
    yr = y.reshape(-1, a.shape[0])
    ga = np.einsum("bji,bj->ji", gr, yr)
    gb = _unbroadcast(g, b.shape)
    return gy, ga, gb


def _fw_weighted_reduce(v, aux):
    # out[..., i] = sum_j S[..., j, i] * W[j, i]
    return np.einsum("...ji,ji->...i", v[0], v[1])


def _bw_weighted_reduce(g, out, v, aux):
    s, w = v
    gs = g[..., None, :] * w
    sr = s.reshape(-1, *w.shape)
    gr = g.reshape(-1, w.shape[1])
    gw = np.einsum("bji,bi->ji", sr, gr)
    return gs, gw


def _fw_concat_last(v, aux):
    return np.concatenate(v, axis=-1)


def _bw_concat_last(g, out, v, aux):
    sizes = [x.shape[-1] for x in v]
    splits = np.cumsum(sizes)[:-1]
    return tuple(np.split(g, splits, axis=-1))


def _fw_reduce_sum(v, aux):
    return v[0].sum(axis=aux["axis"])


def _bw_reduce_sum(g, out, v, aux):
    axis = aux["axis"]
    if axis is None:
        return (np.broadcast_to(g, v[0].shape).copy(),)
    g = np.expand_dims(g, axis)
    return (np.broadcast_to(g, v[0].shape).copy(),)


_OPS: dict[str, tuple[Callable, Callable]] = {
    "add": (_fw_add, _bw_add),
    "sub": (_fw_sub, _bw_sub),
    "mul": (_fw_mul, _bw_mul),
    "div": (_fw_div, _bw_div),
    "neg": (_fw_neg, _bw_neg),
    "sigmoid": (_fw_sigmoid, _bw_sigmoid),
    "tanh": (_fw_tanh, _bw_tanh),
    "abs": (_fw_abs, _bw_abs),
    "matmul": (_fw_matmul, _bw_matmul),
    "outer_affine": (_fw_outer_affine, _bw_outer_affine),
    "weighted_reduce": (_fw_weighted_reduce, _bw_weighted_reduce),
    "concat_last": (_fw_concat_last, _bw_concat_last),
    "reduce_sum": (_fw_reduce_sum, _bw_reduce_sum),
}


class _Node:
    __slots__ = ("op", "parents", "aux", "value")

    def __init__(self, op, parents, aux, value):
        self.op = op
        self.parents = parents
        self.aux = aux
        self.value = value


class Tape:
    """Recorded computation: a list of nodes in execution order."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __len__(self):
        return len(self.nodes)

    def _push(self, op, parents, aux, value) -> "Var":
        self.nodes.append(_Node(op, parents, aux, value))
        return Var(self, len(self.nodes) - 1)

    def leaf(self, value) -> "Var":
        """Record a differentiable input (a parameter array)."""
        return self._push("leaf", (), None, np.asarray(value, dtype=np.float64))

    def constant(self, value) -> "Var":
        """Record a non-differentiable input (data, fixed coefficients)."""
        return self._push("const", (), None, np.asarray(value, dtype=np.float64))

    def apply(self, op: str, *inputs: "Var", **aux) -> "Var":
        parents = tuple(v.index for v in inputs)
        values = tuple(self.nodes[i].value for i in parents)
        fw, _ = _OPS[op]
        return self._push(op, parents, aux or None, fw(values, aux))


class Var:
    """Handle to one tape node.  Supports arithmetic against Vars/arrays."""

    __slots__ = ("tape", "index")
    # force numpy to defer ndarray <op> Var to the reflected Var operator
    # instead of broadcasting Var as an object scalar
    __array_ufunc__ = None

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.index].value

    @property
    def shape(self):
        return self.value.shape

    def _lift(self, other) -> "Var":
        if isinstance(other, Var):
            if other.tape is not self.tape:
                raise ValueError("cannot mix Vars from different tapes")
            return other
        return self.tape.constant(other)

    def __add__(self, other):
        return self.tape.apply("add", self, self._lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.tape.apply("sub", self, self._lift(other))

    def __rsub__(self, other):
        return self.tape.apply("sub", self._lift(other), self)

    def __mul__(self, other):
        return self.tape.apply("mul", self, self._lift(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.tape.apply("div", self, self._lift(other))

    def __rtruediv__(self, other):
        return self.tape.apply("div", self._lift(other), self)

    def __neg__(self):
        return self.tape.apply("neg", self)

    def __matmul__(self, other):
        return self.tape.apply("matmul", self, self._lift(other))


def _any_var(*args) -> Tape | None:
    for a in args:
        if isinstance(a, Var):
            return a.tape
    return None


def _as_var(tape: Tape, x) -> Var:
    return x if isinstance(x, Var) else tape.constant(x)


# ---------------------------------------------------------------------------
# dual-mode math functions


def sigmoid(x):
    tape = _any_var(x)
    if tape is None:
        return core.sigmoid(x)
    return tape.apply("sigmoid", x)


def tanh(x):
    tape = _any_var(x)
    if tape is None:
        return np.tanh(np.asarray(x, dtype=np.float64))
    return tape.apply("tanh", x)


def absolute(x):
    """|x|; its backward uses subgradient +1 at exactly 0."""
    tape = _any_var(x)
    if tape is None:
        return np.abs(np.asarray(x, dtype=np.float64))
    return tape.apply("abs", x)


def matmul(x, w):
    tape = _any_var(x, w)
    if tape is None:
        return np.asarray(x) @ np.asarray(w)
    return tape.apply("matmul", _as_var(tape, x), _as_var(tape, w))


def outer_affine(y, a, b):
    """Per-synapse gate preactivation: out[..., j, i] = y[..., j]*a[j, i] + b[j, i]."""
    tape = _any_var(y, a, b)
    if tape is None:
        return np.asarray(y)[..., :, None] * a + b
    return tape.apply("outer_affine", _as_var(tape, y), _as_var(tape, a), _as_var(tape, b))


def weighted_reduce(s, w):
    """Sum over the presynaptic axis: out[..., i] = sum_j s[..., j, i]*w[j, i]."""
    tape = _any_var(s, w)
    if tape is None:
        return np.einsum("...ji,ji->...i", np.asarray(s), np.asarray(w))
    return tape.apply("weighted_reduce", _as_var(tape, s), _as_var(tape, w))


def concat_last(*parts):
    tape = _any_var(*parts)
    if tape is None:
        return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts], axis=-1)
    return tape.apply("concat_last", *[_as_var(tape, p) for p in parts])


def reduce_sum(x, axis=None):
    tape = _any_var(x)
    if tape is None:
        return np.asarray(x).sum(axis=axis)
    return tape.apply("reduce_sum", x, axis=axis)


# ---------------------------------------------------------------------------
# backward, replay, oracle


def backward(seeds: dict[Var, np.ndarray]) -> dict[int, np.ndarray]:
    """Reverse sweep from seeded nodes; returns node index -> gradient.

    All seeded Vars must live on one tape.  The sweep walks the node list
    from the highest seeded index down to 0, visiting each node at most once
    and accumulating into parent slots, so it is deterministic for a fixed
    tape.  Gradients are returned for every node reached by the sweep;
    callers pick out the leaves they care about.
    """
    if not seeds:
        raise ValueError("backward needs at least one seeded output")
    tapes = {v.tape for v in seeds}
    if len(tapes) != 1:
        raise ValueError("seeded Vars live on different tapes")
    tape = tapes.pop()
    nodes = tape.nodes
    grads: list[np.ndarray | None] = [None] * len(nodes)
    top = 0
    for var, g in seeds.items():
        g = np.asarray(g, dtype=np.float64)
        if g.shape != nodes[var.index].value.shape:
            raise ValueError(
                f"seed shape {g.shape} does not match node shape "
                f"{nodes[var.index].value.shape}"
            )
        if grads[var.index] is None:
            grads[var.index] = g.copy()
        else:
            grads[var.index] = grads[var.index] + g
        top = max(top, var.index)
    for idx in range(top, -1, -1):
        g = grads[idx]
        if g is None:
            continue
        node = nodes[idx]
        if node.op in ("leaf", "const"):
            continue
        _, vjp = _OPS[node.op]
        values = tuple(nodes[p].value for p in node.parents)
        pgrads = vjp(g, node.value, values, node.aux)
        for p, pg in zip(node.parents, pgrads):
            if pg is None:
                continue
            if grads[p] is None:
                grads[p] = pg
            else:
                grads[p] = grads[p] + pg
    return {i: g for i, g in enumerate(grads) if g is not None}


def replay(tape: Tape) -> list[np.ndarray]:
    """Re-execute the tape in recording order; returns recomputed values.

    Leaves and constants keep their recorded values.  Every interior node is
    recomputed from its parents' recomputed values; with unchanged leaves the
    result must equal the recorded values exactly.
    """
    out: list[np.ndarray] = []
    for node in tape.nodes:
        if node.op in ("leaf", "const"):
            out.append(node.value)
            continue
        fw, _ = _OPS[node.op]
        values = tuple(out[p] for p in node.parents)
        out.append(fw(values, node.aux))
    return out


def finite_difference_gradient(
    loss_fn: Callable[[], float],
    params: dict[str, np.ndarray],
    step: float = 1e-5,
) -> dict[str, np.ndarray]:
    """Central-difference gradient of ``loss_fn`` w.r.t. each raw array.

    ``loss_fn`` takes no arguments and must read the arrays in ``params`` by
    reference; each scalar entry is displaced by +/-step in place, the loss
    re-evaluated, and the original value restored bit for bit.
    """
    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr, dtype=np.float64)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            hi = loss_fn()
            flat[i] = saved - step
            lo = loss_fn()
            flat[i] = saved
            gflat[i] = (hi - lo) / (2.0 * step)
        grads[name] = g
    return grads


def max_relative_error(
    got: dict[str, np.ndarray],
    want: dict[str, np.ndarray],
    floor: float = 1e-4,
) -> tuple[float, str]:
    """Worst elementwise relative error across two gradient sets.

    The denominator is max(|got|, |want|, floor), so entries whose magnitude
    sits below the floor are compared absolutely: with the default floor,
    an error reading of r means |got - want| <= r * max(|got|, |want|) for
    large entries and |got - want| <= r * 1e-4 for near-zero ones.  Checking
    r <= 1e-4 therefore enforces relative tolerance 1e-4 with an absolute
    floor of 1e-8.  Returns (error, offending tensor name).
    """
    if set(got) != set(want):
        raise ValueError(f"gradient sets differ: {sorted(got)} vs {sorted(want)}")
    worst, worst_name = 0.0, ""
    for name in sorted(got):
        a, b = got[name], want[name]
        if a.shape != b.shape:
            raise ValueError(f"{name}: shape {a.shape} vs {b.shape}")
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
        err = float(np.max(np.abs(a - b) / denom)) if a.size else 0.0
        if err > worst:
            worst, worst_name = err, name
    return worst, worst_name
