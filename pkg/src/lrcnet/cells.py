"""Cell equations: liquid family (LTC, STC, LRC, LRCU) and gated baselines.

Parameter containers are plain dataclasses of float64 arrays.  Every cell
function is written against the dual-mode math in ``autodiff``: pass numpy
arrays for a fast untraced forward, pass tape ``Var`` handles for a recorded
forward whose gradients come from ``autodiff.backward``.

Conventions
-----------
* m hidden states, n external inputs, y = [h, x] of width m+n.
* Hidden states have shape (..., m); any leading axes are batch axes.
* Conductances g and g_l are stored raw and used through |.|, so they enter
  the dynamics nonnegative.  Gate slopes a, update weights k, and elastance
  weights o are signed.  The symmetric elastance half-width is |k_raw|.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import absolute, concat_last, matmul, outer_affine, sigmoid, tanh, weighted_reduce
from .core import ASYMMETRIC, SYMMETRIC, ElastanceParams

__all__ = [
    "LiquidParams",
    "GruParams",
    "MguParams",
    "LstmParams",
    "MlpField",
    "AffineMap",
    "ltc_derivative",
    "stc_derivative",
    "lrc_derivative",
    "lrcu_step",
    "gru_step",
    "gru_ode_derivative",
    "mgu_step",
    "lstm_step",
    "elastance_gate",
    "liquid_gates",
    "init_liquid",
    "init_elastance",
    "init_gru",
    "init_mgu",
    "init_lstm",
    "init_affine",
    "init_mlp_field",
]


# ---------------------------------------------------------------------------
# parameter containers


@dataclass
class LiquidParams:
    """Parameters shared by LTC, STC, LRC and LRCU cells.

    g, a, b, k : (m+n, m) synapse conductance (raw), gate slope, gate bias,
        and signed update weight.
    g_l : (m,) raw leak conductance; the same |g_l| is added to both the
        decay sum f and the update sum u, exactly as the dynamics are stated.
    e_l : (m,) reversal potential, signed and trainable.
    elastance : present for LRC/LRCU, None for LTC/STC.
    """

    g: np.ndarray
    a: np.ndarray
    b: np.ndarray
    k: np.ndarray
    g_l: np.ndarray
    e_l: np.ndarray
    elastance: ElastanceParams | None = None

    @property
    def m(self) -> int:
        return self.g_l.shape[-1] if hasattr(self.g_l, "shape") else len(self.g_l)

    @property
    def n(self) -> int:
        return self.g.shape[0] - self.m

    def arrays(self) -> dict[str, np.ndarray]:
        out = {"g": self.g, "a": self.a, "b": self.b, "k": self.k,
               "g_l": self.g_l, "e_l": self.e_l}
        if self.elastance is not None:
            out["elast_o"] = self.elastance.o
            out["elast_p"] = self.elastance.p
            if self.elastance.kind == SYMMETRIC:
                out["elast_k"] = self.elastance.k_raw
        return out


@dataclass
class GruParams:
    """Gated recurrent unit: decay gate f, update u (on the reset-scaled
    state), reset gate r.  All three are plain affine maps of width m+n."""

    a_f: np.ndarray
    b_f: np.ndarray
    a_u: np.ndarray
    b_u: np.ndarray
    a_r: np.ndarray
    b_r: np.ndarray

    @property
    def m(self) -> int:
        return self.a_f.shape[1]

    @property
    def n(self) -> int:
        return self.a_f.shape[0] - self.m

    def arrays(self) -> dict[str, np.ndarray]:
        return {"a_f": self.a_f, "b_f": self.b_f, "a_u": self.a_u,
                "b_u": self.b_u, "a_r": self.a_r, "b_r": self.b_r}


@dataclass
class MguParams:
    """Minimal gated unit: one forget gate doubling as the reset scale."""

    a_f: np.ndarray
    b_f: np.ndarray
    a_h: np.ndarray
    b_h: np.ndarray

    @property
    def m(self) -> int:
        return self.a_f.shape[1]

    @property
    def n(self) -> int:
        return self.a_f.shape[0] - self.m

    def arrays(self) -> dict[str, np.ndarray]:
        return {"a_f": self.a_f, "b_f": self.b_f, "a_h": self.a_h, "b_h": self.b_h}


@dataclass
class LstmParams:
    """Standard LSTM with input, forget, output gates and tanh candidate."""

    a_i: np.ndarray
    b_i: np.ndarray
    a_f: np.ndarray
    b_f: np.ndarray
    a_o: np.ndarray
    b_o: np.ndarray
    a_g: np.ndarray
    b_g: np.ndarray

    @property
    def m(self) -> int:
        return self.a_i.shape[1]

    @property
    def n(self) -> int:
        return self.a_i.shape[0] - self.m

    def arrays(self) -> dict[str, np.ndarray]:
        return {"a_i": self.a_i, "b_i": self.b_i, "a_f": self.a_f, "b_f": self.b_f,
                "a_o": self.a_o, "b_o": self.b_o, "a_g": self.a_g, "b_g": self.b_g}


@dataclass
class MlpField:
    """Feedforward vector field x -> dx/dt; tanh hidden layers, linear output."""

    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"w{i}"] = w
            out[f"b{i}"] = b
        return out

    def __call__(self, x):
        z = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = matmul(z, w) + b
            if i != last:
                z = tanh(z)
        return z


@dataclass
class AffineMap:
    """x @ w + b; used for the output readout and the state lift."""

    w: np.ndarray
    b: np.ndarray

    def __call__(self, x):
        return matmul(x, self.w) + self.b

    def arrays(self) -> dict[str, np.ndarray]:
        return {"w": self.w, "b": self.b}


# ---------------------------------------------------------------------------
# liquid family


def _concat_state_input(h, x):
    return h if x is None else concat_last(h, x)


def liquid_gates(params: LiquidParams, h, x):
    """Shared gate computation: returns (y, f, u).

    f_i = sum_j |g_ji| * sigmoid(a_ji y_j + b_ji) + |g_l_i|
    u_i = sum_j  k_ji  * sigmoid(a_ji y_j + b_ji) + |g_l_i|

    The sigmoid gate matrix is computed once and reduced twice.
    """
    y = _concat_state_input(h, x)
    gates = sigmoid(outer_affine(y, params.a, params.b))
    leak = absolute(params.g_l)
    f = weighted_reduce(gates, absolute(params.g)) + leak
    u = weighted_reduce(gates, params.k) + leak
    return y, f, u


def elastance_gate(ep: ElastanceParams, y):
    """Per-neuron elastance eps(w) with w = y @ o + p."""
    w = matmul(y, ep.o) + ep.p
    if ep.kind == ASYMMETRIC:
        return sigmoid(w)
    k = absolute(ep.k_raw)
    return sigmoid(w + k) - sigmoid(w - k)


def ltc_derivative(params: LiquidParams, h, x):
    """dh/dt = -f h + u e_l with raw (unsquashed) decay and update sums."""
    _, f, u = liquid_gates(params, h, x)
    return -(f * h) + u * params.e_l


def stc_derivative(params: LiquidParams, h, x):
    """dh/dt = -sigmoid(f) h + tanh(u) e_l; both time scales saturate."""
    _, f, u = liquid_gates(params, h, x)
    return -(sigmoid(f) * h) + tanh(u) * params.e_l


def lrc_derivative(params: LiquidParams, h, x):
    """dh/dt = eps(w) * (-sigmoid(f) h + tanh(u) e_l).

    The elastance multiplies the whole right-hand side, modulating the speed
    of the state without moving its equilibria.
    """
    if params.elastance is None:
        raise ValueError("lrc_derivative requires elastance parameters")
    y, f, u = liquid_gates(params, h, x)
    eps = elastance_gate(params.elastance, y)
    return eps * (-(sigmoid(f) * h) + tanh(u) * params.e_l)


def lrcu_step(params: LiquidParams, h, x, dt=1.0):
    """Discrete update h + dt * eps(w) * (-sigmoid(f) h + tanh(u) e_l).

    At dt = 1 this is exactly the gated recurrence
    (1 - eps*sigmoid(f)) h + eps*tanh(u) e_l.  dt may be a scalar or an
    array broadcastable against h, which is how irregular per-step time
    gaps enter.
    """
    return h + dt * lrc_derivative(params, h, x)


# ---------------------------------------------------------------------------
# gated baselines


def gru_step(params: GruParams, h, x):
    """h' = (1 - sigmoid(f)) h + sigmoid(f) tanh(u), u read on [sigmoid(r)*h, x].

    Implemented in the incremental form h + sigmoid(f) * (tanh(u) - h), which
    is the same expression the one-step Euler discretization of
    ``gru_ode_derivative`` produces.
    """
    return h + gru_ode_derivative(params, h, x)


def gru_ode_derivative(params: GruParams, h, x):
    """dh/dt = sigmoid(f) * (tanh(u) - h) with the gate wiring of gru_step."""
    y = _concat_state_input(h, x)
    f = matmul(y, params.a_f) + params.b_f
    r = matmul(y, params.a_r) + params.b_r
    y_reset = _concat_state_input(sigmoid(r) * h, x)
    u = matmul(y_reset, params.a_u) + params.b_u
    return sigmoid(f) * (tanh(u) - h)


def mgu_step(params: MguParams, h, x):
    """Minimal gated unit: forget gate f both blends and rescales the state."""
    y = _concat_state_input(h, x)
    f = sigmoid(matmul(y, params.a_f) + params.b_f)
    y_scaled = _concat_state_input(f * h, x)
    cand = tanh(matmul(y_scaled, params.a_h) + params.b_h)
    return h + f * (cand - h)


def lstm_step(params: LstmParams, h, c, x):
    """One LSTM step; returns (h', c')."""
    y = _concat_state_input(h, x)
    gate_i = sigmoid(matmul(y, params.a_i) + params.b_i)
    gate_f = sigmoid(matmul(y, params.a_f) + params.b_f)
    gate_o = sigmoid(matmul(y, params.a_o) + params.b_o)
    cand = tanh(matmul(y, params.a_g) + params.b_g)
    c_new = gate_f * c + gate_i * cand
    return gate_o * tanh(c_new), c_new


# ---------------------------------------------------------------------------
# initializers


def _uniform(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return rng.uniform(-0.5, 0.5, size=(rows, cols)) / np.sqrt(rows)


def init_elastance(m: int, n: int, rng: np.random.Generator,
                   kind: str = SYMMETRIC) -> ElastanceParams:
    return ElastanceParams(
        o=_uniform(rng, m + n, m),
        p=np.zeros(m),
        k_raw=np.ones(m),
        kind=kind,
    )


def init_liquid(m: int, n: int, rng: np.random.Generator,
                elastance_kind: str | None = None) -> LiquidParams:
    """Fresh liquid-cell parameters.

    Conductances start small (leak 0.1), gate biases at 0 so gates are
    unsaturated, reversal potentials at 1, and matrices uniform in
    [-0.5, 0.5]/sqrt(m+n).  Pass an elastance kind for LRC/LRCU cells.
    """
    return LiquidParams(
        g=_uniform(rng, m + n, m),
        a=_uniform(rng, m + n, m),
        b=np.zeros((m + n, m)),
        k=_uniform(rng, m + n, m),
        g_l=np.full(m, 0.1),
        e_l=np.ones(m),
        elastance=None if elastance_kind is None else init_elastance(m, n, rng, elastance_kind),
    )


def init_gru(m: int, n: int, rng: np.random.Generator) -> GruParams:
    return GruParams(
        a_f=_uniform(rng, m + n, m), b_f=np.zeros(m),
        a_u=_uniform(rng, m + n, m), b_u=np.zeros(m),
        a_r=_uniform(rng, m + n, m), b_r=np.zeros(m),
    )


def init_mgu(m: int, n: int, rng: np.random.Generator) -> MguParams:
    return MguParams(
        a_f=_uniform(rng, m + n, m), b_f=np.zeros(m),
        a_h=_uniform(rng, m + n, m), b_h=np.zeros(m),
    )


def init_lstm(m: int, n: int, rng: np.random.Generator) -> LstmParams:
    return LstmParams(
        a_i=_uniform(rng, m + n, m), b_i=np.zeros(m),
        a_f=_uniform(rng, m + n, m), b_f=np.zeros(m),
        a_o=_uniform(rng, m + n, m), b_o=np.zeros(m),
        a_g=_uniform(rng, m + n, m), b_g=np.zeros(m),
    )


def init_affine(n_in: int, n_out: int, rng: np.random.Generator) -> AffineMap:
    return AffineMap(w=_uniform(rng, n_in, n_out), b=np.zeros(n_out))


def init_mlp_field(sizes: list[int], rng: np.random.Generator) -> MlpField:
    """sizes = [d, hidden..., d]; tanh between layers, linear output."""
    f = MlpField()
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        f.weights.append(_uniform(rng, n_in, n_out))
        f.biases.append(np.zeros(n_out))
    return f
