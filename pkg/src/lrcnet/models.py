"""Sequence models: a cell plus affine readout, run over observation grids.

A ``Model`` bundles a cell parameter container with an affine output layer
and, for trajectory-fitting models, an affine input map that lifts the first
observation into the hidden space.  ``forward_sequence`` runs the model over
a grid of observation times (optionally recording on an autodiff tape) and
``backward_sequence`` turns per-output loss gradients into parameter
gradients.  Checkpoints are a documented JSON schema that round-trips byte
for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff, cells, solvers
from .autodiff import Tape, Var
from .core import SYMMETRIC, ElastanceParams

__all__ = [
    "Model",
    "SequenceRecord",
    "MODEL_KINDS",
    "LIQUID_KINDS",
    "CONTINUOUS_KINDS",
    "make_model",
    "forward_sequence",
    "backward_sequence",
    "advance_interval",
    "count_parameters",
    "save_checkpoint",
    "load_checkpoint",
    "finite_difference_model_gradient",
    "CHECKPOINT_SCHEMA_ID",
]

LIQUID_KINDS = ("ltc", "stc", "lrc", "lrcu")
GATED_KINDS = ("gru", "gru_ode", "mgu", "lstm")
MODEL_KINDS = LIQUID_KINDS + GATED_KINDS + ("node_mlp",)
# kinds whose hidden state follows an ODE integrated by a solver config
CONTINUOUS_KINDS = ("ltc", "stc", "lrc", "gru_ode", "node_mlp")

CHECKPOINT_SCHEMA_ID = "lrcnet-checkpoint-v1"


@dataclass
class Model:
    """kind + cell parameters + optional affine input/output maps.

    output is None only for node_mlp, whose state is the observable itself.
    input_map, when present, produces h_0 from the first observation; models
    without one start from a zero hidden state (or a caller-supplied one).
    """

    kind: str
    cell: object
    output: cells.AffineMap | None = None
    input_map: cells.AffineMap | None = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")

    @property
    def m(self) -> int:
        if self.kind == "node_mlp":
            return self.cell.weights[0].shape[0]
        return self.cell.m

    @property
    def n(self) -> int:
        if self.kind == "node_mlp":
            return 0
        return self.cell.n

    @property
    def k_out(self) -> int:
        if self.output is None:
            return self.m
        return self.output.w.shape[1]

    def named_parameters(self) -> dict[str, np.ndarray]:
        """Live references to every trainable array, keyed by stable names."""
        out = {f"cell.{k}": v for k, v in self.cell.arrays().items()}
        if self.output is not None:
            out.update({f"out.{k}": v for k, v in self.output.arrays().items()})
        if self.input_map is not None:
            out.update({f"in.{k}": v for k, v in self.input_map.arrays().items()})
        return out


def count_parameters(model: Model) -> int:
    return sum(v.size for v in model.named_parameters().values())


def make_model(
    kind: str,
    m: int,
    n: int,
    k_out: int,
    rng: np.random.Generator,
    elastance_kind: str | None = None,
    with_input_map: bool = False,
    mlp_hidden: tuple[int, ...] = (32, 32),
) -> Model:
    """Fresh model of the given kind.

    For "lrc"/"lrcu" an elastance kind is required (defaults to symmetric).
    For "node_mlp", m is the observable dimension and n/k_out are ignored;
    the vector field is [m, *mlp_hidden, m] with tanh hidden layers.
    """
    if kind == "node_mlp":
        return Model(kind, cells.init_mlp_field([m, *mlp_hidden, m], rng))
    if kind in ("lrc", "lrcu"):
        elastance_kind = elastance_kind or SYMMETRIC
    elif elastance_kind is not None:
        raise ValueError(f"elastance kind applies to lrc/lrcu, not {kind!r}")
    if kind in LIQUID_KINDS:
        cell = cells.init_liquid(m, n, rng, elastance_kind)
    elif kind == "gru" or kind == "gru_ode":
        cell = cells.init_gru(m, n, rng)
    elif kind == "mgu":
        cell = cells.init_mgu(m, n, rng)
    elif kind == "lstm":
        cell = cells.init_lstm(m, n, rng)
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    out = cells.init_affine(m, k_out, rng)
    in_map = cells.init_affine(k_out, m, rng) if with_input_map else None
    return Model(kind, cell, out, in_map)


# ---------------------------------------------------------------------------
# tracing


def _trace(tape: Tape, reg: dict[str, Var], prefix: str, obj):
    """Copy a parameter container with arrays replaced by tape leaves."""
    if obj is None:
        return None
    if isinstance(obj, cells.LiquidParams):
        el = None
        if obj.elastance is not None:
            ep = obj.elastance
            k_raw = ep.k_raw
            if ep.kind == SYMMETRIC:
                k_raw = reg.setdefault(prefix + "elast_k", tape.leaf(ep.k_raw))
            el = ElastanceParams(
                o=reg.setdefault(prefix + "elast_o", tape.leaf(ep.o)),
                p=reg.setdefault(prefix + "elast_p", tape.leaf(ep.p)),
                k_raw=k_raw,
                kind=ep.kind,
            )
        return cells.LiquidParams(
            g=reg.setdefault(prefix + "g", tape.leaf(obj.g)),
            a=reg.setdefault(prefix + "a", tape.leaf(obj.a)),
            b=reg.setdefault(prefix + "b", tape.leaf(obj.b)),
            k=reg.setdefault(prefix + "k", tape.leaf(obj.k)),
            g_l=reg.setdefault(prefix + "g_l", tape.leaf(obj.g_l)),
            e_l=reg.setdefault(prefix + "e_l", tape.leaf(obj.e_l)),
            elastance=el,
        )
    if isinstance(obj, (cells.GruParams, cells.MguParams, cells.LstmParams)):
        traced = {name: reg.setdefault(prefix + name, tape.leaf(arr))
                  for name, arr in obj.arrays().items()}
        return type(obj)(**traced)
    if isinstance(obj, cells.MlpField):
        f = cells.MlpField()
        for i, (w, b) in enumerate(zip(obj.weights, obj.biases)):
            f.weights.append(reg.setdefault(f"{prefix}w{i}", tape.leaf(w)))
            f.biases.append(reg.setdefault(f"{prefix}b{i}", tape.leaf(b)))
        return f
    if isinstance(obj, cells.AffineMap):
        return cells.AffineMap(
            w=reg.setdefault(prefix + "w", tape.leaf(obj.w)),
            b=reg.setdefault(prefix + "b", tape.leaf(obj.b)),
        )
    raise TypeError(f"cannot trace {type(obj).__name__}")


@dataclass
class SequenceRecord:
    """Everything backward_sequence needs: the tape, the parameter leaves,
    the per-observation output nodes in time order, and the latent state
    each output was read from (a (h, c) tuple for lstm)."""

    tape: Tape
    params: dict[str, Var]
    outputs: list[Var] = field(default_factory=list)
    states: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# stepping


def advance_interval(model_kind: str, cell, cfg: solvers.SolverConfig, state, x, dt):
    """Advance the hidden state across one observation interval.

    ``state`` is h for every kind except lstm, where it is (h, c).  Works on
    arrays and tape Vars alike.  Continuous kinds integrate with the config's
    scheme; node_mlp always uses fixed-step RK4 with 4 * unfoldings substeps;
    discrete kinds take exactly one step (lrcu scaled by dt).
    """
    if model_kind in ("ltc", "stc", "lrc"):
        if cfg.scheme == solvers.HYBRID:
            return solvers.hybrid_euler_advance(model_kind, cell, state, x, dt, cfg.unfoldings)
        deriv = {"ltc": cells.ltc_derivative, "stc": cells.stc_derivative,
                 "lrc": cells.lrc_derivative}[model_kind]
        step = solvers.rk4_advance if cfg.scheme == solvers.RK4 else solvers.euler_advance
        return step(lambda h, xx: deriv(cell, h, xx), state, x, dt, cfg.unfoldings)
    if model_kind == "gru_ode":
        if cfg.scheme == solvers.HYBRID:
            raise ValueError("hybrid euler applies to the liquid family only")
        step = solvers.rk4_advance if cfg.scheme == solvers.RK4 else solvers.euler_advance
        return step(lambda h, xx: cells.gru_ode_derivative(cell, h, xx), state, x, dt,
                    cfg.unfoldings)
    if model_kind == "node_mlp":
        return solvers.rk4_advance(lambda h, xx: cell(h), state, x, dt, 4 * cfg.unfoldings)
    if model_kind == "lrcu":
        return cells.lrcu_step(cell, state, x, dt)
    if model_kind == "gru":
        return cells.gru_step(cell, state, x)
    if model_kind == "mgu":
        return cells.mgu_step(cell, state, x)
    if model_kind == "lstm":
        return cells.lstm_step(cell, state[0], state[1], x)
    raise ValueError(f"unknown model kind {model_kind!r}")


def _zeros_like_state(model: Model, batch_shape: tuple):
    h = np.zeros(batch_shape + (model.m,))
    if model.kind == "lstm":
        return h, np.zeros_like(h)
    return h


def forward_sequence(
    model: Model,
    cfg: solvers.SolverConfig,
    inputs: np.ndarray | None = None,
    dts: np.ndarray | float | None = None,
    init_obs: np.ndarray | None = None,
    n_steps: int | None = None,
    h0: np.ndarray | None = None,
    h0_offset: np.ndarray | None = None,
    traced: bool = False,
):
    """Run the model over an observation grid.

    Two layouts, chosen by the model:

    * input-driven (inputs is (..., T, n)): the state starts at zero (or
      ``h0``) and consumes one input per observation; output t is the readout
      after absorbing input t.  ``dts`` has one entry per observation.
    * self-driven (inputs is None): the state starts at
      input_map(init_obs) (node_mlp starts at init_obs itself), output 0 is
      read immediately, and the model advances n_steps - 1 intervals;
      ``dts`` has one entry per interval.

    dts may be a scalar (every interval equal, defaulting to cfg.dt when
    omitted) or an array of per-interval gaps, optionally batched.

    h0_offset, when given, is added to the initial self-driven state after
    the input map: a perturbation hook for state-noise training and for
    sensitivity probes.

    Returns (outputs, record): outputs is (..., T, k_out); record is a
    SequenceRecord when traced, else None.
    """
    tape = Tape() if traced else None
    reg: dict[str, Var] = {}
    cell = _trace(tape, reg, "cell.", model.cell) if traced else model.cell
    out_map = _trace(tape, reg, "out.", model.output) if traced else model.output
    in_map = _trace(tape, reg, "in.", model.input_map) if traced else model.input_map

    def readout(state):
        h = state[0] if model.kind == "lstm" else state
        return h if out_map is None else out_map(h)

    def dt_for(step: int):
        if dts is None:
            return cfg.dt
        if np.ndim(dts) == 0:
            return float(dts)
        arr = np.asarray(dts, dtype=np.float64)
        # per-interval gaps along the last axis; batch axes lead
        d = arr[..., step]
        return d[..., None] if d.ndim else float(d)

    outputs = []
    states: list = []
    if inputs is None:
        if init_obs is None and h0 is None:
            raise ValueError("self-driven sequences need init_obs or h0")
        if n_steps is None or n_steps < 1:
            raise ValueError("self-driven sequences need n_steps >= 1")
        if model.n != 0:
            raise ValueError(
                f"self-driven sequences need a cell with no input dimension, "
                f"got n={model.n}; build the model with n=0 and fold context "
                f"into the state")
        obs0 = None if init_obs is None else np.asarray(init_obs, dtype=np.float64)
        if h0 is not None:
            state = tape.constant(np.asarray(h0, dtype=np.float64)) if traced \
                else np.asarray(h0, dtype=np.float64)
        elif model.kind == "node_mlp":
            state = tape.constant(obs0) if traced else obs0
        elif in_map is not None:
            state = in_map(tape.constant(obs0) if traced else obs0)
        else:
            raise ValueError("self-driven sequences need an input map or h0")
        if h0_offset is not None:
            off = np.asarray(h0_offset, dtype=np.float64)
            state = state + (tape.constant(off) if traced else off)
        outputs.append(readout(state))
        states.append(state)
        for t in range(n_steps - 1):
            state = advance_interval(model.kind, cell, cfg, state, None, dt_for(t))
            outputs.append(readout(state))
            states.append(state)
    else:
        arr = np.asarray(inputs, dtype=np.float64)
        if arr.ndim < 2:
            raise ValueError("inputs must be (..., T, n)")
        T = arr.shape[-2]
        state = _zeros_like_state(model, arr.shape[:-2]) if h0 is None else h0
        if traced:
            if model.kind == "lstm":
                state = (tape.constant(state[0]), tape.constant(state[1]))
            else:
                state = tape.constant(state)
        for t in range(T):
            x_t = arr[..., t, :]
            if traced:
                x_t = tape.constant(x_t)
            state = advance_interval(model.kind, cell, cfg, state, x_t, dt_for(t))
            outputs.append(readout(state))
            states.append(state)

    if traced:
        record = SequenceRecord(tape=tape, params=reg, outputs=outputs, states=states)
        stacked = np.stack([o.value for o in outputs], axis=-2)
        return stacked, record
    return np.stack(outputs, axis=-2), None


def backward_sequence(
    record: SequenceRecord,
    output_grads: np.ndarray,
    state_grads: dict[int, np.ndarray] | None = None,
    state_grad_indices: tuple[int, ...] = (),
):
    """Parameter gradients from per-output loss gradients.

    ``output_grads`` has the same shape as the stacked outputs; slice t seeds
    output node t.  Parameters the outputs do not depend on get zero.

    ``state_grads`` maps an output index t to an extra seed on the latent
    state the readout at t was taken from, for objectives that penalise
    states directly.  ``state_grad_indices`` asks for the gradients with
    respect to those recorded states; when non-empty the return value is
    ``(param_grads, {t: grad})`` — the hook that makes window-start states
    trainable (multiple shooting).  Neither extension supports lstm records.
    """
    grads_by_t = np.asarray(output_grads, dtype=np.float64)
    if grads_by_t.shape[-2] != len(record.outputs):
        raise ValueError(
            f"output_grads has {grads_by_t.shape[-2]} time slices, "
            f"record has {len(record.outputs)} outputs"
        )
    seeds = {var: grads_by_t[..., t, :] for t, var in enumerate(record.outputs)}
    if state_grads:
        for t, g in state_grads.items():
            var = record.states[t]
            if isinstance(var, tuple):
                raise ValueError("state seeding is not supported for lstm records")
            g = np.asarray(g, dtype=np.float64)
            # readout may be the state itself when there is no output map
            seeds[var] = seeds[var] + g if var in seeds else g
    node_grads = autodiff.backward(seeds)
    out = {}
    for name, var in record.params.items():
        g = node_grads.get(var.index)
        out[name] = np.zeros_like(var.value) if g is None else g
    if state_grad_indices:
        extra = {}
        for t in state_grad_indices:
            var = record.states[t]
            if isinstance(var, tuple):
                raise ValueError("state gradients are not supported for lstm records")
            g = node_grads.get(var.index)
            extra[t] = np.zeros_like(var.value) if g is None else g
        return out, extra
    return out


def finite_difference_model_gradient(
    model: Model,
    cfg: solvers.SolverConfig,
    loss_fn,
    step: float = 1e-5,
    **forward_kwargs,
) -> dict[str, np.ndarray]:
    """Central-difference oracle: loss_fn(outputs) -> float, differentiated
    w.r.t. every raw parameter array via untraced forwards."""

    def run() -> float:
        outputs, _ = forward_sequence(model, cfg, traced=False, **forward_kwargs)
        return float(loss_fn(outputs))

    return autodiff.finite_difference_gradient(run, model.named_parameters(), step=step)


# ---------------------------------------------------------------------------
# checkpoints


def _elastance_kind(model: Model) -> str | None:
    if isinstance(model.cell, cells.LiquidParams) and model.cell.elastance is not None:
        return model.cell.elastance.kind
    return None


def save_checkpoint(path, model: Model, seed: int | None = None,
                    metadata: dict | None = None) -> None:
    """Write the documented JSON checkpoint.

    Top-level keys: schema, model_kind, m, n, k_out, elastance_kind, seed,
    metadata, params.  Each entry of params holds the array's shape and its
    values flattened in C order.  Serialization is sorted and uses Python's
    shortest round-trip float representation, so load followed by save
    reproduces the file byte for byte.
    """
    doc = {
        "schema": CHECKPOINT_SCHEMA_ID,
        "model_kind": model.kind,
        "m": model.m,
        "n": model.n,
        "k_out": model.k_out,
        "elastance_kind": _elastance_kind(model),
        "seed": seed,
        "metadata": metadata or {},
        "params": {
            name: {"shape": list(arr.shape), "data": arr.reshape(-1).tolist()}
            for name, arr in model.named_parameters().items()
        },
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def load_checkpoint(path) -> tuple[Model, dict]:
    """Rebuild a Model from a checkpoint; returns (model, info) where info
    carries seed and metadata."""
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != CHECKPOINT_SCHEMA_ID:
        raise ValueError(f"not a {CHECKPOINT_SCHEMA_ID} file: schema={doc.get('schema')!r}")
    kind = doc["model_kind"]
    arrays = {
        name: np.array(spec["data"], dtype=np.float64).reshape(spec["shape"])
        for name, spec in doc["params"].items()
    }

    def take(name):
        if name not in arrays:
            raise ValueError(f"checkpoint missing parameter {name!r}")
        return arrays[name]

    if kind in LIQUID_KINDS:
        el = None
        if doc["elastance_kind"] is not None:
            el = ElastanceParams(
                o=take("cell.elast_o"),
                p=take("cell.elast_p"),
                k_raw=take("cell.elast_k") if doc["elastance_kind"] == SYMMETRIC
                else np.ones(doc["m"]),
                kind=doc["elastance_kind"],
            )
        cell = cells.LiquidParams(
            g=take("cell.g"), a=take("cell.a"), b=take("cell.b"), k=take("cell.k"),
            g_l=take("cell.g_l"), e_l=take("cell.e_l"), elastance=el,
        )
    elif kind in ("gru", "gru_ode"):
        cell = cells.GruParams(**{f: take(f"cell.{f}") for f in
                                  ("a_f", "b_f", "a_u", "b_u", "a_r", "b_r")})
    elif kind == "mgu":
        cell = cells.MguParams(**{f: take(f"cell.{f}") for f in ("a_f", "b_f", "a_h", "b_h")})
    elif kind == "lstm":
        cell = cells.LstmParams(**{f: take(f"cell.{f}") for f in
                                   ("a_i", "b_i", "a_f", "b_f", "a_o", "b_o", "a_g", "b_g")})
    elif kind == "node_mlp":
        cell = cells.MlpField()
        i = 0
        while f"cell.w{i}" in arrays:
            cell.weights.append(take(f"cell.w{i}"))
            cell.biases.append(take(f"cell.b{i}"))
            i += 1
        if not cell.weights:
            raise ValueError("node_mlp checkpoint has no layers")
    else:
        raise ValueError(f"unknown model kind {kind!r}")

    output = None
    if "out.w" in arrays:
        output = cells.AffineMap(w=take("out.w"), b=take("out.b"))
    in_map = None
    if "in.w" in arrays:
        in_map = cells.AffineMap(w=take("in.w"), b=take("in.b"))
    model = Model(kind, cell, output, in_map)
    return model, {"seed": doc.get("seed"), "metadata": doc.get("metadata", {})}
