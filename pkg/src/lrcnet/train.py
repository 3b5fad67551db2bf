"""Training loops, losses, and optimizers.

Two experiment shapes:

* ``train_ode_task``: fit a self-driven model to one trajectory and evaluate
  it by re-rolling from the first observation across the whole trajectory.
  Recurrent cells train with the delay protocol: the hidden state is pinned
  to a stack of lagged copies of the observation, so every latent coordinate
  has a ground-truth value at every sample and training reduces to denoising
  regression on that grid (short multi-horizon rollouts, half the one-step
  rows jittered).  The MLP vector field trains on anchored windows instead;
  its state is the observable itself, so anchoring is exact there.
* ``train_sequence_task``: classify irregularly sampled sequences with a
  terminal softmax readout.

Both are deterministic for a fixed config and seed: one rng drives
initialization and batching, numpy does the rest single-threaded.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff, models, solvers
from .core import SYMMETRIC

__all__ = [
    "mse_loss",
    "mean_l2_loss",
    "softmax_cross_entropy",
    "Adam",
    "cosine_decay",
    "constant_schedule",
    "OdeTrainConfig",
    "SeqTrainConfig",
    "TrainResult",
    "ODE_BENCHMARK_TASKS",
    "ode_benchmark_config",
    "train_ode_task",
    "train_sequence_task",
    "rollout_hidden",
    "delay_state_matrix",
    "make_delay_model",
    "make_transform",
    "write_loss_curve",
    "LOSS_CURVE_HEADER",
]


# ---------------------------------------------------------------------------
# losses: each returns (scalar value, gradient w.r.t. outputs)


def mse_loss(outputs: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean of squared elementwise error over every axis."""
    diff = outputs - targets
    return float(np.mean(diff * diff)), (2.0 / diff.size) * diff


def mean_l2_loss(outputs: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over time (and batch) of the euclidean norm of the per-step error.

    For a (T, K) prediction this is (1/T) * sum_t ||o_t - y_t||_2, the
    trajectory distance the generalization bound is stated for.  Zero-error
    steps contribute zero gradient (a valid subgradient).
    """
    diff = outputs - targets
    norms = np.sqrt(np.sum(diff * diff, axis=-1))
    denom = max(norms.size, 1)
    grad = np.zeros_like(diff)
    nz = norms > 0.0
    grad[nz] = diff[nz] / (norms[nz][..., None] * denom)
    return float(np.sum(norms) / denom), grad


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of softmax(logits) against integer labels.

    logits: (N, K); labels: (N,) ints.  Gradient is softmax - onehot, / N.
    """
    z = logits - logits.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    p = ez / ez.sum(axis=-1, keepdims=True)
    n = logits.shape[0]
    rows = np.arange(n)
    value = float(-np.mean(np.log(p[rows, labels])))
    grad = p.copy()
    grad[rows, labels] -= 1.0
    return value, grad / n


# ---------------------------------------------------------------------------
# optimizer and schedules


@dataclass
class Adam:
    """Adam with optional decoupled weight decay (weight_decay > 0 is AdamW).

    ``step`` applies one update in place given parameter and gradient dicts
    sharing names.  The decay multiplies parameters by (1 - lr_t * wd) before
    the moment update, where lr_t is the scheduled learning rate.
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    _m: dict = field(default_factory=dict)
    _v: dict = field(default_factory=dict)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             lr_scale: float = 1.0) -> None:
        self.t += 1
        lr_t = self.lr * lr_scale
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in params.items():
            g = grads[name]
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for {name!r}")
            if name not in self._m:
                self._m[name] = np.zeros_like(p)
                self._v[name] = np.zeros_like(p)
            m, v = self._m[name], self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            if self.weight_decay:
                p *= 1.0 - lr_t * self.weight_decay
            p -= lr_t * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def cosine_decay(iteration: int, total: int) -> float:
    """Half-cosine learning-rate scale: 1 at iteration 0, -> 0 at total."""
    if total <= 0:
        return 1.0
    frac = min(max(iteration / total, 0.0), 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * frac))


def constant_schedule(iteration: int, total: int) -> float:
    return 1.0


_SCHEDULES = {"cosine": cosine_decay, "constant": constant_schedule}
_LOSSES = {"mse": mse_loss, "mean_l2": mean_l2_loss}


# ---------------------------------------------------------------------------
# configs and results


@dataclass
class OdeTrainConfig:
    """Training protocol for trajectory fitting.

    Shared fields configure the optimizer, the solver, and the model; the
    ``window``/``batch_size`` pair drives the anchored-window branch and the
    block from ``delta`` down drives the delay branch.  ``transform``
    selects the data representation both branches train in; evaluation is
    always de-transformed back to the trajectory's own units.
    """

    iterations: int = 1000
    batch_size: int = 16
    window: int = 16
    lr: float = 1e-3
    optimizer: str = "adam"          # "adam" | "adamw"
    weight_decay: float = 0.0
    schedule: str = "cosine"         # "cosine" | "constant"
    loss: str = "mse"                # "mse" | "mean_l2"
    seed: int = 0
    m: int = 16
    elastance_kind: str = SYMMETRIC
    mlp_hidden: tuple[int, ...] = (32, 32)
    scheme: str = solvers.EULER
    unfoldings: int = 1
    dt: float = 1.0                  # solver step per observation interval
    eval_every: int = 100
    protocol: str = "auto"           # "auto" | "delay" | "anchored"
    transform: str = "none"          # "none" | "standardize" | "log-standardize"
    delta: int = 4                   # lag spacing of the delay state, in samples
    jitter: float = 0.05             # noise std on jittered one-step rows
    # horizon groups (rows, steps, jittered): each iteration traces every
    # group from ground-truth delay states and regresses onto the next
    # `steps` delay states; jitter applies only where the flag is set.
    horizons: tuple[tuple[int, int, bool], ...] = ((32, 1, True), (32, 1, False))
    early_frac: float = 0.0          # fraction of rows drawn from the start
    early_cut: int = 100             # of the trajectory (the fill-in region)
    ema: float = 0.0                 # parameter averaging decay; 0 disables
    e_l_init: float | None = None    # override reversal-potential init


@dataclass
class SeqTrainConfig:
    """Epoch training for sequence classification."""

    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    optimizer: str = "adam"
    weight_decay: float = 0.0
    schedule: str = "cosine"
    seed: int = 0
    m: int = 16
    model_kind: str = "lrcu"
    elastance_kind: str = SYMMETRIC
    scheme: str = solvers.EULER
    unfoldings: int = 1
    target_accuracy: float | None = None   # stop early once val accuracy reaches it


@dataclass
class TrainResult:
    model: models.Model
    solver: solvers.SolverConfig
    curve: list[tuple[int, float, float, float]]   # iteration, train, eval, wall ms
    final_train: float
    final_eval: float
    wall_time_ms: float
    h_bound: np.ndarray | None = None
    extra: dict = field(default_factory=dict)


LOSS_CURVE_HEADER = "iteration,train_loss,eval_loss,wall_time_ms"


def write_loss_curve(path, curve) -> None:
    """CSV with the fixed header iteration,train_loss,eval_loss,wall_time_ms."""
    lines = [LOSS_CURVE_HEADER]
    for it, tr, ev, ms in curve:
        lines.append(f"{it},{tr:.17g},{ev:.17g},{ms:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _make_optimizer(name: str, lr: float, weight_decay: float) -> Adam:
    if name == "adam":
        return Adam(lr=lr, weight_decay=0.0)
    if name == "adamw":
        return Adam(lr=lr, weight_decay=weight_decay)
    raise ValueError(f"unknown optimizer {name!r}; expected 'adam' or 'adamw'")


def _schedule(name: str):
    if name not in _SCHEDULES:
        raise ValueError(f"unknown schedule {name!r}; expected one of {sorted(_SCHEDULES)}")
    return _SCHEDULES[name]


# ---------------------------------------------------------------------------
# ODE trajectory fitting


def rollout_hidden(model: models.Model, cfg: solvers.SolverConfig,
                   init_obs: np.ndarray, n_steps: int, dts) -> np.ndarray:
    """Hidden-state trajectory of a self-driven model, (n_steps, m)."""
    if model.kind == "node_mlp":
        state = np.asarray(init_obs, dtype=np.float64)
    elif model.input_map is not None:
        state = model.input_map(np.asarray(init_obs, dtype=np.float64))
    else:
        raise ValueError("rollout_hidden needs an input map or a node_mlp model")
    states = [state]
    for t in range(n_steps - 1):
        dt = dts if np.ndim(dts) == 0 else float(np.asarray(dts)[t])
        state = models.advance_interval(model.kind, model.cell, cfg, state, None, dt)
        states.append(state)
    return np.stack(states, axis=0)


def make_transform(name: str, values: np.ndarray):
    """Build (forward, inverse, stats) for a data representation.

    "none" is the identity; "standardize" is per-dimension (x - mu) / sd;
    "log-standardize" standardizes log(x) and so requires strictly positive
    data (population-style trajectories).  The inverse maps model outputs
    back to the trajectory's own units for evaluation.
    """
    if name == "none":
        return (lambda v: v), (lambda z: z), {}
    if name == "standardize":
        mu, sd = values.mean(axis=0), values.std(axis=0)
        if np.any(sd == 0.0):
            raise ValueError("cannot standardize a constant dimension")
        return (lambda v: (v - mu) / sd), (lambda z: z * sd + mu), {"mu": mu, "sd": sd}
    if name == "log-standardize":
        if np.any(values <= 0.0):
            raise ValueError("log-standardize requires strictly positive data")
        logv = np.log(values)
        mu, sd = logv.mean(axis=0), logv.std(axis=0)
        if np.any(sd == 0.0):
            raise ValueError("cannot standardize a constant dimension")
        return (lambda v: (np.log(v) - mu) / sd), (lambda z: np.exp(z * sd + mu)), \
            {"mu": mu, "sd": sd}
    raise ValueError(f"unknown transform {name!r}")


def delay_state_matrix(values: np.ndarray, lags: int, delta: int) -> np.ndarray:
    """Ground-truth delay states: row t stacks x_t, x_(t-delta), ...

    Indices saturate at 0, so early rows repeat the first observation in
    their older slots; row 0 is exactly the tiled first observation, which
    is also how the frozen input map seeds a rollout.  Shape (T, lags*dim).
    """
    n = len(values)
    idx = np.arange(n)[:, None] - delta * np.arange(lags)[None, :]
    idx = np.maximum(idx, 0)
    return values[idx].reshape(n, -1)


def make_delay_model(model_kind: str, m: int, dim: int, rng: np.random.Generator,
                     elastance_kind: str | None = None,
                     e_l_init: float | None = None) -> models.Model:
    """A lifted cell whose input and output maps pin the delay convention.

    The input map tiles the observation into every lag slot (the correct
    delay state at t = 0), the output map reads the newest slot back out,
    and both are zero-filled otherwise.  They are fixed by construction,
    not trained: only the cell's own parameters are free, so the latent
    coordinates keep their meaning as lagged observations.
    """
    if m % dim != 0:
        raise ValueError(f"m={m} must be a multiple of the observable width {dim}")
    model = models.make_model(model_kind, m, 0, dim, rng,
                              elastance_kind=elastance_kind, with_input_map=True)
    if e_l_init is not None and hasattr(model.cell, "e_l"):
        model.cell.e_l[:] = e_l_init
    lags = m // dim
    model.input_map.w[:] = 0.0
    for j in range(lags):
        model.input_map.w[:dim, j * dim:(j + 1) * dim] = np.eye(dim)
    model.input_map.b[:] = 0.0
    model.output.w[:] = 0.0
    model.output.w[:dim, :dim] = np.eye(dim)
    model.output.b[:] = 0.0
    return model


def train_ode_task(trajectory, model_kind: str, cfg: OdeTrainConfig) -> TrainResult:
    """Fit one self-driven model to one trajectory.

    Recurrent cells default to the delay protocol, the MLP vector field to
    anchored windows (cfg.protocol overrides).  Both train on the
    cfg.transform representation of the data; the eval column of the curve
    and final_eval are always computed in the trajectory's own units after
    rolling the model out from the first observation over the whole length.

    The model runs in sampling-index time: one interval between
    observations is one solver step of size cfg.dt, so the learned dynamics
    absorb the grid spacing.  Saturated cells have derivative magnitude
    capped near |h| + |e_l|, which a sub-0.01 physical step would starve.
    """
    raw = np.asarray(trajectory.values, dtype=np.float64)
    fwd, inv, stats = make_transform(cfg.transform, raw)
    values = fwd(raw)
    protocol = cfg.protocol
    if protocol == "auto":
        protocol = "anchored" if model_kind == "node_mlp" else "delay"
    if protocol == "delay":
        if model_kind == "node_mlp":
            raise ValueError("the delay protocol needs a recurrent cell")
        result = _train_ode_delay(raw, values, inv, model_kind, cfg)
    elif protocol == "anchored":
        result = _train_ode_anchored(raw, values, inv, model_kind, cfg)
    else:
        raise ValueError(f"unknown protocol {cfg.protocol!r}")
    result.extra["transform"] = cfg.transform
    result.extra.update(stats)
    return result


def _liquid_elastance(model_kind: str, cfg: OdeTrainConfig) -> str | None:
    return cfg.elastance_kind if model_kind in ("lrc", "lrcu") else None


def _train_ode_delay(raw, values, inv, model_kind: str,
                     cfg: OdeTrainConfig) -> TrainResult:
    """Denoising regression on the delay grid, with multi-horizon rollouts.

    Every latent coordinate of the delay state has a ground-truth value at
    every sample, so each traced rollout of k steps regresses the full
    state onto the next k delay states: no latent coordinate is ever left
    unsupervised, which is what keeps free-running evaluation on the learned
    flow instead of on a latent patchwork.  Jittered one-step rows teach the
    flow to contract back onto the data tube; clean longer-horizon rows
    control drift accumulation.
    """
    n_obs, dim = values.shape
    lags = cfg.m // dim if cfg.m % dim == 0 else None
    if lags is None:
        raise ValueError(f"m={cfg.m} must be a multiple of the observable width {dim}")
    rng = np.random.default_rng(cfg.seed)
    model = make_delay_model(model_kind, cfg.m, dim, np.random.default_rng(cfg.seed),
                             elastance_kind=_liquid_elastance(model_kind, cfg),
                             e_l_init=cfg.e_l_init)
    solver = solvers.SolverConfig(scheme=cfg.scheme, dt=cfg.dt,
                                  unfoldings=cfg.unfoldings)
    H = delay_state_matrix(values, lags, cfg.delta)
    # only the cell trains; the lift and readout are the delay convention
    params = {k: v for k, v in model.named_parameters().items()
              if k.startswith("cell.")}
    opt = _make_optimizer(cfg.optimizer, cfg.lr, cfg.weight_decay)
    sched = _schedule(cfg.schedule)
    loss_fn = _LOSSES[cfg.loss]
    kmax = max(k for _, k, _ in cfg.horizons)
    if kmax >= n_obs:
        raise ValueError("longest horizon must be shorter than the trajectory")
    n_pts = sum(b * k for b, k, _ in cfg.horizons) * cfg.m
    avg = {k: v.copy() for k, v in params.items()} if cfg.ema else None

    def draw_starts(count: int) -> np.ndarray:
        n_early = int(count * cfg.early_frac)
        if n_early:
            early = rng.integers(0, min(cfg.early_cut, n_obs - kmax), size=n_early)
            rest = rng.integers(0, n_obs - kmax, size=count - n_early)
            return np.concatenate([early, rest])
        return rng.integers(0, n_obs - kmax, size=count)

    def evaluate() -> float:
        out, _ = models.forward_sequence(model, solver, init_obs=values[0],
                                         n_steps=n_obs, dts=cfg.dt)
        return loss_fn(inv(out), raw)[0]

    curve: list[tuple[int, float, float, float]] = []
    train_losses = np.empty(cfg.iterations)
    start = time.perf_counter()
    train_loss = float("nan")
    for it in range(cfg.iterations):
        grads = None
        sq_sum = 0.0
        for rows, k, jittered in cfg.horizons:
            starts = draw_starts(rows)
            h0 = H[starts].copy()
            if jittered:
                h0 += cfg.jitter * rng.standard_normal((rows, cfg.m))
            tape = autodiff.Tape()
            reg: dict = {}
            cell = models._trace(tape, reg, "cell.", model.cell)
            state = tape.constant(h0)
            seeds = {}
            for step in range(1, k + 1):
                state = models.advance_interval(model_kind, cell, solver,
                                                state, None, cfg.dt)
                diff = state.value - H[starts + step]
                sq_sum += float(np.sum(diff * diff))
                seeds[state] = 2.0 * diff / n_pts
            named = autodiff.backward(seeds)
            g = {name: (named.get(v.index) if named.get(v.index) is not None
                        else np.zeros_like(v.value)) for name, v in reg.items()}
            grads = g if grads is None else {name: grads[name] + g[name] for name in grads}
        train_loss = sq_sum / n_pts
        train_losses[it] = train_loss
        if not np.isfinite(train_loss):
            raise FloatingPointError(f"training loss diverged at iteration {it}")
        opt.step(params, grads, lr_scale=sched(it, cfg.iterations))
        if avg is not None:
            for name in avg:
                avg[name] += (1.0 - cfg.ema) * (params[name] - avg[name])
        if (it + 1) % cfg.eval_every == 0 or it + 1 == cfg.iterations:
            ms = (time.perf_counter() - start) * 1e3
            curve.append((it + 1, train_loss, evaluate(), ms))
    if avg is not None:
        for name in params:
            params[name][...] = avg[name]

    wall_ms = (time.perf_counter() - start) * 1e3
    final_eval = evaluate() if avg is not None or not curve else curve[-1][2]
    hidden = rollout_hidden(model, solver, values[0], n_obs, cfg.dt)
    h_bound = 1.1 * np.maximum(np.max(np.abs(hidden), axis=0),
                               np.max(np.abs(H), axis=0))
    return TrainResult(model=model, solver=solver, curve=curve,
                       final_train=train_loss, final_eval=final_eval,
                       wall_time_ms=wall_ms, h_bound=h_bound,
                       extra={"train_losses": train_losses,
                              "protocol": "delay"})


def _train_ode_anchored(raw, values, inv, model_kind: str,
                        cfg: OdeTrainConfig) -> TrainResult:
    """Anchored-window training: every window restarts on the ground truth.

    Sound when the model state is the observable itself (the MLP vector
    field), because the anchor is then the true state.  For hidden-state
    cells the anchor runs through the trained input map, which leaves the
    latent coordinates free to drift between windows; kept as the baseline
    protocol and for ablations.
    """
    n_obs, dim = values.shape
    if cfg.window < 2 or cfg.window > n_obs:
        raise ValueError(f"window must be in [2, {n_obs}], got {cfg.window}")

    rng = np.random.default_rng(cfg.seed)
    if model_kind == "node_mlp":
        model = models.make_model("node_mlp", dim, 0, dim, rng,
                                  mlp_hidden=cfg.mlp_hidden)
    else:
        model = models.make_model(model_kind, cfg.m, 0, dim, rng,
                                  elastance_kind=_liquid_elastance(model_kind, cfg),
                                  with_input_map=True)
    solver = solvers.SolverConfig(scheme=cfg.scheme, dt=cfg.dt,
                                  unfoldings=cfg.unfoldings)
    params = model.named_parameters()
    opt = _make_optimizer(cfg.optimizer, cfg.lr, cfg.weight_decay)
    sched = _schedule(cfg.schedule)
    loss_fn = _LOSSES[cfg.loss]

    def evaluate() -> float:
        out, _ = models.forward_sequence(model, solver, init_obs=values[0],
                                         n_steps=n_obs, dts=cfg.dt)
        return loss_fn(inv(out), raw)[0]

    curve: list[tuple[int, float, float, float]] = []
    train_losses = np.empty(cfg.iterations)
    start = time.perf_counter()
    train_loss = float("nan")
    for it in range(cfg.iterations):
        starts = rng.integers(0, n_obs - cfg.window + 1, size=cfg.batch_size)
        idx = starts[:, None] + np.arange(cfg.window)[None, :]
        targets = values[idx]                       # (B, W, dim)
        out, rec = models.forward_sequence(
            model, solver, init_obs=targets[:, 0], n_steps=cfg.window,
            dts=cfg.dt, traced=True)
        train_loss, out_grad = loss_fn(out, targets)
        train_losses[it] = train_loss
        if not np.isfinite(train_loss):
            raise FloatingPointError(f"training loss diverged at iteration {it}")
        grads = models.backward_sequence(rec, out_grad)
        opt.step(params, grads, lr_scale=sched(it, cfg.iterations))
        if (it + 1) % cfg.eval_every == 0 or it + 1 == cfg.iterations:
            ms = (time.perf_counter() - start) * 1e3
            curve.append((it + 1, train_loss, evaluate(), ms))

    wall_ms = (time.perf_counter() - start) * 1e3
    final_eval = curve[-1][2] if curve else evaluate()
    hidden = rollout_hidden(model, solver, values[0], n_obs, cfg.dt)
    h_bound = 1.1 * np.max(np.abs(hidden), axis=0)
    return TrainResult(model=model, solver=solver, curve=curve,
                       final_train=train_loss, final_eval=final_eval,
                       wall_time_ms=wall_ms, h_bound=h_bound,
                       extra={"train_losses": train_losses,
                              "protocol": "anchored"})


# ---------------------------------------------------------------------------
# benchmark recipes

ODE_BENCHMARK_TASKS = ("sinusoid", "spiral", "duffing", "periodic_lv",
                       "asymptotic_lv", "nonlinear_lv")

_PLAIN = ((32, 1, True), (32, 1, False))
_HZ_124 = ((32, 1, True), (16, 2, False), (16, 4, False))
_HZ_1416 = ((32, 1, True), (16, 4, False), (8, 16, False))
_HZ_141632 = ((32, 1, True), (16, 4, False), (8, 16, False), (4, 32, False))

# Per-task delay-protocol settings for the recurrent models.  Iteration
# budgets follow the 2x1000 / 2x2000 / 2x4000 split, with the larger budgets
# on the tasks that need longer-horizon supervision; lag spacing, step size,
# and horizon mix were tuned per task at m = 16 over 3-seed means.  The
# periodic population task trains on log-standardized data (its cycle spikes
# dominate a raw fit); everything else standardizes.  Evaluation is raw-units
# regardless.
_DELAY_RECIPES: dict[str, dict] = {
    "sinusoid": dict(iterations=2000, delta=8, dt=0.1,
                     transform="standardize", horizons=_PLAIN),
    "spiral": dict(iterations=4000, delta=4, dt=0.025, transform="standardize",
                   horizons=_HZ_124, early_frac=0.25),
    "duffing": dict(iterations=2000, delta=1, dt=0.05, transform="standardize",
                    horizons=_HZ_1416, early_frac=0.25),
    "periodic_lv": dict(iterations=4000, delta=1, dt=0.025,
                        transform="log-standardize", horizons=_HZ_141632),
    "asymptotic_lv": dict(iterations=1000, delta=8, dt=0.05,
                          transform="standardize", horizons=_PLAIN),
    "nonlinear_lv": dict(iterations=1000, delta=8, dt=0.1,
                         transform="standardize", horizons=_PLAIN),
}


def ode_benchmark_config(task: str, model_kind: str, seed: int = 0) -> OdeTrainConfig:
    """The pinned per-task training recipe behind the benchmark table.

    Recurrent cells get the delay protocol with per-task lag spacing, step
    size, and horizon mix; the MLP vector field gets anchored windows under
    the same data transform and iteration budget, integrated with RK4.
    Every recipe is deterministic in the seed.
    """
    if task not in _DELAY_RECIPES:
        raise KeyError(f"unknown benchmark task {task!r}; have {sorted(_DELAY_RECIPES)}")
    recipe = dict(_DELAY_RECIPES[task])
    if model_kind == "node_mlp":
        return OdeTrainConfig(
            iterations=recipe["iterations"], transform=recipe["transform"],
            protocol="anchored", scheme=solvers.RK4, dt=0.1, unfoldings=1,
            window=16, batch_size=16, lr=3e-3, mlp_hidden=(32, 32), seed=seed,
            eval_every=200)
    return OdeTrainConfig(
        m=16, elastance_kind="asymmetric", scheme=solvers.EULER, unfoldings=2,
        lr=3e-3, e_l_init=8.0, jitter=0.05, seed=seed, eval_every=200,
        **recipe)


# ---------------------------------------------------------------------------
# sequence classification


def _accuracy(model, solver, inputs, dts, labels) -> float:
    out, _ = models.forward_sequence(model, solver, inputs=inputs, dts=dts)
    pred = np.argmax(out[..., -1, :], axis=-1)
    return float(np.mean(pred == labels))


def train_sequence_task(dataset, cfg: SeqTrainConfig) -> TrainResult:
    """Train a recurrent classifier with a terminal softmax readout.

    ``dataset`` carries train/val/test splits of (inputs, dts, labels) with
    inputs (N, T, n) and per-step gaps dts (N, T).  The loss is softmax
    cross-entropy on the readout of the final state; reported eval numbers
    are accuracies.  When target_accuracy is set, training stops at the end
    of the first epoch whose validation accuracy reaches it.
    """
    tr_x, tr_dt, tr_y = dataset.train
    va_x, va_dt, va_y = dataset.val
    te_x, te_dt, te_y = dataset.test
    n_train = tr_x.shape[0]
    n_classes = int(max(tr_y.max(), va_y.max(), te_y.max())) + 1

    rng = np.random.default_rng(cfg.seed)
    model = models.make_model(cfg.model_kind, cfg.m, tr_x.shape[-1], n_classes, rng,
                              elastance_kind=cfg.elastance_kind
                              if cfg.model_kind in ("lrc", "lrcu") else None)
    solver = solvers.SolverConfig(scheme=cfg.scheme, dt=1.0, unfoldings=cfg.unfoldings)
    params = model.named_parameters()
    opt = _make_optimizer(cfg.optimizer, cfg.lr, cfg.weight_decay)
    sched = _schedule(cfg.schedule)
    steps_per_epoch = max(1, n_train // cfg.batch_size)
    total = cfg.epochs * steps_per_epoch

    curve: list[tuple[int, float, float, float]] = []
    start = time.perf_counter()
    it = 0
    train_loss = float("nan")
    epochs_run = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_train)
        for b in range(steps_per_epoch):
            take = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            out, rec = models.forward_sequence(
                model, solver, inputs=tr_x[take], dts=tr_dt[take], traced=True)
            logits = out[:, -1, :]
            train_loss, glogits = softmax_cross_entropy(logits, tr_y[take])
            out_grad = np.zeros_like(out)
            out_grad[:, -1, :] = glogits
            grads = models.backward_sequence(rec, out_grad)
            opt.step(params, grads, lr_scale=sched(it, total))
            it += 1
        val_acc = _accuracy(model, solver, va_x, va_dt, va_y)
        ms = (time.perf_counter() - start) * 1e3
        curve.append((it, train_loss, val_acc, ms))
        epochs_run = epoch + 1
        if cfg.target_accuracy is not None and val_acc >= cfg.target_accuracy:
            break

    test_acc = _accuracy(model, solver, te_x, te_dt, te_y)
    wall_ms = (time.perf_counter() - start) * 1e3
    return TrainResult(model=model, solver=solver, curve=curve,
                       final_train=train_loss, final_eval=test_acc,
                       wall_time_ms=wall_ms,
                       extra={"test_accuracy": test_acc, "epochs_run": epochs_run,
                              "val_accuracy": curve[-1][2] if curve else float("nan")})
