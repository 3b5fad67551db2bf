"""Certified sensitivity bounds and activity metrics for liquid cells.

The centerpiece is a computable Lipschitz certificate for the discrete
one-step map of a saturated liquid cell: bound the derivative of each
state's rate with respect to every state and input coordinate, push the
bounds through the affine readout, and take the spectral norm.  The
certificate covers STC cells and, with the elastance correction, LRC and
LRCU cells; it is what makes the resistance-capacitance variant provably
tamer than its predecessor (`lrc_from_stc` constructs the witness pair).

The generalization bound combines the certificate with three measured
discrepancies into an upper bound on validation loss.  The remaining
helpers are measurement tools: an empirical Lipschitz probe and the
absolute cross-correlation used to score neuron/output alignment.

Everything here is read-only analysis over frozen parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import core
from .cells import AffineMap, LiquidParams
from .core import ElastanceParams
from .models import Model, advance_interval
from .solvers import SolverConfig

__all__ = [
    "LipschitzReport",
    "GeneralizationBoundInputs",
    "stc_derivative_bound",
    "lrc_derivative_bound",
    "lipschitz_bound",
    "spectral_norm",
    "lrc_from_stc",
    "generalization_bound",
    "abs_cross_correlation",
    "empirical_lipschitz",
    "make_probe_set",
    "h_envelope",
    "LIPSCHITZ_CSV_HEADER",
]

# Kinds whose one-step map the certificate covers.  Gated baselines are out:
# their proofs do not transfer, and we refuse rather than emit a wrong number.
_CERTIFIED_KINDS = ("stc", "lrc", "lrcu")

# sup |sigmoid''| = 1/(6*sqrt(3)); curvature slack for grid maxima.
_SIGMOID_D2_MAX = 1.0 / (6.0 * np.sqrt(3.0))


@dataclass
class LipschitzReport:
    """Certificate for one readout step: output = Q (h + dt * dh/dt) + bias.

    V : (K, m+n) entrywise bound on the output-vs-[state, input] Jacobian
    lam : spectral norm of V, the certified Lipschitz constant
    per_state_derivative_bounds : (m, m+n) bounds max |d (dh_i/dt) / d y_j|
    dt_used : the step size the certificate was built for
    h_bound : (m,) per-neuron envelope |h_i| <= h_bound_i assumed by the bound
    """

    V: np.ndarray
    lam: float
    per_state_derivative_bounds: np.ndarray
    dt_used: float
    h_bound: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "schema": "lrcnet-lipschitz-v1",
            "V": self.V.tolist(),
            "lambda": float(self.lam),
            "per_state_derivative_bounds": self.per_state_derivative_bounds.tolist(),
            "assumptions": {
                "dt": float(self.dt_used),
                "h_bound": np.asarray(self.h_bound, dtype=np.float64).tolist(),
            },
        }

    def csv_row(self, label: str) -> str:
        return "%s,%.17g,%.17g,%.17g,%.17g" % (
            label, float(self.lam), float(self.V.max(initial=0.0)),
            float(self.dt_used), float(np.max(self.h_bound, initial=0.0)),
        )


LIPSCHITZ_CSV_HEADER = "label,lambda,max_V_entry,dt,max_h_bound"


@dataclass
class GeneralizationBoundInputs:
    """The four ingredients of the validation-loss bound.

    eps_T : bound on the training loss actually reached
    eps_y : max per-time input discrepancy between train and validation
    eps_o : max per-time label discrepancy between train and validation
    lam : certified Lipschitz constant of the trained model
    """

    eps_T: float
    eps_y: float
    eps_o: float
    lam: float

    def __post_init__(self):
        for name in ("eps_T", "eps_y", "eps_o", "lam"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")


# ---------------------------------------------------------------------------
# derivative bounds


def _as_liquid(params) -> LiquidParams:
    if isinstance(params, Model):
        if params.kind not in _CERTIFIED_KINDS:
            raise ValueError(
                f"certified bounds cover kinds {_CERTIFIED_KINDS}, not {params.kind!r}")
        return params.cell
    if not isinstance(params, LiquidParams):
        raise TypeError("expected LiquidParams or a liquid-cell Model")
    return params


def stc_derivative_bound(params: LiquidParams, h_bound) -> np.ndarray:
    """Entrywise bound on |d (dh_i/dt) / d y_j| for the saturated STC cell.

    Entry (i, j) = 0.0625 |g_ji a_ji| h_bound_i + 0.25 |k_ji a_ji e_l_i| + 1.
    The 0.0625 is two stacked sigmoid slopes (0.25 each) hitting the decay
    path, the 0.25 is one slope on the update path, and the trailing 1
    absorbs the direct -sigmoid(f_i) h_i dependence (kept for every j, a
    deliberate over-approximation that stays sound).
    """
    params = _as_liquid(params)
    h_bound = np.asarray(h_bound, dtype=np.float64)
    if np.any(h_bound < 0.0):
        raise ValueError("h_bound must be nonnegative elementwise")
    ga = np.abs(params.g * params.a)          # (m+n, m), |g_ji a_ji|
    ka = np.abs(params.k * params.a)          # (m+n, m), |k_ji a_ji|
    decay = 0.0625 * ga.T * h_bound[:, None]
    update = 0.25 * ka.T * np.abs(params.e_l)[:, None]
    return decay + update + 1.0               # (m, m+n)


def _elastance_maxima(ep: ElastanceParams, m: int, w_range=None):
    """Per-neuron maxima of the elastance and its slope.

    Without a range the global analytic maxima apply (asymmetric: 1 and
    0.25; symmetric: the closed-form peak and a slack-padded grid maximum).
    With w_range = (lo, hi) both maxima are taken over that interval by a
    dense grid including the endpoints, padded by a curvature slack so the
    result can only overestimate, then clipped to the global maxima.
    """
    k_eff = np.abs(ep.k_raw)
    eps_glob = np.broadcast_to(np.asarray(core.elastance_max(k_eff, ep.kind),
                                          dtype=np.float64), (m,))
    der_glob = np.broadcast_to(np.asarray(core.elastance_derivative_max(k_eff, ep.kind),
                                          dtype=np.float64), (m,))
    if w_range is None:
        return np.array(eps_glob), np.array(der_glob)
    lo, hi = float(w_range[0]), float(w_range[1])
    if not lo <= hi:
        raise ValueError("w_range must satisfy lo <= hi")
    w = np.linspace(lo, hi, 4097)
    step = (hi - lo) / 4096.0
    vals = np.broadcast_to(core.elastance(w[:, None], k_eff[None, :], ep.kind),
                           (w.size, m))
    ders = np.broadcast_to(np.abs(core.elastance_derivative(w[:, None], k_eff[None, :],
                                                            ep.kind)),
                           (w.size, m))
    # |eps'| <= 0.25 and |eps''| <= c bound how far the true max can sit
    # between grid points; symmetric doubles the curvature constant.
    d2 = _SIGMOID_D2_MAX * (2.0 if ep.kind == core.SYMMETRIC else 1.0)
    eps_max = np.minimum(vals.max(axis=0) + 0.25 * step / 2.0, eps_glob)
    der_max = np.minimum(ders.max(axis=0) + d2 * step / 2.0, der_glob)
    return eps_max, der_max


def lrc_derivative_bound(params: LiquidParams, h_bound, w_range=None) -> np.ndarray:
    """Entrywise bound on |d (dh_i/dt) / d y_j| for the LRC cell.

    The elastance multiplies the saturated STC core and itself depends on y,
    so the bound has two terms per entry:

        eps_max_i * stc_bound_ij + eps_der_max_i * |o_ji| * (h_bound_i + |e_l_i|)

    where (h_bound_i + |e_l_i|) bounds the magnitude of the unscaled rate and
    the maxima are taken per neuron over all preactivations, or over the
    supplied w_range (grid plus endpoints, slack-padded).
    """
    params = _as_liquid(params)
    if params.elastance is None:
        raise ValueError("lrc_derivative_bound requires elastance parameters")
    h_bound = np.asarray(h_bound, dtype=np.float64)
    base = stc_derivative_bound(params, h_bound)
    eps_max, der_max = _elastance_maxima(params.elastance, params.m, w_range)
    rate = h_bound + np.abs(params.e_l)       # (m,)
    o_abs = np.abs(params.elastance.o).T      # (m, m+n)
    return eps_max[:, None] * base + (der_max * rate)[:, None] * o_abs


# ---------------------------------------------------------------------------
# spectral norm and the certificate


def spectral_norm(V: np.ndarray, rel_tol: float = 1e-10,
                  max_iters: int = 10_000) -> float:
    """Largest singular value of V by power iteration on V^T V.

    Stops when successive singular-value estimates agree to rel_tol in
    relative terms.  Raises RuntimeError if max_iters passes without
    convergence (does not silently return a stale estimate).
    """
    V = np.asarray(V, dtype=np.float64)
    if V.size == 0 or not np.any(V):
        return 0.0
    rng = np.random.default_rng(0)
    v = rng.standard_normal(V.shape[1])
    v /= np.linalg.norm(v)
    prev = np.inf
    for _ in range(max_iters):
        w = V @ v
        sigma = float(np.linalg.norm(w))
        if sigma == 0.0:
            # v landed in the null space; restart from a fresh direction
            v = rng.standard_normal(V.shape[1])
            v /= np.linalg.norm(v)
            prev = np.inf
            continue
        v = V.T @ w
        v /= np.linalg.norm(v)
        if abs(sigma - prev) <= rel_tol * sigma:
            return sigma
        prev = sigma
    raise RuntimeError(f"power iteration did not converge in {max_iters} iterations")


def lipschitz_bound(params, output_map=None, dt: float = 1.0, h_bound=None,
                    w_range=None) -> LipschitzReport:
    """Certified Lipschitz constant of one discrete step plus readout.

    The certified map is y = [h, x] -> Q (h + dt * dh/dt(y)) + bias.  Its
    Jacobian entry (k, j) is bounded by

        v_kj = sum_i |q_ki| (1 + dt * max |d (dh_i/dt) / d y_j|)

    and the returned lambda is the spectral norm of V = (v_kj), computed by
    power iteration to relative tolerance 1e-10.

    `params` is a LiquidParams or a liquid-cell Model (STC, LRC or LRCU;
    for a Model the readout defaults to its own output map).  `output_map`
    is an AffineMap or an (m, K) weight matrix.  `h_bound` is the assumed
    per-neuron state envelope (see `h_envelope`); a scalar broadcasts.
    """
    if isinstance(params, Model) and output_map is None:
        output_map = params.output
    cell = _as_liquid(params)
    if output_map is None:
        raise ValueError("an output map is required (got None)")
    q = output_map.w if isinstance(output_map, AffineMap) else np.asarray(output_map)
    if q.ndim != 2 or q.shape[0] != cell.m:
        raise ValueError(f"output weights must be (m, K) with m={cell.m}")
    if h_bound is None:
        raise ValueError("h_bound is required; build one with h_envelope(...)")
    h_bound = np.broadcast_to(np.asarray(h_bound, dtype=np.float64), (cell.m,))
    if cell.elastance is None:
        bounds = stc_derivative_bound(cell, h_bound)
    else:
        bounds = lrc_derivative_bound(cell, h_bound, w_range)
    V = np.abs(q).T @ (1.0 + dt * bounds)     # (K, m+n)
    lam = spectral_norm(V)
    return LipschitzReport(V=V, lam=lam, per_state_derivative_bounds=bounds,
                           dt_used=float(dt), h_bound=np.array(h_bound))


def h_envelope(states, margin: float = 1.1) -> np.ndarray:
    """Per-neuron envelope max |h_i| over observed states, times a margin.

    `states` is an (..., m) array or a sequence of such arrays (e.g. the
    hidden trajectories seen during training).  The margin widens the
    envelope so the certificate keeps a buffer over the measurements.
    """
    if isinstance(states, np.ndarray):
        stacked = [states]
    else:
        stacked = [np.asarray(s, dtype=np.float64) for s in states]
    if not stacked:
        raise ValueError("h_envelope needs at least one state array")
    m = stacked[0].shape[-1]
    env = np.zeros(m)
    for arr in stacked:
        env = np.maximum(env, np.abs(arr.reshape(-1, m)).max(axis=0))
    return margin * env


# ---------------------------------------------------------------------------
# the STC -> LRC witness construction


def lrc_from_stc(stc_params: LiquidParams, elastance_kind: str,
                 shrink: float, seed: int = 0) -> LiquidParams:
    """Attach an elastance to an STC cell so its certificate strictly drops.

    All carried-over parameters are copied.  The elastance weights are set to

        o_ji = shrink * min{0.0625 |g_ji a_ji|, 0.25 |k_ji a_ji|} * sign

    with bias p = 0 and symmetric half-width 1.  Any shrink < 1 makes
    |o_ji| strictly smaller than the threshold wherever the threshold is
    positive.  With the symmetric kind the elastance peak 2*sigmoid(1) - 1
    is well below 1, so the certificate strictly drops: lambda(LRC) <
    lambda(STC) on the same h_bound.  The asymmetric kind is accepted but
    carries no such guarantee (its elastance supremum is 1, so the slope
    term can only add).  Signs come from a pseudorandom draw keyed by
    `seed`; they do not affect the certificate (only |o_ji| enters).
    """
    if not 0.0 < shrink <= 1.0:
        raise ValueError("shrink must lie in (0, 1]")
    o_star = np.minimum(0.0625 * np.abs(stc_params.g * stc_params.a),
                        0.25 * np.abs(stc_params.k * stc_params.a))
    signs = np.where(np.random.default_rng(seed).random(o_star.shape) < 0.5, -1.0, 1.0)
    m = stc_params.m
    elastance = ElastanceParams(
        o=shrink * o_star * signs,
        p=np.zeros(m),
        k_raw=np.ones(m),
        kind=elastance_kind,
    )
    return LiquidParams(
        g=stc_params.g.copy(), a=stc_params.a.copy(), b=stc_params.b.copy(),
        k=stc_params.k.copy(), g_l=stc_params.g_l.copy(), e_l=stc_params.e_l.copy(),
        elastance=elastance,
    )


# ---------------------------------------------------------------------------
# the validation-loss bound


def generalization_bound(eps_o: float, eps_T: float, eps_y: float,
                         lam: float) -> float:
    """Upper bound on validation loss: eps_o + eps_T + eps_y * lam.

    eps_T bounds the achieved training loss, eps_y the worst per-time input
    discrepancy between the training and validation sequences, eps_o the
    worst per-time label discrepancy, and lam is the certified Lipschitz
    constant.  Accepts the same four numbers as GeneralizationBoundInputs.
    """
    inputs = GeneralizationBoundInputs(eps_T=eps_T, eps_y=eps_y, eps_o=eps_o, lam=lam)
    return inputs.eps_o + inputs.eps_T + inputs.eps_y * inputs.lam


# ---------------------------------------------------------------------------
# measurements


def abs_cross_correlation(neuron_activity, reference) -> float:
    """Absolute Pearson correlation between two equal-length sequences.

    Excitation and inhibition count the same, hence the absolute value.
    If either sequence has zero variance the correlation is undefined and
    0 is returned by convention.
    """
    a = np.asarray(neuron_activity, dtype=np.float64).ravel()
    b = np.asarray(reference, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError("sequences must have equal length")
    if a.size < 2:
        raise ValueError("need at least two samples")
    da = a - a.mean()
    db = b - b.mean()
    denom = np.sqrt((da * da).sum() * (db * db).sum())
    if denom == 0.0:
        return 0.0
    return float(min(abs((da * db).sum()) / denom, 1.0))


def make_probe_set(m: int, n: int, count: int, radius: float,
                   rng: np.random.Generator, scale: float = 1.0) -> list:
    """Random probe pairs (y1, y2) with |y1 - y2| = radius.

    y1 is uniform in [-scale, scale]^(m+n) and y2 sits at distance `radius`
    in a uniformly random direction.  Used by `empirical_lipschitz`.
    """
    width = m + n
    pairs = []
    for _ in range(count):
        y1 = rng.uniform(-scale, scale, size=width)
        direction = rng.standard_normal(width)
        direction /= np.linalg.norm(direction)
        pairs.append((y1, y1 + radius * direction))
    return pairs


def _probe_output(model: Model, cfg: SolverConfig, y: np.ndarray) -> np.ndarray:
    m = model.m
    h, x = y[:m], y[m:]
    state = advance_interval(model.kind, model.cell, cfg,
                             h, x if x.size else None, cfg.dt)
    return model.output(state) if model.output is not None else state


def empirical_lipschitz(model, solver_cfg, probe_set) -> float:
    """Measured Lipschitz quotient over a set of probe pairs.

    Protocol: each probe is a pair (y1, y2) of [state, input] vectors of
    width m+n.  Both are advanced one solver step of solver_cfg.dt and read
    out, and the quotient |out1 - out2| / |y1 - y2| is recorded; the max
    over the set is returned.  Coincident pairs are skipped.  A plain
    callable (e.g. an AffineMap) may stand in for the model, in which case
    it is evaluated directly on y with no stepping.

    This measures the same one-step map the certificate in
    `lipschitz_bound` covers, so measurement <= certificate whenever the
    probed states respect the certificate's h_bound.
    """
    if isinstance(model, Model):
        if model.kind not in _CERTIFIED_KINDS:
            raise ValueError(
                f"probe protocol covers kinds {_CERTIFIED_KINDS}, not {model.kind!r}")
        evaluate = lambda y: _probe_output(model, solver_cfg, y)
    elif callable(model):
        evaluate = model
    else:
        raise TypeError("model must be a liquid-cell Model or a callable")
    best = 0.0
    for y1, y2 in probe_set:
        y1 = np.asarray(y1, dtype=np.float64)
        y2 = np.asarray(y2, dtype=np.float64)
        gap = float(np.linalg.norm(y1 - y2))
        if gap == 0.0:
            continue
        out_gap = np.linalg.norm(np.asarray(evaluate(y1)) - np.asarray(evaluate(y2)))
        best = max(best, float(out_gap) / gap)
    return best
