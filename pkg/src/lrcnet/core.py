"""Scalar nonlinearities and elastance functions.

Everything in this module is plain float64 numpy, elementwise, and safe for
arbitrarily large arguments.  These are the primitives the cell equations are
built from; the autodiff engine wraps them, it does not replace them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "sigmoid",
    "sigmoid_derivative",
    "tanh",
    "tanh_derivative",
    "ElastanceParams",
    "ASYMMETRIC",
    "SYMMETRIC",
    "elastance",
    "elastance_derivative",
    "elastance_half_width_derivative",
    "elastance_max",
    "elastance_derivative_max",
]

# Elastance kinds.  Asymmetric saturates to 1 for large preactivations;
# symmetric is an even bump of height 2*sigmoid(k) - 1.
ASYMMETRIC = "asymmetric"
SYMMETRIC = "symmetric"
_KINDS = (ASYMMETRIC, SYMMETRIC)


def sigmoid(x):
    """Logistic function 1 / (1 + exp(-x)), overflow-safe on both tails.

    Uses the two-branch form: for x >= 0 compute 1 / (1 + exp(-x)), for
    x < 0 compute exp(x) / (1 + exp(x)).  Both branches share exp(-|x|),
    so sigmoid(x) + sigmoid(-x) equals 1.0 to within one rounding of the
    two divisions (the quotients round independently).
    """
    x = np.asarray(x, dtype=np.float64)
    s = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + s), s / (1.0 + s))


def sigmoid_derivative(x):
    """sigmoid'(x) = sigmoid(x) * (1 - sigmoid(x)).  Peak 0.25 at x = 0."""
    s = sigmoid(x)
    return s * (1.0 - s)


def tanh(x):
    """Hyperbolic tangent (numpy's, exposed for symmetry with sigmoid)."""
    return np.tanh(np.asarray(x, dtype=np.float64))


def tanh_derivative(x):
    """tanh'(x) = 1 - tanh(x)^2."""
    t = np.tanh(np.asarray(x, dtype=np.float64))
    return 1.0 - t * t


@dataclass
class ElastanceParams:
    """Parameters of the per-neuron elastance gate.

    o : (m+n, m) weights on the concatenated state-and-input vector
    p : (m,) bias
    k_raw : (m,) raw half-width, symmetric kind only; effective k = |k_raw|
    kind : "asymmetric" or "symmetric"
    """

    o: np.ndarray
    p: np.ndarray
    k_raw: np.ndarray
    kind: str = SYMMETRIC

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown elastance kind {self.kind!r}; expected one of {_KINDS}")


def _check_kind(kind: str) -> None:
    if kind not in _KINDS:
        raise ValueError(f"unknown elastance kind {kind!r}; expected one of {_KINDS}")


def elastance(w, k, kind: str):
    """Elastance value at preactivation w.

    asymmetric: sigmoid(w)                      in (0, 1)
    symmetric:  sigmoid(w + k) - sigmoid(w - k) in (0, 2*sigmoid(k) - 1]

    k is the effective (nonnegative) half-width and is ignored by the
    asymmetric kind.  Output is strictly positive for finite w and k > 0.
    """
    _check_kind(kind)
    if kind == ASYMMETRIC:
        return sigmoid(w)
    w = np.asarray(w, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    return sigmoid(w + k) - sigmoid(w - k)


def elastance_derivative(w, k, kind: str):
    """d elastance / d w.

    asymmetric: sigmoid'(w)
    symmetric:  sigmoid'(w + k) - sigmoid'(w - k)   (odd in w, 0 at w = 0)
    """
    _check_kind(kind)
    if kind == ASYMMETRIC:
        return sigmoid_derivative(w)
    w = np.asarray(w, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    return sigmoid_derivative(w + k) - sigmoid_derivative(w - k)


def elastance_half_width_derivative(w, k):
    """d elastance / d k for the symmetric kind: sigmoid'(w+k) + sigmoid'(w-k)."""
    w = np.asarray(w, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    return sigmoid_derivative(w + k) + sigmoid_derivative(w - k)


def elastance_max(k, kind: str):
    """Supremum of elastance(w) over all real w.

    asymmetric: 1 (approached as w -> +inf)
    symmetric:  2*sigmoid(k) - 1, attained at w = 0 (the symmetric elastance
    is even in w and decreases away from 0).
    """
    _check_kind(kind)
    if kind == ASYMMETRIC:
        return np.float64(1.0)
    k = np.asarray(k, dtype=np.float64)
    return 2.0 * sigmoid(k) - 1.0

# |d/dw sigmoid'(x)| <= 1/(6*sqrt(3)); for the symmetric difference the
# Lipschitz constant of eps' doubles.  Used to make the grid max sound.
_SIGMOID_D2_MAX = 1.0 / (6.0 * np.sqrt(3.0))


def elastance_derivative_max(k, kind: str, grid_step: float = 1e-3):
    """Sound upper bound on sup_w |d elastance / d w|.

    asymmetric: exactly 0.25 (peak of sigmoid' at 0).
    symmetric: grid maximum of |sigmoid'(w+k) - sigmoid'(w-k)| over a window
    wide enough that the tails are negligible, plus a Lipschitz slack of
    (grid spacing / 2) * sup|second derivative| so the returned value can
    only overestimate the true supremum.
    """
    _check_kind(kind)
    if kind == ASYMMETRIC:
        return np.float64(0.25)
    k = np.atleast_1d(np.asarray(k, dtype=np.float64))
    # eps'(w) decays like sigmoid'(|w| - k) for |w| > k; 40 units past k the
    # value is below 1e-17 and cannot affect the max.
    half = float(np.max(k)) + 40.0
    w = np.arange(-half, half + grid_step, grid_step)
    vals = np.abs(
        sigmoid_derivative(w[:, None] + k[None, :])
        - sigmoid_derivative(w[:, None] - k[None, :])
    )
    slack = 2.0 * _SIGMOID_D2_MAX * (grid_step / 2.0)
    out = vals.max(axis=0) + slack
    return out if out.shape != (1,) else np.float64(out[0])
