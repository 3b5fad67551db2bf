"""ODE solvers: explicit Euler, fused semi-implicit Euler, RK4, Dormand-Prince.

The fixed-step schemes (``euler_advance``, ``hybrid_euler_advance``,
``rk4_advance``) advance one observation interval in ``unfoldings`` substeps
with the external input held constant across the interval (zero-order hold).
They are written against the dual-mode math, so the exact same arithmetic is
recorded on the autodiff tape during training.

``dopri45_solve`` is the adaptive Dormand-Prince 4(5) integrator with
embedded error control and a 4th-order dense output.  It is plain numpy and
is used for ground-truth generation and evaluation, never differentiated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cells
from .autodiff import Var, absolute, sigmoid, tanh

__all__ = [
    "SolverConfig",
    "euler_advance",
    "hybrid_euler_advance",
    "rk4_advance",
    "dopri45_solve",
    "DopriResult",
    "EULER",
    "HYBRID",
    "RK4",
]

EULER = "euler"
HYBRID = "hybrid"
RK4 = "rk4"
_SCHEMES = (EULER, HYBRID, RK4)


@dataclass
class SolverConfig:
    """How one observation interval is integrated.

    scheme : "euler" | "hybrid" | "rk4" (fixed step), used by the sequence
        runners; the adaptive integrator has its own entry point.
    dt : default interval length when the data carries no time stamps.
    unfoldings : substeps per observation interval (>= 1).
    rtol, atol, max_steps : adaptive-integrator settings, carried here so a
        single config object describes a whole experiment.
    """

    scheme: str = EULER
    dt: float = 1.0
    unfoldings: int = 1
    rtol: float = 1e-6
    atol: float = 1e-8
    max_steps: int = 100_000

    def __post_init__(self):
        if self.scheme not in _SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {_SCHEMES}")
        if self.unfoldings < 1:
            raise ValueError(f"unfoldings must be >= 1, got {self.unfoldings}")
        if not (self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")


def euler_advance(deriv_fn, h, x, dt, unfoldings: int):
    """Explicit Euler: h += (dt/unfoldings) * deriv_fn(h, x), repeated.

    dt may be a scalar or an array broadcastable against h (per-sample time
    gaps); x is zero-order-held across the substeps.
    """
    sub = dt / unfoldings
    for _ in range(unfoldings):
        h = h + sub * deriv_fn(h, x)
    return h


def rk4_advance(deriv_fn, h, x, dt, unfoldings: int):
    """Classical fixed-step RK4 over the interval, x zero-order-held."""
    sub = dt / unfoldings
    half = sub / 2.0
    for _ in range(unfoldings):
        k1 = deriv_fn(h, x)
        k2 = deriv_fn(h + half * k1, x)
        k3 = deriv_fn(h + half * k2, x)
        k4 = deriv_fn(h + sub * k3, x)
        h = h + (sub / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return h


def _value(z):
    return z.value if isinstance(z, Var) else np.asarray(z)


def hybrid_euler_advance(kind: str, params: cells.LiquidParams, h, x, dt, unfoldings: int):
    """Fused semi-implicit Euler for the liquid family.

    Per substep of length d, with gates read at the current state:

        h <- (h + d * c * drive * e_l) / (1 + d * c * decay)

    where (decay, drive) is (f, u) for "ltc" and (sigmoid(f), tanh(u)) for
    "stc"/"lrc", and c is 1 for "ltc"/"stc" or the elastance for "lrc".
    The state being solved for appears linearly, so each substep is the exact
    solution of the frozen-gate dynamics, which is what makes stiff LTC decay
    terms integrable at step sizes where explicit Euler diverges.

    The denominator is positive by construction (d > 0, c > 0, decay >= 0
    because conductances are nonnegative); a violation means corrupted
    parameters and raises.
    """
    if kind not in ("ltc", "stc", "lrc"):
        raise ValueError(f"hybrid euler applies to the liquid family, got {kind!r}")
    sub = dt / unfoldings
    for _ in range(unfoldings):
        y, f, u = cells.liquid_gates(params, h, x)
        if kind == "ltc":
            decay, drive = f, u
        else:
            decay, drive = sigmoid(f), tanh(u)
        if kind == "lrc":
            if params.elastance is None:
                raise ValueError("hybrid euler for lrc requires elastance parameters")
            c = cells.elastance_gate(params.elastance, y)
            decay = c * decay
            drive = c * drive
        denom = 1.0 + sub * decay
        if np.min(_value(denom)) <= 0.0:
            raise FloatingPointError(
                "hybrid euler denominator <= 0; conductances must be nonnegative"
            )
        h = (h + sub * (drive * params.e_l)) / denom
    return h


# ---------------------------------------------------------------------------
# Dormand-Prince 4(5)

# Standard tableau.  B5 is the 5th-order propagating weight row (FSAL),
# B4 the embedded 4th-order row used for the error estimate.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])

# 4th-order dense-output coefficients: y(t + theta*h) =
# y + h * sum_i K_i * (P[i,0]*theta + P[i,1]*theta^2 + ...).
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


@dataclass
class DopriResult:
    times: np.ndarray      # the requested sample times
    values: np.ndarray     # (len(times), d) dense-output samples
    n_accepted: int
    n_rejected: int
    n_evaluations: int


def _rms_norm(v: np.ndarray) -> float:
    return float(np.sqrt(np.mean(v * v)))


def _initial_step(field, t0, y0, f0, t_end, rtol, atol):
    """Classical starting-step heuristic from the trial-step estimate of the
    second derivative."""
    scale = atol + rtol * np.abs(y0)
    d0 = _rms_norm(y0 / scale)
    d1 = _rms_norm(f0 / scale)
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    y1 = y0 + h0 * f0
    f1 = field(t0 + h0, y1)
    d2 = _rms_norm((f1 - f0) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1, t_end - t0)


def dopri45_solve(
    field,
    t0: float,
    y0: np.ndarray,
    sample_times: np.ndarray,
    rtol: float = 1e-6,
    atol: float = 1e-8,
    max_steps: int = 100_000,
    first_step: float | None = None,
) -> DopriResult:
    """Integrate dy/dt = field(t, y) and sample densely at ``sample_times``.

    Steps are accepted when the scaled RMS of the embedded 4th/5th order
    difference is <= 1, and the next step is SAFETY * err^(-1/5), clamped to
    [0.2, 10] times the current step.  Requested times inside each accepted
    step are filled from the 4th-order interpolant.

    Raises RuntimeError when max_steps is exhausted or the step underflows,
    reporting how far the integration got.
    """
    y = np.array(y0, dtype=np.float64)
    sample_times = np.asarray(sample_times, dtype=np.float64)
    if sample_times.ndim != 1 or sample_times.size == 0:
        raise ValueError("sample_times must be a non-empty 1-D array")
    if np.any(np.diff(sample_times) < 0):
        raise ValueError("sample_times must be non-decreasing")
    if sample_times[0] < t0:
        raise ValueError(f"sample_times start before t0 ({sample_times[0]} < {t0})")
    t_end = float(sample_times[-1])

    out = np.empty((sample_times.size, y.size))
    next_sample = 0
    # t0 itself may be requested any number of times
    while next_sample < sample_times.size and sample_times[next_sample] == t0:
        out[next_sample] = y
        next_sample += 1

    t = float(t0)
    f0 = field(t, y)
    n_eval = 1
    if t_end == t0:
        return DopriResult(sample_times, out, 0, 0, n_eval)
    if first_step is None:
        h = _initial_step(field, t, y, f0, t_end, rtol, atol)
        n_eval += 1
    else:
        h = float(first_step)
    h = max(h, 1e-300)

    k = np.empty((7, y.size))
    k[0] = f0
    n_accepted = n_rejected = 0
    while next_sample < sample_times.size:
        if n_accepted + n_rejected >= max_steps:
            raise RuntimeError(
                f"dopri45 exceeded max_steps={max_steps} at t={t:.6g} "
                f"(accepted {n_accepted}, rejected {n_rejected})"
            )
        h = min(h, t_end - t)
        if h <= 16.0 * np.finfo(np.float64).eps * max(abs(t), 1.0):
            raise RuntimeError(f"dopri45 step size underflow at t={t:.6g}")
        for i in range(1, 7):
            yi = y + h * (k[:i].T @ _A[i])
            k[i] = field(t + _C[i] * h, yi)
        n_eval += 6
        y_new = y + h * (k.T @ _B5)
        err_vec = h * (k.T @ (_B5 - _B4))
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = _rms_norm(err_vec / scale)
        if err <= 1.0:
            t_new = t + h
            # fill requested times that fall inside (t, t_new]
            while next_sample < sample_times.size and sample_times[next_sample] <= t_new:
                theta = (sample_times[next_sample] - t) / h
                powers = np.array([theta, theta**2, theta**3, theta**4])
                out[next_sample] = y + h * (k.T @ (_P @ powers))
                next_sample += 1
            # FSAL: last stage of the accepted step is the first of the next
            k[0] = k[6]
            y = y_new
            t = t_new
            n_accepted += 1
            factor = _MAX_FACTOR if err == 0.0 else min(_MAX_FACTOR, _SAFETY * err**-0.2)
            h *= max(_MIN_FACTOR, factor)
        else:
            n_rejected += 1
            h *= max(_MIN_FACTOR, min(1.0, _SAFETY * err**-0.2))
    return DopriResult(sample_times, out, n_accepted, n_rejected, n_eval)
