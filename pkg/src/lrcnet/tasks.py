"""Benchmark data: autonomous ODE systems and a synthetic classification set.

Six two-dimensional systems span easy periodic motion through stiff-ish
nonlinear oscillation.  ``generate`` integrates them with the adaptive solver
at tight tolerance and samples 1000 uniform points, which downstream training
treats as ground truth.  Trajectories round-trip losslessly through CSV.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .solvers import dopri45_solve

__all__ = [
    "Trajectory",
    "OdeSystem",
    "SYSTEMS",
    "generate",
    "make_windows",
    "save_trajectory",
    "load_trajectory",
    "write_manifest",
    "SequenceDataset",
    "synthetic_irregular_classification",
]


@dataclass
class Trajectory:
    """Uniformly or irregularly sampled path of one system.

    times (T,), values (T, d); labels is optional per-sample integer data
    (unused by the ODE tasks, present so classification dumps share the
    format).
    """

    times: np.ndarray
    values: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.times.ndim != 1 or self.values.ndim != 2:
            raise ValueError("times must be (T,), values (T, d)")
        if self.times.shape[0] != self.values.shape[0]:
            raise ValueError("times and values disagree on length")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != self.times.shape:
                raise ValueError("labels must match times in shape")

    @property
    def dt(self) -> float:
        """Grid step, defined for uniformly sampled trajectories."""
        gaps = np.diff(self.times)
        if gaps.size and not np.allclose(gaps, gaps[0], rtol=1e-9, atol=1e-12):
            raise ValueError("trajectory is not uniformly sampled")
        return float(gaps[0]) if gaps.size else 0.0


# ---------------------------------------------------------------------------
# the systems


@dataclass(frozen=True)
class OdeSystem:
    name: str
    dim: int
    rhs: callable
    x0: tuple
    t_span: tuple
    params: dict = field(default_factory=dict)


def _sinusoid_rhs(t, s):
    # rotation plus radial pull onto the unit circle
    x, y = s
    r = math.sqrt(x * x + y * y)
    return np.array([x * (1.0 - r) - y, x + y * (1.0 - r)])


def _spiral_rhs(t, s):
    # linear focus: eigenvalues -0.1 +/- 3i
    return np.array([-0.1 * s[0] + 3.0 * s[1], -3.0 * s[0] - 0.1 * s[1]])


def _duffing_rhs(t, s):
    # undamped double well; (+-1, 0) are rest points
    x, y = s
    return np.array([y, x - x**3])


def _lv_rhs(a, b, c, d):
    def rhs(t, s):
        x, y = s
        return np.array([a * x - b * x * y, -c * y + d * x * y])
    return rhs


def _asymptotic_lv_rhs(t, s):
    # logistic prey, coupling d=2; settles at (1/d, 1 - 1/d)
    x, y = s
    return np.array([x * (1.0 - x) - x * y, -y + 2.0 * x * y])


def _nonlinear_lv_rhs(t, s):
    # both species logistic, predator gains from prey
    x, y = s
    return np.array([x * (1.0 - x) - 0.33 * x * y, y * (1.0 - y) + x * y])


SYSTEMS: dict[str, OdeSystem] = {
    "sinusoid": OdeSystem("sinusoid", 2, _sinusoid_rhs, (2.0, 0.0), (0.0, 10.0)),
    "spiral": OdeSystem("spiral", 2, _spiral_rhs, (1.0, 0.0), (0.0, 10.0)),
    "duffing": OdeSystem("duffing", 2, _duffing_rhs, (0.5, 0.0), (0.0, 20.0)),
    "periodic_lv": OdeSystem("periodic_lv", 2, _lv_rhs(1.5, 1.0, 3.0, 1.0),
                             (1.0, 1.0), (0.0, 10.0),
                             params={"a": 1.5, "b": 1.0, "c": 3.0, "d": 1.0}),
    "asymptotic_lv": OdeSystem("asymptotic_lv", 2, _asymptotic_lv_rhs,
                               (1.0, 1.0), (0.0, 15.0)),
    "nonlinear_lv": OdeSystem("nonlinear_lv", 2, _nonlinear_lv_rhs,
                              (0.5, 0.5), (0.0, 15.0), params={"a": 0.33}),
}


def generate(name: str, n_samples: int = 1000, x0=None, t_span=None,
             rtol: float = 1e-9, atol: float = 1e-12) -> Trajectory:
    """Integrate one named system and sample it on a uniform grid."""
    if name not in SYSTEMS:
        raise KeyError(f"unknown system {name!r}; have {sorted(SYSTEMS)}")
    sys = SYSTEMS[name]
    x0 = np.asarray(sys.x0 if x0 is None else x0, dtype=np.float64)
    t0, t1 = sys.t_span if t_span is None else t_span
    times = np.linspace(t0, t1, n_samples)
    res = dopri45_solve(sys.rhs, t0, x0, times, rtol=rtol, atol=atol)
    return Trajectory(times=res.times, values=res.values)


def make_windows(trajectory: Trajectory, window: int, n_windows: int,
                 rng: np.random.Generator):
    """Random contiguous windows: (starts, values (n, W, d), gaps (n, W-1))."""
    n_obs = trajectory.values.shape[0]
    if window < 2 or window > n_obs:
        raise ValueError(f"window must be in [2, {n_obs}], got {window}")
    starts = rng.integers(0, n_obs - window + 1, size=n_windows)
    idx = starts[:, None] + np.arange(window)[None, :]
    gaps = np.diff(trajectory.times)
    return starts, trajectory.values[idx], gaps[idx[:, :-1]]


# ---------------------------------------------------------------------------
# CSV and manifest formats


def save_trajectory(path, trajectory: Trajectory) -> None:
    """Write t,x1..xd[,label] rows with enough digits to round-trip exactly."""
    d = trajectory.values.shape[1]
    cols = ["t"] + [f"x{i + 1}" for i in range(d)]
    if trajectory.labels is not None:
        cols.append("label")
    lines = [",".join(cols)]
    for i in range(trajectory.times.shape[0]):
        row = [f"{trajectory.times[i]:.17g}"]
        row += [f"{v:.17g}" for v in trajectory.values[i]]
        if trajectory.labels is not None:
            row.append(str(int(trajectory.labels[i])))
        lines.append(",".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_trajectory(path) -> Trajectory:
    """Parse a trajectory CSV, reporting the offending line on bad input."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or not lines[0].startswith("t,"):
        raise ValueError(f"{path}: missing trajectory header")
    cols = lines[0].split(",")
    has_labels = cols[-1] == "label"
    d = len(cols) - 1 - int(has_labels)
    if d < 1 or cols[1:1 + d] != [f"x{i + 1}" for i in range(d)]:
        raise ValueError(f"{path}: malformed header {lines[0]!r}")
    times, values, labels = [], [], []
    for ln_no, ln in enumerate(lines[1:], start=2):
        if not ln:
            continue
        parts = ln.split(",")
        if len(parts) != len(cols):
            raise ValueError(f"{path}:{ln_no}: expected {len(cols)} fields, got {len(parts)}")
        try:
            times.append(float(parts[0]))
            values.append([float(p) for p in parts[1:1 + d]])
            if has_labels:
                labels.append(int(parts[-1]))
        except ValueError as exc:
            raise ValueError(f"{path}:{ln_no}: {exc}") from None
    return Trajectory(times=np.array(times), values=np.array(values),
                      labels=np.array(labels) if has_labels else None)


def write_manifest(path, entries: list[dict]) -> None:
    """JSON manifest listing generated files and their provenance knobs."""
    doc = {"schema": "lrcnet-manifest-v1", "trajectories": entries}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# synthetic irregular classification


@dataclass
class SequenceDataset:
    """Split classification data: each split is (inputs, dts, labels).

    inputs (N, T, n), dts (N, T) with the gap preceding each sample, labels
    (N,) ints.
    """

    train: tuple
    val: tuple
    test: tuple
    n_classes: int = 2


def synthetic_irregular_classification(
        n_sequences: int = 300, length: int = 24, seed: int = 0,
        freqs: tuple = (0.3, 2.4), mean_gap: float = 0.35,
        noise: float = 0.08, sensor_tau: float = 0.15,
        equal_dt: bool = False) -> SequenceDataset:
    """Two-class task: tell a sinusoid's frequency from irregular samples.

    Each sequence observes a unit sinusoid of class frequency f through a
    first-order sensor with time constant sensor_tau, so the recorded
    amplitude is 1/sqrt(1 + (2 pi f tau)^2): the fast class is attenuated,
    the slow class nearly untouched.  Samples fall at exponentially
    distributed intervals (or every mean_gap when equal_dt is set) and a
    slow drift sinusoid of amplitude ``noise`` is superimposed; keeping the
    interference band-limited keeps difference quotients bounded, so the
    timing never divides a white-noise jump.  Splits are 80/10/10,
    deterministic in the seed.
    """
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, len(freqs), size=n_sequences)
    if equal_dt:
        gaps = np.full((n_sequences, length), mean_gap)
    else:
        gaps = rng.exponential(mean_gap, size=(n_sequences, length))
    times = np.cumsum(gaps, axis=1)
    phases = rng.uniform(0.0, 2.0 * math.pi, size=(n_sequences, 1))
    omega = 2.0 * math.pi * np.array(freqs)[labels][:, None]
    amp = 1.0 / np.sqrt(1.0 + (omega * sensor_tau) ** 2)
    vals = amp * np.sin(omega * times + phases)
    drift_f = rng.uniform(0.05, 0.15, size=(n_sequences, 1))
    drift_phase = rng.uniform(0.0, 2.0 * math.pi, size=(n_sequences, 1))
    vals = vals + noise * np.sin(2.0 * math.pi * drift_f * times + drift_phase)
    inputs = vals[..., None]

    order = rng.permutation(n_sequences)
    n_tr = int(0.8 * n_sequences)
    n_va = int(0.1 * n_sequences)
    tr, va, te = order[:n_tr], order[n_tr:n_tr + n_va], order[n_tr + n_va:]

    def split(ix):
        return inputs[ix], gaps[ix], labels[ix]

    return SequenceDataset(train=split(tr), val=split(va), test=split(te),
                           n_classes=len(freqs))


def separability_oracle(dataset: SequenceDataset) -> float:
    """Test accuracy of logistic regression on mean |dvalue|/dt per sequence.

    A one-feature sanity probe: if this summary statistic alone separates
    the classes, a sequence model has something real to learn.  The fit is
    Newton's method on the regularized log-likelihood, which converges
    regardless of the feature's scale.
    """
    def feature(split):
        inputs, dts, _ = split
        dv = np.abs(np.diff(inputs[..., 0], axis=1))
        return (dv / dts[:, 1:]).mean(axis=1, keepdims=True)

    x = feature(dataset.train)
    y = dataset.train[2]
    design = np.hstack([x, np.ones_like(x)])
    w = np.zeros(2)
    for _ in range(50):
        p = 1.0 / (1.0 + np.exp(-np.clip(design @ w, -35.0, 35.0)))
        grad = design.T @ (p - y) + 1e-6 * w
        curv = p * (1.0 - p) + 1e-9
        hess = (design * curv[:, None]).T @ design + 1e-6 * np.eye(2)
        step = np.linalg.solve(hess, grad)
        w -= step
        if np.abs(step).max() < 1e-10:
            break
    xt = feature(dataset.test)
    pred = (np.hstack([xt, np.ones_like(xt)]) @ w > 0.0).astype(int)
    return float((pred == dataset.test[2]).mean())
