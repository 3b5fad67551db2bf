"""Liquid-resistance liquid-capacitance network toolkit.

Continuous-time recurrent cells (LTC, STC, LRC and the discrete LRCU),
gated baselines (GRU, GRU-ODE, MGU, LSTM), fixed-step and adaptive ODE
solvers, tape-based backpropagation through time, trajectory and
classification training loops, and computable Lipschitz/generalization
certificates, wired together by the ``lrcnet`` command-line tool.

The submodules are the API surface:

- ``core``      sigmoid/elastance primitives and their sharp maxima
- ``autodiff``  reverse-mode tape on numpy arrays, finite-difference oracle
- ``cells``     parameter containers and state derivatives for every cell
- ``solvers``   explicit Euler, the hybrid semi-implicit scheme, RK4, Dopri45
- ``models``    cell + readout bundles, sequence forward/backward, checkpoints
- ``tasks``     benchmark ODE systems, trajectory CSV I/O, synthetic datasets
- ``train``     trajectory and classification training loops and recipes
- ``analysis``  Lipschitz certificates, generalization bound, probe tooling
- ``cli``       the command-line entry point
"""

from . import analysis, autodiff, cells, cli, core, models, solvers, tasks, train

__all__ = [
    "analysis",
    "autodiff",
    "cells",
    "cli",
    "core",
    "models",
    "solvers",
    "tasks",
    "train",
    "__version__",
]

__version__ = "0.1.0"
