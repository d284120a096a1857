"""qtraj: quantum-trajectory simulation toolkit.

Stochastic wavefunction solvers (fixed-step and adaptive norm-threshold),
deterministic Lindblad reference dynamics, photon-stream statistics
(beam-splitter g2 estimation), and macroscopic light/dark-period analytics
for single- and two-atom dipole-coupled systems.

Hot solver loops run in a compiled Cython extension when available, with a
pure-numpy fallback selected at import (override with QTRAJ_BACKEND).
"""
from . import (
    backend,
    darkperiods,
    errors,
    linalg,
    master,
    models,
    photonstats,
    rng,
    trajectory,
)
from .backend import BACKEND_NAME

__version__ = "0.1.0"

__all__ = [
    "backend",
    "darkperiods",
    "errors",
    "linalg",
    "master",
    "models",
    "photonstats",
    "rng",
    "trajectory",
    "BACKEND_NAME",
    "__version__",
]
