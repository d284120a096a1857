"""Stochastic wavefunction propagation and ensemble averaging.

Two solvers produce :class:`TrajectoryRecord`s:

* ``run_first_order`` — fixed-step: per step, the total jump probability
  dp = dt * sum_m <psi|C_m^dag C_m|psi> is compared against one uniform draw;
  a jump collapses through channel m chosen by the cumulative dp_m/dp rule,
  otherwise the state advances by (1 - i H_eff dt) and is renormalized
  numerically.
* ``run_norm_threshold`` — adaptive: integrates the no-jump equation until
  the squared norm reaches a pre-drawn uniform threshold, bisects the
  crossing time to 1e-12 relative tolerance, and collapses through the
  channel selected by a fresh draw against the cumulative normalized jump
  weights.

Each trajectory owns an independent RNG stream; ensembles derive
per-trajectory seeds from ``(master_seed, index)`` (see :mod:`qtraj.rng`), so
results are independent of execution order.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import backend as _backend
from . import rng as _rng
from .errors import StepTooLarge
from .models import ModelSpec, effective_hamiltonian

__all__ = [
    "SolverControls",
    "JumpEvent",
    "TrajectoryRecord",
    "EnsembleResult",
    "step_first_order",
    "run_first_order",
    "run_norm_threshold",
    "run_ensemble",
    "write_populations_csv",
    "write_jumps_csv",
]

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-10


@dataclass(frozen=True)
class SolverControls:
    """Adaptive-solver controls.

    phase_shift: real frame offset c for integrating H_eff - c*I (an exact
    global-phase reparameterization). "auto" uses Re(lambda) of the
    longest-lived H_eff eigenvalue; 0 disables.
    """

    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL
    max_step: float = math.inf
    phase_shift: Union[str, float] = "auto"


@dataclass(frozen=True)
class JumpEvent:
    time: float
    channel: str
    pre_state: np.ndarray
    post_state: np.ndarray


@dataclass(frozen=True)
class TrajectoryRecord:
    times: np.ndarray
    states: np.ndarray  # (n_times, dim), unit-norm rows
    jumps: tuple[JumpEvent, ...]
    seed: int
    solver: str
    backend: str

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.states) ** 2

    @property
    def jump_times(self) -> np.ndarray:
        return np.array([j.time for j in self.jumps], dtype=float)


@dataclass(frozen=True)
class EnsembleResult:
    times: np.ndarray
    mean_populations: np.ndarray  # (n_times, dim)
    n_traj: int
    master_seed: int


def _check_state(psi0: np.ndarray, dim: int) -> np.ndarray:
    psi0 = np.asarray(psi0, dtype=complex).reshape(-1)
    if psi0.shape[0] != dim:
        raise ValueError(f"state dimension {psi0.shape[0]} != model dim {dim}")
    n = np.linalg.norm(psi0)
    if abs(n - 1.0) > 1e-8:
        raise ValueError("initial state must be unit-norm")
    return psi0 / n


def step_first_order(state, m: ModelSpec, dt: float, u: float):
    """One fixed step: returns (new_state, JumpEvent or None)."""
    psi = _check_state(state, m.dim)
    C = m.jump_matrices
    if C.shape[0]:
        cpsi = C @ psi
        dp_ch = dt * np.einsum("kd,kd->k", cpsi.conj(), cpsi).real
        dp = float(dp_ch.sum())
    else:
        dp_ch = np.zeros(0)
        dp = 0.0
    if dp > 0.1:
        raise StepTooLarge(f"per-step jump probability {dp:.3g} > 0.1; reduce dt")
    if dp > 0.0 and u < dp:
        ch = int(np.searchsorted(np.cumsum(dp_ch), u, side="right"))
        ch = min(ch, C.shape[0] - 1)
        post = cpsi[ch] / np.linalg.norm(cpsi[ch])
        return post, JumpEvent(
            time=dt, channel=m.channel_labels[ch], pre_state=psi, post_state=post
        )
    H_eff = effective_hamiltonian(m)
    out = psi - 1j * dt * (H_eff @ psi)
    return out / np.linalg.norm(out), None


def run_first_order(
    m: ModelSpec,
    psi0,
    t_final: float,
    dt: float,
    seed: int,
    sample_every: int = 1,
    backend: Optional[str] = None,
) -> TrajectoryRecord:
    """Propagate one trajectory with the fixed-step solver.

    One uniform draw is consumed per step; the run is a deterministic
    function of (model, psi0, t_final, dt, seed) per backend.
    """
    psi0 = _check_state(psi0, m.dim)
    n_steps = int(round(t_final / dt))
    backend_name, impl = _backend.get_backend(backend)
    gen = np.random.Generator(np.random.PCG64(seed))
    uniforms = gen.random(n_steps)
    samples, jump_steps, jump_ch, jump_pre, jump_post = impl.first_order_run(
        effective_hamiltonian(m), m.jump_matrices, psi0, dt, n_steps,
        sample_every, uniforms,
    )
    times = np.arange(samples.shape[0]) * (dt * sample_every)
    jumps = tuple(
        JumpEvent(
            time=float(s) * dt,
            channel=m.channel_labels[int(c)],
            pre_state=jump_pre[i],
            post_state=jump_post[i],
        )
        for i, (s, c) in enumerate(zip(jump_steps, jump_ch))
    )
    return TrajectoryRecord(
        times=times, states=samples, jumps=jumps, seed=int(seed),
        solver="first_order", backend=backend_name,
    )


def _resolve_phase_shift(m: ModelSpec, controls: SolverControls) -> float:
    if controls.phase_shift == "auto":
        w = np.linalg.eigvals(effective_hamiltonian(m))
        return float(w[np.argmin(np.abs(w.imag))].real)
    return float(controls.phase_shift)


def run_norm_threshold(
    m: ModelSpec,
    psi0,
    t_final: float,
    controls: Optional[SolverControls] = None,
    seed: int = 0,
    sample_times: Optional[Sequence[float]] = None,
    backend: Optional[str] = None,
) -> TrajectoryRecord:
    """Propagate one trajectory with the adaptive norm-threshold solver.

    ``sample_times`` defaults to a 201-point uniform grid on [0, t_final];
    pass an empty sequence to record jump events only.
    """
    psi0 = _check_state(psi0, m.dim)
    controls = controls or SolverControls()
    if sample_times is None:
        sample_times = np.linspace(0.0, t_final, 201)
    sample_times = np.asarray(sample_times, dtype=float)
    backend_name, impl = _backend.get_backend(backend)
    draws = _rng.UniformSource(np.random.Generator(np.random.PCG64(seed)))
    out = impl.norm_threshold_run(
        effective_hamiltonian(m),
        m.jump_matrices,
        psi0,
        float(t_final),
        float(controls.rtol),
        float(controls.atol),
        float(controls.max_step),
        draws,
        sample_times,
        _resolve_phase_shift(m, controls),
    )
    samples, jump_times, jump_ch, jump_pre, jump_post, _, _ = out
    jumps = tuple(
        JumpEvent(
            time=float(t),
            channel=m.channel_labels[int(c)],
            pre_state=jump_pre[i],
            post_state=jump_post[i],
        )
        for i, (t, c) in enumerate(zip(jump_times, jump_ch))
    )
    return TrajectoryRecord(
        times=sample_times, states=samples, jumps=jumps, seed=int(seed),
        solver="norm_threshold", backend=backend_name,
    )


def run_ensemble(
    m: ModelSpec,
    psi0,
    t_final: float,
    n_traj: int,
    master_seed: int,
    dt: Optional[float] = None,
    controls: Optional[SolverControls] = None,
    sample_every: int = 1,
    n_samples: int = 201,
    solver: str = "first_order",
    backend: Optional[str] = None,
) -> EnsembleResult:
    """Average basis-state populations over independent trajectories.

    Per-trajectory seeds come from ``derive_seed(master_seed, index)``; the
    result is a deterministic reduction, independent of execution order.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    acc = None
    times = None
    for i in range(n_traj):
        seed_i = _rng.derive_seed(master_seed, i)
        try:
            if solver == "first_order":
                if dt is None:
                    raise ValueError("first_order ensemble requires dt")
                rec = run_first_order(
                    m, psi0, t_final, dt, seed_i, sample_every, backend
                )
            elif solver == "norm_threshold":
                rec = run_norm_threshold(
                    m, psi0, t_final, controls, seed_i,
                    np.linspace(0.0, t_final, n_samples), backend,
                )
            else:
                raise ValueError(f"unknown solver {solver!r}")
        except StepTooLarge as exc:
            raise StepTooLarge(f"trajectory {i}: {exc}") from exc
        pops = rec.populations
        if acc is None:
            acc = np.zeros_like(pops)
            times = rec.times
        acc += pops
    return EnsembleResult(
        times=times,
        mean_populations=acc / n_traj,
        n_traj=n_traj,
        master_seed=int(master_seed),
    )


def write_populations_csv(rec: TrajectoryRecord, path, basis: Sequence[str]):
    """CSV export: time plus one population column per basis state."""
    pops = rec.populations
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time"] + [f"pop_{b}" for b in basis])
        for t, row in zip(rec.times, pops):
            w.writerow([f"{t:.12g}"] + [f"{p:.12g}" for p in row])


def write_jumps_csv(rec: TrajectoryRecord, path):
    """CSV export of jump events: time, channel."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "channel"])
        for j in rec.jumps:
            w.writerow([f"{j.time:.12g}", j.channel])
