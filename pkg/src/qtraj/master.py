"""Deterministic Lindblad reference dynamics.

Vectorization uses the column-stacking convention: vec stacks columns, so
vec(X rho Y) = (Y^T kron X) vec(rho) and the generator is

    L = -i (I kron H - H^T kron I)
        + sum_m [ conj(C_m) kron C_m
                  - 1/2 (I kron C_m^dag C_m + (C_m^dag C_m)^T kron I) ].

Steady states are obtained from the one-dimensional null space of L (SVD),
reshaped column-major, Hermitized, and trace-normalized.  Time evolution uses
the exact matrix-exponential propagator (L is time-independent and at most
16x16).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import RankDeficiencyMismatch, ZeroEmission
from .linalg import null_space
from .models import AtomParams, ModelSpec, eigen_basis_transform

__all__ = [
    "SteadyScan",
    "liouvillian",
    "evolve_master",
    "steady_state",
    "steady_scan",
    "consecutive_jump_ratio",
    "write_scan_csv",
]


@dataclass(frozen=True)
class SteadyScan:
    """Steady-state populations across a detuning grid."""

    detunings: np.ndarray
    populations: np.ndarray  # (n_points, dim); NaN rows mark failed points
    basis: tuple[str, ...]
    failures: tuple[tuple[int, str], ...] = ()


def liouvillian(m: ModelSpec) -> np.ndarray:
    """Column-stacking Lindblad generator, dim^2 x dim^2."""
    d = m.dim
    eye = np.eye(d, dtype=complex)
    H = m.H
    L = -1j * (np.kron(eye, H) - np.kron(H.T, eye))
    for _, C in m.jump_ops:
        CdC = C.conj().T @ C
        L += np.kron(C.conj(), C)
        L -= 0.5 * (np.kron(eye, CdC) + np.kron(CdC.T, eye))
    return L


def _vec(rho: np.ndarray) -> np.ndarray:
    return rho.reshape(-1, order="F")


def _unvec(v: np.ndarray, d: int) -> np.ndarray:
    return v.reshape((d, d), order="F")


def _check_density(rho: np.ndarray, d: int) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (d, d):
        raise ValueError("density matrix shape mismatch")
    if np.linalg.norm(rho - rho.conj().T) > 1e-10 * max(1.0, np.linalg.norm(rho)):
        raise ValueError("density matrix must be Hermitian")
    if abs(np.trace(rho).real - 1.0) > 1e-10:
        raise ValueError("density matrix must have unit trace")
    return rho


def evolve_master(
    m: ModelSpec,
    rho0: np.ndarray,
    t_final: float,
    times: Optional[Sequence[float]] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Evolve rho0 under the Lindblad generator.

    Returns (times, rhos) with rhos[i] the density matrix at times[i];
    ``times`` defaults to a 201-point uniform grid on [0, t_final].
    Propagation is by the exact matrix exponential of L over each interval.
    """
    d = m.dim
    rho = _check_density(rho0, d)
    if times is None:
        times = np.linspace(0.0, t_final, 201)
    times = np.asarray(times, dtype=float)
    L = liouvillian(m)
    rhos = np.empty((times.shape[0], d, d), dtype=complex)
    v = _vec(rho)
    prev_t = None
    prop = None
    t_prev = 0.0
    # Exponentiate once per distinct interval length (uniform grids reuse it).
    for i, t in enumerate(times):
        step = t - t_prev
        if prop is None or prev_t is None or abs(step - prev_t) > 1e-15:
            prop = scipy.linalg.expm(L * step)
            prev_t = step
        v = prop @ v
        rho_t = _unvec(v, d)
        rho_t = 0.5 * (rho_t + rho_t.conj().T)
        rho_t /= np.trace(rho_t).real
        rhos[i] = rho_t
        v = _vec(rho_t)
        t_prev = t
    return times, rhos


def steady_state(m: ModelSpec, tol: float = 1e-10) -> np.ndarray:
    """Unique stationary density matrix of the Lindblad generator."""
    v = null_space(liouvillian(m), tol)
    rho = _unvec(v, m.dim)
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    if abs(tr) < 1e-12:
        raise RankDeficiencyMismatch("null vector has zero trace")
    return rho / tr


def steady_scan(
    template: AtomParams,
    detunings: Sequence[float],
    builder,
    basis: str = "eigen",
) -> SteadyScan:
    """Steady-state populations as a function of the drive detuning.

    ``builder`` is one of the two-atom model builders (or any callable
    AtomParams -> ModelSpec).  ``basis`` selects the reporting basis for
    two-atom models built in the eigen basis: "eigen" reports directly,
    "product" conjugates by the doublet rotation.
    """
    detunings = np.asarray(detunings, dtype=float)
    if detunings.size == 0:
        raise ValueError("detuning grid must be non-empty")
    pops = []
    failures = []
    basis_labels = None
    for i, delta in enumerate(detunings):
        p = AtomParams(
            gamma=template.gamma,
            omega_rabi=template.omega_rabi,
            delta_total=float(delta),
            delta_diff=template.delta_diff,
            v=template.v,
            gamma12=template.gamma12,
            omega_atom=template.omega_atom,
        )
        try:
            m = builder(p)
            rho = steady_state(m)
            if basis == "product" and m.eigen_coeffs is not None:
                D = eigen_basis_transform(m.eigen_coeffs)
                rho = D @ rho @ D  # D is symmetric and its own inverse
                labels = ("11", "10", "01", "00")
            else:
                labels = m.basis
            if basis_labels is None:
                basis_labels = labels
            pops.append(np.diag(rho).real)
        except Exception as exc:  # record and continue per scan contract
            failures.append((i, f"{type(exc).__name__}: {exc}"))
            pops.append(np.full(4 if basis_labels is None else len(basis_labels), np.nan))
    return SteadyScan(
        detunings=detunings,
        populations=np.array(pops),
        basis=basis_labels or (),
        failures=tuple(failures),
    )


def consecutive_jump_ratio(m: ModelSpec, tol: float = 1e-10) -> float:
    """Emission-probability enhancement immediately after a jump.

    Computes dp_ss = sum_m <C_m^dag C_m> in the steady state, collapses the
    steady state through the jump channels weighted by their steady-state
    probabilities (rho' = sum_m C_m rho C_m^dag / dp_ss), and returns the same
    expectation in rho' divided by dp_ss.  > 1 indicates bunched emission,
    < 1 antibunched.
    """
    rho = steady_state(m, tol)
    dp_ss = 0.0
    rho_post = np.zeros_like(rho)
    for _, C in m.jump_ops:
        dp_ss += float(np.trace(C.conj().T @ C @ rho).real)
        rho_post += C @ rho @ C.conj().T
    if dp_ss <= 1e-14:
        raise ZeroEmission("steady state emits no photons")
    rho_post /= np.trace(rho_post).real
    dp_con = 0.0
    for _, C in m.jump_ops:
        dp_con += float(np.trace(C.conj().T @ C @ rho_post).real)
    return dp_con / dp_ss


def write_scan_csv(scan: SteadyScan, path):
    """CSV export: delta plus one steady-population column per basis state."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delta"] + [f"pop_{b}" for b in scan.basis])
        for delta, row in zip(scan.detunings, scan.populations):
            w.writerow([f"{delta:.12g}"] + [f"{p:.12g}" for p in row])
