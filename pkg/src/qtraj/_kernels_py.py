"""Pure-numpy solver kernels (fallback backend).

Two hot loops live here and in the compiled twin ``_kernels_cy``:

* ``first_order_run`` — the fixed-step stochastic stepper: one uniform draw
  per step decides no-jump evolution by (1 - i H_eff dt) with numerical
  renormalization, or a collapse through one jump channel.
* ``norm_threshold_run`` — the adaptive stepper: integrates
  d psi/dt = -i H_eff psi with an embedded Dormand-Prince 5(4) pair until the
  squared norm falls to a pre-drawn uniform threshold, locates the crossing by
  bisection on the dense-output polynomial, collapses, and restarts.

Both return identical record structures so the backends are interchangeable.
The adaptive kernel optionally integrates in a rotated phase frame
(H_eff - c*I with real c): an exact global-phase reparameterization that
leaves norms, populations, and jump statistics unchanged while letting the
controller take much larger steps when all long-lived modes share a fast
common phase rotation.  Stored states have the phase restored.
"""
from __future__ import annotations

import math
import warnings

import numpy as np

from .errors import SolverStall, StepTooLarge, ToleranceTooLoose

# Dormand-Prince 5(4) tableau (standard coefficients, FSAL).
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.zeros((7, 7))
_A[1, 0] = 1 / 5
_A[2, :2] = [3 / 40, 9 / 40]
_A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
_A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
_A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
_A[6, :6] = [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
_B = _A[6, :7].copy()  # 5th-order solution weights (FSAL row)
# Error weights: difference between the 5th- and embedded 4th-order solutions.
_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)
# Dense-output polynomial coefficients (quartic in the step fraction).
_P = np.array(
    [
        [
            1.0,
            -8048581381 / 2820520608,
            8663915743 / 2820520608,
            -12715105075 / 11282082432,
        ],
        [0.0, 0.0, 0.0, 0.0],
        [
            0.0,
            131558114200 / 32700410799,
            -68118460800 / 10900136933,
            87487479700 / 32700410799,
        ],
        [
            0.0,
            -1754552775 / 470086768,
            14199869525 / 1410260304,
            -10690763975 / 1880347072,
        ],
        [
            0.0,
            127303824393 / 49829197408,
            -318862633887 / 49829197408,
            701980252875 / 199316789632,
        ],
        [
            0.0,
            -282668133 / 205662961,
            2019193451 / 616988883,
            -1453857185 / 822651844,
        ],
        [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


def first_order_run(H_eff, C_ops, psi0, dt, n_steps, sample_every, uniforms):
    """Fixed-step stochastic propagation.

    Parameters
    ----------
    H_eff : (d, d) complex effective Hamiltonian.
    C_ops : (k, d, d) complex stacked jump operators.
    psi0 : (d,) unit-norm complex state.
    dt : step size.
    n_steps : number of steps; ``uniforms`` must hold one draw per step.
    sample_every : record the normalized state every this many steps.

    Returns
    -------
    samples : (n_steps//sample_every + 1, d) normalized states (index 0 is
        the initial state).
    jump_steps : int array of 1-based step indices at which jumps occurred
        (jump time = index * dt).
    jump_channels : int array of channel indices.
    jump_pre, jump_post : (n_jumps, d) normalized states around each jump.
    """
    d = psi0.shape[0]
    k = C_ops.shape[0]
    prop = np.eye(d, dtype=complex) - 1j * dt * np.asarray(H_eff, dtype=complex)
    C_ops = np.asarray(C_ops, dtype=complex)
    psi = np.array(psi0, dtype=complex)
    n_rec = n_steps // sample_every + 1
    samples = np.empty((n_rec, d), dtype=complex)
    samples[0] = psi
    jump_steps, jump_channels, jump_pre, jump_post = [], [], [], []
    rec = 1
    for i in range(n_steps):
        if k:
            cpsi = C_ops @ psi  # (k, d)
            dp_ch = dt * np.einsum("kd,kd->k", cpsi.conj(), cpsi).real
            dp = float(dp_ch.sum())
        else:
            dp = 0.0
        if dp > 0.1:
            raise StepTooLarge(
                f"per-step jump probability {dp:.3g} > 0.1 at step {i}; reduce dt"
            )
        u = uniforms[i]
        if u < dp:
            cum = np.cumsum(dp_ch)
            ch = int(np.searchsorted(cum, u, side="right"))
            if ch >= k:
                ch = k - 1
            jump_pre.append(psi.copy())
            psi = cpsi[ch] / np.linalg.norm(cpsi[ch])
            jump_post.append(psi.copy())
            jump_steps.append(i + 1)
            jump_channels.append(ch)
        else:
            psi = prop @ psi
            psi /= np.linalg.norm(psi)
        if (i + 1) % sample_every == 0:
            samples[rec] = psi
            rec += 1
    return (
        samples,
        np.array(jump_steps, dtype=np.int64),
        np.array(jump_channels, dtype=np.int64),
        np.array(jump_pre, dtype=complex).reshape(-1, d),
        np.array(jump_post, dtype=complex).reshape(-1, d),
    )


def _initial_step(A, y, t_remaining, rtol, atol, max_step):
    """Scipy-style two-stage initial step-size heuristic."""
    f0 = A @ y
    scale = atol + rtol * np.abs(y)
    d0 = math.sqrt(float(np.mean((np.abs(y) / scale) ** 2)))
    d1 = math.sqrt(float(np.mean((np.abs(f0) / scale) ** 2)))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y + h0 * f0
    f1 = A @ y1
    d2 = math.sqrt(float(np.mean((np.abs(f1 - f0) / scale) ** 2))) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, t_remaining, max_step)


def norm_threshold_run(
    H_eff,
    C_ops,
    psi0,
    t_final,
    rtol,
    atol,
    max_step,
    draws,
    sample_times,
    phase_shift=0.0,
):
    """Adaptive no-jump integration with norm-threshold jump location.

    ``draws.take()`` supplies uniform [0,1) numbers: one threshold per
    no-jump segment plus one channel draw per jump, in that order.

    Returns
    -------
    samples : (len(sample_times), d) normalized states interpolated from the
        dense output (global phase restored when a phase shift is active).
    jump_times, jump_channels, jump_pre, jump_post : as in first_order_run
        but with continuous times.
    n_accepted, n_rejected : step counts (for benchmarks/diagnostics).
    """
    H_eff = np.asarray(H_eff, dtype=complex)
    C_ops = np.asarray(C_ops, dtype=complex)
    d = psi0.shape[0]
    c = float(phase_shift)
    A = -1j * (H_eff - c * np.eye(d))
    sample_times = np.asarray(sample_times, dtype=float)
    samples = np.empty((sample_times.shape[0], d), dtype=complex)
    s_idx = 0
    jump_times, jump_channels, jump_pre, jump_post = [], [], [], []

    psi = np.array(psi0, dtype=complex)
    t = 0.0
    seg_t0 = 0.0  # segment start time (phase bookkeeping)
    phase0 = 0.0  # accumulated phase angle at segment start
    eps = draws.take()
    n_accepted = 0
    n_rejected = 0
    warned = False

    def record_state(u, at_time):
        vec = u / np.linalg.norm(u)
        if c != 0.0:
            vec = vec * np.exp(-1j * (phase0 + c * (at_time - seg_t0)))
        return vec

    # Samples at or before t=0.
    while s_idx < sample_times.shape[0] and sample_times[s_idx] <= 0.0:
        samples[s_idx] = record_state(psi, 0.0)
        s_idx += 1

    h = _initial_step(A, psi, t_final, rtol, atol, max_step)
    k1 = A @ psi
    K = np.empty((7, d), dtype=complex)
    while t < t_final:
        if h < 1e-14 * max(1.0, abs(t)):
            raise SolverStall(f"step size {h:g} underflow at t={t:g}")
        h = min(h, t_final - t, max_step)
        # One Dormand-Prince step.
        K[0] = k1
        for s in range(1, 7):
            y_s = psi + h * (_A[s, :s] @ K[:s])
            K[s] = A @ y_s
        y_new = psi + h * (_B @ K)
        err_vec = h * (_E @ K)
        scale = atol + rtol * np.maximum(np.abs(psi), np.abs(y_new))
        err = math.sqrt(float(np.mean((np.abs(err_vec) / scale) ** 2)))
        if err > 1.0:
            h *= max(_MIN_FACTOR, _SAFETY * err ** -0.2)
            n_rejected += 1
            continue
        n_accepted += 1
        t_new = t + h
        nsq = float(np.vdot(y_new, y_new).real)

        def dense(theta):
            p = np.array([theta, theta**2, theta**3, theta**4])
            return psi + h * (K.T @ (_P @ p))

        if nsq < eps:
            # Jump inside this step: bisect the monotone norm decay.
            lo, hi = 0.0, 1.0
            t_tol = 1e-12 * max(1.0, abs(t_new))
            for _ in range(200):
                if (hi - lo) * h <= t_tol:
                    break
                mid = 0.5 * (lo + hi)
                u = dense(mid)
                if float(np.vdot(u, u).real) < eps:
                    hi = mid
                else:
                    lo = mid
            theta = hi
            tau = t + theta * h
            u = dense(theta)
            # Interpolated samples before the jump.
            while s_idx < sample_times.shape[0] and sample_times[s_idx] <= tau:
                ts = sample_times[s_idx]
                samples[s_idx] = record_state(dense((ts - t) / h), ts)
                s_idx += 1
            pre = record_state(u, tau)
            weights = np.einsum(
                "kd,kd->k", (C_ops @ (u / np.linalg.norm(u))).conj(),
                C_ops @ (u / np.linalg.norm(u)),
            ).real
            total = float(weights.sum())
            u2 = draws.take()
            cum = np.cumsum(weights) / total
            ch = int(np.searchsorted(cum, u2, side="left"))
            if ch >= weights.shape[0]:
                ch = weights.shape[0] - 1
            post_raw = C_ops[ch] @ pre
            post = post_raw / np.linalg.norm(post_raw)
            jump_times.append(tau)
            jump_channels.append(ch)
            jump_pre.append(pre)
            jump_post.append(post)
            # Restart the integration from the collapsed state.
            phase0 = 0.0
            seg_t0 = tau
            psi = post.copy()
            t = tau
            eps = draws.take()
            h = _initial_step(A, psi, t_final - t, rtol, atol, max_step)
            k1 = A @ psi
            continue

        # Accepted no-jump step: interpolate any samples inside it.
        while s_idx < sample_times.shape[0] and sample_times[s_idx] <= t_new:
            ts = sample_times[s_idx]
            samples[s_idx] = record_state(dense((ts - t) / h), ts)
            s_idx += 1
        if nsq < atol and not warned:
            warnings.warn(
                "squared norm decayed below atol between samples; "
                "jump-time location may be degraded",
                ToleranceTooLoose,
            )
            warned = True
        psi = y_new
        t = t_new
        k1 = K[6].copy()  # FSAL
        if err == 0.0:
            factor = _MAX_FACTOR
        else:
            factor = min(_MAX_FACTOR, max(_MIN_FACTOR, _SAFETY * err ** -0.2))
        h *= factor

    # Trailing samples exactly at t_final.
    while s_idx < sample_times.shape[0]:
        samples[s_idx] = record_state(psi, t)
        s_idx += 1

    return (
        samples,
        np.array(jump_times, dtype=float),
        np.array(jump_channels, dtype=np.int64),
        np.array(jump_pre, dtype=complex).reshape(-1, d),
        np.array(jump_post, dtype=complex).reshape(-1, d),
        n_accepted,
        n_rejected,
    )
