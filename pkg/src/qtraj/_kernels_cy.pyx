# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled solver kernels (Cython backend).

Same contracts and draw accounting as the pure-numpy twin ``_kernels_py``;
see that module for the algorithm documentation.  State dimension is capped
at 8 (toolkit uses <= 4), which lets the hot loops run on stack arrays.
"""
import warnings

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

from .errors import SolverStall, StepTooLarge, ToleranceTooLoose

cnp.import_array()

DEF MAXDIM = 8
DEF MAXCH = 4

# Dormand-Prince 5(4) tableau (standard coefficients, FSAL).
cdef double[7][7] _A
cdef double[7] _B
cdef double[7] _E
cdef double[7][4] _P

_A_py = np.zeros((7, 7))
_A_py[1, :1] = [1.0 / 5]
_A_py[2, :2] = [3.0 / 40, 9.0 / 40]
_A_py[3, :3] = [44.0 / 45, -56.0 / 15, 32.0 / 9]
_A_py[4, :4] = [19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729]
_A_py[5, :5] = [9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176,
                -5103.0 / 18656]
_A_py[6, :6] = [35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784,
                11.0 / 84]
_E_py = np.array([71.0 / 57600, 0.0, -71.0 / 16695, 71.0 / 1920,
                  -17253.0 / 339200, 22.0 / 525, -1.0 / 40])
_P_py = np.array([
    [1.0, -8048581381.0 / 2820520608, 8663915743.0 / 2820520608,
     -12715105075.0 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200.0 / 32700410799, -68118460800.0 / 10900136933,
     87487479700.0 / 32700410799],
    [0.0, -1754552775.0 / 470086768, 14199869525.0 / 1410260304,
     -10690763975.0 / 1880347072],
    [0.0, 127303824393.0 / 49829197408, -318862633887.0 / 49829197408,
     701980252875.0 / 199316789632],
    [0.0, -282668133.0 / 205662961, 2019193451.0 / 616988883,
     -1453857185.0 / 822651844],
    [0.0, 40617522.0 / 29380423, -110615467.0 / 29380423,
     69997945.0 / 29380423],
])

cdef int _i, _j
for _i in range(7):
    _B[_i] = _A_py[6, _i]
    _E[_i] = _E_py[_i]
    for _j in range(7):
        _A[_i][_j] = _A_py[_i, _j]
    for _j in range(4):
        _P[_i][_j] = _P_py[_i, _j]


def first_order_run(H_eff, C_ops, psi0, double dt, long n_steps,
                    long sample_every, uniforms):
    """Fixed-step stochastic propagation; see _kernels_py.first_order_run."""
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] prop_arr = \
        np.ascontiguousarray(np.eye(len(psi0)) - 1j * dt * np.asarray(H_eff, dtype=complex))
    cdef cnp.ndarray[cnp.complex128_t, ndim=3] C_arr = \
        np.ascontiguousarray(np.asarray(C_ops, dtype=complex))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] u_arr = \
        np.ascontiguousarray(np.asarray(uniforms, dtype=float))
    cdef int d = prop_arr.shape[0]
    cdef int k = C_arr.shape[0]
    if d > MAXDIM or k > MAXCH:
        raise ValueError("dimension/channel count exceeds compiled kernel limits")
    cdef long n_rec = n_steps // sample_every + 1
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] samples = \
        np.empty((n_rec, d), dtype=complex)
    cdef double complex psi[MAXDIM]
    cdef double complex tmp[MAXDIM]
    cdef double complex cpsi[MAXCH][MAXDIM]
    cdef double dp_ch[MAXCH]
    cdef double dp, u, nrm, cum
    cdef long i, rec = 1
    cdef int a, b, ch
    psi0 = np.asarray(psi0, dtype=complex)
    for a in range(d):
        psi[a] = psi0[a]
        samples[0, a] = psi[a]
    jump_steps, jump_channels, jump_pre, jump_post = [], [], [], []
    for i in range(n_steps):
        dp = 0.0
        for ch in range(k):
            dp_ch[ch] = 0.0
            for a in range(d):
                cpsi[ch][a] = 0.0
                for b in range(d):
                    cpsi[ch][a] = cpsi[ch][a] + C_arr[ch, a, b] * psi[b]
                dp_ch[ch] += cpsi[ch][a].real * cpsi[ch][a].real + \
                    cpsi[ch][a].imag * cpsi[ch][a].imag
            dp_ch[ch] *= dt
            dp += dp_ch[ch]
        if dp > 0.1:
            raise StepTooLarge(
                f"per-step jump probability {dp:.3g} > 0.1 at step {i}; reduce dt")
        u = u_arr[i]
        if k > 0 and u < dp:
            cum = 0.0
            ch = k - 1
            for a in range(k):
                cum += dp_ch[a]
                if u < cum:
                    ch = a
                    break
            pre = np.empty(d, dtype=complex)
            for a in range(d):
                pre[a] = psi[a]
            nrm = 0.0
            for a in range(d):
                nrm += cpsi[ch][a].real ** 2 + cpsi[ch][a].imag ** 2
            nrm = sqrt(nrm)
            for a in range(d):
                psi[a] = cpsi[ch][a] / nrm
            post = np.empty(d, dtype=complex)
            for a in range(d):
                post[a] = psi[a]
            jump_steps.append(i + 1)
            jump_channels.append(ch)
            jump_pre.append(pre)
            jump_post.append(post)
        else:
            nrm = 0.0
            for a in range(d):
                tmp[a] = 0.0
                for b in range(d):
                    tmp[a] = tmp[a] + prop_arr[a, b] * psi[b]
                nrm += tmp[a].real ** 2 + tmp[a].imag ** 2
            nrm = sqrt(nrm)
            for a in range(d):
                psi[a] = tmp[a] / nrm
        if (i + 1) % sample_every == 0:
            for a in range(d):
                samples[rec, a] = psi[a]
            rec += 1
    return (
        samples,
        np.array(jump_steps, dtype=np.int64),
        np.array(jump_channels, dtype=np.int64),
        np.array(jump_pre, dtype=complex).reshape(-1, d),
        np.array(jump_post, dtype=complex).reshape(-1, d),
    )


cdef inline void _matvec(double complex[:, :] M, double complex *x,
                         double complex *out, int d) noexcept:
    cdef int a, b
    for a in range(d):
        out[a] = 0.0
        for b in range(d):
            out[a] = out[a] + M[a, b] * x[b]


cdef inline double _norm_sq(double complex *x, int d) noexcept:
    cdef double s = 0.0
    cdef int a
    for a in range(d):
        s += x[a].real * x[a].real + x[a].imag * x[a].imag
    return s


cdef double _initial_step(double complex[:, :] A, double complex *y, int d,
                          double t_remaining, double rtol, double atol,
                          double max_step) noexcept:
    cdef double complex f0[MAXDIM]
    cdef double complex y1[MAXDIM]
    cdef double complex f1[MAXDIM]
    cdef double d0 = 0.0, d1 = 0.0, d2 = 0.0, scale, h0, h1
    cdef int a
    _matvec(A, y, f0, d)
    for a in range(d):
        scale = atol + rtol * sqrt(y[a].real ** 2 + y[a].imag ** 2)
        d0 += (y[a].real ** 2 + y[a].imag ** 2) / (scale * scale)
        d1 += (f0[a].real ** 2 + f0[a].imag ** 2) / (scale * scale)
    d0 = sqrt(d0 / d)
    d1 = sqrt(d1 / d)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    for a in range(d):
        y1[a] = y[a] + h0 * f0[a]
    _matvec(A, y1, f1, d)
    for a in range(d):
        scale = atol + rtol * sqrt(y[a].real ** 2 + y[a].imag ** 2)
        d2 += ((f1[a].real - f0[a].real) ** 2 +
               (f1[a].imag - f0[a].imag) ** 2) / (scale * scale)
    d2 = sqrt(d2 / d) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    h1 = min(100 * h0, h1)
    if h1 > t_remaining:
        h1 = t_remaining
    if h1 > max_step:
        h1 = max_step
    return h1


def norm_threshold_run(H_eff, C_ops, psi0, double t_final, double rtol,
                       double atol, double max_step, draws, sample_times,
                       double phase_shift=0.0):
    """Adaptive norm-threshold propagation; see _kernels_py.norm_threshold_run."""
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] A_arr = np.ascontiguousarray(
        -1j * (np.asarray(H_eff, dtype=complex)
               - phase_shift * np.eye(len(psi0))))
    cdef cnp.ndarray[cnp.complex128_t, ndim=3] C_arr = \
        np.ascontiguousarray(np.asarray(C_ops, dtype=complex))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] st = \
        np.ascontiguousarray(np.asarray(sample_times, dtype=float))
    cdef int d = A_arr.shape[0]
    cdef int k = C_arr.shape[0]
    if d > MAXDIM or k > MAXCH:
        raise ValueError("dimension/channel count exceeds compiled kernel limits")
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] samples = \
        np.empty((st.shape[0], d), dtype=complex)
    cdef double complex[:, :] A = A_arr
    cdef double complex psi[MAXDIM]
    cdef double complex K[7][MAXDIM]
    cdef double complex ys[MAXDIM]
    cdef double complex y_new[MAXDIM]
    cdef double complex u_state[MAXDIM]
    cdef double complex cpsi[MAXDIM]
    cdef double complex acc, phase_fac
    cdef double weights[MAXCH]
    cdef double t = 0.0, seg_t0 = 0.0, phase0 = 0.0
    cdef double h, eps, err, nsq, scale, mag0, mag1, lo, hi, mid, t_tol
    cdef double tau, theta, ts, x, q0, q1, q2, q3, total, cum, u2, nrm, factor
    cdef long n_accepted = 0, n_rejected = 0
    cdef long s_idx = 0, n_samp = st.shape[0]
    cdef int a, b, s, ch, it
    cdef bint warned = False, have_jump

    psi0 = np.asarray(psi0, dtype=complex)
    for a in range(d):
        psi[a] = psi0[a]
    jump_times, jump_channels, jump_pre, jump_post = [], [], [], []

    eps = draws.take()

    # Helper closures are too costly here; sample recording is inlined.
    while s_idx < n_samp and st[s_idx] <= 0.0:
        nrm = sqrt(_norm_sq(psi, d))
        phase_fac = np.exp(-1j * phase0) if phase_shift != 0.0 else 1.0
        for a in range(d):
            samples[s_idx, a] = psi[a] / nrm * phase_fac
        s_idx += 1

    h = _initial_step(A, psi, d, t_final, rtol, atol, max_step)
    _matvec(A, psi, K[0], d)

    while t < t_final:
        if h < 1e-14 * max(1.0, fabs(t)):
            raise SolverStall(f"step size {h:g} underflow at t={t:g}")
        if h > t_final - t:
            h = t_final - t
        if h > max_step:
            h = max_step
        # One Dormand-Prince step (K[0] holds f(t, psi) via FSAL).
        for s in range(1, 7):
            for a in range(d):
                acc = 0.0
                for b in range(s):
                    acc = acc + _A[s][b] * K[b][a]
                ys[a] = psi[a] + h * acc
            _matvec(A, ys, K[s], d)
        err = 0.0
        for a in range(d):
            acc = 0.0
            for b in range(7):
                acc = acc + _B[b] * K[b][a]
            y_new[a] = psi[a] + h * acc
            acc = 0.0
            for b in range(7):
                acc = acc + _E[b] * K[b][a]
            mag0 = sqrt(psi[a].real ** 2 + psi[a].imag ** 2)
            mag1 = sqrt(y_new[a].real ** 2 + y_new[a].imag ** 2)
            scale = atol + rtol * (mag0 if mag0 > mag1 else mag1)
            err += (h * h) * (acc.real * acc.real + acc.imag * acc.imag) / (scale * scale)
        err = sqrt(err / d)
        if err > 1.0:
            factor = 0.9 * err ** -0.2
            if factor < 0.2:
                factor = 0.2
            h *= factor
            n_rejected += 1
            continue
        n_accepted += 1
        nsq = _norm_sq(y_new, d)
        have_jump = nsq < eps

        if have_jump:
            # Bisect the monotone norm decay on the dense-output polynomial.
            lo = 0.0
            hi = 1.0
            t_tol = 1e-12 * max(1.0, fabs(t + h))
            for it in range(200):
                if (hi - lo) * h <= t_tol:
                    break
                mid = 0.5 * (lo + hi)
                x = mid
                q0 = _P[0][0] * x + _P[0][1] * x * x + _P[0][2] * x ** 3 + _P[0][3] * x ** 4
                for a in range(d):
                    acc = K[0][a] * q0
                    for b in range(2, 7):
                        q1 = _P[b][0] * x + _P[b][1] * x * x + \
                            _P[b][2] * x ** 3 + _P[b][3] * x ** 4
                        acc = acc + K[b][a] * q1
                    u_state[a] = psi[a] + h * acc
                if _norm_sq(u_state, d) < eps:
                    hi = mid
                else:
                    lo = mid
            theta = hi
            tau = t + theta * h
            x = theta
            for a in range(d):
                acc = 0.0
                for b in range(7):
                    q1 = _P[b][0] * x + _P[b][1] * x * x + \
                        _P[b][2] * x ** 3 + _P[b][3] * x ** 4
                    acc = acc + K[b][a] * q1
                u_state[a] = psi[a] + h * acc
            # Samples before the jump.
            while s_idx < n_samp and st[s_idx] <= tau:
                ts = st[s_idx]
                x = (ts - t) / h
                for a in range(d):
                    acc = 0.0
                    for b in range(7):
                        q1 = _P[b][0] * x + _P[b][1] * x * x + \
                            _P[b][2] * x ** 3 + _P[b][3] * x ** 4
                        acc = acc + K[b][a] * q1
                    ys[a] = psi[a] + h * acc
                nrm = sqrt(_norm_sq(ys, d))
                phase_fac = np.exp(-1j * (phase0 + phase_shift * (ts - seg_t0))) \
                    if phase_shift != 0.0 else 1.0
                for a in range(d):
                    samples[s_idx, a] = ys[a] / nrm * phase_fac
                s_idx += 1
            nrm = sqrt(_norm_sq(u_state, d))
            phase_fac = np.exp(-1j * (phase0 + phase_shift * (tau - seg_t0))) \
                if phase_shift != 0.0 else 1.0
            pre = np.empty(d, dtype=complex)
            for a in range(d):
                u_state[a] = u_state[a] / nrm
                pre[a] = u_state[a] * phase_fac
            total = 0.0
            for ch in range(k):
                weights[ch] = 0.0
                for a in range(d):
                    acc = 0.0
                    for b in range(d):
                        acc = acc + C_arr[ch, a, b] * u_state[b]
                    weights[ch] += acc.real * acc.real + acc.imag * acc.imag
                total += weights[ch]
            u2 = draws.take()
            cum = 0.0
            ch = k - 1
            for a in range(k):
                cum += weights[a] / total
                if cum >= u2:
                    ch = a
                    break
            nrm = 0.0
            for a in range(d):
                cpsi[a] = 0.0
                for b in range(d):
                    cpsi[a] = cpsi[a] + C_arr[ch, a, b] * pre[b]
                nrm += cpsi[a].real ** 2 + cpsi[a].imag ** 2
            nrm = sqrt(nrm)
            post = np.empty(d, dtype=complex)
            for a in range(d):
                post[a] = cpsi[a] / nrm
            jump_times.append(tau)
            jump_channels.append(ch)
            jump_pre.append(pre)
            jump_post.append(post)
            # Restart from the collapsed state.
            phase0 = 0.0
            seg_t0 = tau
            for a in range(d):
                psi[a] = post[a]
            t = tau
            eps = draws.take()
            h = _initial_step(A, psi, d, t_final - t, rtol, atol, max_step)
            _matvec(A, psi, K[0], d)
            continue

        # Accepted no-jump step: interpolate samples inside it.
        while s_idx < n_samp and st[s_idx] <= t + h:
            ts = st[s_idx]
            x = (ts - t) / h
            for a in range(d):
                acc = 0.0
                for b in range(7):
                    q1 = _P[b][0] * x + _P[b][1] * x * x + \
                        _P[b][2] * x ** 3 + _P[b][3] * x ** 4
                    acc = acc + K[b][a] * q1
                ys[a] = psi[a] + h * acc
            nrm = sqrt(_norm_sq(ys, d))
            phase_fac = np.exp(-1j * (phase0 + phase_shift * (ts - seg_t0))) \
                if phase_shift != 0.0 else 1.0
            for a in range(d):
                samples[s_idx, a] = ys[a] / nrm * phase_fac
            s_idx += 1
        if nsq < atol and not warned:
            warnings.warn(
                "squared norm decayed below atol between samples; "
                "jump-time location may be degraded",
                ToleranceTooLoose,
            )
            warned = True
        for a in range(d):
            psi[a] = y_new[a]
            K[0][a] = K[6][a]  # FSAL
        t = t + h
        if err == 0.0:
            factor = 10.0
        else:
            factor = 0.9 * err ** -0.2
            if factor > 10.0:
                factor = 10.0
            if factor < 0.2:
                factor = 0.2
        h *= factor

    while s_idx < n_samp:
        nrm = sqrt(_norm_sq(psi, d))
        phase_fac = np.exp(-1j * (phase0 + phase_shift * (t - seg_t0))) \
            if phase_shift != 0.0 else 1.0
        for a in range(d):
            samples[s_idx, a] = psi[a] / nrm * phase_fac
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
