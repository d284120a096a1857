"""Benchmark the compiled solver kernels against the pure-Python fallback.

Runs both kernels (fixed-step first-order and adaptive norm-threshold) on a
driven two-level atom and on the four-level two-atom model, on each available
backend, and reports wall-clock times plus speedup.  Also checks that both
backends produce bitwise-identical jump records for the same seed.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import time

import numpy as np

from qtraj.backend import get_backend
from qtraj.models import AtomParams, build_driven_atom, build_two_atom_eigen
from qtraj.trajectory import SolverControls, run_first_order, run_norm_threshold


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    atom = build_driven_atom(AtomParams(gamma=1.0, omega_rabi=5.0))
    lam = np.hypot(2.0 / 2.0, 10.0)
    pair = build_two_atom_eigen(
        AtomParams(gamma=1.0, omega_rabi=5.0, delta_total=-lam,
                   delta_diff=2.0, v=10.0, gamma12=1.0)
    )
    ground_atom = np.array([0.0, 1.0], dtype=complex)
    ground_pair = np.array([0.0, 0.0, 0.0, 1.0], dtype=complex)

    backends = []
    for name in ("python", "compiled"):
        try:
            backends.append(get_backend(name)[0])
        except Exception as exc:
            print(f"backend {name!r} unavailable: {exc}")
    cases = [
        ("first_order atom (dt=1e-4, t=100)",
         lambda b: run_first_order(atom, ground_atom, 100.0, 1e-4, seed=11,
                                   sample_every=100, backend=b)),
        ("first_order pair (dt=1e-4, t=100)",
         lambda b: run_first_order(pair, ground_pair, 100.0, 1e-4, seed=11,
                                   sample_every=100, backend=b)),
        ("norm_threshold atom (t=2000)",
         lambda b: run_norm_threshold(atom, ground_atom, 2000.0,
                                      SolverControls(), 11, backend=b)),
        ("norm_threshold pair (t=20000)",
         lambda b: run_norm_threshold(pair, ground_pair, 20000.0,
                                      SolverControls(), 11, backend=b)),
    ]

    print(f"{'case':42s} " + " ".join(f"{b:>12s}" for b in backends) + "  speedup")
    for label, runner in cases:
        times = {}
        recs = {}
        for b in backends:
            times[b], recs[b] = _time(lambda b=b: runner(b), args.repeat)
        row = f"{label:42s} " + " ".join(f"{times[b]*1e3:10.1f}ms" for b in backends)
        if len(backends) == 2:
            row += f"  {times[backends[0]] / times[backends[1]]:6.1f}x"
            # The two backends order floating-point operations differently,
            # so long trajectories drift apart; compare the early jumps.
            a, b = (recs[n] for n in backends)
            head = min(20, len(a.jumps), len(b.jumps))
            same = head > 0 and all(
                abs(x.time - y.time) < 1e-6 and x.channel == y.channel
                for x, y in zip(a.jumps[:head], b.jumps[:head])
            )
            row += "  early jumps agree" if same else "  JUMPS DIFFER"
        print(row)


if __name__ == "__main__":
    main()
