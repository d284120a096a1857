"""Discrete photon-stream statistics.

The second-order correlation estimator follows the beam-splitter pipeline:
route each photon to one of two detectors with a fair coin (once per curve),
delay detector 2 by -tau (dropping negative times), bin each detector with
its own ceil(t_max/bin_width) bins, truncate both count arrays to the common
length M, and evaluate

    g2(tau) = sum_i n1_i * n2_i / (sum_i n1_i * sum_i n2_i) * M.

The analytic driven-two-level-atom curve is
g2(tau) = 1 - exp(-3 G tau/4) [cos(mu tau) + (3G/4mu) sin(mu tau)] with
mu = sqrt(Omega^2 - G^2/16), continued with hyperbolic functions when
Omega <= G/4.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateBins, EmptyDetector, NoJumps
from .trajectory import TrajectoryRecord

__all__ = [
    "PhotonStream",
    "G2Curve",
    "split_beam",
    "g2_estimate",
    "g2_analytic_rf",
    "stream_from_trajectory",
    "poisson_stream",
    "write_g2_csv",
]


@dataclass(frozen=True)
class PhotonStream:
    """Ordered, non-negative emission timestamps."""

    timestamps: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=float)
        if ts.ndim != 1:
            raise ValueError("timestamps must be one-dimensional")
        if ts.size and (np.any(np.diff(ts) < 0) or ts[0] < 0):
            raise ValueError("timestamps must be sorted and non-negative")
        object.__setattr__(self, "timestamps", ts)

    @classmethod
    def from_jump_times(cls, times: Sequence[float]) -> "PhotonStream":
        """Build a stream with the first emission shifted to time 0."""
        ts = np.sort(np.asarray(times, dtype=float))
        if ts.size == 0:
            raise NoJumps("no emission times supplied")
        return cls(ts - ts[0])

    def __len__(self) -> int:
        return int(self.timestamps.size)

    @property
    def mean_spacing(self) -> float:
        if len(self) < 2:
            raise ValueError("need >= 2 photons for a mean spacing")
        return float(self.timestamps[-1] - self.timestamps[0]) / (len(self) - 1)

    def intervals(self) -> np.ndarray:
        return np.diff(self.timestamps)


@dataclass(frozen=True)
class G2Curve:
    taus: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)


def split_beam(s: PhotonStream, seed: int) -> tuple[PhotonStream, PhotonStream]:
    """Simulate a 50:50 beam splitter: one fair-coin draw per photon.

    Draw < 0.5 routes to detector 1.  Deterministic given the seed; the two
    outputs partition the input exactly (absolute times preserved).
    """
    if len(s) == 0:
        raise ValueError("cannot split an empty stream")
    gen = np.random.Generator(np.random.PCG64(seed))
    to_first = gen.random(len(s)) < 0.5
    return (
        PhotonStream(s.timestamps[to_first]),
        PhotonStream(s.timestamps[~to_first]),
    )


def _bin_counts(times: np.ndarray, bin_width: float) -> np.ndarray:
    t_max = times[-1]
    n_bins = max(1, math.ceil(t_max / bin_width)) if t_max > 0 else 1
    counts, _ = np.histogram(times, bins=n_bins, range=(0.0, n_bins * bin_width))
    return counts


def g2_estimate(
    s: PhotonStream,
    dtd: Optional[float] = None,
    taus: Optional[Sequence[float]] = None,
    seed: int = 0,
) -> G2Curve:
    """Estimate g2(tau) from a photon stream.

    dtd : detector bin width; defaults to 0.1 * the stream's mean photon
        spacing (it must stay below the mean spacing for the estimator to
        resolve individual photons).
    taus : delay grid; defaults to 0..10 in steps of dtd.
    seed : beam-splitter seed; the split is performed once per call and
        reused across all delays.
    """
    if dtd is None:
        dtd = 0.1 * s.mean_spacing
    if dtd <= 0:
        raise ValueError("bin width must be positive")
    if taus is None:
        taus = np.arange(0.0, 10.0 + 0.5 * dtd, dtd)
    taus = np.asarray(taus, dtype=float)
    det1, det2 = split_beam(s, seed)
    if len(det1) < 2 or len(det2) < 2:
        raise EmptyDetector(
            f"detectors received {len(det1)} and {len(det2)} photons; need >= 2 each"
        )
    n1_full = _bin_counts(det1.timestamps, dtd)
    sum1_cum = np.concatenate([[0], np.cumsum(n1_full)])
    values = np.empty(taus.shape[0])
    for i, tau in enumerate(taus):
        shifted = det2.timestamps - tau
        shifted = shifted[shifted >= 0.0]
        if shifted.size < 1:
            raise DegenerateBins(f"delay {tau} leaves no detector-2 photons")
        n2 = _bin_counts(shifted, dtd)
        m = min(n1_full.shape[0], n2.shape[0])
        if m == 0:
            raise DegenerateBins("count-array truncation left no bins")
        n1 = n1_full[:m]
        n2 = n2[:m]
        s1 = float(sum1_cum[m])
        s2 = float(n2.sum())
        if s1 == 0 or s2 == 0:
            raise EmptyDetector("a detector registered no photons in the window")
        values[i] = float(n1 @ n2) / (s1 * s2) * m
    return G2Curve(
        taus=taus,
        values=values,
        meta={
            "bin_width": float(dtd),
            "n_photons": len(s),
            "total_time": float(s.timestamps[-1]),
            "n_bins": int(n1_full.shape[0]),
            "splitter_seed": int(seed),
        },
    )


def g2_analytic_rf(omega: float, gamma: float, taus: Sequence[float]) -> G2Curve:
    """Analytic g2 for the resonantly driven two-level atom."""
    taus = np.asarray(taus, dtype=float)
    mu_sq = omega**2 - gamma**2 / 16.0
    envelope = np.exp(-3.0 * gamma * taus / 4.0)
    if mu_sq > 0:
        mu = math.sqrt(mu_sq)
        osc = np.cos(mu * taus) + (3.0 * gamma / (4.0 * mu)) * np.sin(mu * taus)
    elif mu_sq < 0:
        nu = math.sqrt(-mu_sq)
        osc = np.cosh(nu * taus) + (3.0 * gamma / (4.0 * nu)) * np.sinh(nu * taus)
    else:
        osc = 1.0 + 3.0 * gamma * taus / 4.0
    values = 1.0 - envelope * osc
    return G2Curve(taus=taus, values=values, meta={"omega": omega, "gamma": gamma})


def stream_from_trajectory(
    rec: TrajectoryRecord, channels: Optional[Sequence[str]] = None
) -> PhotonStream:
    """Photon stream from a trajectory's jump events (first emission at 0).

    ``channels`` restricts to the listed jump-channel labels.
    """
    times = [
        j.time for j in rec.jumps if channels is None or j.channel in channels
    ]
    if not times:
        raise NoJumps("trajectory has no matching jump events")
    return PhotonStream.from_jump_times(times)


def poisson_stream(rate: float, t_total: float, seed: int) -> PhotonStream:
    """Synthetic coherent-light stream: exponential gaps at the given rate."""
    gen = np.random.Generator(np.random.PCG64(seed))
    n_expected = int(rate * t_total * 1.2) + 32
    gaps = gen.exponential(1.0 / rate, n_expected)
    times = np.cumsum(gaps)
    while times[-1] < t_total:
        more = np.cumsum(gen.exponential(1.0 / rate, n_expected)) + times[-1]
        times = np.concatenate([times, more])
    return PhotonStream.from_jump_times(times[times <= t_total])


def write_g2_csv(curve: G2Curve, path):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "g2"])
        for tau, val in zip(curve.taus, curve.values):
            w.writerow([f"{tau:.12g}", f"{val:.12g}"])
