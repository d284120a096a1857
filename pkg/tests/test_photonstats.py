import math

import numpy as np
import pytest

from qtraj.errors import EmptyDetector, NoJumps
from qtraj.models import AtomParams, build_driven_atom, build_two_atom_eigen
from qtraj.photonstats import (
    PhotonStream,
    g2_analytic_rf,
    g2_estimate,
    poisson_stream,
    split_beam,
    stream_from_trajectory,
)
from qtraj.trajectory import SolverControls, run_norm_threshold
from conftest import SPECTRO_PARAMS


# --- stream basics ----------------------------------------------------------

def test_stream_shifts_first_emission_to_zero():
    s = PhotonStream.from_jump_times([3.2, 7.9])
    assert np.allclose(s.timestamps, [0.0, 4.7])


def test_stream_rejects_unsorted():
    with pytest.raises(ValueError):
        PhotonStream(np.array([1.0, 0.5]))


def test_stream_requires_nonempty_for_shift():
    with pytest.raises(NoJumps):
        PhotonStream.from_jump_times([])


def test_stream_from_trajectory_channel_filter(blinking_model, ground4):
    rec = run_norm_threshold(blinking_model, ground4, 500.0,
                             SolverControls(), 3, sample_times=[])
    all_ch = {j.channel for j in rec.jumps}
    assert "s" in all_ch
    s_only = stream_from_trajectory(rec, channels=("s",))
    n_s = sum(1 for j in rec.jumps if j.channel == "s")
    assert len(s_only) == n_s


# --- beam splitter ----------------------------------------------------------

def test_split_partitions_stream():
    s = poisson_stream(1.0, 5000.0, seed=1)
    d1, d2 = split_beam(s, seed=2)
    assert len(d1) + len(d2) == len(s)
    merged = np.sort(np.concatenate([d1.timestamps, d2.timestamps]))
    assert np.array_equal(merged, s.timestamps)


def test_split_deterministic():
    s = poisson_stream(1.0, 1000.0, seed=1)
    a1, a2 = split_beam(s, seed=7)
    b1, b2 = split_beam(s, seed=7)
    assert np.array_equal(a1.timestamps, b1.timestamps)
    assert np.array_equal(a2.timestamps, b2.timestamps)


def test_split_is_binomially_fair():
    s = poisson_stream(1.0, 10000.0, seed=3)
    d1, _ = split_beam(s, seed=4)
    n = len(s)
    assert abs(len(d1) - n / 2) <= 4 * math.sqrt(n / 4)


# --- estimator --------------------------------------------------------------

def _g2_reference(stream, dtd, taus, seed):
    """Straightforward re-implementation used as an independent oracle."""
    gen = np.random.Generator(np.random.PCG64(seed))
    to_first = gen.random(len(stream)) < 0.5
    t1 = stream.timestamps[to_first]
    t2_all = stream.timestamps[~to_first]
    out = []
    for tau in taus:
        t2 = t2_all - tau
        t2 = t2[t2 >= 0]
        nb1 = math.ceil(t1[-1] / dtd) if t1[-1] > 0 else 1
        nb2 = math.ceil(t2[-1] / dtd) if t2[-1] > 0 else 1
        c1, _ = np.histogram(t1, bins=nb1, range=(0, nb1 * dtd))
        c2, _ = np.histogram(t2, bins=nb2, range=(0, nb2 * dtd))
        m = min(len(c1), len(c2))
        c1, c2 = c1[:m], c2[:m]
        out.append(float(c1 @ c2) / (c1.sum() * c2.sum()) * m)
    return np.array(out)


def test_estimator_matches_reference_implementation():
    s = poisson_stream(1.0, 2000.0, seed=11)
    dtd = 0.25
    taus = np.arange(0.0, 5.0, 0.5)
    est = g2_estimate(s, dtd, taus, seed=13)
    ref = _g2_reference(s, dtd, taus, seed=13)
    assert np.allclose(est.values, ref, atol=1e-12)


def test_poisson_stream_is_flat():
    s = poisson_stream(1.0, 100000.0, seed=21)
    est = g2_estimate(s, 0.5, np.arange(0.0, 10.0, 0.5), seed=22)
    assert abs(est.values.mean() - 1.0) < 0.02
    assert np.max(np.abs(est.values - 1.0)) < 0.1


def test_estimator_error_shrinks_with_run_length():
    taus = np.arange(0.0, 10.0, 0.5)
    errs = []
    for t_total in (25000.0, 100000.0):
        devs = []
        for seed in range(4):
            s = poisson_stream(1.0, t_total, seed=100 + seed)
            est = g2_estimate(s, 0.5, taus, seed=seed)
            devs.append(np.mean(np.abs(est.values - 1.0)))
        errs.append(np.mean(devs))
    # quadrupling the record should roughly halve the error
    assert errs[1] < 0.8 * errs[0]


def test_default_bin_width_is_tenth_of_mean_spacing():
    s = poisson_stream(2.0, 5000.0, seed=5)
    est = g2_estimate(s, seed=1)
    assert abs(est.meta["bin_width"] - 0.1 * s.mean_spacing) < 1e-12


def test_empty_detector_raises():
    s = PhotonStream(np.array([0.0, 1.0, 2.0]))
    with pytest.raises(EmptyDetector):
        g2_estimate(s, 0.5, [0.0], seed=0)


def test_splitter_seed_only_resamples():
    s = poisson_stream(1.0, 50000.0, seed=9)
    taus = np.arange(0.0, 5.0, 0.5)
    a = g2_estimate(s, 0.5, taus, seed=1).values
    b = g2_estimate(s, 0.5, taus, seed=2).values
    assert np.max(np.abs(a - b)) < 0.1  # same curve within resampling noise


# --- analytic curve ---------------------------------------------------------

def test_analytic_zero_delay_vanishes():
    c = g2_analytic_rf(5.0, 1.0, [0.0])
    assert c.values[0] == 0.0


def test_analytic_long_delay_approaches_one():
    c = g2_analytic_rf(5.0, 1.0, [50.0])
    assert abs(c.values[0] - 1.0) < 1e-10


def test_analytic_first_maximum_location():
    mu = math.sqrt(25.0 - 1.0 / 16.0)
    taus = np.linspace(0.0, 2.0, 4001)
    c = g2_analytic_rf(5.0, 1.0, taus)
    t_peak = taus[int(np.argmax(c.values))]
    assert abs(t_peak - math.pi / mu) < 0.05


def test_analytic_overdamped_continuation():
    # drive below gamma/4: hyperbolic branch, still 0 at tau=0 and -> 1
    taus = np.linspace(0.0, 60.0, 301)
    c = g2_analytic_rf(0.2, 1.0, taus)
    assert c.values[0] == 0.0
    assert np.all(np.isfinite(c.values))
    assert abs(c.values[-1] - 1.0) < 1e-3
    assert np.all(np.diff(c.values) >= -1e-12)  # monotone rise, no oscillation


# --- physics checks ---------------------------------------------------------

@pytest.mark.parametrize("omega", [0.5, 1.0, 5.0, 10.0])
def test_antibunching_detected(omega):
    m = build_driven_atom(AtomParams(gamma=1.0, omega_rabi=omega))
    rec = run_norm_threshold(m, np.array([0, 1], complex), 20000.0,
                             SolverControls(), seed=int(omega * 10),
                             sample_times=[])
    s = stream_from_trajectory(rec)
    dtd = 0.1 * s.mean_spacing
    taus = np.arange(0.0, 5.0 + dtd, dtd)
    est = g2_estimate(s, dtd, taus, seed=3)
    window = est.values[(taus >= 0.5) & (taus <= 5.0)]
    assert est.values[0] < window.min()


def test_two_atom_stream_intervals_are_bimodal(blinking_model):
    # The strongly separated configuration shows two interval timescales:
    # many short gaps within light periods, a few very long dark gaps.
    d0 = np.array([0, 0, 0, 1], complex)
    rec = run_norm_threshold(blinking_model, d0, 400000.0,
                             SolverControls(), seed=6, sample_times=[])
    gaps = stream_from_trajectory(rec).intervals()
    assert np.sum(gaps < 50.0) > 10
    assert np.sum(gaps > 1000.0) >= 2
    # nothing in between dominates: a real gap in the interval distribution
    assert np.sum((gaps > 300.0) & (gaps < 1000.0)) < 0.1 * gaps.size
