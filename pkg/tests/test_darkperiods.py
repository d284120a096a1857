import math

import numpy as np
import pytest
import scipy.linalg

from qtraj.darkperiods import (
    APEX_FACTOR,
    P0Decomposition,
    classify_periods,
    decomposition,
    default_reset_state,
    heatmap,
    orthogonality_measure,
    p0_approx,
    p0_exact,
    period_stats,
    t_apex,
    waiting_time_density,
)
from qtraj.errors import NoTimescaleSeparation, OrthogonalityViolation
from qtraj.linalg import SpectralData, eig_general
from qtraj.models import (
    AtomParams,
    build_relaxing_atom,
    build_two_atom_eigen,
    effective_hamiltonian,
)
from qtraj.photonstats import PhotonStream


@pytest.fixture(scope="module")
def blink_decomp(blinking_model):
    return decomposition(blinking_model)


def _synthetic_decomposition(rates, weights):
    """Two-mode stand-in with prescribed decay rates and weights."""
    eig = np.array([-0.5j * r for r in rates])
    n = len(rates)
    sp = SpectralData(
        eigenvalues=eig,
        right=np.eye(n, dtype=complex),
        left=np.eye(n, dtype=complex),
        pairing=np.ones(n, dtype=complex),
    )
    psi0 = np.sqrt(np.asarray(weights, dtype=complex))
    return P0Decomposition(spectral=sp, weights=np.asarray(weights, float),
                           reset_state=psi0)


# --- no-photon probability --------------------------------------------------

def test_p0_starts_at_one(blinking_model):
    h_eff = effective_hamiltonian(blinking_model)
    psi0 = np.array([0, 0, 0, 1], complex)
    assert abs(p0_exact(h_eff, psi0, 0.0) - 1.0) < 1e-12


def test_p0_exponential_decay_oracle():
    m = build_relaxing_atom(AtomParams(gamma=1.0, omega_atom=1.0))
    h_eff = effective_hamiltonian(m)
    psi0 = np.array([1, 0], complex)
    ts = np.linspace(0.0, 10.0, 41)
    assert np.max(np.abs(p0_exact(h_eff, psi0, ts) - np.exp(-ts))) < 1e-10


def test_p0_matches_matrix_exponential(blink_decomp, blinking_model):
    # independent oracle: direct expm propagation of the reset state
    h_eff = effective_hamiltonian(blinking_model)
    psi0 = blink_decomp.reset_state
    for t in (0.5, 5.0, 50.0, 500.0):
        psi_t = scipy.linalg.expm(-1j * h_eff * t) @ psi0
        expect = float(np.vdot(psi_t, psi_t).real)
        assert abs(p0_exact(h_eff, psi0, t) - expect) < 1e-12


def test_p0_monotone_nonincreasing(blink_decomp, blinking_model):
    h_eff = effective_hamiltonian(blinking_model)
    ts = np.linspace(0.0, 1000.0, 2001)
    vals = p0_exact(h_eff, blink_decomp.reset_state, ts)
    assert np.all(np.diff(vals) <= 1e-12)


def test_p0_approx_close_to_exact(blink_decomp, blinking_model):
    h_eff = effective_hamiltonian(blinking_model)
    stats = period_stats(blink_decomp)
    ts = np.linspace(0.0, 5.0 * stats.t_apex, 400)
    err = np.abs(p0_approx(blink_decomp, ts)
                 - p0_exact(h_eff, blink_decomp.reset_state, ts))
    assert np.max(err) < 1e-3


def test_p0_approx_single_mode_is_pure_exponential():
    d = _synthetic_decomposition([1.0, 2.0], [1.0, 0.0])
    ts = np.linspace(0.0, 5.0, 11)
    assert np.allclose(p0_approx(d, ts), np.exp(-ts), atol=1e-12)


def test_p0_approx_gated_on_orthogonality():
    # a configuration whose eigenvectors overlap beyond the gate
    lam = math.sqrt(25.0 / 4.0 + 1.0)
    m = build_two_atom_eigen(AtomParams(gamma=1.0, omega_rabi=5.0,
                                        delta_total=-lam, delta_diff=5.0,
                                        v=1.0, gamma12=1.0))
    d = decomposition(m)
    assert orthogonality_measure(d.spectral) > 1e-2
    with pytest.raises(OrthogonalityViolation):
        p0_approx(d, 1.0)


# --- waiting-time density ---------------------------------------------------

def test_waiting_density_integrates_to_weight_sum(blink_decomp):
    total = sum(w / r for w, r in zip(blink_decomp.weights,
                                      blink_decomp.rates) if r > 0)
    # integral of w1 = sum of weights; check via the mode-sum identity
    w_sum = float(np.sum(blink_decomp.weights))
    defect = orthogonality_measure(blink_decomp.spectral)
    assert abs(w_sum - 1.0) <= defect + 1e-10
    assert total > 0


def test_waiting_density_relaxing_atom():
    m = build_relaxing_atom(AtomParams(gamma=1.0, omega_atom=1.0))
    d = decomposition(m, reset_state=np.array([1, 0], complex))
    ts = np.linspace(0.0, 5.0, 21)
    assert np.allclose(waiting_time_density(d, ts), np.exp(-ts), atol=1e-10)


def test_waiting_density_is_negative_p0_derivative(blink_decomp):
    ts = np.linspace(1.0, 10.0 * 110.0, 200)
    h = 1e-5
    deriv = (p0_approx(blink_decomp, ts + h)
             - p0_approx(blink_decomp, ts - h)) / (2 * h)
    w1 = waiting_time_density(blink_decomp, ts)
    rel = np.abs(w1 + deriv) / np.maximum(np.abs(w1), 1e-300)
    assert np.max(rel) < 1e-6


# --- boundary time and period statistics ------------------------------------

def test_t_apex_hand_example():
    d = _synthetic_decomposition([0.01, 1.0], [0.5, 0.5])
    expect = math.log(10.0) / 0.99
    assert abs(t_apex(d, factor=10.0) - expect) < 1e-12


def test_t_apex_requires_timescale_separation():
    d = _synthetic_decomposition([1.0, 1.5], [0.5, 0.5])
    with pytest.raises(NoTimescaleSeparation):
        t_apex(d)


def test_single_mode_has_no_boundary():
    m = build_relaxing_atom(AtomParams(gamma=1.0, omega_atom=1.0))
    d = decomposition(m, reset_state=np.array([1, 0], complex))
    with pytest.raises(NoTimescaleSeparation):
        t_apex(d)


def test_period_stats_internal_identity(blink_decomp):
    # T_D*P0(T_apex) + tau_L*(1-P0(T_apex)) equals the mean waiting time.
    s = period_stats(blink_decomp)
    mean_wait = sum(w / r for w, r in zip(blink_decomp.weights,
                                          blink_decomp.rates))
    lhs = s.t_dark * s.p0_at_apex + s.tau_light * (1.0 - s.p0_at_apex)
    assert abs(lhs - mean_wait) < 1e-10 * mean_wait


def test_period_stats_consistency_relations(blink_decomp):
    s = period_stats(blink_decomp)
    assert abs(s.n_light - 1.0 / s.p0_at_apex) < 1e-12
    assert abs(s.t_light - s.n_light * s.tau_light) < 1e-9
    assert s.t_dark > s.t_light > 0


def test_all_modes_decay(blink_decomp):
    assert np.all(blink_decomp.spectral.eigenvalues.imag < 1e-12)


# --- reset state and dark-state convergence ---------------------------------

def test_reset_state_normalized(blinking_model):
    psi = default_reset_state(blinking_model)
    assert abs(np.linalg.norm(psi) - 1.0) < 1e-12


def test_dark_state_convergence(blink_decomp, blinking_model):
    # long no-jump evolution converges in direction to the slowest mode
    h_eff = effective_hamiltonian(blinking_model)
    r2 = np.sort(blink_decomp.rates)[1]
    # long enough that the second mode's amplitude advantage (~sqrt(w2/w1))
    # is beaten down by the rate difference
    t = 10.0 / r2
    psi = scipy.linalg.expm(-1j * h_eff * t) @ blink_decomp.reset_state
    psi /= np.linalg.norm(psi)
    dark = blink_decomp.spectral.right[:, 0]
    assert abs(np.vdot(dark, psi)) > 0.999


# --- stream classification --------------------------------------------------

def test_classify_simple_partition():
    # gaps {1, 2, 500, 1, 1} with boundary 100: one dark gap, two light runs
    s = PhotonStream(np.array([0.0, 1.0, 3.0, 503.0, 504.0, 505.0]))
    cls = classify_periods(s, 100.0)
    assert np.allclose(cls.dark_intervals, [500.0])
    assert len(cls.light_period_photons) == 2
    assert np.allclose(cls.light_gaps, [1.0, 2.0, 1.0, 1.0])


def test_classify_counts_photons():
    s = PhotonStream(np.array([0.0, 1.0, 3.0, 503.0, 504.0, 505.0]))
    cls = classify_periods(s, 100.0)
    assert cls.n_light_photons + cls.n_dark_photons == len(s)
    assert cls.n_dark_photons == 1


# --- orthogonality diagnostics ----------------------------------------------

def test_hermitian_defect_vanishes():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    a = a + a.conj().T
    assert orthogonality_measure(eig_general(a)) < 1e-10


def test_reference_config_defect_small(blink_decomp):
    assert orthogonality_measure(blink_decomp.spectral) <= 1e-3


# --- heatmaps ---------------------------------------------------------------

def test_heatmap_flags_unseparated_cells():
    grid = heatmap(AtomParams(gamma=1.0, omega_rabi=5.0, gamma12=1.0),
                   v_grid=[1.0], delta_grid=[20.0])
    assert len(grid.failures) == 1
    assert "NoTimescaleSeparation" in grid.failures[0][2]
    assert np.isnan(grid.t_dark[0, 0])


def test_heatmap_log_scale():
    grid = heatmap(AtomParams(gamma=1.0, omega_rabi=5.0, gamma12=1.0),
                   v_grid=[10.0], delta_grid=[2.0], log10=True)
    assert abs(10.0 ** grid.t_dark[0, 0] - 42920.6) < 42920.6 * 1e-4


# --- exports ----------------------------------------------------------------

def test_intensity_csv(tmp_path):
    from qtraj.darkperiods import write_intensity_csv

    s = PhotonStream(np.linspace(0.0, 99.0, 100))
    path = tmp_path / "intensity.csv"
    write_intensity_csv(s, 10.0, path)
    rows = path.read_text().strip().splitlines()
    assert rows[0].split(",")[0] == "bin_start"
    assert len(rows) == 11  # header + 10 bins


def test_period_stats_json(tmp_path, blink_decomp):
    import json

    from qtraj.darkperiods import write_period_stats_json

    s = period_stats(blink_decomp)
    path = tmp_path / "stats.json"
    write_period_stats_json(s, path)
    doc = json.loads(path.read_text())
    assert abs(doc["t_dark"] - s.t_dark) < 1e-9
