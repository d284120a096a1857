import math

import numpy as np
import pytest

from qtraj.errors import ZeroEmission
from qtraj.master import (
    consecutive_jump_ratio,
    evolve_master,
    liouvillian,
    steady_scan,
    steady_state,
)
from qtraj.models import (
    AtomParams,
    build_driven_atom,
    build_relaxing_atom,
    build_two_atom_eigen,
)
from conftest import SPECTRO_LAMBDA


def _vec(rho):
    return rho.reshape(-1, order="F")


def _unvec(v, d):
    return v.reshape((d, d), order="F")


# --- Liouvillian construction -----------------------------------------------

def test_ground_state_stationary():
    m = build_relaxing_atom(AtomParams(gamma=1.0, omega_atom=1.0))
    rho_g = np.diag([0.0, 1.0]).astype(complex)
    assert np.linalg.norm(liouvillian(m) @ _vec(rho_g)) < 1e-12


def test_excited_population_decay_rate():
    m = build_relaxing_atom(AtomParams(gamma=1.0, omega_atom=1.0))
    rho_e = np.diag([1.0, 0.0]).astype(complex)
    drho = _unvec(liouvillian(m) @ _vec(rho_e), 2)
    assert abs(drho[0, 0].real + 1.0) < 1e-12  # d rho_ee/dt = -gamma rho_ee


def test_vectorization_convention_matches_entrywise_superoperator():
    # The matrix L must agree with the superoperator applied entry by entry.
    m = build_driven_atom(AtomParams(gamma=1.0, omega_rabi=5.0,
                                     delta_total=0.7))
    rng = np.random.default_rng(2)
    rho = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    rho = rho + rho.conj().T
    expect = -1j * (m.H @ rho - rho @ m.H)
    for _, C in m.jump_ops:
        cdc = C.conj().T @ C
        expect += C @ rho @ C.conj().T - 0.5 * (cdc @ rho + rho @ cdc)
    got = _unvec(liouvillian(m) @ _vec(rho), 2)
    assert np.linalg.norm(got - expect) < 1e-12


# --- evolution --------------------------------------------------------------

def test_exponential_decay_oracle():
    m = build_relaxing_atom(AtomParams(gamma=1.0, omega_atom=1.0))
    rho0 = np.diag([1.0, 0.0]).astype(complex)
    times = np.linspace(0.0, 5.0, 26)
    _, rhos = evolve_master(m, rho0, 5.0, times)
    pops = np.array([r[0, 0].real for r in rhos])
    assert np.max(np.abs(pops - np.exp(-times))) < 1e-9


def test_trace_and_positivity_preserved():
    m = build_driven_atom(AtomParams(gamma=1.0, omega_rabi=5.0))
    rho0 = np.diag([0.0, 1.0]).astype(complex)
    _, rhos = evolve_master(m, rho0, 10.0, np.linspace(0.0, 10.0, 51))
    for rho in rhos:
        assert abs(np.trace(rho).real - 1.0) < 1e-8
        assert np.min(np.linalg.eigvalsh(rho)) > -1e-8
        assert np.linalg.norm(rho - rho.conj().T) < 1e-10


def test_unitary_limit_preserves_purity():
    m = build_driven_atom(AtomParams(gamma=0.0, omega_rabi=2.0))
    rho0 = np.diag([0.0, 1.0]).astype(complex)
    _, rhos = evolve_master(m, rho0, 10.0, np.linspace(0.0, 10.0, 21))
    for rho in rhos:
        assert abs(np.trace(rho @ rho).real - 1.0) < 1e-8


def test_long_time_limit_is_steady_state():
    m = build_driven_atom(AtomParams(gamma=1.0, omega_rabi=1.0))
    rho0 = np.diag([0.0, 1.0]).astype(complex)
    rho_t = evolve_master(m, rho0, 50.0, [0.0, 50.0])[1][-1]
    assert abs(rho_t[0, 0].real - 1.0 / 3.0) < 1e-8


# --- steady states ----------------------------------------------------------

def test_undriven_steady_state_is_ground():
    m = build_relaxing_atom(AtomParams(gamma=1.0, omega_atom=1.0))
    rho = steady_state(m)
    assert np.allclose(rho, np.diag([0.0, 1.0]), atol=1e-10)


def test_driven_steady_population():
    m = build_driven_atom(AtomParams(gamma=1.0, omega_rabi=1.0))
    assert abs(steady_state(m)[0, 0].real - 1.0 / 3.0) < 1e-10


def test_antisymmetric_resonance_dominant_population(spectroscopy_params):
    import dataclasses

    p = dataclasses.replace(spectroscopy_params, delta_total=-SPECTRO_LAMBDA)
    rho = steady_state(build_two_atom_eigen(p))
    pops = np.diag(rho).real  # basis e, s, a, g
    assert np.argmax(pops[:3]) == 2  # antisymmetric state leads below ground


# --- scans ------------------------------------------------------------------

def test_scan_weak_drive_all_ground():
    p = AtomParams(gamma=1.0, omega_rabi=1e-4, delta_diff=2.0, v=10.0)
    scan = steady_scan(p, [-5.0, 0.0, 5.0], build_two_atom_eigen)
    assert not scan.failures
    assert np.all(scan.populations[:, 3] > 1.0 - 1e-4)


def test_scan_identical_frequencies_suppresses_antisymmetric_resonance():
    # delta_diff = 0 makes the drive coupling to the antisymmetric state
    # vanish, so the scan shows a symmetric-state peak near +lambda while the
    # antisymmetric population stays negligible at its own resonance.
    p = AtomParams(gamma=1.0, omega_rabi=1.0, v=10.0, gamma12=0.5)
    grid = np.linspace(-20.0, 20.0, 161)
    scan = steady_scan(p, grid, build_two_atom_eigen)
    assert not scan.failures
    pop_s, pop_a = scan.populations[:, 1], scan.populations[:, 2]
    i_plus = int(np.argmin(np.abs(grid - 10.0)))   # lambda = 10
    i_minus = int(np.argmin(np.abs(grid + 10.0)))
    assert pop_s[i_plus] > 0.1
    assert pop_a[i_minus] < 1e-3


def test_scan_degenerate_steady_state_recorded():
    # Maximal cross damping with delta_diff=0 decouples the antisymmetric
    # state entirely (no decay channel, no drive coupling), so the stationary
    # state is not unique and every point must fail loudly rather than
    # return an arbitrary mixture.
    p = AtomParams(gamma=1.0, omega_rabi=5.0, v=10.0, gamma12=1.0)
    scan = steady_scan(p, [0.0, 5.0], build_two_atom_eigen)
    assert len(scan.failures) == 2
    assert all("RankDeficiencyMismatch" in msg for _, msg in scan.failures)


def test_scan_records_per_point_failures():
    p = AtomParams(gamma=1.0, omega_rabi=1.0)  # v=0, delta_diff=0: degenerate
    scan = steady_scan(p, [0.0, 1.0], build_two_atom_eigen)
    assert len(scan.failures) == 2
    assert np.all(np.isnan(scan.populations))


# --- consecutive-emission enhancement ---------------------------------------

def test_single_atom_post_jump_emission_suppressed():
    m = build_driven_atom(AtomParams(gamma=1.0, omega_rabi=1.0))
    assert consecutive_jump_ratio(m) < 1.0


def test_dark_steady_state_rejected():
    m = build_relaxing_atom(AtomParams(gamma=1.0, omega_atom=1.0))
    with pytest.raises(ZeroEmission):
        consecutive_jump_ratio(m)


def test_pair_central_resonance_enhancement(spectroscopy_params):
    # At zero drive detuning the post-jump emission probability exceeds the
    # steady-state one (the second photon of a cascade is more likely).
    m = build_two_atom_eigen(spectroscopy_params)
    assert consecutive_jump_ratio(m) > 1.0
