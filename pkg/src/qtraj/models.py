"""System builders: Hamiltonians, jump operators, and basis transforms.

All quantities are expressed in rescaled units of the single-atom decay rate
(set Gamma = 1 to work in those units; times are then 1/Gamma).  hbar = 1
throughout.

Units note: the single-atom driven model defines its detuning with a factor
1/2 relative to the two-atom convention (each model implements its own
defining equation as written); detunings are therefore not interchangeable
between the 2- and 4-dimensional models.

Two-atom conventions
--------------------
Basis (product): {|11>, |10>, |01>, |00>}, most to least energetic.
Basis (eigen):   {|e>, |s>, |a>, |g>} where the intermediate doublet is
rotated into |s> = alpha|10> + beta|01>, |a> = beta|10> - alpha|01> with
splitting 2*lambda, lambda = sqrt(delta_diff^2/4 + v^2).

Collective jump channels use the 1/sqrt(2)-normalized symmetric and
antisymmetric lowering operators with rates

    gamma_s = gamma + gamma12,    gamma_a = gamma - gamma12.

This unhalved convention is forced by requiring that the Liouvillian built
from {C_s, C_a} be exactly the one built from the per-atom lowering operators
with cross-damping gamma12 (a unitary rebasing of the jump set must leave the
master equation invariant); it is verified to 1e-12 in the test suite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    DegenerateIntermediates,
    UnphysicalDamping,
    ZeroSeparation,
)

__all__ = [
    "AtomParams",
    "DipoleGeometry",
    "EigenCoeffs",
    "ModelSpec",
    "build_relaxing_atom",
    "build_driven_atom",
    "build_two_atom_product",
    "build_two_atom_eigen",
    "compute_dipole_couplings",
    "effective_hamiltonian",
    "eigen_basis_transform",
    "model_from_dict",
    "model_to_dict",
]


@dataclass(frozen=True)
class AtomParams:
    """Physical parameters, all in units of the single-atom decay rate.

    gamma : single-atom spontaneous decay rate (normally 1 after rescaling).
    omega_rabi : coherent drive strength (real, >= 0).
    delta_total : drive detuning (two-atom: from the mean transition
        frequency; single-atom driven model: half the laser-atom detuning).
    delta_diff : difference of the two transition frequencies.
    v : static dipole-dipole interaction strength.
    gamma12 : cross-damping rate, |gamma12| <= gamma.
    omega_atom : bare transition frequency (single-atom undriven model only).
    """

    gamma: float = 1.0
    omega_rabi: float = 0.0
    delta_total: float = 0.0
    delta_diff: float = 0.0
    v: float = 0.0
    gamma12: float = 0.0
    omega_atom: float = 0.0

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.omega_rabi < 0:
            raise ValueError("omega_rabi must be real and >= 0")
        if abs(self.gamma12) > self.gamma + 1e-12:
            raise UnphysicalDamping(
                f"|gamma12|={abs(self.gamma12)} exceeds gamma={self.gamma}"
            )


@dataclass(frozen=True)
class DipoleGeometry:
    """Fixed positions/orientations of the two dipoles.

    k0r12 : dimensionless separation (wavenumber times distance), > 0.
    mu1hat, mu2hat, r12hat : unit 3-vectors (dipole orientations and the
        separation direction).
    """

    k0r12: float
    mu1hat: tuple[float, float, float]
    mu2hat: tuple[float, float, float]
    r12hat: tuple[float, float, float]

    def __post_init__(self):
        for name in ("mu1hat", "mu2hat", "r12hat"):
            vec = np.asarray(getattr(self, name), dtype=float)
            if vec.shape != (3,):
                raise ValueError(f"{name} must be a 3-vector")
            if abs(np.linalg.norm(vec) - 1.0) > 1e-12:
                raise ValueError(f"{name} must be unit-norm to 1e-12")


@dataclass(frozen=True)
class EigenCoeffs:
    """Intermediate-doublet rotation: splitting lambda and mixing (alpha, beta)."""

    lam: float
    alpha: float
    beta: float


@dataclass(frozen=True)
class ModelSpec:
    """A complete open-system definition.

    H is Hermitian (checked); each jump operator is a lowering operator.
    Instances are immutable and safe to share across trajectory workers.
    """

    name: str
    dim: int
    H: np.ndarray
    jump_ops: tuple[tuple[str, np.ndarray], ...]
    basis: tuple[str, ...]
    params: AtomParams
    eigen_coeffs: Optional[EigenCoeffs] = None

    def __post_init__(self):
        H = np.asarray(self.H, dtype=complex)
        if H.shape != (self.dim, self.dim):
            raise ValueError("H shape does not match dim")
        if np.linalg.norm(H - H.conj().T) > 1e-12 * max(1.0, np.linalg.norm(H)):
            raise ValueError("H must be Hermitian to 1e-12")
        if len(self.basis) != self.dim:
            raise ValueError("basis length must equal dim")
        object.__setattr__(self, "H", H)
        object.__setattr__(
            self,
            "jump_ops",
            tuple((label, np.asarray(C, dtype=complex)) for label, C in self.jump_ops),
        )

    @property
    def jump_matrices(self) -> np.ndarray:
        """Stacked (n_channels, dim, dim) jump-operator array."""
        if not self.jump_ops:
            return np.zeros((0, self.dim, self.dim), dtype=complex)
        return np.stack([C for _, C in self.jump_ops])

    @property
    def channel_labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.jump_ops)


def build_relaxing_atom(p: AtomParams) -> ModelSpec:
    """Undriven two-level atom: H = (omega_atom/2) diag(1,-1), one decay channel."""
    H = 0.5 * p.omega_atom * np.diag([1.0, -1.0]).astype(complex)
    lower = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)  # |g><e|
    jumps = ()
    if p.gamma > 0:
        jumps = (("emit", math.sqrt(p.gamma) * lower),)
    return ModelSpec(
        name="relaxing_atom", dim=2, H=H, jump_ops=jumps, basis=("e", "g"), params=p
    )


def build_driven_atom(p: AtomParams) -> ModelSpec:
    """Resonantly driven two-level atom in the rotating frame.

    H = (1/2) [[delta_total, omega_rabi], [omega_rabi, -delta_total]].
    """
    H = 0.5 * np.array(
        [[p.delta_total, p.omega_rabi], [p.omega_rabi, -p.delta_total]], dtype=complex
    )
    lower = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)
    jumps = ()
    if p.gamma > 0:
        jumps = (("emit", math.sqrt(p.gamma) * lower),)
    return ModelSpec(
        name="driven_atom", dim=2, H=H, jump_ops=jumps, basis=("e", "g"), params=p
    )


def compute_dipole_couplings(
    g: DipoleGeometry, gamma: float
) -> tuple[float, float]:
    """Dipole-dipole interaction V and cross-damping gamma12 from geometry.

    V = (3*gamma / (4*(k0r12)^3)) * [mu1.mu2 - 3 (mu1.r)(mu2.r)]
    gamma12 = gamma * (mu1.mu2)        (small-separation limit)
    """
    if g.k0r12 == 0:
        raise ZeroSeparation("k0r12 must be > 0")
    mu1 = np.asarray(g.mu1hat, dtype=float)
    mu2 = np.asarray(g.mu2hat, dtype=float)
    r = np.asarray(g.r12hat, dtype=float)
    bracket = float(mu1 @ mu2 - 3.0 * (mu1 @ r) * (mu2 @ r))
    v = 3.0 * gamma / (4.0 * g.k0r12**3) * bracket
    gamma12 = gamma * float(mu1 @ mu2)
    return v, gamma12


def _collective_rates(p: AtomParams) -> tuple[float, float]:
    gamma_s = p.gamma + p.gamma12
    gamma_a = p.gamma - p.gamma12
    if gamma_s < 0 or gamma_a < 0:
        raise UnphysicalDamping(
            f"collective rates ({gamma_s}, {gamma_a}) must be non-negative"
        )
    return gamma_s, gamma_a


def build_two_atom_product(p: AtomParams) -> ModelSpec:
    """Two coupled atoms in the product basis {|11>,|10>,|01>,|00>}.

    Jump channels are the collective symmetric/antisymmetric lowering
    operators (1/sqrt(2)-normalized) with rates gamma_s, gamma_a.
    """
    d, O, V = p.delta_diff, p.omega_rabi, p.v
    H = np.array(
        [
            [-p.delta_total, O / 2, O / 2, 0.0],
            [O / 2, d / 2, V, O / 2],
            [O / 2, V, -d / 2, O / 2],
            [0.0, O / 2, O / 2, p.delta_total],
        ],
        dtype=complex,
    )
    # Per-atom lowering operators in this basis.
    s1 = np.zeros((4, 4), dtype=complex)
    s1[2, 0] = 1.0  # |01><11|
    s1[3, 1] = 1.0  # |00><10|
    s2 = np.zeros((4, 4), dtype=complex)
    s2[1, 0] = 1.0  # |10><11|
    s2[3, 2] = 1.0  # |00><01|
    gamma_s, gamma_a = _collective_rates(p)
    jumps = []
    if gamma_s > 0:
        jumps.append(("s", math.sqrt(gamma_s) * (s1 + s2) / math.sqrt(2.0)))
    if gamma_a > 0:
        jumps.append(("a", math.sqrt(gamma_a) * (s1 - s2) / math.sqrt(2.0)))
    return ModelSpec(
        name="two_atom_product",
        dim=4,
        H=H,
        jump_ops=tuple(jumps),
        basis=("11", "10", "01", "00"),
        params=p,
    )


def _eigen_coeffs(p: AtomParams) -> EigenCoeffs:
    d, V = p.delta_diff, p.v
    if V == 0 and d == 0:
        raise DegenerateIntermediates(
            "intermediate doublet rotation undefined at v=0, delta_diff=0"
        )
    lam = math.sqrt(d * d / 4.0 + V * V)
    if V == 0:
        # Doublet already diagonal; rotation degenerates to identity/swap.
        alpha, beta = (1.0, 0.0) if d > 0 else (0.0, 1.0)
    else:
        alpha = 1.0 / math.sqrt(1.0 + (d / 2.0 - lam) ** 2 / V**2)
        beta = 1.0 / math.sqrt(1.0 + (d / 2.0 + lam) ** 2 / V**2)
    return EigenCoeffs(lam=lam, alpha=alpha, beta=beta)


def eigen_basis_transform(coeffs: EigenCoeffs) -> np.ndarray:
    """Orthogonal symmetric matrix D mapping product to eigen coordinates.

    |s> = alpha|10> + beta|01>, |a> = beta|10> - alpha|01>; D is its own
    inverse, and H_eigen = D H_product D.
    """
    a, b = coeffs.alpha, coeffs.beta
    return np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, a, b, 0.0],
            [0.0, b, -a, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ],
        dtype=complex,
    )


def build_two_atom_eigen(p: AtomParams) -> ModelSpec:
    """Two coupled atoms in the intermediate-eigenstate basis {|e>,|s>,|a>,|g>}.

    H is diagonal (-delta_total, lambda, -lambda, delta_total) apart from the
    drive, which couples |e>,|g> to |s> with strength omega_rabi*(alpha+beta)/2
    and to |a> with omega_rabi*(beta-alpha)/2.
    """
    coeffs = _eigen_coeffs(p)
    a, b, lam = coeffs.alpha, coeffs.beta, coeffs.lam
    O = p.omega_rabi
    cs = O * (a + b) / 2.0
    ca = O * (b - a) / 2.0
    H = np.array(
        [
            [-p.delta_total, cs, ca, 0.0],
            [cs, lam, 0.0, cs],
            [ca, 0.0, -lam, ca],
            [0.0, cs, ca, p.delta_total],
        ],
        dtype=complex,
    )
    # Collective raising operators in the eigen basis (1/sqrt(2)-normalized).
    sq2 = math.sqrt(2.0)
    u_s_raise = (
        np.array(
            [
                [0.0, a + b, b - a, 0.0],
                [0.0, 0.0, 0.0, a + b],
                [0.0, 0.0, 0.0, b - a],
                [0.0, 0.0, 0.0, 0.0],
            ],
            dtype=complex,
        )
        / sq2
    )
    u_a_raise = (
        np.array(
            [
                [0.0, -(b - a), a + b, 0.0],
                [0.0, 0.0, 0.0, b - a],
                [0.0, 0.0, 0.0, -(a + b)],
                [0.0, 0.0, 0.0, 0.0],
            ],
            dtype=complex,
        )
        / sq2
    )
    gamma_s, gamma_a = _collective_rates(p)
    jumps = []
    if gamma_s > 0:
        jumps.append(("s", math.sqrt(gamma_s) * u_s_raise.conj().T))
    if gamma_a > 0:
        jumps.append(("a", math.sqrt(gamma_a) * u_a_raise.conj().T))
    return ModelSpec(
        name="two_atom_eigen",
        dim=4,
        H=H,
        jump_ops=tuple(jumps),
        basis=("e", "s", "a", "g"),
        params=p,
        eigen_coeffs=coeffs,
    )


def effective_hamiltonian(m: ModelSpec) -> np.ndarray:
    """Non-Hermitian no-jump generator H - (i/2) sum_m C_m^dag C_m."""
    H_eff = m.H.astype(complex).copy()
    for _, C in m.jump_ops:
        H_eff -= 0.5j * (C.conj().T @ C)
    return H_eff


_BUILDERS = {
    "relaxing": build_relaxing_atom,
    "driven": build_driven_atom,
    "two_atom_product": build_two_atom_product,
    "two_atom_eigen": build_two_atom_eigen,
}


def model_from_dict(cfg: dict) -> ModelSpec:
    """Build a model from a flat key-value document (the CLI file format).

    Recognized keys: ``model`` (relaxing | driven | two_atom_product |
    two_atom_eigen), ``gamma``, ``omega_rabi``, ``delta_total``,
    ``delta_diff``, ``v``, ``gamma12``, ``omega_atom``, and an optional
    ``geometry`` block {k0r12, mu1hat, mu2hat, r12hat} from which v and
    gamma12 are derived when not given directly (direct values win).
    """
    cfg = dict(cfg)
    kind = cfg.pop("model", None)
    if kind not in _BUILDERS:
        raise ValueError(
            f"unknown model {kind!r}; expected one of {sorted(_BUILDERS)}"
        )
    geometry = cfg.pop("geometry", None)
    fields = {
        k: float(cfg[k])
        for k in (
            "gamma",
            "omega_rabi",
            "delta_total",
            "delta_diff",
            "v",
            "gamma12",
            "omega_atom",
        )
        if k in cfg
    }
    unknown = set(cfg) - set(fields)
    if unknown:
        raise ValueError(f"unknown model-file keys: {sorted(unknown)}")
    if geometry is not None:
        geom = DipoleGeometry(
            k0r12=float(geometry["k0r12"]),
            mu1hat=tuple(geometry["mu1hat"]),
            mu2hat=tuple(geometry["mu2hat"]),
            r12hat=tuple(geometry["r12hat"]),
        )
        v, gamma12 = compute_dipole_couplings(geom, fields.get("gamma", 1.0))
        fields.setdefault("v", v)
        fields.setdefault("gamma12", gamma12)
    return _BUILDERS[kind](AtomParams(**fields))


def model_to_dict(m: ModelSpec) -> dict:
    """Flat key-value document reproducing ``m`` via :func:`model_from_dict`."""
    kind = {
        "relaxing_atom": "relaxing",
        "driven_atom": "driven",
        "two_atom_product": "two_atom_product",
        "two_atom_eigen": "two_atom_eigen",
    }[m.name]
    p = m.params
    return {
        "model": kind,
        "gamma": p.gamma,
        "omega_rabi": p.omega_rabi,
        "delta_total": p.delta_total,
        "delta_diff": p.delta_diff,
        "v": p.v,
        "gamma12": p.gamma12,
        "omega_atom": p.omega_atom,
    }
