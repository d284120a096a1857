"""Small dense complex linear algebra for state dimensions <= 4 and
superoperator dimensions <= 16.

The only nonstandard piece is :func:`eig_general`: a general (non-Hermitian)
eigendecomposition that returns *unit-normalized* right and left eigenvectors
paired index-by-index.  Left vectors are computed as right eigenvectors of the
conjugate transpose and matched by conjugated eigenvalues; they are NOT
rescaled to biorthogonality — the raw pairing products <left_m|right_m> are
exposed instead, because downstream spectral weights are defined against
unit-normalized vectors.

Eigenvalues are sorted by |Im| ascending (slowest-decaying mode first under
the e^{-i lambda t} convention), ties broken by Re ascending, so index 0 is
always the longest-lived mode.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePairing, NoConvergence, RankDeficiencyMismatch

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class SpectralData:
    """Eigen-decomposition of a (generally non-Hermitian) matrix.

    Attributes
    ----------
    eigenvalues : (n,) complex array, sorted by (|Im|, Re) ascending.
    right : (n, n) complex array; column m is the unit-norm right eigenvector.
    left : (n, n) complex array; column m is the unit-norm left eigenvector
        (right eigenvector of the conjugate transpose, matched to eigenvalue
        conj(eigenvalues[m])).
    pairing : (n,) complex array of raw products <left_m|right_m>; these are
        not 1 because the vectors are unit-normalized, not biorthogonal.
    """

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    pairing: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def decay_rates(self) -> np.ndarray:
        """Norm-squared decay rate of each mode: 2|Im(lambda_m)|."""
        return 2.0 * np.abs(self.eigenvalues.imag)


def _canonical_phase(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive.

    Determinism aid: LAPACK's eigenvector phases are arbitrary; fixing them
    makes outputs reproducible across calls and platforms.
    """
    out = vectors.copy()
    for m in range(out.shape[1]):
        k = int(np.argmax(np.abs(out[:, m])))
        pivot = out[k, m]
        if pivot != 0:
            out[:, m] *= np.abs(pivot) / pivot
    return out


def _sort_order(eigenvalues: np.ndarray) -> np.ndarray:
    return np.lexsort((eigenvalues.real, np.abs(eigenvalues.imag)))


def eig_general(a: np.ndarray, tol: float = DEFAULT_TOL) -> SpectralData:
    """Eigendecomposition with paired unit-norm left/right eigenvectors.

    Parameters
    ----------
    a : square complex matrix, dimension <= 4 in toolkit use.
    tol : pairing/residual tolerance, relative to ||a||.

    Raises
    ------
    NoConvergence : the underlying QR iteration failed.
    DegeneratePairing : eigenvalue matching between ``a`` and its conjugate
        transpose is ambiguous at ``tol`` (near-degenerate spectrum).
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("eig_general requires a square matrix")
    scale = np.linalg.norm(a)
    try:
        w_r, v_r = np.linalg.eig(a)
        w_l, v_l = np.linalg.eig(a.conj().T)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NoConvergence(str(exc)) from exc

    order = _sort_order(w_r)
    w_r = w_r[order]
    v_r = v_r[:, order]

    # Pair each right eigenvalue with the conjugate-transpose eigenvalue
    # closest to its conjugate; ambiguity beyond tol is an error, as is
    # re-using one left eigenvector for two right ones.
    n = w_r.shape[0]
    used = np.zeros(n, dtype=bool)
    left_cols = np.empty_like(v_r)
    gate = max(tol * max(scale, 1.0), 1e-300)
    for m in range(n):
        dist = np.abs(w_l.conj() - w_r[m])
        dist_masked = np.where(used, np.inf, dist)
        j = int(np.argmin(dist_masked))
        best = dist_masked[j]
        runner = np.min(np.where(np.arange(n) == j, np.inf, dist_masked))
        if np.isfinite(runner) and (runner - best) <= gate and runner <= 2 * gate:
            raise DegeneratePairing(
                f"eigenvalue {w_r[m]} matches two conjugate-transpose "
                f"eigenvalues within tolerance {gate:g}"
            )
        used[j] = True
        left_cols[:, m] = v_l[:, j]

    v_r = _canonical_phase(v_r / np.linalg.norm(v_r, axis=0))
    left_cols = _canonical_phase(left_cols / np.linalg.norm(left_cols, axis=0))

    # Residual guard on both sides (contract of the decomposition).
    res_r = np.linalg.norm(a @ v_r - v_r * w_r[np.newaxis, :])
    res_l = np.linalg.norm(left_cols.conj().T @ a - w_r[:, np.newaxis] * left_cols.conj().T)
    if res_r > 1e3 * gate or res_l > 1e3 * gate:
        raise NoConvergence(
            f"eigendecomposition residuals ({res_r:g}, {res_l:g}) exceed bound"
        )

    pairing = np.einsum("im,im->m", left_cols.conj(), v_r)
    return SpectralData(eigenvalues=w_r, right=v_r, left=left_cols, pairing=pairing)


def reconstruct(spectral: SpectralData) -> np.ndarray:
    """Rebuild the matrix as sum_m lambda_m |r_m><l_m| / <l_m|r_m>."""
    scaled = spectral.right * (spectral.eigenvalues / spectral.pairing)[np.newaxis, :]
    return scaled @ spectral.left.conj().T


def null_space(l: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Unit-norm vector spanning the one-dimensional null space of ``l``.

    Raises
    ------
    RankDeficiencyMismatch : if the number of singular values below
        ``tol * ||l||`` is not exactly 1.
    """
    l = np.asarray(l, dtype=complex)
    if l.ndim != 2 or l.shape[0] != l.shape[1]:
        raise ValueError("null_space requires a square matrix")
    u, s, vh = np.linalg.svd(l)
    gate = tol * max(s[0], 1.0)
    n_small = int(np.sum(s <= gate))
    if n_small != 1:
        raise RankDeficiencyMismatch(
            f"null space dimension {n_small} != 1 at tolerance {gate:g} "
            f"(singular values {s})"
        )
    v = vh[-1].conj()
    return v / np.linalg.norm(v)
