"""Exception and warning types raised across the toolkit."""


class QtrajError(Exception):
    """Base class for all toolkit errors."""


# --- linear algebra ---------------------------------------------------------

class NoConvergence(QtrajError):
    """The eigenvalue iteration failed within its iteration budget."""


class DegeneratePairing(QtrajError):
    """Matching eigenvalues between a matrix and its conjugate transpose is
    ambiguous at the requested tolerance (degenerate or near-degenerate
    spectrum)."""


class RankDeficiencyMismatch(QtrajError):
    """The null space does not have dimension exactly 1 at the requested
    tolerance."""


# --- model construction -----------------------------------------------------

class ZeroSeparation(QtrajError):
    """Dipole couplings requested at zero inter-atomic separation."""


class UnphysicalDamping(QtrajError):
    """A collective decay rate came out negative (|cross-damping| exceeds the
    single-atom rate)."""


class DegenerateIntermediates(QtrajError):
    """The intermediate-state basis rotation is singular (V = 0 and the
    transition-frequency difference is 0 simultaneously)."""


# --- trajectory solvers -----------------------------------------------------

class StepTooLarge(QtrajError):
    """The per-step jump probability exceeded 0.1; the first-order stepper's
    small-probability assumption is violated. Reduce dt."""


class SolverStall(QtrajError):
    """The adaptive integrator's step size underflowed."""


class ToleranceTooLoose(UserWarning):
    """The squared norm decayed below the absolute tolerance between output
    samples; jump-time location may be inaccurate at these tolerances."""


# --- steady-state statistics ------------------------------------------------

class ZeroEmission(QtrajError):
    """The steady state emits no photons (zero total jump expectation)."""


# --- photon statistics ------------------------------------------------------

class EmptyDetector(QtrajError):
    """A simulated detector received fewer than 2 photons."""


class DegenerateBins(QtrajError):
    """Count-array truncation left no overlapping bins."""


class NoJumps(QtrajError):
    """The trajectory record contains no jump events to convert into a
    photon stream."""


# --- dark-period analytics --------------------------------------------------

class NoTimescaleSeparation(QtrajError):
    """The two longest-lived modes do not satisfy the factor-10 decay-rate
    separation needed to define light/dark periods."""


class OrthogonalityViolation(QtrajError):
    """The eigenvector overlap defect exceeds the gate for the orthogonal
    (cross-term-free) approximation; use the exact form instead."""
