"""Exception types shared across the package."""


class SaddleLabError(Exception):
    """Base class for all saddlelab errors."""


class NoConvergence(SaddleLabError):
    """Iterative projection failed; carries the last iterate and residual."""

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class SingularConstraint(SaddleLabError):
    """Constraint Jacobian is rank deficient at the query point."""


class DegenerateStep(SaddleLabError):
    """Finite-difference step underflowed at the query point."""


class MalformedFunction(SaddleLabError):
    """No region of a piecewise function covers the query point."""


class NotCritical(SaddleLabError):
    """Point handed to the critical-point classifier is not critical."""


class DivergentChi(SaddleLabError):
    """Tail sum of squared steps diverges for the requested exponent."""


class InvalidExponent(SaddleLabError):
    """Rate exponent outside the admissible range (0, 2*alpha - 1)."""


class AngleConditionFails(SaddleLabError):
    """Drift probe requires a positive angle constant."""


class NoNegativeEigenvalue(SaddleLabError):
    """Spectral split found no eigenvalue with negative real part."""


class NearDefective(SaddleLabError):
    """Eigenvector matrix too ill-conditioned for a reliable split."""


class SpectralGapError(SaddleLabError):
    """An eigenvalue's real part falls inside the forbidden gap."""


class SingularSystem(SaddleLabError):
    """Lyapunov system is singular (eigenvalue-sum collision)."""


class InvalidManifoldSpec(SaddleLabError):
    """Constructed-system map violates value/Jacobian-at-zero constraints."""


class DivergedRun(SaddleLabError):
    """Iterates overflowed; carries the last finite index."""

    def __init__(self, message, last_finite_index=None):
        super().__init__(message)
        self.last_finite_index = last_finite_index


class ConfigError(SaddleLabError):
    """Config validation failed; carries the full list of errors."""

    def __init__(self, errors):
        super().__init__("; ".join(errors))
        self.errors = list(errors)
