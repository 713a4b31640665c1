"""Exception types raised by the numerical routines."""


class StripResError(Exception):
    """Base class for all package errors."""


class ConfigError(StripResError, ValueError):
    """Invalid medium, basis or run configuration."""


class NotInvertible(StripResError):
    """Cell matrix is singular at the invertibility threshold."""

    def __init__(self, message, sigma_min=None, norm=None):
        super().__init__(message)
        self.sigma_min = sigma_min
        self.norm = norm


class AliasingBudgetExceeded(StripResError):
    """Grid modulation lost more than the allowed fraction of the norm."""

    def __init__(self, message, tail_mass=None):
        super().__init__(message)
        self.tail_mass = tail_mass


class EigKernelFailure(StripResError):
    """Dense eigensolver did not converge."""


class GapCollapse(StripResError):
    """No clean δ₀ exists at the supplied real samples."""


class TrackingLost(StripResError):
    """Pole matching stayed ambiguous at the minimal step size."""


class PathExitsZ(StripResError):
    """A lateral offset would leave the admissible k₂ region."""


class EigOnContour(StripResError):
    """A pencil eigenvalue lies too close to an integration contour."""


class PoleOnContour(StripResError):
    """A pole of the resolvent lies too close to the integration line."""


class QuadratureNotConverged(StripResError):
    """Doubling the quadrature changed the result beyond tolerance."""

    def __init__(self, message, rel_change=None):
        super().__init__(message)
        self.rel_change = rel_change


class PoleTooClose(StripResError):
    """Residue circle radius fell below the hard floor."""


EXCEPTIONAL_PROXIMITY = "ExceptionalProximity"
