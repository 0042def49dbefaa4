"""Exception hierarchy shared across the package.

Every domain failure raises a subclass of :class:`PolarNavError` so callers
(CLI, service layer) can map error classes to exit codes / HTTP responses
without string matching.
"""


class PolarNavError(Exception):
    """Base class for all domain errors."""


class ConfigError(PolarNavError):
    """Invalid or unknown configuration entry.

    Carries the offending key and 1-based line number when known.
    """

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)


class GimbalLock(PolarNavError):
    """Pitch too close to +/-90 deg for a unique Euler decomposition."""


class OutOfRange(PolarNavError):
    """Date outside the supported ephemeris span."""


class BadDimensions(PolarNavError):
    """Mosaic frame dimensions incompatible with 2x2 superpixels."""


class ZeroIntensity(PolarNavError):
    """Total intensity too small for polarization ratios."""


class UndefinedAop(PolarNavError):
    """Angle of polarization undefined (S1 = S2 = 0)."""


class InsufficientSamples(PolarNavError):
    """Fewer than two effective samples for the solar-vector fit."""


class DegenerateGeometry(PolarNavError):
    """E-vector geometry leaves the solar direction unobservable."""


class SunAligned(PolarNavError):
    """View ray parallel to the sun: scattering E-vector undefined."""


class StaleMeasurement(PolarNavError):
    """Measurement epoch too far from the navigation epoch."""


class AmbiguousSign(PolarNavError):
    """Both solar-vector signs fit comparably; measurement rejected."""


class EmptyMeasurement(PolarNavError):
    """No measurement block available for this epoch."""


class SingularInnovation(PolarNavError):
    """Innovation covariance numerically singular."""
