"""Exception types shared across the library.

All errors derive from :class:`BernoulliLabError` so callers can catch the
library's failures with a single except clause.  Error classes carry no
behaviour; the message strings are expected to name the offending quantity.
"""

from __future__ import annotations


class BernoulliLabError(Exception):
    """Base class for every error raised by bernoulli-lab."""


class OutOfDomain(BernoulliLabError):
    """A point, ball, sphere or region exits the grid (or its safety margin)."""


class EmptyLevelSet(BernoulliLabError):
    """Requested level set has no sign change anywhere on the grid."""


class InvalidSpec(BernoulliLabError):
    """An exact-field or solver specification violates its invariants."""


class NonConvergence(BernoulliLabError):
    """Iteration cap hit before the tolerance was met.

    The best iterate is attached as the ``field`` attribute so callers can
    still inspect it.
    """

    def __init__(self, message: str, field=None, report=None):
        super().__init__(message)
        self.field = field
        self.report = report


class NonSymmetric(BernoulliLabError):
    """Matrix handed to a symmetric-eigenvalue routine is not symmetric."""


class OutOfRange(BernoulliLabError):
    """Scalar parameter outside its documented range."""


class EmptyRegion(BernoulliLabError):
    """A quadrature/fit region contains no cells."""


class SideEmpty(BernoulliLabError):
    """One side mask of an asymmetric-excess evaluation is empty."""

    def __init__(self, message: str, side: str = ""):
        super().__init__(message)
        self.side = side


class NoCandidate(BernoulliLabError):
    """A scan was asked to select from an empty candidate list."""


class FitFailure(BernoulliLabError):
    """A vee fit residual exceeds the configured admissibility fraction."""


class DomainTooSmall(BernoulliLabError):
    """Grid too small for the requested probe radius / construction."""


class EmptySeed(BernoulliLabError):
    """Geodesic distance requested from an empty seed set."""


class BandTouchesBoundary(BernoulliLabError):
    """A distance band needed for an integral check reaches the mesh boundary."""


class GradientDegenerate(BernoulliLabError):
    """Normal flow trajectory entered a region with |grad u| below the floor."""


class DisjointnessViolation(BernoulliLabError):
    """Omega+ and Omega- masks overlap; indicates a fit or theta misconfiguration."""

    def __init__(self, message: str, cells=None):
        super().__init__(message)
        self.cells = cells


class NegativeData(BernoulliLabError):
    """Bernoulli boundary data must be nonnegative."""


class ConfigError(BernoulliLabError):
    """Malformed configuration or file format; the CLI maps this to exit 2."""
