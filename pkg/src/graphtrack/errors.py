"""Exception types shared across the package.

Every error derives from GraphTrackError (itself a ValueError) so callers can
catch the whole family or stay with stdlib semantics.
"""
from __future__ import annotations


class GraphTrackError(ValueError):
    """Base class for all package errors."""


class NonSymmetric(GraphTrackError):
    """Matrix expected symmetric is not, beyond tolerance."""


class NonFinite(GraphTrackError):
    """NaN or Inf found where finite values are required."""


class NonPSD(GraphTrackError):
    """Matrix expected positive semidefinite has a negative eigenvalue."""


class DimensionMismatch(GraphTrackError):
    """Operand shapes are incompatible."""


class DuplicatePoints(GraphTrackError):
    """Two input points share exact coordinates."""


class BadK(GraphTrackError):
    """Neighbour count k outside [1, n_points - 1]."""


class NoReference(GraphTrackError):
    """Energy-based frequency selection needs reference signals."""


class BadSchedule(GraphTrackError):
    """Sampling schedule malformed or of the wrong length."""


class NotObservable(GraphTrackError):
    """Observability matrix rank below the bandwidth."""


class SingularExpectedGram(GraphTrackError):
    """Expected Gram matrix under random sampling is singular."""


class Infeasible(GraphTrackError):
    """Design constraint cannot be met even at full sampling."""


class NotConverged(GraphTrackError):
    """Iterative solver hit its iteration cap before the tolerance."""


class Divergent(GraphTrackError):
    """Iterates grew past the divergence guard."""


class DetectabilityFailure(GraphTrackError):
    """No candidate sensor renders the unstable modes detectable."""


class ParseError(GraphTrackError):
    """Malformed CSV or JSON input."""


class InconsistentNodeCount(GraphTrackError):
    """File column count disagrees with the graph's node count."""


class ZeroReference(GraphTrackError):
    """Reference signal has zero energy; relative error undefined."""


class ZeroNoise(GraphTrackError):
    """Noise variance must be positive for an SNR."""
