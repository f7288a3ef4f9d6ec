"""Exception types raised across the package."""


class GravalignError(Exception):
    """Base class for all errors raised by this package."""


class RotationNearPi(GravalignError):
    """Rotation angle is too close to pi for a unique logarithm."""


class DegenerateConfiguration(GravalignError):
    """Point configuration does not determine the requested transform."""


class InsufficientPoints(GravalignError):
    """Fewer points than the estimator requires."""


class EmptyOverlap(GravalignError):
    """No usable correspondences between two chunks."""


class DimensionMismatch(GravalignError):
    """Grids or point sets have incompatible dimensions."""


class ZeroScale(GravalignError):
    """Point cloud collapses to a single location; scale undefined."""


class SingularNormalEquations(GravalignError):
    """Pose-graph normal equations are rank deficient (e.g. disconnected graph)."""


class MissingAdjacency(GravalignError):
    """Chain initialization requires a measurement for every consecutive pair."""


class InvalidConfig(GravalignError):
    """Configuration values violate their documented constraints."""


class InvalidSpec(GravalignError):
    """Synthetic scene specification is not realizable."""


class LengthMismatch(GravalignError):
    """Paired sequences have different lengths."""


class InsufficientLoopOverlap(GravalignError):
    """A loop chunk shares no usable frames with its anchoring chunk."""


class PointmapFileError(GravalignError):
    """Base class for pointmap file format errors."""


class BadMagic(PointmapFileError):
    """File does not start with the pointmap magic bytes."""


class TruncatedFile(PointmapFileError):
    """File ends before the payload announced by its header."""


class DimensionOverflow(PointmapFileError):
    """Header dimensions are zero or implausibly large."""
