from __future__ import annotations


class AtlasError(RuntimeError):
    """Base class of all detector errors"""


class MapFamilyError(AtlasError):
    """Raised for unknown map families or invalid family parameters"""


class NonFiniteError(AtlasError):
    """Raised if an iterate overflows or becomes NaN"""

    def __init__(self, message: str, index: int | None = None) -> None:
        super().__init__(message)
        self.index = index


class OrbitCapError(AtlasError, ValueError):
    """Raised if a requested orbit is longer than the configured step cap"""


class EmptySeedSetError(AtlasError):
    ...


class InvalidWindowError(AtlasError):
    ...


class SingularJacobianError(AtlasError):
    """Raised if Df^q - I is singular at a Newton iterate, i.e. the point is parabolic"""


class NotConvergedError(AtlasError):
    ...


class PeriodDivisorError(AtlasError):
    """Raised if Newton converged to an orbit whose true period divides q"""


class ResidualTooLargeError(AtlasError):
    ...


class ZeroVectorOnCircleError(AtlasError):
    """Raised if a fixed point lies on the sampling circle of an index computation"""


class AmbiguousWindingError(AtlasError):
    ...


class NotHyperbolicError(AtlasError):
    ...


class InvalidEpsError(AtlasError):
    ...


class NotFoundWithinCapError(AtlasError):
    ...


class BranchGrowthFailedError(AtlasError):
    ...


class ResolutionTooCoarseError(AtlasError):
    ...


class EmptyCloudError(AtlasError):
    ...


class InvalidBandError(AtlasError):
    ...


class StoreIoError(AtlasError):
    ...


class IntegrityError(AtlasError):
    """Raised if a stored record does not match its id or checksum"""


class InvalidIdError(AtlasError):
    ...


class MissingRecordError(AtlasError):
    """Raised if a record id given on the command line is not in the store"""
