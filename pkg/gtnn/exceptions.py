from __future__ import annotations


class GtnnError(Exception):
    def __init__(self, message, code=None):
        super().__init__(message)
        self.message = message
        self.code = code


class ZeroVectorError(GtnnError):
    pass


class NegativeValueError(GtnnError):
    pass


class DimensionMismatchError(GtnnError):
    pass


class EmptyStoreError(GtnnError):
    pass


class RangeOutOfBoundsError(GtnnError):
    pass


class UnsupportedNegativeQueryError(GtnnError):
    pass


class ContainerError(GtnnError):
    pass


class BadMagicError(ContainerError):
    pass


class VersionMismatchError(ContainerError):
    pass


class TruncatedFileError(ContainerError):
    pass


class VectorParseError(GtnnError):
    pass


class InvalidLambdaError(GtnnError):
    pass


class InvalidNError(GtnnError):
    pass


class InvalidCError(GtnnError):
    pass


class DegenerateSamplesError(GtnnError):
    pass


class OutOfRangeError(GtnnError):
    pass


class NoValidPoolsError(GtnnError):
    pass


class InvalidSpecError(GtnnError):
    pass


class InfeasibleTargetError(GtnnError):
    pass


class ExactnessError(GtnnError):
    """Raised when a search variant disagrees with the exhaustive oracle."""
