"""Exception types shared across the pipeline."""


class ScanForgeError(Exception):
    """Base class for all pipeline errors."""


class InvalidParameterError(ScanForgeError, ValueError):
    """A parameter or input violates an operation's precondition."""


class DegenerateInputError(ScanForgeError):
    """Point configuration too degenerate to estimate a transform."""


class NumericDomainError(ScanForgeError):
    """A numeric operation left its valid domain (e.g. point at infinity)."""


class AlignmentFailedError(ScanForgeError):
    """Robust estimation could not find enough consistent correspondences."""


class NoQuadFoundError(ScanForgeError):
    """No edge component passed the quadrilateral acceptance test."""


class OverrideFormatError(ScanForgeError):
    """A human-annotation override file could not be parsed."""


class InvalidAnnotationError(OverrideFormatError):
    """An override record parsed but describes an unusable quad."""


class StoreFormatError(ScanForgeError):
    """A patch-store index is malformed or references missing files."""
