"""Exception hierarchy. CLI exit codes are attached to each class."""


class PaldError(Exception):
    exit_code = 1


class ValidationError(PaldError, ValueError):
    """Input data violates a DistanceMatrix or CohesionMatrix invariant."""

    exit_code = 2


class TieError(ValidationError):
    """Exact distance tie found where the algorithm requires distinct distances."""


class UnsupportedPolicyError(PaldError, ValueError):
    """Requested algorithm cannot honour the requested comparison policy."""

    exit_code = 3


class FormatError(PaldError, OSError):
    """Malformed or truncated file."""

    exit_code = 4
