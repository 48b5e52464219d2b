"""Exception types shared across the package."""


class MbthpError(Exception):
    """Base class for all package errors."""


class RankDeficient(MbthpError, ValueError):
    """A factorization hit a pivot below the rank threshold."""


class DimensionMismatch(MbthpError, ValueError):
    pass


class NotPositiveDefinite(MbthpError, ValueError):
    pass


class LengthMismatch(MbthpError, ValueError):
    pass


class ConfigInvalid(MbthpError, ValueError):
    pass


class UnsupportedAlgorithm(MbthpError, KeyError):
    pass
