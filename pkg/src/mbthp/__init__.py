"""Tomlinson-Harashima precoders with selectable stream orderings for multiuser MIMO."""
from mbthp._kernels import BACKEND
from mbthp.errors import (ConfigInvalid, DimensionMismatch, LengthMismatch, MbthpError,
                          NotPositiveDefinite, RankDeficient, UnsupportedAlgorithm)

__version__ = "0.1.0"

__all__ = ["BACKEND", "ConfigInvalid", "DimensionMismatch", "LengthMismatch", "MbthpError",
           "NotPositiveDefinite", "RankDeficient", "UnsupportedAlgorithm", "__version__"]
