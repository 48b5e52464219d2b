"""Error covariances, sum rates, the branch-dominance check and FLOP counts."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from mbthp.errors import UnsupportedAlgorithm

__all__ = ["CovarianceReport", "FlopReport", "SCHEMES", "error_covariance",
           "covariance_ratio", "sum_rate", "flops", "flop_table",
           "ANALYTIC_ONLY", "branch_dominance_check"]

SCHEMES = ("ZF-dTHP", "ZF-cTHP", "MMSE-dTHP", "MMSE-cTHP")


@dataclass(frozen=True)
class CovarianceReport:
    diag: np.ndarray
    scheme: str

    @property
    def trace(self) -> float:
        return float(np.sum(self.diag))


def _scheme(name: str) -> str:
    for s in SCHEMES:
        if s.lower() == name.lower():
            return s
    raise ValueError(f"unknown scheme {name!r}; expected one of {SCHEMES}")


def error_covariance(l_diag, sigma_n_sq: float, sigma_s_sq: float = 1.0,
                     sigma_v_sq: float | None = None, scheme: str = "ZF-dTHP"
                     ) -> CovarianceReport:
    """Diagonal of the error covariance of the effective transmit signal.

    Decentralized schemes give ``sigma_n_sq / l_ii**2`` per layer. ZF-cTHP
    spreads ``sigma_n_sq * sum(1 / l_jj**2)`` evenly. MMSE-cTHP gives the
    constant ``sigma_v_sq / sigma_s_sq``.
    """
    scheme = _scheme(scheme)
    l_diag = np.asarray(l_diag, dtype=float)
    if scheme.endswith("dTHP"):
        diag = sigma_n_sq / l_diag**2
    elif scheme == "ZF-cTHP":
        diag = np.full(l_diag.size, sigma_n_sq * np.sum(1.0 / l_diag**2))
    else:
        if sigma_v_sq is None:
            raise ValueError("MMSE-cTHP needs sigma_v_sq")
        diag = np.full(l_diag.size, sigma_v_sq / sigma_s_sq)
    return CovarianceReport(diag, scheme)


def covariance_ratio(l_diag) -> np.ndarray:
    """Per-layer ratio of ZF-cTHP to ZF-dTHP error variance on one channel."""
    w = 1.0 / np.asarray(l_diag, dtype=float) ** 2
    return 1.0 + (np.sum(w) - w) / w


def sum_rate(scheme: str, sigma_n_sq, l_diag=None, sigma_v_sq=None,
             sigma_s_sq: float = 1.0):
    """Achievable sum rate in bits per channel use.

    ``l_diag`` may carry leading batch axes (layers on the last axis);
    ``sigma_n_sq`` and ``sigma_v_sq`` then broadcast against those axes.
    """
    scheme = _scheme(scheme)
    if l_diag is None:
        raise ValueError("l_diag is required (it also fixes the stream count)")
    l_diag = np.asarray(l_diag, dtype=float)
    n = l_diag.shape[-1]
    nv = np.asarray(sigma_n_sq, dtype=float)
    with np.errstate(divide="ignore"):
        if scheme == "MMSE-cTHP":
            if sigma_v_sq is None:
                raise ValueError("MMSE-cTHP needs sigma_v_sq")
            rate = n * np.log2(1.0 + sigma_s_sq**2 / np.asarray(sigma_v_sq, dtype=float))
        elif scheme == "ZF-cTHP":
            snr = sigma_s_sq / (nv * np.sum(1.0 / l_diag**2, axis=-1))
            rate = n * np.log2(1.0 + snr)
        else:
            rate = np.sum(np.log2(1.0 + sigma_s_sq * l_diag**2 / nv[..., None]), axis=-1)
    return float(rate) if np.ndim(rate) == 0 else rate


def branch_dominance_check(branch_scores, selected: int) -> bool:
    """True when the 0-based ``selected`` branch has the minimum score and
    does not exceed the identity branch (index 0)."""
    scores = np.asarray(branch_scores, dtype=float)
    if not 0 <= selected < scores.size:
        raise IndexError(f"selected branch {selected} out of range")
    return bool(scores[selected] <= scores[0] and scores[selected] == scores.min())


@dataclass(frozen=True)
class FlopReport:
    algorithm: str
    flops: int
    analytic_only: bool = False


def _round_half_up(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


def _zf_thp(n):
    return Fraction(40, 3) * n**3 + 10 * n**2 + 22 * n


def _mmse_thp(n):
    return Fraction(64, 3) * n**3 + 10 * n**2 + 22 * n


def _block_diag_common(n, k, nk):
    nbar = n - nk
    return 72 * nk**3 + 32 * nk * n**2 - 2 * nk**2 + 32 * n * nbar**2 + 64 * nbar**3


def _bd(n, k, nk):
    # the per-user stream count n_i is taken as the user's antenna count
    return k * (_block_diag_common(n, k, nk) + 72 * nk**2 * n)


def _rbd(n, k, nk):
    nbar_i = n - nk
    return k * (_block_diag_common(n, k, nk) + 72 * nk**2 * n + 8 * n**3 + 18 * n + nbar_i)


def _vp(n, m, d):
    total = sum(m * k * math.pi ** (k / 2) / math.gamma(k / 2 + 1) * d**k
                for k in range(1, n + 1))
    return Fraction(8 * total) + 16 * n**2 - 2 * n + 4


_FORMULAS = {
    "ZF": lambda n, k, nk, lb, m, d: Fraction(16 * n**3 + 3 * n**2 - 2 * n),
    "MMSE": lambda n, k, nk, lb, m, d: Fraction(16 * n**3 + 3 * n**2),
    "BD": lambda n, k, nk, lb, m, d: Fraction(_bd(n, k, nk)),
    "RBD": lambda n, k, nk, lb, m, d: Fraction(_rbd(n, k, nk)),
    "ZF-THP": lambda n, k, nk, lb, m, d: _zf_thp(n),
    "MMSE-THP-INV": lambda n, k, nk, lb, m, d: Fraction(24 * n**4 + 48 * n**3 + n**2),
    "MMSE-THP": lambda n, k, nk, lb, m, d: _mmse_thp(n),
    "MB-ZF-THP": lambda n, k, nk, lb, m, d: lb * _zf_thp(n),
    "MB-MMSE-THP": lambda n, k, nk, lb, m, d: lb * _mmse_thp(n),
    "VP": lambda n, k, nk, lb, m, d: _vp(n, m, d),
}

# rows whose algorithm is not implemented here, only counted
ANALYTIC_ONLY = frozenset({"BD", "RBD", "MMSE-THP-INV", "VP"})

TABLE_ORDER = ("ZF", "MMSE", "BD", "RBD", "ZF-THP", "MMSE-THP-INV", "MMSE-THP",
               "MB-ZF-THP", "MB-MMSE-THP", "VP")


def flops(algorithm: str, n: int, K: int = 1, N_k: int = 1, L_B: int = 1,
          M: int = 4, d: float = 1.0) -> FlopReport:
    """Closed-form FLOP count for one precoder computation.

    Counts are evaluated in exact rational arithmetic and rounded half up to
    an integer. ``MMSE-THP-INV`` is the inversion-based MMSE-THP baseline;
    ``MMSE-THP`` is the extended-matrix LQ variant.
    """
    key = algorithm.upper()
    if key not in _FORMULAS:
        raise UnsupportedAlgorithm(algorithm)
    if n < 1 or K < 1 or N_k < 1 or L_B < 1:
        raise ValueError("dimensions and branch count must be positive")
    value = _round_half_up(_FORMULAS[key](n, K, N_k, L_B, M, d))
    return FlopReport(key, value, key in ANALYTIC_ONLY)


def flop_table(n: int, K: int, N_k: int, L_B: int, M: int = 4, d: float = 1.0) -> list[FlopReport]:
    return [flops(a, n, K, N_k, L_B, M, d) for a in TABLE_ORDER]
