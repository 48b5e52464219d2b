"""THP filter construction, multi-branch selection and the per-frame
encode/receive paths, plus linear ZF/MMSE baselines.

Two structures are supported. Centralized (``"cTHP"``) applies the diagonal
scaling at the transmitter and a common gain ``beta`` at every receiver.
Decentralized (``"dTHP"``) leaves the scaling to each receiver.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from mbthp import _kernels
from mbthp.errors import ConfigInvalid, DimensionMismatch, RankDeficient
from mbthp.matkit import Permutation, as_matrix, lq, lq_extended
from mbthp.modem import Constellation, modulo, slice_labels
from mbthp.patterns import TransmitPattern

__all__ = ["PrecoderFilters", "EncodedFrame", "LinearPrecoder",
           "CENTRALIZED", "DECENTRALIZED", "zf_filters", "mmse_filters",
           "build_filters", "encode", "receive", "detect", "mesc_score",
           "mb_select", "linear_precode", "linear_receive"]

CENTRALIZED = "cTHP"
DECENTRALIZED = "dTHP"
_STRUCTURES = {"cthp": CENTRALIZED, "c": CENTRALIZED,
               "centralized": CENTRALIZED, "dthp": DECENTRALIZED,
               "d": DECENTRALIZED, "decentralized": DECENTRALIZED}


def _structure(name: str) -> str:
    try:
        return _STRUCTURES[name.lower()]
    except KeyError:
        raise ConfigInvalid(f"unknown THP structure {name!r}") from None


def _mode(name: str) -> str:
    m = name.upper()
    if m not in ("ZF", "MMSE"):
        raise ConfigInvalid(f"unknown precoder mode {name!r}")
    return m


@dataclass(frozen=True)
class PrecoderFilters:
    l: np.ndarray
    b: np.ndarray
    f_effective: np.ndarray
    g_diag: np.ndarray
    beta: float  # nan for MMSE-cTHP: fixed per frame by encode()
    l_diag: np.ndarray
    structure: str
    mode: str
    branch: Optional[TransmitPattern] = None

    @property
    def centralized(self) -> bool:
        return self.structure == CENTRALIZED

    @property
    def score(self) -> float:
        return mesc_score(self.l_diag)

    @property
    def perm(self) -> Permutation:
        if self.branch is None:
            return Permutation.identity(self.l_diag.size)
        return self.branch.perm


@dataclass(frozen=True)
class EncodedFrame:
    x: np.ndarray
    tx: np.ndarray
    v: np.ndarray
    v_variance: float
    beta: float


def mesc_score(l_diag) -> float:
    """Sum of the per-layer error weights ``1 / l_ii**2``."""
    l_diag = np.asarray(l_diag, dtype=float)
    return float(np.sum(1.0 / l_diag**2))


def _assemble(l, f_eff, structure, mode, beta, branch):
    l_diag = np.real(np.diag(l)).copy()
    g = 1.0 / l_diag
    b = l * g[None, :] if structure == CENTRALIZED else g[:, None] * l
    return PrecoderFilters(l, b, f_eff, g, beta, l_diag, structure, mode, branch)


def zf_filters(h_ordered, structure: str,
               branch: Optional[TransmitPattern] = None) -> PrecoderFilters:
    """ZF-THP filters from the LQ factors of an already ordered channel."""
    structure = _structure(structure)
    h = as_matrix(h_ordered)
    if h.shape[0] != h.shape[1]:
        raise DimensionMismatch(f"square channel required, got {h.shape}")
    l, q = lq(h)
    l_diag = np.real(np.diag(l))
    beta = float(np.sqrt(np.sum(1.0 / l_diag**2))) if structure == CENTRALIZED else 1.0
    return _assemble(l, q.conj().T, structure, "ZF", beta, branch)


def mmse_filters(h_ordered, sigma_n_sq: float, structure: str,
                 branch: Optional[TransmitPattern] = None) -> PrecoderFilters:
    """MMSE-THP filters from the LQ factors of ``[H, sigma_n I]``.

    The feedforward filter is the leading column block of the extended
    ``Q`` conjugate-transposed.
    """
    structure = _structure(structure)
    if not sigma_n_sq > 0:
        raise ValueError("sigma_n_sq must be positive")
    h = as_matrix(h_ordered)
    if h.shape[0] != h.shape[1]:
        raise DimensionMismatch(f"square channel required, got {h.shape}")
    f, q1, _ = lq_extended(h, float(np.sqrt(sigma_n_sq)))
    beta = float("nan") if structure == CENTRALIZED else 1.0
    return _assemble(f.l, q1.conj().T, structure, "MMSE", beta, branch)


def build_filters(h_ordered, mode: str, structure: str, sigma_n_sq: float = 0.0,
                  branch: Optional[TransmitPattern] = None) -> PrecoderFilters:
    if _mode(mode) == "ZF":
        return zf_filters(h_ordered, structure, branch)
    return mmse_filters(h_ordered, sigma_n_sq, structure, branch)


def encode(s, filters: PrecoderFilters, c: Constellation,
           sigma_s_sq: float = 1.0) -> EncodedFrame:
    """Successive cancellation, feedforward filtering and power scaling.

    ``s`` is in branch (ordered) stream order, shape ``(S,)`` or ``(S, P)``
    for a packet of ``P`` symbol vectors.
    """
    s = np.asarray(s, dtype=np.complex128)
    if s.shape[0] != filters.l_diag.size:
        raise DimensionMismatch(f"{s.shape[0]} symbols for {filters.l_diag.size} streams")
    x, v = _kernels.thp_feedback(filters.l, s, c.tau, filters.centralized)
    if filters.centralized:
        u = filters.f_effective @ (x * _bcast(filters.g_diag, x))
        if filters.mode == "MMSE":
            n_vec = 1 if u.ndim == 1 else u.shape[1]
            beta = float(np.sqrt(np.sum(np.abs(u) ** 2) / (n_vec * s.shape[0] * sigma_s_sq)))
        else:
            beta = filters.beta
        tx = u / beta
    else:
        beta = 1.0
        tx = filters.f_effective @ x
    return EncodedFrame(x, tx, v, float(np.mean(np.abs(v) ** 2)), beta)


def _bcast(vec, like):
    return vec if like.ndim == 1 else vec[:, None]


def receive(frame: EncodedFrame, h_true_ordered, noise,
            filters: PrecoderFilters) -> np.ndarray:
    """Receiver-side scaled observations, still in branch stream order."""
    y = np.asarray(h_true_ordered) @ frame.tx + np.asarray(noise)
    if filters.centralized:
        return frame.beta * y
    return y * _bcast(filters.g_diag, y)


def detect(r_ordered, perm: Permutation, c: Constellation) -> np.ndarray:
    """Undo the branch ordering, fold by the modulo and slice to labels."""
    r = np.empty_like(np.asarray(r_ordered))
    r[perm.index] = r_ordered
    return slice_labels(modulo(r, c.tau), c)


def mb_select(h, patterns: Sequence[TransmitPattern], mode: str, structure: str,
              sigma_n_sq: float = 0.0) -> tuple[PrecoderFilters, int]:
    """Pick the branch with the smallest error score.

    ``h`` is the physical (unordered) channel. Branches whose factorization
    is rank deficient are skipped; ties go to the earliest branch. Returns
    the filters and the 0-based position of the chosen pattern.
    """
    if len(patterns) < 1:
        raise ValueError("need at least one pattern")
    h = as_matrix(getattr(h, "h", h))
    best, best_idx = None, -1
    for idx, pat in enumerate(patterns):
        try:
            f = build_filters(h[pat.index], mode, structure, sigma_n_sq, pat)
        except RankDeficient:
            continue
        if best is None or f.score < best.score:
            best, best_idx = f, idx
    if best is None:
        raise RankDeficient("every branch is rank deficient")
    return best, best_idx


@dataclass(frozen=True)
class LinearPrecoder:
    p: np.ndarray
    beta: float


def linear_precode(h, mode: str, sigma_n_sq: float = 0.0,
                   sigma_s_sq: float = 1.0) -> LinearPrecoder:
    """Channel-inversion precoder ``P`` and its power normalization.

    Transmit ``P s / beta``; with ``beta**2 = ||P||_F**2 sigma_s_sq / S`` the
    average transmit energy per vector equals ``S sigma_s_sq``.
    """
    h = as_matrix(h)
    n_r, n_t = h.shape
    if _mode(mode) == "MMSE":
        ext = np.hstack([h, np.sqrt(sigma_n_sq) * np.eye(n_r)])
    else:
        ext = h
    sv = np.linalg.svd(ext, compute_uv=False)
    if not sv[-1] > 1e-12 * np.linalg.norm(ext):
        raise RankDeficient("channel does not have full row rank")
    gram = ext @ ext.conj().T
    # only the first n_t rows of ext^H (h^H) feed the antennas
    p = np.linalg.solve(gram.T, h.conj()).T
    beta = float(np.sqrt(np.sum(np.abs(p) ** 2) * sigma_s_sq / n_r))
    return LinearPrecoder(p, beta)


def linear_receive(lin: LinearPrecoder, s, h_true, noise) -> np.ndarray:
    tx = lin.p @ np.asarray(s) / lin.beta
    return lin.beta * (np.asarray(h_true) @ tx + np.asarray(noise))
