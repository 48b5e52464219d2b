"""Gray-mapped QPSK / 16-QAM, the lattice modulo operator and the slicer.

Labels are integers whose high half of bits selects the in-phase level and
whose low half selects the quadrature level. A point's index in
``Constellation.points`` equals its label.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from mbthp._kernels import modulo as _modulo
from mbthp.errors import LengthMismatch

__all__ = ["Constellation", "QPSK", "QAM16", "get_constellation", "modulate",
           "demodulate", "modulo", "slice_symbols", "bits_to_labels",
           "labels_to_bits"]


def _gray(n: int) -> np.ndarray:
    codes = np.arange(n)
    return codes ^ (codes >> 1)


@dataclass(frozen=True)
class Constellation:
    name: str
    bits_per_axis: int
    tau: float
    # per-axis amplitude levels in ascending order and the Gray code of each
    levels: np.ndarray = field(repr=False)
    axis_gray: np.ndarray = field(repr=False)

    @property
    def bits_per_symbol(self) -> int:
        return 2 * self.bits_per_axis

    @property
    def size(self) -> int:
        return 1 << self.bits_per_symbol

    @property
    def points(self) -> np.ndarray:
        """Symbols indexed by label."""
        inv = np.argsort(self.axis_gray)
        lab = np.arange(self.size)
        i_code = lab >> self.bits_per_axis
        q_code = lab & ((1 << self.bits_per_axis) - 1)
        return self.levels[inv[i_code]] + 1j * self.levels[inv[q_code]]

    @property
    def min_distance(self) -> float:
        return float(self.levels[1] - self.levels[0])


def _square_qam(name: str, bits_per_axis: int) -> Constellation:
    m = 1 << bits_per_axis
    raw = np.arange(m) * 2.0 - (m - 1)
    scale = np.sqrt(2.0 * np.mean(raw**2))
    levels = raw / scale
    # descending amplitude walks the Gray sequence, so code 0 is the top level
    axis_gray = _gray(m)[::-1].copy()
    tau = m * (levels[1] - levels[0])
    levels.setflags(write=False)
    axis_gray.setflags(write=False)
    return Constellation(name, bits_per_axis, float(tau), levels, axis_gray)


QPSK = _square_qam("QPSK", 1)
QAM16 = _square_qam("QAM16", 2)

_BY_NAME = {"QPSK": QPSK, "QAM16": QAM16, "16QAM": QAM16, "16-QAM": QAM16}


def get_constellation(name: str) -> Constellation:
    try:
        return _BY_NAME[name.upper()]
    except KeyError:
        raise ValueError(f"unknown modulation {name!r}") from None


def bits_to_labels(bits, bits_per_symbol: int) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if bits.size % bits_per_symbol:
        raise LengthMismatch(
            f"{bits.size} bits is not a multiple of {bits_per_symbol}")
    weights = 1 << np.arange(bits_per_symbol - 1, -1, -1)
    return bits.reshape(-1, bits_per_symbol) @ weights


def labels_to_bits(labels, bits_per_symbol: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).ravel()
    shifts = np.arange(bits_per_symbol - 1, -1, -1)
    return ((labels[:, None] >> shifts) & 1).ravel().astype(np.uint8)


def modulate(bits, c: Constellation) -> np.ndarray:
    """Map a bit vector (MSB first per symbol) to unit-energy symbols."""
    return c.points[bits_to_labels(bits, c.bits_per_symbol)]


def modulo(x, tau: float):
    """Fold each of the real and imaginary parts into ``[-tau/2, tau/2)``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    out = _modulo(x, tau)
    return complex(out) if np.ndim(out) == 0 else out


def _nearest_level(vals: np.ndarray, c: Constellation) -> np.ndarray:
    pos = (vals - c.levels[0]) / c.min_distance
    # ceil(pos - 0.5) rounds exact midpoints down, toward the lower level
    idx = np.ceil(pos - 0.5)
    return np.clip(idx, 0, c.levels.size - 1).astype(np.int64)


def slice_labels(r, c: Constellation) -> np.ndarray:
    """Nearest-point labels for received symbols.

    Decisions are per axis. At an exact midpoint the decision goes to the
    point with the lower label.
    """
    r = np.asarray(r, dtype=np.complex128)
    ii = _nearest_level(r.real, c)
    qq = _nearest_level(r.imag, c)
    # break midpoint ties toward the lower label: the lower level on each axis
    # is not always the lower Gray code, so recheck the adjacent level
    ii = _lower_label_on_tie(r.real, ii, c)
    qq = _lower_label_on_tie(r.imag, qq, c)
    return (c.axis_gray[ii] << c.bits_per_axis) | c.axis_gray[qq]


def _lower_label_on_tie(vals, idx, c: Constellation):
    # a few ulps of slack so midpoints written as decimals still count as ties
    here = np.abs(c.levels[idx] - vals)
    for step in (1, -1):
        other = np.clip(idx + step, 0, c.levels.size - 1)
        gap = np.abs(c.levels[other] - vals) - here
        tie = (other != idx) & (np.abs(gap) <= 1e-12 * c.min_distance)
        idx = np.where(tie & (c.axis_gray[other] < c.axis_gray[idx]), other, idx)
    return idx


def slice_symbols(r, c: Constellation) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(symbols, bits)`` of the nearest constellation points."""
    labels = slice_labels(r, c)
    return c.points[labels], labels_to_bits(labels, c.bits_per_symbol)


def demodulate(r, c: Constellation) -> np.ndarray:
    return slice_symbols(r, c)[1]
