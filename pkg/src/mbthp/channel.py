"""Seeded MU-MIMO channel draws: i.i.d. Rayleigh, transmit-correlated and
CSI-perturbed.

Every random draw comes from a counter-based Philox substream addressed by
``(master_seed, kind, index)``, so a trial's channel, data and CSI error do
not depend on which worker runs it or in what order.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from mbthp.errors import ConfigInvalid, DimensionMismatch, NotPositiveDefinite

__all__ = ["SystemGeometry", "ChannelRealization", "substream",
           "complex_gaussian", "draw_rayleigh", "exponential_correlation",
           "hermitian_sqrt", "apply_tx_correlation", "perturb_csi",
           "STREAM_CHANNEL", "STREAM_DATA", "STREAM_CSI"]

STREAM_CHANNEL = 0
STREAM_DATA = 1
STREAM_CSI = 2


@dataclass(frozen=True)
class SystemGeometry:
    num_tx: int
    users: tuple

    def __post_init__(self):
        users = tuple(int(n) for n in self.users)
        object.__setattr__(self, "users", users)
        if len(users) < 1 or any(n < 1 for n in users):
            raise ConfigInvalid(f"every user needs at least one antenna: {users}")
        if sum(users) != self.num_tx:
            raise ConfigInvalid(
                f"receive antennas {sum(users)} must equal transmit antennas {self.num_tx}")

    @classmethod
    def uniform(cls, num_users: int, antennas_per_user: int) -> "SystemGeometry":
        return cls(num_users * antennas_per_user, (antennas_per_user,) * num_users)

    @property
    def num_users(self) -> int:
        return len(self.users)

    @property
    def num_rx(self) -> int:
        return sum(self.users)

    @property
    def streams(self) -> int:
        return self.num_rx

    @property
    def offsets(self) -> tuple:
        """First row of each user's block in the stacked channel."""
        out, acc = [], 0
        for n in self.users:
            out.append(acc)
            acc += n
        return tuple(out)


@dataclass(frozen=True)
class ChannelRealization:
    h: np.ndarray
    geometry: SystemGeometry
    seed_tag: int = 0

    def __post_init__(self):
        s = self.geometry.streams
        if self.h.shape != (s, self.geometry.num_tx):
            raise DimensionMismatch(
                f"channel shape {self.h.shape} does not match geometry ({s}, {self.geometry.num_tx})")

    def user_block(self, k: int) -> np.ndarray:
        start = self.geometry.offsets[k]
        return self.h[start:start + self.geometry.users[k]]


@lru_cache(maxsize=64)
def _philox_key(master_seed: int, kind: int) -> tuple:
    words = np.random.SeedSequence([master_seed, kind]).generate_state(2, np.uint64)
    return int(words[0]), int(words[1])


def substream(master_seed: int, kind: int, index: int, attempt: int = 0) -> np.random.Generator:
    """Independent generator for one ``(kind, index)`` pair under a master seed.

    The key is derived from the seed and kind; the index and the redraw
    attempt occupy the two high counter words, so substreams never overlap
    for fewer than 2**128 draws each.
    """
    k0, k1 = _philox_key(int(master_seed), int(kind))
    bits = np.random.Philox(key=np.array([k0, k1], dtype=np.uint64),
                            counter=np.array([0, 0, index, attempt], dtype=np.uint64))
    return np.random.Generator(bits)


def complex_gaussian(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with the given variance."""
    g = rng.standard_normal((2,) + tuple(np.atleast_1d(shape)))
    return np.sqrt(variance / 2.0) * (g[0] + 1j * g[1])


def draw_rayleigh(geometry: SystemGeometry, rng: np.random.Generator,
                  seed_tag: int = 0) -> ChannelRealization:
    h = complex_gaussian(rng, (geometry.streams, geometry.num_tx))
    return ChannelRealization(h, geometry, seed_tag)


def exponential_correlation(n: int, r: float) -> np.ndarray:
    """Transmit covariance with entry ``(i, j)`` equal to ``r**(j - i)`` above
    the diagonal and its conjugate below."""
    idx = np.arange(n)
    lag = idx[None, :] - idx[:, None]
    upper = np.power(complex(r), np.abs(lag))
    return np.where(lag >= 0, upper, upper.conj())


def hermitian_sqrt(r_mat: np.ndarray) -> np.ndarray:
    """Unique Hermitian positive semi-definite square root."""
    w, v = np.linalg.eigh(r_mat)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def apply_tx_correlation(ch: ChannelRealization, r: float) -> ChannelRealization:
    """Return ``H R_t^{1/2}`` under the exponential correlation model."""
    if not (np.isreal(r) and -1.0 < float(np.real(r)) < 1.0):
        raise ConfigInvalid(f"correlation coefficient must be real with |r| < 1, got {r}")
    if r == 0:
        return ch
    r_t = exponential_correlation(ch.geometry.num_tx, float(np.real(r)))
    try:
        np.linalg.cholesky(r_t)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(f"correlation matrix for r={r} is not positive definite") from None
    return ChannelRealization(ch.h @ hermitian_sqrt(r_t), ch.geometry, ch.seed_tag)


def perturb_csi(ch: ChannelRealization, sigma_e_sq: float,
                rng: np.random.Generator) -> ChannelRealization:
    """Estimated channel ``H + E`` with i.i.d. error of variance ``sigma_e_sq``."""
    if sigma_e_sq < 0:
        raise ConfigInvalid("CSI error variance must be non-negative")
    if sigma_e_sq == 0:
        return ch
    err = complex_gaussian(rng, ch.h.shape, sigma_e_sq)
    return ChannelRealization(ch.h + err, ch.geometry, ch.seed_tag)
