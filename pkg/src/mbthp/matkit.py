"""Dense complex matrix helpers and LQ factorizations.

Matrices are plain ``complex128`` numpy arrays. Permutations are index
vectors; a dense permutation matrix is built only on request.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from mbthp import _kernels
from mbthp.errors import DimensionMismatch, RankDeficient

__all__ = [
    "LqFactors", "Permutation", "as_matrix", "lq", "lq_pivoted",
    "lq_extended", "permute_rows", "kron", "forward_solve", "hermitian",
    "frobenius",
]


def as_matrix(a) -> np.ndarray:
    """Validate and convert ``a`` to a finite 2-D complex array."""
    m = np.array(a, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionMismatch(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


class LqFactors(NamedTuple):
    l: np.ndarray
    q: np.ndarray

    @property
    def diag(self) -> np.ndarray:
        return np.real(np.diag(self.l)).copy()


@dataclass(frozen=True)
class Permutation:
    """A bijection on ``{0, ..., n-1}`` stored as an index vector.

    Applied to rows, ``order[i]`` names the input row that lands at row ``i``.
    """

    order: tuple

    def __post_init__(self):
        order = tuple(int(i) for i in self.order)
        if sorted(order) != list(range(len(order))):
            raise ValueError(f"not a permutation: {order}")
        object.__setattr__(self, "order", order)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    def __len__(self) -> int:
        return len(self.order)

    @property
    def index(self) -> np.ndarray:
        return np.asarray(self.order, dtype=np.int64)

    def inverse(self) -> "Permutation":
        inv = np.empty(len(self), dtype=np.int64)
        inv[self.index] = np.arange(len(self))
        return Permutation(tuple(inv))

    def then(self, other: "Permutation") -> "Permutation":
        """Permutation equal to applying ``self`` first and ``other`` second."""
        return Permutation(tuple(self.index[other.index]))

    def matrix(self) -> np.ndarray:
        n = len(self)
        m = np.zeros((n, n))
        m[np.arange(n), self.index] = 1.0
        return m

    @classmethod
    def from_matrix(cls, m) -> "Permutation":
        m = np.asarray(m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch("permutation matrix must be square")
        if not (np.all((m == 0) | (m == 1)) and np.all(m.sum(0) == 1)
                and np.all(m.sum(1) == 1)):
            raise ValueError("not a permutation matrix")
        return cls(tuple(np.argmax(m, axis=1)))


def lq(a) -> LqFactors:
    """LQ factorization by Householder reflections.

    ``l`` is lower triangular with a real, strictly positive diagonal and
    ``q`` has orthonormal rows. Raises :class:`RankDeficient` when a pivot
    falls below ``1e-12 * ||a||_F``.
    """
    a = as_matrix(a)
    if a.shape[0] > a.shape[1]:
        raise DimensionMismatch(f"lq needs rows <= cols, got {a.shape}")
    l, q = _kernels.lq_factor(a)
    return LqFactors(l, q)


def lq_pivoted(a) -> tuple[Permutation, LqFactors]:
    """Row-pivoted LQ: ``P a = L Q`` with non-increasing ``|l_ii|``.

    At step ``k`` the remaining row with the largest norm after removing
    its projection on the rows already chosen is taken next.
    """
    a = as_matrix(a)
    n = a.shape[0]
    if a.shape[1] != n:
        raise DimensionMismatch("lq_pivoted needs a square matrix")
    tol = _kernels._fallback.RANK_TOL * np.linalg.norm(a)
    resid = a.copy()
    remaining = list(range(n))
    order = []
    for _ in range(n):
        norms = np.linalg.norm(resid[remaining], axis=1)
        k = int(np.argmax(norms))
        if not norms[k] > tol:
            raise RankDeficient(f"pivot {len(order)} below {tol:.3e}")
        pick = remaining.pop(k)
        order.append(pick)
        qrow = resid[pick] / norms[k]
        resid[remaining] -= np.outer(resid[remaining] @ qrow.conj(), qrow)
    perm = Permutation(tuple(order))
    return perm, lq(permute_rows(a, perm))


def lq_extended(h, sigma_n: float) -> tuple[LqFactors, np.ndarray, np.ndarray]:
    """LQ of the extended matrix ``[h, sigma_n I]``.

    Returns the factors together with the column split ``q1`` (first
    ``h.shape[1]`` columns) and ``q2`` (last ``h.shape[0]`` columns).
    """
    h = as_matrix(h)
    n_r, n_t = h.shape
    ext = np.hstack([h, sigma_n * np.eye(n_r)])
    f = lq(ext)
    return f, f.q[:, :n_t], f.q[:, n_t:]


def permute_rows(m, p: Permutation) -> np.ndarray:
    m = np.asarray(m)
    if len(p) != m.shape[0]:
        raise DimensionMismatch(f"permutation of size {len(p)} for {m.shape[0]} rows")
    return m[p.index]


def kron(a, b) -> np.ndarray:
    return np.kron(np.asarray(a), np.asarray(b))


def hermitian(a) -> np.ndarray:
    return np.asarray(a).conj().T


def frobenius(a) -> float:
    return float(np.linalg.norm(a))


def forward_solve(l, v) -> np.ndarray:
    """Solve ``l x = v`` for lower-triangular ``l`` by forward substitution."""
    l = np.asarray(l, dtype=np.complex128)
    v = np.asarray(v, dtype=np.complex128)
    n = l.shape[0]
    if l.shape != (n, n) or v.shape[0] != n:
        raise DimensionMismatch(f"shapes {l.shape} and {v.shape} do not match")
    x = np.zeros_like(v)
    for i in range(n):
        x[i] = (v[i] - l[i, :i] @ x[:i]) / l[i, i]
    return x
