"""Transmit patterns that reorder users and their streams.

A pattern is a row permutation of the stacked channel that moves whole
user blocks, optionally reversing part of the stream order inside each
block. Row ``a`` of the permuted channel is row ``perm.order[a]`` of the
original.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mbthp.channel import SystemGeometry
from mbthp.matkit import Permutation, kron

__all__ = ["TransmitPattern", "user_orderings", "stream_orderings",
           "branch_pairs", "package", "build_patterns", "kron_pattern",
           "format_patterns"]


@dataclass(frozen=True)
class TransmitPattern:
    perm: Permutation
    user_state: int
    stream_states: tuple
    branch_index: int

    @property
    def index(self) -> np.ndarray:
        return self.perm.index


def _partial_reversal(n: int, keep: int) -> Permutation:
    # identity on the first `keep` entries, exchange on the rest
    keep = min(keep, n)
    return Permutation(tuple(range(keep)) + tuple(range(n - 1, keep - 1, -1)))


def user_orderings(num_users: int) -> list[Permutation]:
    """The ``num_users`` inter-user orderings; the first is the identity."""
    if num_users < 1:
        raise ValueError("need at least one user")
    out = [Permutation.identity(num_users)]
    for i in range(2, num_users + 1):
        out.append(_partial_reversal(num_users, i - 2))
    return out


def stream_orderings(n_streams: int, max_states: int) -> list[Permutation]:
    """Up to ``min(max_states, n_streams)`` orderings of one user's streams."""
    if n_streams < 1 or max_states < 1:
        raise ValueError("stream count and state count must be positive")
    out = [Permutation.identity(n_streams)]
    for j in range(2, min(max_states, n_streams) + 1):
        out.append(_partial_reversal(n_streams, j - 2))
    return out


def branch_pairs(num_users: int, max_states: int, max_branches: int) -> list[tuple[int, int]]:
    """1-based ``(user_state, stream_state)`` pairs in selection order.

    User orderings vary fastest, so a small branch budget spends itself on
    inter-user diversity before intra-user reorderings.
    """
    if max_branches < 1:
        raise ValueError("max_branches must be at least 1")
    pairs = [(i, j) for j in range(1, max_states + 1)
             for i in range(1, num_users + 1)]
    return pairs[:max_branches]


def package(geometry: SystemGeometry, user_state: int, stream_state: int) -> Permutation:
    """Combine one user ordering with each user's own stream ordering.

    Output block ``a`` carries source user ``b = order[a]`` and applies that
    user's stream ordering, so block sizes follow the source users.
    """
    k = geometry.num_users
    j_max = max(geometry.users)
    uorder = user_orderings(k)[user_state - 1].order
    offsets = geometry.offsets
    rows = []
    for src in uorder:
        n = geometry.users[src]
        states = stream_orderings(n, j_max)
        ts = states[min(stream_state, n) - 1]
        rows.extend(offsets[src] + t for t in ts.order)
    return Permutation(tuple(rows))


def kron_pattern(num_users: int, antennas: int, user_state: int,
                 stream_state: int) -> Permutation:
    """Equal-antenna shortcut via the Kronecker product of the two orderings."""
    tu = user_orderings(num_users)[user_state - 1].matrix()
    ts = stream_orderings(antennas, antennas)[min(stream_state, antennas) - 1].matrix()
    return Permutation.from_matrix(kron(tu, ts).real.astype(int))


def build_patterns(geometry: SystemGeometry, max_branches: int) -> list[TransmitPattern]:
    """Pattern list capped at ``min(max_branches, K * J)``; branch 1 is the identity."""
    j_max = max(geometry.users)
    out = []
    for l, (i, j) in enumerate(branch_pairs(geometry.num_users, j_max, max_branches), 1):
        stream_states = tuple(min(j, n) for n in geometry.users)
        out.append(TransmitPattern(package(geometry, i, j), i, stream_states, l))
    return out


def format_patterns(patterns: list[TransmitPattern]) -> str:
    """One line per branch: ``l,i,(j_1..j_K),perm-indices``.

    Indices are 0-based and space separated.
    """
    lines = []
    for p in patterns:
        js = " ".join(str(j) for j in p.stream_states)
        perm = " ".join(str(i) for i in p.perm.order)
        lines.append(f"{p.branch_index},{p.user_state},({js}),{perm}")
    return "\n".join(lines) + "\n"
