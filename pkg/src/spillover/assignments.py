"""Effective treatment assignments and their canonical enumeration.

An effective assignment summarizes everything a unit's outcome is allowed to
depend on: its own binary treatment and a summary of its neighbors'
treatments. Three summaries are supported: the number of treated neighbors
(``count`` mode, for exchangeable outcomes), the full ordered neighbor vector
(``vector`` mode), and the number of treated units inside a declared
reference group (``ref_count`` mode).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidGroupSizeError, MissingOrderingError

EXCHANGEABLE = "exchangeable"
SATURATED = "saturated"
REFERENCE = "reference"

MODES = (EXCHANGEABLE, SATURATED)

# Saturated enumeration is exponential in group size; keep it tractable.
MAX_SATURATED_NEIGHBORS = 20


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


@dataclass(frozen=True)
class EffectiveAssignment:
    """One point of the effective-assignment set.

    ``own`` is the unit's own treatment (0/1). ``peers`` is either the
    treated-neighbor count (``count`` / ``ref_count`` kinds) or the ordered
    tuple of neighbor treatment bits (``vector`` kind).
    """

    own: int
    peers: int | tuple[int, ...]
    kind: str = "count"

    def __post_init__(self):
        if self.own not in (0, 1):
            raise ValueError(f"own treatment must be 0 or 1, got {self.own!r}")
        if self.kind in ("count", "ref_count"):
            if not isinstance(self.peers, int) or self.peers < 0:
                raise ValueError(f"treated-neighbor count must be a nonnegative integer, got {self.peers!r}")
        elif self.kind == "vector":
            bits = tuple(int(b) for b in self.peers)
            if any(b not in (0, 1) for b in bits):
                raise ValueError(f"neighbor vector must contain only 0/1, got {self.peers!r}")
            object.__setattr__(self, "peers", bits)
        else:
            raise ValueError(f"unknown assignment kind {self.kind!r}")

    @classmethod
    def count(cls, own: int, treated_neighbors: int) -> "EffectiveAssignment":
        return cls(own, treated_neighbors, "count")

    @classmethod
    def vector(cls, own: int, bits) -> "EffectiveAssignment":
        return cls(own, tuple(int(b) for b in bits), "vector")

    @classmethod
    def ref_count(cls, own: int, treated_in_reference: int) -> "EffectiveAssignment":
        return cls(own, treated_in_reference, "ref_count")

    @property
    def n_treated_peers(self) -> int:
        """Treated-neighbor count; popcount of the vector in vector kind."""
        if self.kind == "vector":
            return sum(self.peers)
        return self.peers

    def to_count(self) -> "EffectiveAssignment":
        """Collapse a vector assignment to its count-mode summary."""
        return EffectiveAssignment.count(self.own, self.n_treated_peers)

    def index(self, n: int) -> int:
        """Position in the canonical enumeration for group size n + 1."""
        if self.kind == "vector":
            if len(self.peers) != n:
                raise ValueError(f"vector length {len(self.peers)} does not match n={n}")
            bits = 0
            for b in self.peers:
                bits = (bits << 1) | b
            return self.own * (1 << n) + bits
        if self.kind == "ref_count":
            # reference sets differ across units, so there is no shared cell layout
            raise ValueError("reference-count assignments have no canonical enumeration")
        if not 0 <= self.peers <= n:
            raise ValueError(f"treated-neighbor count {self.peers} out of range for n={n}")
        return self.own * (n + 1) + self.peers

    def __str__(self):
        if self.kind == "vector":
            return f"({self.own},{''.join(str(b) for b in self.peers)})"
        if self.kind == "ref_count":
            return f"({self.own},{self.peers}R)"
        return f"({self.own},{self.peers})"


@lru_cache(maxsize=None)
def enumerate_assignments(n: int, mode: str = EXCHANGEABLE) -> tuple[EffectiveAssignment, ...]:
    """All effective assignments for groups with ``n`` neighbors, in canonical order.

    Exchangeable mode yields the 2(n+1) count assignments ordered with own
    treatment ascending, then the count; saturated mode yields the 2^(n+1)
    vector assignments in lexicographic bit order.
    """
    check_mode(mode)
    if n < 1:
        raise InvalidGroupSizeError(f"need at least one neighbor per unit, got n={n}")
    if mode == EXCHANGEABLE:
        return tuple(
            EffectiveAssignment.count(d, s) for d in (0, 1) for s in range(n + 1)
        )
    if n > MAX_SATURATED_NEIGHBORS:
        raise InvalidGroupSizeError(
            f"saturated enumeration is capped at n={MAX_SATURATED_NEIGHBORS} neighbors, got n={n}"
        )
    out = []
    for d in (0, 1):
        for bits in range(1 << n):
            vec = tuple((bits >> (n - 1 - j)) & 1 for j in range(n))
            out.append(EffectiveAssignment.vector(d, vec))
    return tuple(out)


def n_assignments(n: int, mode: str = EXCHANGEABLE) -> int:
    """Cardinality of the effective-assignment set."""
    check_mode(mode)
    if n < 1:
        raise InvalidGroupSizeError(f"need at least one neighbor per unit, got n={n}")
    return 2 * (n + 1) if mode == EXCHANGEABLE else 1 << (n + 1)


def observed_assignment(
    unit_index: int,
    group_treatments,
    mode: str = EXCHANGEABLE,
    *,
    neighbor_rank=None,
    reference_set=None,
) -> EffectiveAssignment:
    """Effective assignment observed by one unit given its group's treatments.

    ``group_treatments`` holds the 0/1 treatments of the whole group
    (including the unit itself). In saturated mode, ``neighbor_rank`` must
    assign each group member a rank 1..group size; the unit's neighbor vector
    lists the other members' treatments in ascending rank. If
    ``reference_set`` (an iterable of unit indices) is given, the peer
    summary counts treated units inside that set only.
    """
    bits = [int(b) for b in group_treatments]
    size = len(bits)
    if not 0 <= unit_index < size:
        raise IndexError(f"unit index {unit_index} out of range for group of size {size}")
    if any(b not in (0, 1) for b in bits):
        raise ValueError("group treatments must be 0/1")
    own = bits[unit_index]

    if reference_set is not None or mode == REFERENCE:
        if reference_set is None:
            raise ValueError("reference mode requires a reference_set")
        ref = sorted(set(int(j) for j in reference_set) - {unit_index})
        if any(not 0 <= j < size for j in ref):
            raise IndexError("reference set indices must lie within the group")
        return EffectiveAssignment.ref_count(own, sum(bits[j] for j in ref))

    check_mode(mode)
    if mode == EXCHANGEABLE:
        return EffectiveAssignment.count(own, sum(bits) - own)

    if neighbor_rank is None:
        raise MissingOrderingError(
            "saturated mode requires a neighbor_rank ordering for the group"
        )
    ranks = [int(r) for r in neighbor_rank]
    if sorted(ranks) != list(range(1, size + 1)):
        raise MissingOrderingError(
            f"neighbor_rank must be a permutation of 1..{size}, got {ranks}"
        )
    others = sorted((j for j in range(size) if j != unit_index), key=lambda j: ranks[j])
    return EffectiveAssignment.vector(own, tuple(bits[j] for j in others))


# ---------------------------------------------------------------------------
# Vectorized code helpers shared by the estimators and the simulation harness.
# Codes follow the canonical enumeration order above.
# ---------------------------------------------------------------------------

def exchangeable_codes(treatments: np.ndarray) -> np.ndarray:
    """Cell codes d*(n+1)+s for a (G, n+1) group-treatment matrix."""
    D = np.asarray(treatments)
    n = D.shape[1] - 1
    s = D.sum(axis=1, keepdims=True) - D
    return (D * (n + 1) + s).astype(np.int64)


def saturated_codes(treatments: np.ndarray, ranks: np.ndarray | None = None) -> np.ndarray:
    """Cell codes d*2^n + neighbor bits for a (G, n+1) group-treatment matrix.

    ``ranks`` holds each member's rank 1..n+1 per group; when omitted, column
    order is used as the ranking.
    """
    D = np.asarray(treatments)
    G, size = D.shape
    n = size - 1
    if n > MAX_SATURATED_NEIGHBORS:
        raise InvalidGroupSizeError(
            f"saturated enumeration is capped at n={MAX_SATURATED_NEIGHBORS} neighbors, got n={n}"
        )
    if ranks is not None:
        order = np.argsort(np.asarray(ranks), axis=1, kind="stable")
        M = np.take_along_axis(D, order, axis=1)
    else:
        order = None
        M = D
    codes = np.empty((G, size), dtype=np.int64)
    for j in range(size):
        weights = np.empty(size, dtype=np.int64)
        weights[:j] = 1 << (n - 1 - np.arange(j))
        weights[j] = 1 << n  # own-treatment bit
        weights[j + 1:] = 1 << (n - np.arange(j + 1, size))
        codes[:, j] = M @ weights
    if order is not None:
        # undo the rank sort so codes align with the original column layout
        out = np.empty_like(codes)
        np.put_along_axis(out, order, codes, axis=1)
        return out
    return codes
