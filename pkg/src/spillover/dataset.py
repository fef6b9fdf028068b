"""Array-backed container for units nested in groups."""

from __future__ import annotations

from dataclasses import dataclass
from collections import Counter

import numpy as np

from .assignments import (
    EXCHANGEABLE,
    check_mode,
    exchangeable_codes,
    saturated_codes,
)
from .errors import DataValidationError, MissingOrderingError, StratificationRequiredError


@dataclass(frozen=True, eq=False)
class GroupedDataset:
    """Units nested in groups, stored as flat arrays with group pointers.

    Groups appear in first-seen order; units keep their input order inside
    each group. ``indptr`` delimits group g as rows ``indptr[g]:indptr[g+1]``.
    Optional columns: a binary group-level saturation label ``saturation``
    (one entry per group), a per-unit ``neighbor_rank`` (permutation of
    1..group size inside each group) and per-unit ``reference_sets`` holding
    global indices of the units whose treatment can spill over.
    """

    group_labels: tuple[str, ...]
    indptr: np.ndarray
    unit_labels: tuple[str, ...]
    treatment: np.ndarray
    outcome: np.ndarray
    saturation: np.ndarray | None = None
    neighbor_rank: np.ndarray | None = None
    reference_sets: tuple[tuple[int, ...], ...] | None = None

    # -- construction -------------------------------------------------------

    @classmethod
    def from_arrays(
        cls,
        group_id,
        treatment,
        outcome,
        *,
        unit_id=None,
        saturation=None,
        neighbor_rank=None,
        reference_ids=None,
    ) -> "GroupedDataset":
        """Build and validate a dataset from per-row columns.

        ``reference_ids`` is an optional per-row iterable of unit ids (within
        the same group) forming each unit's reference set.
        """
        group_id = [str(g) for g in group_id]
        n_rows = len(group_id)
        if n_rows == 0:
            raise DataValidationError("dataset has no rows")

        D = np.asarray(treatment)
        if D.shape != (n_rows,):
            raise DataValidationError("treatment column length does not match group_id")
        if not np.isin(D, (0, 1)).all():
            bad = int(np.flatnonzero(~np.isin(D, (0, 1)))[0])
            raise DataValidationError(
                f"treatment must be 0 or 1, got {treatment[bad]!r}", row=bad + 1, column="treatment"
            )
        D = D.astype(np.int8)

        Y = np.asarray(outcome, dtype=np.float64)
        if Y.shape != (n_rows,):
            raise DataValidationError("outcome column length does not match group_id")
        if np.isnan(Y).any():
            bad = int(np.flatnonzero(np.isnan(Y))[0])
            raise DataValidationError("outcome is missing", row=bad + 1, column="outcome")

        if unit_id is None:
            unit_id = [str(i) for i in range(1, n_rows + 1)]
        else:
            unit_id = [str(u) for u in unit_id]
            if len(unit_id) != n_rows:
                raise DataValidationError("unit_id column length does not match group_id")

        # group rows by label, first-seen order
        labels: list[str] = []
        row_index: dict[str, list[int]] = {}
        for i, g in enumerate(group_id):
            if g not in row_index:
                row_index[g] = []
                labels.append(g)
            row_index[g].append(i)

        order = [i for g in labels for i in row_index[g]]
        sizes = np.array([len(row_index[g]) for g in labels], dtype=np.int64)
        indptr = np.concatenate([[0], np.cumsum(sizes)])

        perm = np.asarray(order)
        D = D[perm]
        Y = Y[perm]
        unit_id = [unit_id[i] for i in order]

        for g, lab in enumerate(labels):
            members = unit_id[indptr[g]:indptr[g + 1]]
            dupes = [u for u, c in Counter(members).items() if c > 1]
            if dupes:
                raise DataValidationError(
                    f"duplicate unit_id {dupes[0]!r} in group {lab!r}", column="unit_id"
                )

        sat = None
        if saturation is not None:
            raw = np.asarray(saturation)
            if raw.shape != (n_rows,):
                raise DataValidationError("saturation column length does not match group_id")
            raw = raw[perm]
            sat = np.empty(len(labels), dtype=np.int8)
            for g, lab in enumerate(labels):
                vals = np.unique(raw[indptr[g]:indptr[g + 1]])
                if len(vals) != 1:
                    raise DataValidationError(
                        f"saturation label varies within group {lab!r}", column="saturation"
                    )
                if vals[0] not in (0, 1):
                    raise DataValidationError(
                        f"saturation must be 0 or 1, got {vals[0]!r}", column="saturation"
                    )
                sat[g] = vals[0]

        rank = None
        if neighbor_rank is not None:
            raw = np.asarray(neighbor_rank)
            if raw.shape != (n_rows,):
                raise DataValidationError("neighbor_rank column length does not match group_id")
            rank = raw[perm].astype(np.int64)
            for g, lab in enumerate(labels):
                rg = rank[indptr[g]:indptr[g + 1]]
                if sorted(rg.tolist()) != list(range(1, len(rg) + 1)):
                    raise DataValidationError(
                        f"neighbor_rank must be a permutation of 1..{len(rg)} in group {lab!r}",
                        column="neighbor_rank",
                    )

        refs = None
        if reference_ids is not None:
            if len(reference_ids) != n_rows:
                raise DataValidationError("reference_ids column length does not match group_id")
            reordered = [reference_ids[i] for i in order]
            refs = []
            for g, lab in enumerate(labels):
                lo, hi = indptr[g], indptr[g + 1]
                local = {unit_id[i]: i for i in range(lo, hi)}
                for i in range(lo, hi):
                    ids = reordered[i] or ()
                    resolved = []
                    for uid in ids:
                        uid = str(uid)
                        if uid not in local:
                            raise DataValidationError(
                                f"reference id {uid!r} not found in group {lab!r}",
                                row=i + 1,
                                column="reference_ids",
                            )
                        if local[uid] != i:
                            resolved.append(local[uid])
                    refs.append(tuple(sorted(resolved)))
            refs = tuple(refs)

        return cls(
            group_labels=tuple(labels),
            indptr=indptr,
            unit_labels=tuple(unit_id),
            treatment=D,
            outcome=Y,
            saturation=sat,
            neighbor_rank=rank,
            reference_sets=refs,
        )

    # -- basic views ---------------------------------------------------------

    @property
    def n_groups(self) -> int:
        return len(self.group_labels)

    @property
    def n_units(self) -> int:
        return len(self.unit_labels)

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def group_codes(self) -> np.ndarray:
        """Per-unit group index 0..G-1."""
        return np.repeat(np.arange(self.n_groups), self.sizes)

    def size_summary(self) -> dict[int, int]:
        """Number of groups at each group size."""
        vals, counts = np.unique(self.sizes, return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, counts)}

    def single_size(self) -> int:
        """The common number of neighbors n, or raise if sizes are mixed."""
        sizes = set(self.sizes.tolist())
        if len(sizes) != 1:
            raise StratificationRequiredError(
                f"groups have mixed sizes {sorted(sizes)}; stratify by size first"
            )
        return int(sizes.pop()) - 1

    def subset_by_size(self, size: int) -> "GroupedDataset":
        """Dataset restricted to groups with ``size`` units."""
        keep = [g for g in range(self.n_groups) if self.indptr[g + 1] - self.indptr[g] == size]
        rows = [i for g in keep for i in range(self.indptr[g], self.indptr[g + 1])]
        row_map = {old: new for new, old in enumerate(rows)}
        return GroupedDataset(
            group_labels=tuple(self.group_labels[g] for g in keep),
            indptr=np.arange(0, size * len(keep) + 1, size),
            unit_labels=tuple(self.unit_labels[i] for i in rows),
            treatment=self.treatment[rows],
            outcome=self.outcome[rows],
            saturation=None if self.saturation is None else self.saturation[keep],
            neighbor_rank=None if self.neighbor_rank is None else self.neighbor_rank[rows],
            reference_sets=None
            if self.reference_sets is None
            else tuple(
                tuple(row_map[j] for j in self.reference_sets[i]) for i in rows
            ),
        )

    # -- assignment codes ----------------------------------------------------

    def treatment_matrix(self) -> np.ndarray:
        """(G, size) treatment matrix; requires a single group size."""
        n = self.single_size()
        return self.treatment.reshape(self.n_groups, n + 1)

    def assignment_codes(self, mode: str = EXCHANGEABLE) -> np.ndarray:
        """Per-unit cell code in the canonical enumeration for this size."""
        check_mode(mode)
        D = self.treatment_matrix()
        if mode == EXCHANGEABLE:
            return exchangeable_codes(D).ravel()
        if self.neighbor_rank is None:
            raise MissingOrderingError("saturated mode requires the neighbor_rank column")
        R = self.neighbor_rank.reshape(D.shape)
        return saturated_codes(D, R).ravel()

    def __repr__(self):
        sizes = ", ".join(f"{k}x{v}" for k, v in sorted(self.size_summary().items()))
        extras = [
            name
            for name, value in (
                ("saturation", self.saturation),
                ("neighbor_rank", self.neighbor_rank),
                ("reference_sets", self.reference_sets),
            )
            if value is not None
        ]
        extra = f", with {'/'.join(extras)}" if extras else ""
        return f"GroupedDataset({self.n_groups} groups, {self.n_units} units, sizes {{{sizes}}}{extra})"

    # -- equality ------------------------------------------------------------

    def __eq__(self, other) -> bool:
        if not isinstance(other, GroupedDataset):
            return NotImplemented
        def arr_eq(a, b):
            if a is None or b is None:
                return a is None and b is None
            return np.array_equal(a, b)
        return (
            self.group_labels == other.group_labels
            and self.unit_labels == other.unit_labels
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.treatment, other.treatment)
            and np.array_equal(self.outcome, other.outcome)
            and arr_eq(self.saturation, other.saturation)
            and arr_eq(self.neighbor_rank, other.neighbor_rank)
            and self.reference_sets == other.reference_sets
        )


def dataset_from_matrices(
    treatments: np.ndarray,
    outcomes: np.ndarray,
    *,
    saturation=None,
    with_rank: bool = False,
    group_prefix: str = "g",
) -> GroupedDataset:
    """Dataset from (G, size) treatment and outcome matrices.

    Convenience used by the simulation harness's fixture writer; ranks, when
    requested, follow column order.
    """
    D = np.asarray(treatments)
    Y = np.asarray(outcomes, dtype=np.float64)
    if D.shape != Y.shape:
        raise ValueError("treatment and outcome matrices must have the same shape")
    G, size = D.shape
    group_id = np.repeat([f"{group_prefix}{i + 1}" for i in range(G)], size)
    unit_id = [f"{group_prefix}{g + 1}u{j + 1}" for g in range(G) for j in range(size)]
    rank = np.tile(np.arange(1, size + 1), G) if with_rank else None
    sat = None if saturation is None else np.repeat(np.asarray(saturation), size)
    return GroupedDataset.from_arrays(
        group_id,
        D.ravel(),
        Y.ravel(),
        unit_id=unit_id,
        saturation=sat,
        neighbor_rank=rank,
    )
