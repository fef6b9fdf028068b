"""Ranking candidate randomization designs for a planned experiment.

Designs are compared by the expected number of observations in their
emptiest assignment cell, which controls both whether every effect is
estimable and how fast the Gaussian approximation kicks in. Identification
failures (cells a design can never produce) are flagged explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .assignments import EXCHANGEABLE, EffectiveAssignment, check_mode, enumerate_assignments
from .errors import SpilloverError
from .mechanisms import AssignmentMechanism, rate_diagnostics


class InfeasibleDesignError(SpilloverError):
    """The design can never reach the requested cell size."""


@dataclass(frozen=True)
class DesignEntry:
    """Diagnostics for one mechanism at the planned scale."""

    mechanism: str
    pi_min: float
    normality_condition: float
    min_expected_cell: float
    identified: dict[EffectiveAssignment, bool]
    min_assignments: tuple[EffectiveAssignment, ...]

    @property
    def unidentified(self) -> tuple[EffectiveAssignment, ...]:
        return tuple(a for a, ok in self.identified.items() if not ok)

    @property
    def fully_identified(self) -> bool:
        return all(self.identified.values())


@dataclass(frozen=True)
class DesignReport:
    """Mechanisms ranked by the expected size of their emptiest cell."""

    n: int
    n_groups: int
    mode: str
    size_to_log_groups: float
    log_size_to_log_groups: float
    entries: tuple[DesignEntry, ...]

    @property
    def best(self) -> DesignEntry:
        return self.entries[0]


def compare_designs(
    mechanisms,
    n: int,
    n_groups: int,
    mode: str = EXCHANGEABLE,
) -> DesignReport:
    """Rank candidate mechanisms for groups of n + 1 units and G groups.

    The score is the minimum expected cell count G(n+1)pi_min (larger is
    better); ties break on the mechanism name so the order is deterministic.
    """
    check_mode(mode)
    if n < 1:
        raise ValueError(f"need at least one neighbor, got n={n}")
    if n_groups < 2:
        raise ValueError(f"need at least 2 groups, got {n_groups}")
    entries = []
    for mech in mechanisms:
        diag = rate_diagnostics(mech, n, n_groups, mode)
        table = mech.pi_table(n, mode)
        assignments = enumerate_assignments(n, mode)
        entries.append(
            DesignEntry(
                mechanism=mech.spec_string(),
                pi_min=diag.pi_min,
                normality_condition=diag.normality_condition,
                min_expected_cell=diag.min_expected_cell,
                identified={a: bool(p > 0.0) for a, p in zip(assignments, table)},
                min_assignments=mech.min_assignments(n, mode),
            )
        )
    entries.sort(key=lambda e: (-e.min_expected_cell, e.mechanism))
    log_g = math.log(n_groups)
    return DesignReport(
        n=n,
        n_groups=n_groups,
        mode=mode,
        size_to_log_groups=(n + 1) / log_g,
        log_size_to_log_groups=math.log(n + 1) / log_g,
        entries=tuple(entries),
    )


def required_groups(
    mech: AssignmentMechanism,
    n: int,
    mode: str = EXCHANGEABLE,
    target_min_cell: float = 20.0,
) -> int:
    """Smallest number of groups whose emptiest cell is expected to reach the target."""
    if target_min_cell <= 0:
        raise ValueError(f"target_min_cell must be positive, got {target_min_cell}")
    pi_min = mech.pi_min(n, mode)
    if pi_min == 0.0:
        raise InfeasibleDesignError(
            f"{mech.spec_string()} leaves some assignments unobservable; "
            "no number of groups reaches the target"
        )
    per_group = (n + 1) * pi_min
    guess = max(1, math.ceil(target_min_cell / per_group - 1e-9))
    while guess * per_group < target_min_cell * (1.0 - 1e-12):
        guess += 1
    while guess > 1 and (guess - 1) * per_group >= target_min_cell * (1.0 - 1e-12):
        guess -= 1
    return guess
