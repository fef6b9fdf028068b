"""Closed-form population values of the estimands under a known design.

Given an outcome model and an assignment mechanism, these functions return
what each estimator converges to: the ground truth for simulations, tests
and design comparisons. Misspecified regressions (difference in means,
linear in means) get their population coefficients; pooled summaries get
their weight vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assignments import (
    EXCHANGEABLE,
    SATURATED,
    MAX_SATURATED_NEIGHBORS,
    EffectiveAssignment,
    enumerate_assignments,
)
from .errors import UnsupportedMechanismError
from .mechanisms import AssignmentMechanism, PartialPopulation, SimpleRandom
from .outcomes import EffectVector, OutcomeModel


def _require_exchangeable(model: OutcomeModel, what: str) -> None:
    if model.mode != EXCHANGEABLE:
        raise ValueError(f"{what} needs an exchangeable outcome model")


def population_count_cell_mean(
    model: OutcomeModel, mech: AssignmentMechanism, n: int, d: int, s: int
) -> float | None:
    """Population mean of the outcome at own status ``d`` and count ``s``.

    For exchangeable models this is the model mean itself. For models whose
    means depend on which neighbors are treated, conditioning on the count
    recovers a design-weighted average of the vector-specific means; under
    unit-level iid assignment the weights collapse to a simple average.
    Returns None when the design gives the (d, s) cell zero probability.
    """
    p_cell = mech.pi(n, EffectiveAssignment.count(d, s))
    if p_cell == 0.0:
        return None
    if model.mode == EXCHANGEABLE:
        return model.mean(EffectiveAssignment.count(d, s))
    weights = vector_weights_given_count(mech, n, d, s)
    return float(
        sum(model.mean(EffectiveAssignment.vector(d, v)) * w for v, w in weights.items())
    )


def vector_weights_given_count(
    mech: AssignmentMechanism, n: int, d: int, s: int
) -> dict[tuple[int, ...], float]:
    """P[neighbor vector | own status d, count s] for every vector with s ones."""
    if n > MAX_SATURATED_NEIGHBORS:
        raise ValueError(f"vector enumeration capped at n={MAX_SATURATED_NEIGHBORS}")
    p_cell = mech.pi(n, EffectiveAssignment.count(d, s))
    if p_cell == 0.0:
        raise UnsupportedMechanismError(
            f"{mech.spec_string()} puts zero probability on cell ({d},{s})"
        )
    out = {}
    for a in enumerate_assignments(n, SATURATED):
        if a.own == d and a.n_treated_peers == s:
            out[a.peers] = mech.pi(n, a) / p_cell
    return out


def population_difference_in_means(
    model: OutcomeModel, mech: AssignmentMechanism, n: int
) -> float:
    """What the treated-minus-control mean converges to under the design.

    Equals the no-treated-neighbor direct effect plus the gap between the
    design-weighted spillovers on the treated and on the controls.
    """
    _require_exchangeable(model, "the difference-in-means oracle")
    effects = model.effects(n)
    p1 = mech.conditional_peer_counts(n, 1)
    p0 = mech.conditional_peer_counts(n, 0)
    spill1 = sum(effects.spillover[(1, s)] * p1[s] for s in range(1, n + 1))
    spill0 = sum(effects.spillover[(0, s)] * p0[s] for s in range(1, n + 1))
    return float(effects.direct[0] + spill1 - spill0)


def lim_weights(mech: SimpleRandom, n: int) -> np.ndarray:
    """Signed weights the linear-in-means slope puts on each count.

    w_s = n (s - E[S]) P[S = s] / V[S] with S binomial(n, p): the weights sum
    to zero, negative below the mean count and positive above it.
    """
    if not isinstance(mech, SimpleRandom):
        raise UnsupportedMechanismError(
            "the linear-in-means oracle is only available under unit-level "
            f"Bernoulli assignment, got {mech.spec_string()}"
        )
    p = mech.p
    mean_s = n * p
    var_s = n * p * (1.0 - p)
    if var_s == 0.0:
        raise UnsupportedMechanismError(
            "treated-peer share has zero variance under this design"
        )
    pmf = np.array([math.comb(n, s) * p**s * (1 - p) ** (n - s) for s in range(n + 1)])
    return n * (np.arange(n + 1) - mean_s) * pmf / var_s


def population_lim_slope(
    model: OutcomeModel, mech: SimpleRandom, n: int, interacted: bool = False
):
    """Population coefficient(s) on the treated-peer share.

    Plain: a zero-sum-weighted combination of the status-averaged spillover
    effects. Interacted: the same combination per own-treatment status,
    returned as (control, treated).
    """
    _require_exchangeable(model, "the linear-in-means oracle")
    w = lim_weights(mech, n)
    effects = model.effects(n)
    if interacted:
        return tuple(
            float(sum(effects.spillover[(d, s)] * w[s] for s in range(1, n + 1)))
            for d in (0, 1)
        )
    p = mech.p
    averaged = [
        effects.spillover[(0, s)] * (1.0 - p) + effects.spillover[(1, s)] * p
        for s in range(n + 1)
    ]
    return float(sum(averaged[s] * w[s] for s in range(1, n + 1)))


def population_pooled_spillover(
    model: OutcomeModel,
    mech: AssignmentMechanism,
    n: int,
    bucket=None,
    d: int = 0,
):
    """Population pooled spillover over a bucket of counts, with its weights.

    Returns (value, weights) where weights[s] = P[S = s | D = d, S in bucket]
    for s in the bucket; None when the design never produces the bucket.
    """
    _require_exchangeable(model, "the pooled-spillover oracle")
    if bucket is None:
        bucket = tuple(range(1, n + 1))
    bucket = tuple(sorted(int(s) for s in bucket))
    if not bucket or any(s < 1 or s > n for s in bucket):
        raise ValueError(f"bucket must be a nonempty subset of 1..{n}, got {bucket}")
    probs = np.array([mech.pi(n, EffectiveAssignment.count(d, s)) for s in bucket])
    total = probs.sum()
    if total == 0.0:
        return None, None
    weights = {s: float(p / total) for s, p in zip(bucket, probs)}
    effects = model.effects(n)
    value = float(sum(effects.spillover[(d, s)] * weights[s] for s in bucket))
    return value, weights


def population_partial_population_effect(
    model: OutcomeModel, mech: PartialPopulation, n: int
):
    """Population value of the treated-group-controls vs pure-controls contrast.

    Returns (value, weights) with weights[s] = P[S = s | D = 0, T = 1] for
    s >= 1; the weights sum to at most one because the no-treated-neighbor
    mass stays in the conditioning set.
    """
    _require_exchangeable(model, "the partial-population oracle")
    if not isinstance(mech, PartialPopulation):
        raise UnsupportedMechanismError(
            "the partial-population contrast needs a partial-population design, "
            f"got {mech.spec_string()}"
        )
    pmf = mech.peer_counts_in_treated_groups(n)
    effects = model.effects(n)
    weights = {s: float(pmf[s]) for s in range(1, n + 1)}
    value = float(sum(effects.spillover[(0, s)] * pmf[s] for s in range(1, n + 1)))
    return value, weights


@dataclass(frozen=True)
class OracleReport:
    """Population values of every comparison estimand for one design."""

    n: int
    mechanism: str
    difference_in_means: float
    lim_slope: float | None
    lim_slope_control: float | None
    lim_slope_treated: float | None
    pooled: dict
    partial_population: float | None
    effects: EffectVector
    weights: dict


def oracle_report(
    model: OutcomeModel,
    mech: AssignmentMechanism,
    n: int,
    buckets=None,
) -> OracleReport:
    """Evaluate all applicable population estimands for one model and design."""
    _require_exchangeable(model, "the oracle report")
    effects = model.effects(n)
    weights: dict = {}

    lim = lim_c = lim_t = None
    if isinstance(mech, SimpleRandom) and 0.0 < mech.p < 1.0:
        lim = population_lim_slope(model, mech, n, interacted=False)
        lim_c, lim_t = population_lim_slope(model, mech, n, interacted=True)
        weights["lim"] = tuple(float(w) for w in lim_weights(mech, n))

    pooled = {}
    for bucket in buckets or [tuple(range(1, n + 1))]:
        value, w = population_pooled_spillover(model, mech, n, bucket, d=0)
        key = tuple(sorted(int(s) for s in bucket))
        pooled[key] = value
        if w is not None:
            weights[f"pooled{key}"] = w

    pp = None
    if isinstance(mech, PartialPopulation):
        pp, w = population_partial_population_effect(model, mech, n)
        weights["partial_population"] = w

    return OracleReport(
        n=n,
        mechanism=mech.spec_string(),
        difference_in_means=population_difference_in_means(model, mech, n),
        lim_slope=lim,
        lim_slope_control=lim_c,
        lim_slope_treated=lim_t,
        pooled=pooled,
        partial_population=pp,
        effects=effects,
        weights=weights,
    )
