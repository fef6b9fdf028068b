"""Confidence intervals for cell contrasts and the exchangeability test.

Two interval constructions are provided: the normal approximation and a
wild bootstrap that multiplies cell-centered residuals by independent
Rademacher signs, which tracks the finite-sample distribution better when
cells are thin.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .assignments import SATURATED, EffectiveAssignment
from .errors import SpilloverError
from .estimators import CellTable, EffectEstimate


# ---------------------------------------------------------------------------
# Contrasts and intervals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CellContrast:
    """A linear combination of cell means."""

    cells: tuple[EffectiveAssignment, ...]
    coefficients: tuple[float, ...]
    name: str = ""

    def __post_init__(self):
        if len(self.cells) != len(self.coefficients):
            raise ValueError("need one coefficient per cell")


def spillover_contrast(n: int, s: int | None = None, d: int = 0) -> CellContrast:
    """Spillover of ``s`` treated neighbors (all of them by default) at status ``d``."""
    s = n if s is None else s
    return CellContrast(
        cells=(EffectiveAssignment.count(d, s), EffectiveAssignment.count(d, 0)),
        coefficients=(1.0, -1.0),
        name=f"spillover[{d},{s}]",
    )


def direct_contrast(n: int, s: int = 0) -> CellContrast:
    """Direct effect of own treatment holding ``s`` treated neighbors fixed."""
    return CellContrast(
        cells=(EffectiveAssignment.count(1, s), EffectiveAssignment.count(0, s)),
        coefficients=(1.0, -1.0),
        name=f"direct[{s}]",
    )


def contrast_estimate(table: CellTable, contrast: CellContrast) -> EffectEstimate:
    """Point estimate and plug-in standard error of a cell contrast."""
    counts = tuple(table.count(a) for a in contrast.cells)
    bad = tuple(a for a, c in zip(contrast.cells, counts) if c <= 1)
    if bad:
        return EffectEstimate(None, None, contrast.cells, counts, undefined_cells=bad)
    value = sum(
        c * table.mean(a) for a, c in zip(contrast.cells, contrast.coefficients)
    )
    var = sum(
        c**2 * table.variance(a) / table.count(a)
        for a, c in zip(contrast.cells, contrast.coefficients)
    )
    return EffectEstimate(float(value), float(math.sqrt(var)), contrast.cells, counts)


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    level: float
    method: str

    @property
    def defined(self) -> bool:
        return not (math.isnan(self.lower) or math.isnan(self.upper))

    def covers(self, value: float) -> bool:
        return self.defined and self.lower <= value <= self.upper


def normal_ci(estimate: EffectEstimate, level: float = 0.95) -> ConfidenceInterval:
    """Symmetric interval from the Gaussian approximation."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    if not estimate.defined or estimate.se is None:
        return ConfidenceInterval(math.nan, math.nan, level, "normal")
    if estimate.se == 0.0:
        warnings.warn("standard error is zero; interval degenerates to a point", stacklevel=2)
    z = stats.norm.ppf(0.5 + level / 2.0)
    return ConfidenceInterval(
        estimate.value - z * estimate.se, estimate.value + z * estimate.se, level, "normal"
    )


# ---------------------------------------------------------------------------
# Wild bootstrap
# ---------------------------------------------------------------------------

BOOTSTRAP_METHODS = ("percentile-t", "percentile")


@dataclass(frozen=True)
class BootstrapSpec:
    """Wild-bootstrap configuration.

    Signs are Rademacher (+1 or -1 with probability 1/2), drawn per unit by
    default; ``cluster=True`` draws one sign per group so within-group
    dependence survives resampling.
    """

    B: int = 2000
    seed: int = 0
    cluster: bool = False

    def __post_init__(self):
        if self.B < 2:
            raise ValueError(f"need at least 2 bootstrap replications, got {self.B}")


@dataclass(frozen=True)
class BootstrapResult:
    estimate: EffectEstimate
    interval: ConfidenceInterval
    method: str
    spec: BootstrapSpec
    replicates: dict = field(default_factory=dict)

    @property
    def defined(self) -> bool:
        return self.interval.defined


def _quantile(values: np.ndarray, q: float) -> float:
    """Linear-interpolation quantile that tolerates infinite entries.

    np.quantile returns NaN when both interpolation neighbors are the same
    infinity; tiny cells produce infinite studentized draws, and the correct
    quantile there is that infinity.
    """
    v = np.sort(np.asarray(values, dtype=np.float64))
    pos = q * (len(v) - 1)
    lo = int(np.floor(pos))
    hi = int(np.ceil(pos))
    if lo == hi or v[lo] == v[hi]:
        return float(v[lo])
    frac = pos - lo
    if np.isinf(v[lo]) or np.isinf(v[hi]):
        return float(v[hi]) if frac > 0 else float(v[lo])
    return float(v[lo] * (1.0 - frac) + v[hi] * frac)


def wild_bootstrap_ci(
    table: CellTable,
    contrast: CellContrast,
    spec: BootstrapSpec,
    level: float = 0.95,
    method: str = "percentile-t",
) -> BootstrapResult:
    """Wild-bootstrap interval for a cell contrast.

    Each replication rebuilds every contrast cell as its mean plus
    sign-flipped residuals, recomputes the contrast and its standard error,
    and the interval inverts the studentized bootstrap distribution
    (``percentile-t``); ``percentile`` takes raw quantiles of the bootstrap
    contrasts instead. Undefined whenever a contrast cell has fewer than two
    observations.
    """
    if method not in BOOTSTRAP_METHODS:
        raise ValueError(f"method must be one of {BOOTSTRAP_METHODS}, got {method!r}")
    point = contrast_estimate(table, contrast)
    if not point.defined:
        return BootstrapResult(
            point, ConfidenceInterval(math.nan, math.nan, level, method), method, spec
        )

    rng = np.random.default_rng(spec.seed)
    coefs = np.asarray(contrast.coefficients)
    members = [table.members(a) for a in contrast.cells]
    residuals = [table.outcomes[m] - table.mean(a) for m, a in zip(members, contrast.cells)]
    counts = np.array([len(m) for m in members])

    if spec.cluster:
        groups = [table.group_codes[m] for m in members]
        all_groups = np.unique(np.concatenate(groups))
        gmap = {g: i for i, g in enumerate(all_groups)}
        signs = rng.integers(0, 2, size=(spec.B, len(all_groups))) * 2 - 1
        sign_per_cell = [
            signs[:, [gmap[g] for g in cell_groups]] for cell_groups in groups
        ]
    else:
        total = int(counts.sum())
        signs = rng.integers(0, 2, size=(spec.B, total)) * 2 - 1
        offsets = np.concatenate([[0], np.cumsum(counts)])
        sign_per_cell = [signs[:, offsets[i]:offsets[i + 1]] for i in range(len(members))]

    # per-cell bootstrap mean shift m_b = sum(eps * w) / N; the bootstrap
    # within-cell variance is mean(eps^2) - m_b^2 since the signs square to 1
    shifts = np.stack(
        [W @ eps / c for W, eps, c in zip(sign_per_cell, residuals, counts)], axis=1
    )
    theta_star = point.value + shifts @ coefs
    summary = {
        "mean": float(theta_star.mean()),
        "sd": float(theta_star.std(ddof=1)),
    }

    if method == "percentile":
        lo = _quantile(theta_star, (1 - level) / 2)
        hi = _quantile(theta_star, 0.5 + level / 2)
        interval = ConfidenceInterval(lo, hi, level, method)
        return BootstrapResult(point, interval, method, spec, summary)

    mean_sq = np.array([float(np.mean(eps**2)) for eps in residuals])
    var_star = (np.maximum(mean_sq - shifts**2, 0.0) / counts) @ coefs**2
    se_star = np.sqrt(var_star)
    centered = shifts @ coefs
    with np.errstate(divide="ignore", invalid="ignore"):
        t_star = np.where(
            se_star > 0.0,
            centered / np.where(se_star > 0.0, se_star, 1.0),
            np.where(centered == 0.0, 0.0, np.sign(centered) * np.inf),
        )
    q_lo = _quantile(t_star, (1 - level) / 2)
    q_hi = _quantile(t_star, 0.5 + level / 2)
    interval = ConfidenceInterval(
        float(point.value - q_hi * point.se),
        float(point.value - q_lo * point.se),
        level,
        method,
    )
    summary["t_quantiles"] = (q_lo, q_hi)
    return BootstrapResult(point, interval, method, spec, summary)


# ---------------------------------------------------------------------------
# Exchangeability test
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StratumTest:
    """Equality test of all vector-cell means sharing one (d, count) pair."""

    own: int
    n_treated_peers: int
    cells: tuple[EffectiveAssignment, ...]
    statistic: float
    df: int


@dataclass(frozen=True)
class PairwiseContrast:
    cell_a: EffectiveAssignment
    cell_b: EffectiveAssignment
    difference: float
    se: float
    z: float
    p_value: float


@dataclass(frozen=True)
class ExchangeabilityResult:
    testable: bool
    statistic: float | None
    df: int
    p_value: float | None
    strata: tuple[StratumTest, ...]
    contrasts: tuple[PairwiseContrast, ...]


def exchangeability_test(table: CellTable) -> ExchangeabilityResult:
    """Wald test that cell means depend on neighbors only through their count.

    Within every (own status, treated-neighbor count) stratum, all
    vector-mode cells with enough observations must share one mean; the
    statistic sums the stratum chi-squares (independent cells, plug-in
    variances) and is referred to a chi-square with one degree of freedom
    per extra cell. Pairwise within-stratum contrasts are reported alongside.
    """
    if table.mode != SATURATED:
        raise SpilloverError("the exchangeability test needs a vector-mode cell table")
    n = table.n
    strata: list[StratumTest] = []
    contrasts: list[PairwiseContrast] = []
    total, df = 0.0, 0
    for d in (0, 1):
        for s in range(n + 1):
            cells = [
                a
                for a in table.assignments
                if a.own == d
                and a.n_treated_peers == s
                and table.count(a) > 1
                and table.variance(a) > 0.0
            ]
            if len(cells) < 2:
                continue
            means = np.array([table.mean(a) for a in cells])
            variances = np.array([table.variance(a) / table.count(a) for a in cells])
            weights = 1.0 / variances
            pooled = float((weights * means).sum() / weights.sum())
            stat = float((weights * (means - pooled) ** 2).sum())
            strata.append(
                StratumTest(own=d, n_treated_peers=s, cells=tuple(cells), statistic=stat, df=len(cells) - 1)
            )
            total += stat
            df += len(cells) - 1
            for i in range(len(cells)):
                for j in range(i + 1, len(cells)):
                    diff = float(means[i] - means[j])
                    se = float(np.sqrt(variances[i] + variances[j]))
                    z = diff / se
                    contrasts.append(
                        PairwiseContrast(
                            cells[i], cells[j], diff, se, z, float(2 * stats.norm.sf(abs(z)))
                        )
                    )
    if df == 0:
        return ExchangeabilityResult(False, None, 0, None, (), ())
    p = float(stats.chi2.sf(total, df))
    return ExchangeabilityResult(True, total, df, p, tuple(strata), tuple(contrasts))
