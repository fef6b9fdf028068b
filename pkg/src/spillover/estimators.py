"""Cell-mean estimation and the regression-based comparison estimators.

Everything here is conditional-on-assignments arithmetic: cell means over
effective assignments, their contrasts (direct and spillover effects), the
pooled and partial-population summaries, and the difference-in-means and
linear-in-means regressions those summaries are usually compared against.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

import numpy as np
from sklearn.base import BaseEstimator

from .assignments import (
    EXCHANGEABLE,
    SATURATED,
    EffectiveAssignment,
    check_mode,
    enumerate_assignments,
)
from .dataset import GroupedDataset
from .errors import DataValidationError, SingularDesignError
from .outcomes import EffectVector

VARIANCE_KINDS = ("plugin", "unbiased")


# ---------------------------------------------------------------------------
# Cell table
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CellTable:
    """Counts, means and variances per effective assignment.

    Means and variances are NaN where the cell is empty. Variances use the
    plug-in divisor N by default; ``variance='unbiased'`` switches to N - 1
    (NaN for singleton cells). The per-unit outcome, cell and group arrays
    are kept so resampling procedures can reach the raw data.
    """

    mode: str
    n: int
    n_groups: int
    counts: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    outcomes: np.ndarray
    cell_codes: np.ndarray
    group_codes: np.ndarray
    variance_kind: str = "plugin"

    @property
    def assignments(self) -> tuple[EffectiveAssignment, ...]:
        return enumerate_assignments(self.n, self.mode)

    def index(self, a: EffectiveAssignment) -> int:
        return a.index(self.n)

    def count(self, a: EffectiveAssignment) -> int:
        return int(self.counts[self.index(a)])

    def mean(self, a: EffectiveAssignment) -> float:
        return float(self.means[self.index(a)])

    def variance(self, a: EffectiveAssignment) -> float:
        return float(self.variances[self.index(a)])

    def members(self, a: EffectiveAssignment) -> np.ndarray:
        """Row indices of the units observed at assignment ``a``."""
        return np.flatnonzero(self.cell_codes == self.index(a))

    def defined(self, a: EffectiveAssignment, min_count: int = 1) -> bool:
        return self.count(a) >= min_count


def cell_table_from_codes(
    codes: np.ndarray,
    outcomes: np.ndarray,
    group_codes: np.ndarray,
    n: int,
    mode: str,
    n_groups: int,
    variance: str = "plugin",
) -> CellTable:
    """Aggregate per-unit cell codes into a CellTable (harness fast path)."""
    if variance not in VARIANCE_KINDS:
        raise ValueError(f"variance must be one of {VARIANCE_KINDS}, got {variance!r}")
    outcomes = np.asarray(outcomes, dtype=np.float64)
    n_cells = 2 * (n + 1) if mode == EXCHANGEABLE else 1 << (n + 1)
    counts = np.bincount(codes, minlength=n_cells).astype(np.int64)
    sums = np.bincount(codes, weights=outcomes, minlength=n_cells)
    means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    # two-pass variance: centered residual sums are stable for any outcome scale
    residuals = outcomes - np.where(counts > 0, means, 0.0)[codes]
    resid_sq = np.bincount(codes, weights=residuals**2, minlength=n_cells)
    raw = resid_sq / np.maximum(counts, 1)
    if variance == "plugin":
        variances = np.where(counts > 0, raw, np.nan)
    else:
        variances = np.where(counts > 1, raw * counts / np.maximum(counts - 1, 1), np.nan)
    return CellTable(
        mode=mode,
        n=n,
        n_groups=n_groups,
        counts=counts,
        means=means,
        variances=variances,
        outcomes=outcomes,
        cell_codes=np.asarray(codes),
        group_codes=np.asarray(group_codes),
        variance_kind=variance,
    )


def build_cell_table(ds: GroupedDataset, mode: str = EXCHANGEABLE, variance: str = "plugin") -> CellTable:
    """Cell table of a single-size dataset in the requested mode."""
    check_mode(mode)
    n = ds.single_size()
    codes = ds.assignment_codes(mode)
    return cell_table_from_codes(
        codes, ds.outcome, ds.group_codes, n, mode, ds.n_groups, variance
    )


# ---------------------------------------------------------------------------
# Effect estimates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EffectEstimate:
    """A point estimate with its conditional-on-assignments standard error.

    Cell contrasts report the assignments they touch and the counts behind
    them. An estimate that cannot be computed is marked undefined and names
    the offending assignments instead of silently substituting zero.
    """

    value: float | None
    se: float | None
    cells: tuple[EffectiveAssignment, ...] = ()
    counts: tuple[int, ...] = ()
    undefined_cells: tuple[EffectiveAssignment, ...] = ()

    @property
    def defined(self) -> bool:
        return self.value is not None


def _cell_contrast(table: CellTable, plus: EffectiveAssignment, minus: EffectiveAssignment) -> EffectEstimate:
    """Difference of two cell means; defined only when both cells have N > 1
    so the standard error exists."""
    cells = (plus, minus)
    counts = tuple(table.count(a) for a in cells)
    bad = tuple(a for a, c in zip(cells, counts) if c <= 1)
    if bad:
        return EffectEstimate(None, None, cells, counts, undefined_cells=bad)
    value = table.mean(plus) - table.mean(minus)
    se = float(
        np.sqrt(
            table.variance(plus) / table.count(plus)
            + table.variance(minus) / table.count(minus)
        )
    )
    return EffectEstimate(value, se, cells, counts)


@dataclass(frozen=True)
class CellEffects:
    """Direct and spillover effect estimates from one cell table.

    In count mode the keys are treated-neighbor counts; in vector mode they
    are neighbor bit tuples.
    """

    mode: str
    baseline: EffectEstimate
    direct: Mapping
    spillover: Mapping

    def point_vector(self) -> EffectVector:
        """Point estimates as an EffectVector (count mode, all cells defined)."""
        if self.mode != EXCHANGEABLE:
            raise ValueError("point_vector is only available for count-mode effects")
        if not self.baseline.defined or any(
            not e.defined for e in list(self.direct.values()) + list(self.spillover.values())
        ):
            raise ValueError("some effects are undefined; cannot form a complete vector")
        direct = {s: e.value for s, e in self.direct.items()}
        spillover = {k: e.value for k, e in self.spillover.items()}
        for d in (0, 1):
            spillover[(d, 0)] = 0.0
        return EffectVector(self.baseline.value, direct, spillover)


def direct_and_spillover(table: CellTable) -> CellEffects:
    """All direct and spillover effect contrasts the table identifies.

    Count mode: direct[s] contrasts (1, s) against (0, s) and
    spillover[(d, s)] contrasts (d, s) against (d, 0). Vector mode applies
    the same definitions with neighbor vectors in place of counts.
    """
    n = table.n
    if table.mode == EXCHANGEABLE:
        a = lambda d, s: EffectiveAssignment.count(d, s)
        zero = EffectiveAssignment.count(0, 0)
        base_n = table.count(zero)
        baseline = EffectEstimate(
            value=table.mean(zero) if base_n >= 1 else None,
            se=float(np.sqrt(table.variance(zero) / base_n)) if base_n > 1 else None,
            cells=(zero,),
            counts=(base_n,),
            undefined_cells=() if base_n >= 1 else (zero,),
        )
        direct = {s: _cell_contrast(table, a(1, s), a(0, s)) for s in range(n + 1)}
        spillover = {
            (d, s): _cell_contrast(table, a(d, s), a(d, 0))
            for d in (0, 1)
            for s in range(1, n + 1)
        }
        return CellEffects(table.mode, baseline, direct, spillover)

    vectors = [a.peers for a in enumerate_assignments(n, SATURATED) if a.own == 0]
    av = EffectiveAssignment.vector
    zeros = tuple([0] * n)
    zero = av(0, zeros)
    base_n = table.count(zero)
    baseline = EffectEstimate(
        value=table.mean(zero) if base_n >= 1 else None,
        se=float(np.sqrt(table.variance(zero) / base_n)) if base_n > 1 else None,
        cells=(zero,),
        counts=(base_n,),
        undefined_cells=() if base_n >= 1 else (zero,),
    )
    direct = {v: _cell_contrast(table, av(1, v), av(0, v)) for v in vectors}
    spillover = {
        (d, v): _cell_contrast(table, av(d, v), av(d, zeros))
        for d in (0, 1)
        for v in vectors
        if any(v)
    }
    return CellEffects(table.mode, baseline, direct, spillover)


def saturated_fit(ds: GroupedDataset, variance: str = "plugin") -> tuple[CellTable, CellEffects]:
    """Vector-mode cell means with their direct/spillover contrasts."""
    table = build_cell_table(ds, SATURATED, variance)
    return table, direct_and_spillover(table)


# ---------------------------------------------------------------------------
# Pooled and partial-population summaries
# ---------------------------------------------------------------------------

def _as_table(data, variance="plugin") -> CellTable:
    if isinstance(data, CellTable):
        return data
    return build_cell_table(data, EXCHANGEABLE, variance)


def pooled_spillover(data, d: int = 0, buckets=None) -> dict[tuple[int, ...], EffectEstimate]:
    """Spillover effects pooled over buckets of treated-neighbor counts.

    Each bucket's estimate contrasts the pooled mean of units at own status
    ``d`` with a treated-neighbor count in the bucket against the (d, 0)
    cell. The pooled mean weights each count cell by its sample share, so in
    sample the estimate equals the count-weighted average of the per-count
    spillover estimates.
    """
    table = _as_table(data)
    n = table.n
    if table.mode != EXCHANGEABLE:
        raise ValueError("pooled spillovers are defined on count-mode tables")
    if buckets is None:
        buckets = [tuple(range(1, n + 1))]
    clean: list[tuple[int, ...]] = []
    seen: set[int] = set()
    for bucket in buckets:
        b = tuple(sorted(int(s) for s in bucket))
        if not b:
            raise ValueError("buckets must be nonempty")
        if any(s < 1 or s > n for s in b):
            raise ValueError(f"bucket {b} outside 1..{n}")
        if seen & set(b):
            raise ValueError("buckets must be disjoint")
        seen |= set(b)
        clean.append(b)

    zero = EffectiveAssignment.count(d, 0)
    n_zero = table.count(zero)
    out = {}
    for bucket in clean:
        cells = tuple(EffectiveAssignment.count(d, s) for s in bucket)
        counts = np.array([table.count(c) for c in cells])
        total = int(counts.sum())
        all_cells = cells + (zero,)
        all_counts = tuple(int(c) for c in counts) + (n_zero,)
        if total <= 1 or n_zero <= 1:
            bad = (cells if total <= 1 else ()) + ((zero,) if n_zero <= 1 else ())
            out[bucket] = EffectEstimate(None, None, all_cells, all_counts, undefined_cells=bad)
            continue
        nonempty = counts > 0
        w = counts[nonempty] / total
        means = np.array([table.mean(c) for c in cells])[nonempty]
        variances = np.array([table.variance(c) for c in cells])[nonempty]
        value = float(w @ means - table.mean(zero))
        se = float(
            np.sqrt(
                np.sum(w**2 * variances / counts[nonempty])
                + table.variance(zero) / n_zero
            )
        )
        out[bucket] = EffectEstimate(value, se, all_cells, all_counts)
    return out


def _clustered_mean_variance(y: np.ndarray, groups: np.ndarray) -> float:
    """Variance of a subsample mean allowing arbitrary within-group correlation."""
    resid = y - y.mean()
    per_group = np.bincount(groups, weights=resid)
    return float(np.sum(per_group**2) / len(y) ** 2)


def partial_population_effect(ds: GroupedDataset) -> EffectEstimate:
    """Contrast of controls in treated groups against pure-control groups.

    Requires the group-level saturation column. Standard errors are
    clustered at the group level; the two arms live in disjoint groups.
    """
    if ds.saturation is None:
        raise DataValidationError("saturation column required for the partial-population contrast")
    T = ds.saturation[ds.group_codes]
    in_treated_controls = (T == 1) & (ds.treatment == 0)
    in_pure_control = T == 0
    n1, n0 = int(in_treated_controls.sum()), int(in_pure_control.sum())
    if n1 <= 1 or n0 <= 1:
        return EffectEstimate(None, None, counts=(n1, n0))
    g = ds.group_codes
    y1, g1 = ds.outcome[in_treated_controls], g[in_treated_controls]
    y0, g0 = ds.outcome[in_pure_control], g[in_pure_control]
    value = float(y1.mean() - y0.mean())
    se = float(np.sqrt(_clustered_mean_variance(y1, g1) + _clustered_mean_variance(y0, g0)))
    return EffectEstimate(value, se, counts=(n1, n0))


# ---------------------------------------------------------------------------
# Least squares with group-clustered standard errors
# ---------------------------------------------------------------------------

SE_KINDS = ("cluster", "hc")


@dataclass(frozen=True)
class LeastSquaresFit:
    names: tuple[str, ...]
    coef: np.ndarray
    se: np.ndarray
    vcov: np.ndarray
    n_obs: int
    n_groups: int
    se_kind: str

    def coef_map(self) -> dict[str, float]:
        return {k: float(v) for k, v in zip(self.names, self.coef)}

    def se_map(self) -> dict[str, float]:
        return {k: float(v) for k, v in zip(self.names, self.se)}


def least_squares(X: np.ndarray, y: np.ndarray, groups: np.ndarray, names, se: str = "cluster") -> LeastSquaresFit:
    """OLS on a small dense design via the normal equations.

    ``se='cluster'`` allows arbitrary correlation inside groups;
    ``se='hc'`` assumes independence across units (heteroskedasticity
    robust). With one unit per group the two coincide.
    """
    if se not in SE_KINDS:
        raise ValueError(f"se must be one of {SE_KINDS}, got {se!r}")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n_obs, k = X.shape
    xtx = X.T @ X
    if n_obs < k or np.linalg.matrix_rank(xtx) < k:
        raise SingularDesignError(
            f"design matrix with columns {tuple(names)} is rank deficient"
        )
    xty = X.T @ y
    coef = np.linalg.solve(xtx, xty)
    resid = y - X @ coef
    bread = np.linalg.inv(xtx)
    if se == "cluster":
        n_groups = int(groups.max()) + 1
        scores = np.zeros((n_groups, k))
        np.add.at(scores, groups, X * resid[:, None])
        meat = scores.T @ scores
        used = len(np.unique(groups))
        dof = n_obs - k if n_obs > k else 1
        factor = used / max(used - 1, 1) * (n_obs - 1) / dof
    else:
        meat = (X * resid[:, None] ** 2).T @ X
        used = len(np.unique(groups))
        factor = n_obs / max(n_obs - k, 1)
    vcov = factor * bread @ meat @ bread
    return LeastSquaresFit(
        names=tuple(names),
        coef=coef,
        se=np.sqrt(np.maximum(np.diag(vcov), 0.0)),
        vcov=vcov,
        n_obs=n_obs,
        n_groups=used,
        se_kind=se,
    )


# ---------------------------------------------------------------------------
# Regression comparison estimators
# ---------------------------------------------------------------------------

def difference_in_means(ds: GroupedDataset, se: str = "cluster") -> EffectEstimate:
    """Treated-minus-control mean, ignoring interference."""
    D = ds.treatment
    n1, n0 = int(D.sum()), int((1 - D).sum())
    if n1 == 0 or n0 == 0:
        return EffectEstimate(None, None, counts=(n1, n0))
    X = np.column_stack([np.ones(ds.n_units), D])
    fit = least_squares(X, ds.outcome, ds.group_codes, ("intercept", "treatment"), se)
    return EffectEstimate(float(fit.coef[1]), float(fit.se[1]), counts=(n1, n0))


def lim_fit(ds: GroupedDataset, interacted: bool = False, se: str = "cluster") -> LeastSquaresFit:
    """Linear-in-means regression on own treatment and the treated-peer share.

    With ``interacted=True`` the peer share enters separately for control and
    treated units.
    """
    n = ds.single_size()
    D = ds.treatment.astype(np.float64)
    codes = ds.assignment_codes(EXCHANGEABLE)
    share = (codes % (n + 1)) / n
    ones = np.ones(ds.n_units)
    if interacted:
        X = np.column_stack([ones, D, share * (1 - D), share * D])
        names = ("intercept", "treatment", "peer_share_control", "peer_share_treated")
    else:
        X = np.column_stack([ones, D, share])
        names = ("intercept", "treatment", "peer_share")
    return least_squares(X, ds.outcome, ds.group_codes, names, se)


# ---------------------------------------------------------------------------
# Strategies for unequally-sized groups
# ---------------------------------------------------------------------------

STRATIFY_POLICIES = ("separate", "size_fixed_effects", "proportion")


@dataclass(frozen=True)
class SeparateBySize:
    """One cell table and effect set per group size."""

    strata: Mapping[int, tuple[CellTable, CellEffects]]
    skipped: tuple[int, ...] = ()


@dataclass(frozen=True)
class ProportionCell:
    count: int
    mean: float
    variance: float


@dataclass(frozen=True)
class ProportionPooled:
    """Cells indexed by own treatment and the fraction of treated peers.

    The design is fully saturated in the observed fractions; the fraction
    never enters as a linear regressor.
    """

    cells: Mapping[tuple[int, Fraction], ProportionCell]
    spillover: Mapping[tuple[int, Fraction], EffectEstimate]


def stratify_and_estimate(
    ds: GroupedDataset,
    policy: str = "separate",
    variance: str = "plugin",
    se: str = "cluster",
):
    """Estimate effects when group sizes differ.

    ``separate`` runs the cell-mean analysis per size (strata with fewer
    than 2 groups are skipped with a warning). ``size_fixed_effects``
    assumes effects are shared across sizes and absorbs size in intercept
    dummies. ``proportion`` assumes outcomes depend on the fraction of
    treated peers and saturates in its observed values.
    """
    if policy not in STRATIFY_POLICIES:
        raise ValueError(f"policy must be one of {STRATIFY_POLICIES}, got {policy!r}")

    if policy == "separate":
        strata = {}
        skipped = []
        for size, n_groups in sorted(ds.size_summary().items()):
            if n_groups < 2:
                skipped.append(size)
                warnings.warn(
                    f"size-{size} stratum has {n_groups} group(s); skipped", stacklevel=2
                )
                continue
            sub = ds.subset_by_size(size)
            table = build_cell_table(sub, EXCHANGEABLE, variance)
            strata[size - 1] = (table, direct_and_spillover(table))
        return SeparateBySize(strata=strata, skipped=tuple(skipped))

    group_codes = ds.group_codes
    sizes = ds.sizes[group_codes]
    n_per_unit = sizes - 1
    D = ds.treatment.astype(np.float64)
    group_totals = np.bincount(group_codes, weights=ds.treatment)
    s_per_unit = (group_totals[group_codes] - ds.treatment).astype(np.int64)

    if policy == "size_fixed_effects":
        distinct_sizes = sorted(set(ds.sizes.tolist()))
        max_n = max(distinct_sizes) - 1
        cols = [(sizes == size).astype(np.float64) for size in distinct_sizes]
        names = [f"size_effect[{size}]" for size in distinct_sizes]
        cols.append(D)
        names.append("direct")
        for d in (0, 1):
            own = D if d == 1 else 1 - D
            for s in range(1, max_n + 1):
                cols.append((s_per_unit == s) * own)
                names.append(f"spillover[{d},{s}]")
        X = np.column_stack(cols)
        return least_squares(X, ds.outcome, ds.group_codes, tuple(names), se)

    # proportion policy: cells on (own treatment, treated-peer fraction)
    unit_keys = [
        (int(d), Fraction(int(s), int(n)))
        for d, s, n in zip(ds.treatment, s_per_unit, n_per_unit)
    ]
    keys = sorted(set(unit_keys), key=lambda k: (k[0], k[1]))
    key_code = {k: i for i, k in enumerate(keys)}
    codes = np.array([key_code[k] for k in unit_keys])
    cells = {}
    for key in keys:
        y = ds.outcome[codes == key_code[key]]
        cells[key] = ProportionCell(
            count=len(y),
            mean=float(y.mean()),
            variance=float(np.mean((y - y.mean()) ** 2)),
        )
    spill = {}
    for key in keys:
        d, f = key
        if f == 0:
            continue
        base = cells.get((d, Fraction(0)))
        cell = cells[key]
        counts = (cell.count, 0 if base is None else base.count)
        if base is None or base.count <= 1 or cell.count <= 1:
            spill[key] = EffectEstimate(None, None, counts=counts)
            continue
        value = cell.mean - base.mean
        se_val = float(np.sqrt(cell.variance / cell.count + base.variance / base.count))
        spill[key] = EffectEstimate(value, se_val, counts=counts)
    return ProportionPooled(cells=cells, spillover=spill)


# ---------------------------------------------------------------------------
# Estimator classes (scikit-learn style facade over the functions above)
# ---------------------------------------------------------------------------

class CellMeanEstimator(BaseEstimator):
    """Nonparametric cell-mean estimator of direct and spillover effects.

    Parameters
    ----------
    mode : {'exchangeable', 'saturated'}
        Whether cells are indexed by treated-neighbor counts or by full
        neighbor vectors (the latter requires the neighbor_rank column).
    variance : {'plugin', 'unbiased'}
        Divisor used by the within-cell variance estimator.
    """

    def __init__(self, mode: str = EXCHANGEABLE, variance: str = "plugin"):
        self.mode = mode
        self.variance = variance

    def fit(self, dataset: GroupedDataset):
        table = build_cell_table(dataset, self.mode, self.variance)
        effects = direct_and_spillover(table)
        self.table_ = table
        self.effects_ = effects
        self.baseline_ = effects.baseline
        self.direct_ = effects.direct
        self.spillover_ = effects.spillover
        self.n_ = table.n
        self.n_groups_ = table.n_groups
        return self


class DifferenceInMeans(BaseEstimator):
    """Treated-minus-control mean with group-clustered standard errors."""

    def __init__(self, se: str = "cluster"):
        self.se = se

    def fit(self, dataset: GroupedDataset):
        self.estimate_ = difference_in_means(dataset, self.se)
        return self


class LinearInMeans(BaseEstimator):
    """Regression of the outcome on own treatment and the treated-peer share."""

    def __init__(self, interacted: bool = False, se: str = "cluster"):
        self.interacted = interacted
        self.se = se

    def fit(self, dataset: GroupedDataset):
        fit = lim_fit(dataset, self.interacted, self.se)
        self.fit_ = fit
        self.coef_ = fit.coef_map()
        self.se_ = fit.se_map()
        return self


class PooledSpillover(BaseEstimator):
    """Spillover effects pooled over buckets of treated-neighbor counts."""

    def __init__(self, d: int = 0, buckets=None, variance: str = "plugin"):
        self.d = d
        self.buckets = buckets
        self.variance = variance

    def fit(self, dataset: GroupedDataset):
        table = _as_table(dataset, self.variance)
        self.table_ = table
        self.estimates_ = pooled_spillover(table, self.d, self.buckets)
        return self


class PartialPopulationEstimator(BaseEstimator):
    """Controls in treated groups versus pure-control groups."""

    def fit(self, dataset: GroupedDataset):
        self.estimate_ = partial_population_effect(dataset)
        return self
