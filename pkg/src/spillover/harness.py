"""Seeded Monte Carlo harness: replication loop, definedness bookkeeping,
bias/variance/coverage summaries and coverage-curve data.

Replication r of a study draws its random stream from (master seed, r), so
results never depend on execution order or worker count and extending a
study leaves earlier replications untouched.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .assignments import EXCHANGEABLE, exchangeable_codes, saturated_codes
from .dataset import GroupedDataset, dataset_from_matrices
from .errors import ConfigError
from .estimators import cell_table_from_codes
from .inference import (
    BootstrapSpec,
    CellContrast,
    contrast_estimate,
    normal_ci,
    spillover_contrast,
    wild_bootstrap_ci,
)
from .mechanisms import AssignmentMechanism, rate_diagnostics
from .oracle import population_count_cell_mean
from .outcomes import OutcomeModel

ENV_THREADS = "SPILLOVER_THREADS"


def _max_workers() -> int:
    raw = os.environ.get(ENV_THREADS, "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        return 1


@dataclass(frozen=True)
class StudyConfig:
    """One simulation study: a design, an outcome model and a target contrast."""

    n_groups: int
    n: int
    mechanism: AssignmentMechanism
    model: OutcomeModel
    replications: int
    seed: int = 0
    contrast: CellContrast | None = None
    bootstrap: BootstrapSpec | None = None
    bootstrap_method: str = "percentile-t"
    level: float = 0.95

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError(f"need at least one replication, got {self.replications}")
        if self.contrast is None:
            object.__setattr__(self, "contrast", spillover_contrast(self.n))

    def true_value(self) -> float:
        """Population value of the target contrast under the model and design."""
        total = 0.0
        for a, c in zip(self.contrast.cells, self.contrast.coefficients):
            mean = population_count_cell_mean(
                self.model, self.mechanism, self.n, a.own, a.n_treated_peers
            )
            if mean is None:
                raise ConfigError(
                    f"{self.mechanism.spec_string()} never produces cell {a}; "
                    "the target contrast is not identified"
                )
            total += c * mean
        return total


@dataclass(frozen=True)
class ReplicationResult:
    defined: bool
    estimate: float | None
    se: float | None
    covers_normal: bool | None
    covers_bootstrap: bool | None
    cell_counts: tuple[int, ...]


@dataclass(frozen=True)
class StudySummary:
    """Aggregate of one study, conditioning on defined replications.

    Bias, variance and the coverage rates are computed over the replications
    in which the contrast and its standard error exist; ``prop_undefined``
    reports how often they did not.
    """

    mechanism: str
    n: int
    n_groups: int
    replications: int
    true_value: float
    normality_condition: float
    bias: float | None
    variance: float | None
    coverage_normal: float | None
    coverage_bootstrap: float | None
    prop_undefined: float
    n_defined: int
    mean_cell_counts: tuple[float, ...]
    contrast: str

    def to_dict(self) -> dict:
        return {
            "mechanism": self.mechanism,
            "n": self.n,
            "n_groups": self.n_groups,
            "replications": self.replications,
            "contrast": self.contrast,
            "true_value": self.true_value,
            "normality_condition": self.normality_condition,
            "bias": self.bias,
            "variance": self.variance,
            "coverage_normal": self.coverage_normal,
            "coverage_bootstrap": self.coverage_bootstrap,
            "prop_undefined": self.prop_undefined,
            "n_defined": self.n_defined,
            "mean_cell_counts": list(self.mean_cell_counts),
        }


def _draw_outcomes(cfg: StudyConfig, D: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Sample one outcome per unit given the drawn group treatments."""
    if cfg.model.mode == EXCHANGEABLE:
        lookup = cfg.model.mean_table(cfg.n)
        codes = exchangeable_codes(D).ravel()
    else:
        lookup = cfg.model.mean_table(cfg.n)
        codes = saturated_codes(D).ravel()
    return cfg.model.sample(lookup[codes], rng)


def run_replication(cfg: StudyConfig, rep_index: int, true_value: float | None = None) -> ReplicationResult:
    """Draw one sample from the study design and evaluate the target contrast."""
    ss = np.random.SeedSequence([cfg.seed, rep_index])
    data_seed, boot_seed = ss.spawn(2)
    rng = np.random.default_rng(data_seed)

    D, _ = cfg.mechanism.draw_groups(cfg.n, cfg.n_groups, rng)
    y = _draw_outcomes(cfg, D, rng)
    codes = exchangeable_codes(D).ravel()
    group_codes = np.repeat(np.arange(cfg.n_groups), cfg.n + 1)
    table = cell_table_from_codes(
        codes, y, group_codes, cfg.n, EXCHANGEABLE, cfg.n_groups
    )

    estimate = contrast_estimate(table, cfg.contrast)
    counts = tuple(int(c) for c in estimate.counts)
    if true_value is None:
        true_value = cfg.true_value()
    if not estimate.defined:
        return ReplicationResult(False, None, None, None, None, counts)

    with warnings.catch_warnings():
        # tiny cells can produce zero plug-in variance; the degenerate
        # interval is expected here and shows up in the coverage numbers
        warnings.simplefilter("ignore")
        covers_normal = normal_ci(estimate, cfg.level).covers(true_value)
    covers_boot = None
    if cfg.bootstrap is not None:
        spec = replace(cfg.bootstrap, seed=int(boot_seed.generate_state(1)[0]))
        boot = wild_bootstrap_ci(
            table, cfg.contrast, spec, level=cfg.level, method=cfg.bootstrap_method
        )
        covers_boot = boot.interval.covers(true_value)
    return ReplicationResult(
        True, estimate.value, estimate.se, covers_normal, covers_boot, counts
    )


def run_study(cfg: StudyConfig) -> StudySummary:
    """Run all replications and summarize, conditioning on definedness."""
    true_value = cfg.true_value()
    workers = _max_workers()
    indices = range(cfg.replications)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda r: run_replication(cfg, r, true_value), indices))
    else:
        results = [run_replication(cfg, r, true_value) for r in indices]

    defined = [r for r in results if r.defined]
    estimates = np.array([r.estimate for r in defined])
    diag = rate_diagnostics(cfg.mechanism, cfg.n, cfg.n_groups, EXCHANGEABLE)

    def rate(flags):
        flags = [f for f in flags if f is not None]
        return float(np.mean(flags)) if flags else None

    counts = np.array([r.cell_counts for r in results], dtype=np.float64)
    return StudySummary(
        mechanism=cfg.mechanism.spec_string(),
        n=cfg.n,
        n_groups=cfg.n_groups,
        replications=cfg.replications,
        true_value=true_value,
        normality_condition=diag.normality_condition,
        bias=float(estimates.mean() - true_value) if len(defined) else None,
        variance=float(estimates.var(ddof=1)) if len(defined) > 1 else None,
        coverage_normal=rate([r.covers_normal for r in defined]),
        coverage_bootstrap=rate([r.covers_bootstrap for r in defined]),
        prop_undefined=1.0 - len(defined) / cfg.replications,
        n_defined=len(defined),
        mean_cell_counts=tuple(float(c) for c in counts.mean(axis=0)),
        contrast=cfg.contrast.name,
    )


def coverage_curve(
    base: StudyConfig,
    n_values,
    mechanisms,
    ci_kinds=("normal", "bootstrap"),
) -> list[dict]:
    """Coverage of the target contrast across group sizes and designs.

    Returns long-format records {n, mechanism, ci_kind, coverage}; the
    contrast is re-targeted to each grid point's all-neighbors spillover.
    """
    if not n_values or not mechanisms:
        raise ConfigError("coverage_curve needs a nonempty grid")
    for kind in ci_kinds:
        if kind not in ("normal", "bootstrap"):
            raise ConfigError(f"unknown ci kind {kind!r}")
    if "bootstrap" in ci_kinds and base.bootstrap is None:
        raise ConfigError("bootstrap coverage requested but the study has no bootstrap spec")
    records = []
    for mech in mechanisms:
        for n in n_values:
            cfg = replace(
                base,
                n=n,
                mechanism=mech,
                contrast=spillover_contrast(n),
                bootstrap=base.bootstrap if "bootstrap" in ci_kinds else None,
            )
            summary = run_study(cfg)
            for kind in ci_kinds:
                coverage = (
                    summary.coverage_normal if kind == "normal" else summary.coverage_bootstrap
                )
                records.append(
                    {
                        "n": n,
                        "mechanism": mech.spec_string(),
                        "ci_kind": kind,
                        "coverage": coverage,
                    }
                )
    return records


def simulate_dataset(
    mech: AssignmentMechanism,
    model: OutcomeModel,
    n: int,
    n_groups: int,
    seed: int = 0,
    with_rank: bool = True,
) -> GroupedDataset:
    """Draw one dataset from a design and model (the harness fixture writer)."""
    rng = np.random.default_rng(seed)
    D, T = mech.draw_groups(n, n_groups, rng)
    if model.mode == EXCHANGEABLE:
        means = model.mean_table(n)[exchangeable_codes(D)]
    else:
        means = model.mean_table(n)[saturated_codes(D)]
    y = model.sample(means, rng)
    return dataset_from_matrices(D, y, saturation=T, with_rank=with_rank)
