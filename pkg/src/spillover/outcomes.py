"""Outcome models for simulation and the direct/spillover effect decomposition."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .assignments import (
    EXCHANGEABLE,
    SATURATED,
    EffectiveAssignment,
    check_mode,
    enumerate_assignments,
)
from .errors import ConfigError, IncompleteCellsError


@dataclass(frozen=True)
class BernoulliNoise:
    """Binary outcome equal to 1 with probability given by the cell mean."""

    def sample(self, means: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return (rng.random(means.shape) < means).astype(np.float64)

    def validate_means(self, means: np.ndarray) -> None:
        if np.any(means < 0) or np.any(means > 1):
            raise ValueError("Bernoulli outcomes need cell means inside [0, 1]")


@dataclass(frozen=True)
class GaussianNoise:
    """Cell mean plus independent Gaussian noise with a common scale."""

    sigma: float = 1.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")

    def sample(self, means: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return means + self.sigma * rng.standard_normal(means.shape)

    def validate_means(self, means: np.ndarray) -> None:
        pass


@dataclass(frozen=True)
class OutcomeModel:
    """Data-generating process mapping effective assignments to outcomes.

    ``mean_fn`` maps (own treatment, treated-neighbor count) to the average
    outcome, or (own treatment, neighbor bit tuple) when ``mode`` is
    saturated. The noise law turns means into draws.
    """

    mean_fn: Callable
    noise: BernoulliNoise | GaussianNoise = field(default_factory=BernoulliNoise)
    mode: str = EXCHANGEABLE

    def __post_init__(self):
        check_mode(self.mode)

    def mean(self, a: EffectiveAssignment) -> float:
        if self.mode == SATURATED:
            return float(self.mean_fn(a.own, a.peers))
        return float(self.mean_fn(a.own, a.n_treated_peers))

    def mean_table(self, n: int) -> np.ndarray:
        """Cell means over the canonical enumeration for ``n`` neighbors.

        Also validates the model: every enumerated assignment must have a
        defined mean, and Bernoulli means must lie in [0, 1].
        """
        assignments = enumerate_assignments(n, self.mode)
        values = np.empty(len(assignments))
        missing = []
        for i, a in enumerate(assignments):
            try:
                values[i] = self.mean(a)
            except (KeyError, IndexError):
                missing.append(a)
        if missing:
            raise IncompleteCellsError(missing, "outcome model mean undefined on some assignments")
        self.noise.validate_means(values)
        return values

    def exchangeable_means(self, n: int) -> np.ndarray:
        """Count-mode cell means, aggregating a saturated model by simple average."""
        if self.mode == EXCHANGEABLE:
            return self.mean_table(n)
        table = self.mean_table(n)
        out = np.empty(2 * (n + 1))
        for d in (0, 1):
            for s in range(n + 1):
                cells = [
                    table[a.index(n)]
                    for a in enumerate_assignments(n, SATURATED)
                    if a.own == d and a.n_treated_peers == s
                ]
                out[d * (n + 1) + s] = float(np.mean(cells))
        return out

    def effects(self, n: int) -> "EffectVector":
        """True direct and spillover effects implied by the model."""
        means = self.exchangeable_means(n) if self.mode == SATURATED else self.mean_table(n)
        return effects_from_means(means, n)

    def sample(self, means: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.noise.sample(np.asarray(means, dtype=np.float64), rng)


@dataclass(frozen=True)
class EffectVector:
    """Direct and spillover effects for one group size.

    ``direct[s]`` is the effect of own treatment holding ``s`` treated
    neighbors fixed; ``spillover[(d, s)]`` is the effect of ``s`` treated
    neighbors versus none at own status ``d`` (zero at s=0 by construction);
    ``baseline`` is the average outcome with nobody treated.
    """

    baseline: float
    direct: Mapping[int, float]
    spillover: Mapping[tuple[int, int], float]

    def __post_init__(self):
        n = self.n
        scale = max(
            1.0,
            abs(self.baseline),
            max(abs(v) for v in self.direct.values()),
            max(abs(v) for v in self.spillover.values()),
        )
        for d in (0, 1):
            if abs(self.spillover[(d, 0)]) > 1e-9 * scale:
                raise ValueError("spillover with zero treated neighbors must be zero")
        for s in range(n + 1):
            implied = self.direct[0] + self.spillover[(1, s)] - self.spillover[(0, s)]
            if abs(self.direct[s] - implied) > 1e-9 * scale:
                raise ValueError(
                    f"inconsistent effects: direct[{s}]={self.direct[s]} but baseline "
                    f"reconstruction gives {implied}"
                )

    @property
    def n(self) -> int:
        return max(self.direct)

    def cell_means(self) -> dict[tuple[int, int], float]:
        """Reconstruct the average outcome of every (d, s) cell."""
        out = {}
        for s in range(self.n + 1):
            out[(0, s)] = self.baseline + self.spillover[(0, s)]
            out[(1, s)] = self.baseline + self.direct[0] + self.spillover[(1, s)]
        return out

    def marginal_spillover(self, d: int, s: int) -> float:
        """Effect of one additional treated neighbor on top of ``s``."""
        return self.spillover[(d, s + 1)] - self.spillover[(d, s)]


def effects_from_means(means, n: int) -> EffectVector:
    """Decompose count-mode cell means into direct and spillover effects.

    ``means`` is either an array in canonical order (d-major, count-minor) or
    a mapping keyed by (d, s) tuples or count-mode assignments.
    """
    table = np.full(2 * (n + 1), np.nan)
    if isinstance(means, Mapping):
        for key, value in means.items():
            a = key if isinstance(key, EffectiveAssignment) else EffectiveAssignment.count(*key)
            table[a.index(n)] = float(value)
    else:
        arr = np.asarray(means, dtype=np.float64)
        if arr.shape != (2 * (n + 1),):
            raise ValueError(f"expected {2 * (n + 1)} cell means, got shape {arr.shape}")
        table = arr.copy()
    if np.any(np.isnan(table)):
        missing = [a for a in enumerate_assignments(n, EXCHANGEABLE) if np.isnan(table[a.index(n)])]
        raise IncompleteCellsError(missing)

    mu = lambda d, s: table[d * (n + 1) + s]
    direct = {s: mu(1, s) - mu(0, s) for s in range(n + 1)}
    spillover = {(d, s): mu(d, s) - mu(d, 0) for d in (0, 1) for s in range(n + 1)}
    return EffectVector(baseline=mu(0, 0), direct=direct, spillover=spillover)


# ---------------------------------------------------------------------------
# Model factories used by tests, the harness, and simulate configs.
# ---------------------------------------------------------------------------

def constant_spillover_model(
    baseline: float = 0.75,
    direct: float = 0.13,
    spillover: float = 0.12,
    noise: BernoulliNoise | GaussianNoise | None = None,
) -> OutcomeModel:
    """Untreated units gain ``spillover`` as soon as any neighbor is treated.

    Treated units get ``direct`` on top of the baseline and no spillover, so
    the spillover on the untreated is flat in the number of treated neighbors.
    """
    def mean(d, s):
        return baseline + direct * d + spillover * (1 - d) * (s > 0)

    return OutcomeModel(mean, noise or BernoulliNoise())


def linear_spillover_model(
    baseline: float = 0.0,
    direct: float = 0.0,
    slope: float = 0.1,
    noise: BernoulliNoise | GaussianNoise | None = None,
) -> OutcomeModel:
    """Spillovers proportional to the treated-neighbor count, equal across statuses."""
    def mean(d, s):
        return baseline + direct * d + slope * s

    return OutcomeModel(mean, noise or GaussianNoise(1.0))


def table_model(
    means: Mapping,
    noise: BernoulliNoise | GaussianNoise | None = None,
    mode: str = EXCHANGEABLE,
) -> OutcomeModel:
    """Model backed by an explicit mean per assignment.

    Keys are (d, s) tuples in exchangeable mode or (d, neighbor-bit tuple) in
    saturated mode.
    """
    lookup = {}
    for key, value in means.items():
        d, peers = key
        peers = tuple(int(b) for b in peers) if mode == SATURATED else int(peers)
        lookup[(int(d), peers)] = float(value)

    def mean(d, peers):
        peers = tuple(int(b) for b in peers) if mode == SATURATED else int(peers)
        return lookup[(d, peers)]

    return OutcomeModel(mean, noise or GaussianNoise(1.0), mode=mode)


def _parse_noise(spec) -> BernoulliNoise | GaussianNoise:
    if spec is None or spec == "bernoulli":
        return BernoulliNoise()
    if isinstance(spec, str):
        if spec == "gaussian":
            return GaussianNoise(1.0)
        raise ConfigError(f"unknown noise law {spec!r}; use 'bernoulli' or 'gaussian'")
    if isinstance(spec, Mapping):
        kind = spec.get("kind", "bernoulli")
        if kind == "bernoulli":
            return BernoulliNoise()
        if kind == "gaussian":
            return GaussianNoise(float(spec.get("sigma", 1.0)))
        raise ConfigError(f"unknown noise law {kind!r}; use 'bernoulli' or 'gaussian'")
    raise ConfigError(f"cannot parse noise specification {spec!r}")


def model_from_config(spec: Mapping) -> OutcomeModel:
    """Build an outcome model from a simulate-config dictionary."""
    if not isinstance(spec, Mapping) or "kind" not in spec:
        raise ConfigError("model specification must be an object with a 'kind' field")
    kind = spec["kind"]
    noise = _parse_noise(spec.get("noise"))
    if kind == "constant_spillover":
        return constant_spillover_model(
            baseline=float(spec.get("baseline", 0.75)),
            direct=float(spec.get("direct", 0.13)),
            spillover=float(spec.get("spillover", 0.12)),
            noise=noise,
        )
    if kind == "linear_spillover":
        return linear_spillover_model(
            baseline=float(spec.get("baseline", 0.0)),
            direct=float(spec.get("direct", 0.0)),
            slope=float(spec.get("slope", 0.1)),
            noise=noise,
        )
    if kind == "table":
        raw = spec.get("means")
        if not isinstance(raw, Mapping):
            raise ConfigError("table model needs a 'means' mapping like {'0,1': 0.5}")
        mode = spec.get("mode", EXCHANGEABLE)
        means = {}
        for key, value in raw.items():
            d_part, peers_part = str(key).split(",", 1)
            if mode == SATURATED:
                peers = tuple(int(b) for b in peers_part.strip())
            else:
                peers = int(peers_part)
            means[(int(d_part), peers)] = float(value)
        return table_model(means, noise=noise, mode=mode)
    raise ConfigError(
        f"unknown model kind {kind!r}; use constant_spillover, linear_spillover or table"
    )
