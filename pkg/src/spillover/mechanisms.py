"""Randomization designs: exact assignment probabilities and seeded samplers.

Each mechanism knows the exact probability of every effective assignment in
both count and vector modes, can report the minimum assignment probability
(the quantity that drives how fast the smallest cell fills up), and can draw
group treatment vectors from the design.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .assignments import (
    EXCHANGEABLE,
    MAX_SATURATED_NEIGHBORS,
    EffectiveAssignment,
    check_mode,
    enumerate_assignments,
)
from .errors import ConfigError, UnsupportedMechanismError

# Exact binomial coefficients are fine for small n; switch to log space
# above this to avoid huge intermediates.
_LOG_SPACE_ABOVE = 30


def _binom_weight(n: int, s: int, p: float, extra: int) -> float:
    """C(n, s) * p^(s+extra) * (1-p)^(n+1-s-extra) without overflow."""
    k = s + extra
    m = n + 1 - k
    if p == 0.0:
        return float(k == 0)
    if p == 1.0:
        return float(m == 0)
    if n <= _LOG_SPACE_ABOVE:
        return math.comb(n, s) * p**k * (1.0 - p) ** m
    logc = math.lgamma(n + 1) - math.lgamma(s + 1) - math.lgamma(n - s + 1)
    return math.exp(logc + k * math.log(p) + m * math.log1p(-p))


def _binom_pmf(n: int, s: int, p: float) -> float:
    """Plain binomial pmf C(n, s) * p^s * (1-p)^(n-s) without overflow."""
    if p == 0.0:
        return float(s == 0)
    if p == 1.0:
        return float(s == n)
    if n <= _LOG_SPACE_ABOVE:
        return math.comb(n, s) * p**s * (1.0 - p) ** (n - s)
    logc = math.lgamma(n + 1) - math.lgamma(s + 1) - math.lgamma(n - s + 1)
    return math.exp(logc + s * math.log(p) + (n - s) * math.log1p(-p))


class AssignmentMechanism:
    """Base class; subclasses implement the closed-form probability law."""

    name = "base"

    # -- probabilities -------------------------------------------------------

    def pi(self, n: int, a: EffectiveAssignment) -> float:
        """Exact probability that a unit observes assignment ``a``."""
        if a.kind == "vector":
            return self._pi_vector(n, a.own, a.peers)
        if a.kind == "ref_count":
            raise UnsupportedMechanismError(
                "assignment probabilities are defined for count and vector "
                "assignments, not reference-group counts"
            )
        return self._pi_count(n, a.own, a.peers)

    def _pi_count(self, n: int, d: int, s: int) -> float:
        raise NotImplementedError

    def _pi_vector(self, n: int, d: int, bits: tuple[int, ...]) -> float:
        raise NotImplementedError

    def pi_table(self, n: int, mode: str = EXCHANGEABLE) -> np.ndarray:
        """Probabilities over the canonical enumeration."""
        check_mode(mode)
        return np.array([self.pi(n, a) for a in enumerate_assignments(n, mode)])

    def pi_min(self, n: int, mode: str = EXCHANGEABLE) -> float:
        """Probability of the least likely effective assignment."""
        return float(self.pi_table(n, mode).min())

    def min_assignments(self, n: int, mode: str = EXCHANGEABLE) -> tuple[EffectiveAssignment, ...]:
        """All assignments attaining the minimum probability (ties reported)."""
        table = self.pi_table(n, mode)
        lo = table.min()
        assigns = enumerate_assignments(n, mode)
        return tuple(a for a, v in zip(assigns, table) if v == lo)

    def unidentified(self, n: int, mode: str = EXCHANGEABLE) -> tuple[EffectiveAssignment, ...]:
        """Assignments with zero probability: their cell means are not identified."""
        table = self.pi_table(n, mode)
        assigns = enumerate_assignments(n, mode)
        return tuple(a for a, v in zip(assigns, table) if v == 0.0)

    def conditional_peer_counts(self, n: int, d: int) -> np.ndarray:
        """P[S = s | D = d] for s = 0..n."""
        table = self.pi_table(n, EXCHANGEABLE)
        row = table[d * (n + 1):(d + 1) * (n + 1)]
        total = row.sum()
        if total <= 0:
            raise UnsupportedMechanismError(
                f"{self.spec_string()} never assigns own treatment {d}"
            )
        return row / total

    def vector_pmf(self, n: int) -> np.ndarray:
        """Probability of each full group treatment vector (n+1 bits).

        Vectors are indexed by their binary value, most significant bit =
        first unit. All built-in designs are permutation symmetric, so the
        law only depends on the number of treated units.
        """
        size = n + 1
        if n > MAX_SATURATED_NEIGHBORS:
            raise ValueError(f"vector enumeration capped at n={MAX_SATURATED_NEIGHBORS}")
        counts = np.array([bin(v).count("1") for v in range(1 << size)])
        by_count = self._group_count_pmf(n)
        # probability of one particular vector with w treated units
        per_vector = np.array([
            by_count[w] / math.comb(size, w) for w in range(size + 1)
        ])
        return per_vector[counts]

    def _group_count_pmf(self, n: int) -> np.ndarray:
        """P[group has w treated units] for w = 0..n+1."""
        raise NotImplementedError

    # -- sampling ------------------------------------------------------------

    def draw_groups(self, n: int, n_groups: int, rng: np.random.Generator):
        """Draw group treatment matrices.

        Returns ``(D, T)`` where ``D`` is (n_groups, n+1) of 0/1 and ``T`` is
        the per-group saturation label for partial-population designs (None
        otherwise).
        """
        raise NotImplementedError

    def draw_group(self, n: int, rng: np.random.Generator):
        """Single group draw; returns (bits, saturation label or None)."""
        D, T = self.draw_groups(n, 1, rng)
        return D[0], (None if T is None else int(T[0]))

    # -- misc ----------------------------------------------------------------

    def spec_string(self) -> str:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.spec_string()!r})"

    def __str__(self):
        return self.spec_string()


@dataclass(frozen=True, repr=False)
class SimpleRandom(AssignmentMechanism):
    """Independent Bernoulli(p) treatment for every unit."""

    p: float = 0.5
    name = "sr"

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"treatment probability must be in [0, 1], got {self.p}")

    def _pi_count(self, n, d, s):
        return _binom_weight(n, s, self.p, d)

    def _pi_vector(self, n, d, bits):
        s = sum(bits)
        k, m = s + d, n + 1 - s - d
        if self.p == 0.0:
            return float(k == 0)
        if self.p == 1.0:
            return float(m == 0)
        return self.p**k * (1.0 - self.p) ** m

    def _group_count_pmf(self, n):
        return np.array([_binom_pmf(n + 1, w, self.p) for w in range(n + 2)])

    def draw_groups(self, n, n_groups, rng):
        D = (rng.random((n_groups, n + 1)) < self.p).astype(np.int8)
        return D, None

    def spec_string(self):
        return f"sr:p={self.p:g}"


@dataclass(frozen=True, repr=False)
class TwoStageFixedMargins(AssignmentMechanism):
    """Two-stage randomization with fixed margins.

    Each group first draws its number of treated units w = 0..n+1 from the
    margin weights (uniform over the n+2 values by default), then a uniformly
    random subset of that size is treated.
    """

    weights: tuple[float, ...] | None = None
    name = "2srfm"

    def __post_init__(self):
        if self.weights is not None:
            w = tuple(float(x) for x in self.weights)
            if any(x < 0 for x in w):
                raise ConfigError("margin weights must be nonnegative")
            if abs(sum(w) - 1.0) > 1e-9:
                raise ConfigError(f"margin weights must sum to 1, got {sum(w):g}")
            object.__setattr__(self, "weights", w)

    def margin_weights(self, n: int) -> np.ndarray:
        if self.weights is None:
            return np.full(n + 2, 1.0 / (n + 2))
        if len(self.weights) != n + 2:
            raise ConfigError(
                f"need {n + 2} margin weights for groups of size {n + 1}, got {len(self.weights)}"
            )
        return np.asarray(self.weights)

    def _pi_count(self, n, d, s):
        # P[D=d, S=s] = q_{d+s} * C(n, s) / C(n+1, d+s); the ratio collapses
        # to (s+1)/(n+1) for treated units and (n+1-s)/(n+1) for controls.
        num = (s + 1) if d == 1 else (n + 1 - s)
        if self.weights is None:
            return num / ((n + 1) * (n + 2))
        return self.margin_weights(n)[d + s] * num / (n + 1)

    def _pi_vector(self, n, d, bits):
        w = d + sum(bits)
        return self.margin_weights(n)[w] / math.comb(n + 1, w)

    def _group_count_pmf(self, n):
        return self.margin_weights(n)

    def draw_groups(self, n, n_groups, rng):
        size = n + 1
        q = self.margin_weights(n)
        w = rng.choice(size + 1, size=n_groups, p=q)
        # rank a row of uniforms; the w smallest get treated
        u = rng.random((n_groups, size))
        ranks = np.argsort(np.argsort(u, axis=1), axis=1)
        D = (ranks < w[:, None]).astype(np.int8)
        return D, None

    def spec_string(self):
        if self.weights is None:
            return "2srfm"
        return "2srfm:q=" + ",".join(f"{x:g}" for x in self.weights)


@dataclass(frozen=True, repr=False)
class ClusterRandom(AssignmentMechanism):
    """All-or-nothing treatment at the group level."""

    p_group: float = 0.5
    name = "cluster"

    def __post_init__(self):
        if not 0.0 <= self.p_group <= 1.0:
            raise ConfigError(f"group treatment probability must be in [0, 1], got {self.p_group}")

    def _pi_count(self, n, d, s):
        if (d, s) == (1, n):
            return self.p_group
        if (d, s) == (0, 0):
            return 1.0 - self.p_group
        return 0.0

    def _pi_vector(self, n, d, bits):
        if d == 1 and all(bits):
            return self.p_group
        if d == 0 and not any(bits):
            return 1.0 - self.p_group
        return 0.0

    def _group_count_pmf(self, n):
        out = np.zeros(n + 2)
        out[0] = 1.0 - self.p_group
        out[n + 1] = self.p_group
        return out

    def draw_groups(self, n, n_groups, rng):
        treated = rng.random(n_groups) < self.p_group
        D = np.repeat(treated[:, None], n + 1, axis=1).astype(np.int8)
        return D, None

    def spec_string(self):
        return f"cluster:p={self.p_group:g}"


@dataclass(frozen=True, repr=False)
class PartialPopulation(AssignmentMechanism):
    """Groups are split into treated and pure control; treatment is
    randomized at the unit level inside treated groups only."""

    p_treated_group: float = 0.5
    p_within: float = 0.5
    name = "pp"

    def __post_init__(self):
        for v, what in ((self.p_treated_group, "group"), (self.p_within, "within-group")):
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{what} treatment probability must be in [0, 1], got {v}")

    def _pi_count(self, n, d, s):
        within = _binom_weight(n, s, self.p_within, d)
        value = self.p_treated_group * within
        if (d, s) == (0, 0):
            value += 1.0 - self.p_treated_group
        return value

    def _pi_vector(self, n, d, bits):
        s = sum(bits)
        k, m = s + d, n + 1 - s - d
        if self.p_within in (0.0, 1.0):
            within = float(k == 0) if self.p_within == 0.0 else float(m == 0)
        else:
            within = self.p_within**k * (1.0 - self.p_within) ** m
        value = self.p_treated_group * within
        if k == 0:
            value += 1.0 - self.p_treated_group
        return value

    def _group_count_pmf(self, n):
        out = self.p_treated_group * np.array(
            [_binom_pmf(n + 1, w, self.p_within) for w in range(n + 2)]
        )
        out[0] += 1.0 - self.p_treated_group
        return out

    def peer_counts_in_treated_groups(self, n: int) -> np.ndarray:
        """P[S = s | D = 0, T = 1], the pooling weights of the design.

        Within treated groups the assignment is unit-level Bernoulli, so the
        law is the same for treated and control units.
        """
        return np.array([_binom_pmf(n, s, self.p_within) for s in range(n + 1)])

    def draw_groups(self, n, n_groups, rng):
        T = (rng.random(n_groups) < self.p_treated_group).astype(np.int8)
        D = (rng.random((n_groups, n + 1)) < self.p_within).astype(np.int8)
        D *= T[:, None]
        return D, T

    def spec_string(self):
        return f"pp:pT={self.p_treated_group:g},pw={self.p_within:g}"


# ---------------------------------------------------------------------------
# Design diagnostics built on the probability law.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateDiagnostics:
    """Sample-size diagnostics for one design at a given scale.

    ``normality_condition`` is log|A_n| / (G * pi_min^2); the Gaussian
    approximation is trustworthy when it is near zero. ``min_expected_cell``
    is G(n+1) * pi_min, the expected number of observations in the emptiest
    cell. The two ratios compare group size against log G, the scalings under
    which Bernoulli and fixed-margin designs keep all cells estimable.
    """

    mechanism: str
    n: int
    n_groups: int
    mode: str
    pi_min: float
    normality_condition: float
    min_expected_cell: float
    size_to_log_groups: float
    log_size_to_log_groups: float
    unidentified: tuple[EffectiveAssignment, ...]

    @property
    def identified_everywhere(self) -> bool:
        return not self.unidentified


def rate_diagnostics(
    mech: AssignmentMechanism,
    n: int,
    n_groups: int,
    mode: str = EXCHANGEABLE,
) -> RateDiagnostics:
    """Evaluate the design-quality diagnostics for one mechanism."""
    if n_groups < 2:
        raise ValueError(f"need at least 2 groups, got {n_groups}")
    check_mode(mode)
    table = mech.pi_table(n, mode)
    pi_min = float(table.min())
    n_cells = len(table)
    log_g = math.log(n_groups)
    if pi_min > 0:
        condition = math.log(n_cells) / (n_groups * pi_min**2)
    else:
        condition = math.inf
    return RateDiagnostics(
        mechanism=mech.spec_string(),
        n=n,
        n_groups=n_groups,
        mode=mode,
        pi_min=pi_min,
        normality_condition=condition,
        min_expected_cell=n_groups * (n + 1) * pi_min,
        size_to_log_groups=(n + 1) / log_g,
        log_size_to_log_groups=math.log(n + 1) / log_g,
        unidentified=mech.unidentified(n, mode),
    )


# ---------------------------------------------------------------------------
# Mechanism specification grammar: sr:p=0.5 | 2srfm[:q=...] | cluster:p=0.5
# | pp:pT=0.5,pw=0.5
# ---------------------------------------------------------------------------

GRAMMAR = "sr:p=0.5 | 2srfm | 2srfm:q=w0,w1,... | cluster:p=0.5 | pp:pT=0.5,pw=0.5"


def parse_mechanism(token: str) -> AssignmentMechanism:
    """Parse a mechanism specification string."""
    token = token.strip()
    head, _, tail = token.partition(":")
    args = {}
    if tail:
        for part in tail.split(";"):
            for item in _split_args(part):
                key, _, value = item.partition("=")
                if not value:
                    raise ConfigError(f"cannot parse mechanism argument {item!r} in {token!r}")
                args[key.strip()] = value.strip()
    try:
        if head == "sr":
            return SimpleRandom(p=float(args.pop("p", 0.5)), **_no_extras(args, token))
        if head == "2srfm":
            q = args.pop("q", None)
            _no_extras(args, token)
            weights = None if q is None else tuple(float(x) for x in q.split(","))
            return TwoStageFixedMargins(weights=weights)
        if head == "cluster":
            return ClusterRandom(p_group=float(args.pop("p", 0.5)), **_no_extras(args, token))
        if head == "pp":
            mech = PartialPopulation(
                p_treated_group=float(args.pop("pT", 0.5)),
                p_within=float(args.pop("pw", 0.5)),
            )
            _no_extras(args, token)
            return mech
    except ValueError as exc:
        raise ConfigError(f"cannot parse mechanism {token!r}: {exc}") from exc
    raise ConfigError(f"unknown mechanism {token!r}; grammar: {GRAMMAR}")


def _split_args(text: str):
    """Split 'pT=0.5,pw=0.5' into items while keeping 'q=1,2,3' whole."""
    items = []
    for chunk in text.split(","):
        if "=" in chunk or not items:
            items.append(chunk)
        else:
            items[-1] += "," + chunk
    return items


def _no_extras(args: dict, token: str) -> dict:
    if args:
        raise ConfigError(f"unknown mechanism arguments {sorted(args)} in {token!r}")
    return {}


@lru_cache(maxsize=None)
def _cached_parse(token: str) -> AssignmentMechanism:
    return parse_mechanism(token)
