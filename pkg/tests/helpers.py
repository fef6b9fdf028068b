"""Independent brute-force oracles used to check the closed forms.

Everything here works by exhaustive enumeration of full group treatment
vectors with probabilities written from first principles per design, so it
shares no code path with the library's per-assignment formulas.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def all_vectors(size: int):
    """All 0/1 tuples of the given length."""
    return list(itertools.product((0, 1), repeat=size))


def vector_law(kind: str, size: int, **params) -> dict[tuple[int, ...], float]:
    """P[group treatment vector] for each design, from first principles."""
    out = {}
    for v in all_vectors(size):
        w = sum(v)
        if kind == "sr":
            p = params["p"]
            prob = p**w * (1 - p) ** (size - w)
        elif kind == "2srfm":
            q = params.get("q") or [1.0 / (size + 1)] * (size + 1)
            prob = q[w] / math.comb(size, w)
        elif kind == "cluster":
            p = params["p"]
            prob = p * (w == size) + (1 - p) * (w == 0)
        elif kind == "pp":
            pt, pw = params["pt"], params["pw"]
            prob = pt * pw**w * (1 - pw) ** (size - w) + (1 - pt) * (w == 0)
        else:
            raise ValueError(kind)
        out[v] = prob
    assert abs(sum(out.values()) - 1.0) < 1e-12
    return out


def enum_pi(law: dict, d: int, s: int) -> float:
    """P[unit 0 is at (d, s)] by summing the vector law."""
    return sum(p for v, p in law.items() if v[0] == d and sum(v[1:]) == s)


def enum_neighbor_weights(law: dict, d: int, s: int) -> dict[tuple[int, ...], float]:
    """P[neighbor vector of unit 0 | own status d, count s]."""
    denom = enum_pi(law, d, s)
    out = {}
    for v, p in law.items():
        if v[0] == d and sum(v[1:]) == s:
            out[v[1:]] = out.get(v[1:], 0.0) + p / denom
    return out


def enum_difference_in_means(law: dict, mu) -> float:
    """Population treated-minus-control mean; mu maps (d, s) to the cell mean."""
    num = {0: 0.0, 1: 0.0}
    den = {0: 0.0, 1: 0.0}
    for v, p in law.items():
        d, s = v[0], sum(v[1:])
        num[d] += p * mu(d, s)
        den[d] += p
    return num[1] / den[1] - num[0] / den[0]


def enum_pooled(law: dict, mu, bucket, d: int = 0) -> float:
    """Population pooled spillover for a bucket of counts at own status d."""
    bucket = set(bucket)
    num = den = 0.0
    for v, p in law.items():
        if v[0] == d and sum(v[1:]) in bucket:
            num += p * mu(d, sum(v[1:]))
            den += p
    base_num = base_den = 0.0
    for v, p in law.items():
        if v[0] == d and sum(v[1:]) == 0:
            base_num += p * mu(d, 0)
            base_den += p
    return num / den - base_num / base_den


def enum_lim_slope(law: dict, mu, n: int, interacted: bool):
    """Population least-squares coefficients, by probability-weighted projection."""
    rows, weights, ys = [], [], []
    for v, p in law.items():
        if p == 0.0:
            continue
        d, s = v[0], sum(v[1:])
        share = s / n
        if interacted:
            rows.append([1.0, d, share * (1 - d), share * d])
        else:
            rows.append([1.0, d, share])
        weights.append(p)
        ys.append(mu(d, s))
    X = np.asarray(rows)
    w = np.sqrt(np.asarray(weights))
    beta, *_ = np.linalg.lstsq(X * w[:, None], np.asarray(ys) * w, rcond=None)
    if interacted:
        return float(beta[2]), float(beta[3])
    return float(beta[2])


def enum_pp_effect(pt: float, pw: float, n: int, mu) -> float:
    """Population partial-population contrast by enumerating treated-group vectors."""
    law_within = vector_law("sr", n + 1, p=pw)
    num = den = 0.0
    for v, p in law_within.items():
        if v[0] == 0:
            num += p * mu(0, sum(v[1:]))
            den += p
    mean_controls_treated_groups = num / den
    mean_pure_control = mu(0, 0)
    return mean_controls_treated_groups - mean_pure_control


def sim_dgp_mean(d: int, s: int) -> float:
    """The binary-outcome simulation mean: 0.75 + 0.13 d + 0.12 (1-d) 1(s>0)."""
    return 0.75 + 0.13 * d + 0.12 * (1 - d) * (s > 0)
