"""Acceptance suite: one test per criterion, at the stated tolerances.

Each test prints a single PASS line (visible with -s or in the captured
output) so the run doubles as a checklist.
"""

import itertools
import time

import numpy as np
import pytest

from spillover import (
    BootstrapSpec,
    GaussianNoise,
    PartialPopulation,
    SATURATED,
    SimpleRandom,
    StudyConfig,
    TwoStageFixedMargins,
    build_cell_table,
    constant_spillover_model,
    difference_in_means,
    direct_and_spillover,
    exchangeability_test,
    lim_fit,
    partial_population_effect,
    pooled_spillover,
    population_difference_in_means,
    population_lim_slope,
    population_partial_population_effect,
    population_pooled_spillover,
    run_study,
    simulate_dataset,
    table_model,
)
from spillover.assignments import EffectiveAssignment, saturated_codes
from spillover.estimators import cell_table_from_codes

from helpers import (
    enum_difference_in_means,
    enum_lim_slope,
    enum_neighbor_weights,
    enum_pi,
    enum_pooled,
    enum_pp_effect,
    sim_dgp_mean,
    vector_law,
)

DGP = constant_spillover_model()


def test_criterion_1_identification_oracle_equivalence():
    """Enumeration over all group vectors reproduces every closed form, n = 1..6."""
    start = time.monotonic()
    mechs = [
        (SimpleRandom(0.3), "sr", dict(p=0.3)),
        (SimpleRandom(0.5), "sr", dict(p=0.5)),
        (TwoStageFixedMargins(), "2srfm", dict()),
        (PartialPopulation(0.5, 0.5), "pp", dict(pt=0.5, pw=0.5)),
    ]
    tol = 1e-10
    for mech, kind, params in mechs:
        for n in range(1, 7):
            law = vector_law(kind, n + 1, **params)
            mu = sim_dgp_mean
            for d in (0, 1):
                for s in range(n + 1):
                    want = enum_pi(law, d, s)
                    got = mech.pi(n, EffectiveAssignment.count(d, s))
                    assert abs(got - want) < tol
                    if want > 0:
                        from spillover import vector_weights_given_count

                        weights = vector_weights_given_count(mech, n, d, s)
                        expected = enum_neighbor_weights(law, d, s)
                        assert set(weights) == set(expected)
                        for key in weights:
                            assert abs(weights[key] - expected[key]) < tol
            assert abs(
                population_difference_in_means(DGP, mech, n)
                - enum_difference_in_means(law, mu)
            ) < tol
            value, _ = population_pooled_spillover(DGP, mech, n, tuple(range(1, n + 1)))
            assert abs(value - enum_pooled(law, mu, range(1, n + 1))) < tol
            if isinstance(mech, SimpleRandom):
                assert abs(
                    population_lim_slope(DGP, mech, n)
                    - enum_lim_slope(law, mu, n, interacted=False)
                ) < tol
                got = population_lim_slope(DGP, mech, n, interacted=True)
                want = enum_lim_slope(law, mu, n, interacted=True)
                assert abs(got[0] - want[0]) < tol and abs(got[1] - want[1]) < tol
            if isinstance(mech, PartialPopulation):
                value, _ = population_partial_population_effect(DGP, mech, n)
                assert abs(value - enum_pp_effect(0.5, 0.5, n, mu)) < tol
    elapsed = time.monotonic() - start
    assert elapsed < 10.0
    print(f"ACCEPTANCE 1 PASS: enumeration equivalence to 1e-10 in {elapsed:.2f}s")


def test_criterion_2_closed_form_spot_values_and_large_sample_fits():
    """Known population values for the simulation process, matched by fits at G=20000."""
    start = time.monotonic()
    sr = SimpleRandom(0.5)
    pp = PartialPopulation(0.5, 0.5)

    assert population_difference_in_means(DGP, sr, 2) == pytest.approx(0.04, abs=1e-12)
    assert population_lim_slope(DGP, sr, 2) == pytest.approx(0.06, abs=1e-12)
    ctrl, treat = population_lim_slope(DGP, sr, 2, interacted=True)
    assert ctrl == pytest.approx(0.12, abs=1e-12)
    assert treat == pytest.approx(0.0, abs=1e-12)
    delta, _ = population_pooled_spillover(DGP, sr, 2, (1, 2))
    assert delta == pytest.approx(0.12, abs=1e-12)
    delta_pp, _ = population_partial_population_effect(DGP, pp, 2)
    assert delta_pp == pytest.approx(0.09, abs=1e-12)

    ds = simulate_dataset(sr, DGP, n=2, n_groups=20000, seed=2024)
    dim = difference_in_means(ds)
    assert abs(dim.value - 0.04) < 3 * dim.se
    fit = lim_fit(ds)
    assert abs(fit.coef_map()["peer_share"] - 0.06) < 3 * fit.se_map()["peer_share"]
    inter = lim_fit(ds, interacted=True)
    assert abs(inter.coef_map()["peer_share_control"] - 0.12) < 3 * inter.se_map()[
        "peer_share_control"
    ]
    assert abs(inter.coef_map()["peer_share_treated"]) < 3 * inter.se_map()[
        "peer_share_treated"
    ]
    pooled = pooled_spillover(build_cell_table(ds), d=0)[(1, 2)]
    assert abs(pooled.value - 0.12) < 3 * pooled.se

    ds_pp = simulate_dataset(pp, DGP, n=2, n_groups=20000, seed=2025)
    est_pp = partial_population_effect(ds_pp)
    assert abs(est_pp.value - 0.09) < 3 * est_pp.se

    elapsed = time.monotonic() - start
    assert elapsed < 120.0
    print(f"ACCEPTANCE 2 PASS: spot values and G=20000 fits in {elapsed:.2f}s")


def test_criterion_3_definedness_reproduction():
    """Large groups break the Bernoulli design but not fixed margins (G=300, n=11)."""
    start = time.monotonic()
    base = dict(n_groups=300, n=11, model=DGP, replications=2000, seed=33, bootstrap=None)
    sr = run_study(StudyConfig(mechanism=SimpleRandom(0.5), **base))
    fm = run_study(StudyConfig(mechanism=TwoStageFixedMargins(), **base))
    assert sr.prop_undefined >= 0.95
    assert fm.prop_undefined <= 0.01
    elapsed = time.monotonic() - start
    assert elapsed < 300.0
    print(
        f"ACCEPTANCE 3 PASS: prop_undefined sr={sr.prop_undefined:.3f} "
        f"fm={fm.prop_undefined:.4f} in {elapsed:.1f}s"
    )


def test_criterion_4_coverage_reproduction():
    """Coverage at desk scale: near-nominal at n=2; orderings at n=11."""
    start = time.monotonic()
    boot = BootstrapSpec(B=500, seed=0)

    small = run_study(
        StudyConfig(
            n_groups=300, n=2, mechanism=SimpleRandom(0.5), model=DGP,
            replications=2000, seed=44, bootstrap=boot,
        )
    )
    assert 0.93 <= small.coverage_normal <= 0.97

    sr11 = run_study(
        StudyConfig(
            n_groups=300, n=11, mechanism=SimpleRandom(0.5), model=DGP,
            replications=2000, seed=44, bootstrap=boot,
        )
    )
    fm11 = run_study(
        StudyConfig(
            n_groups=300, n=11, mechanism=TwoStageFixedMargins(), model=DGP,
            replications=2000, seed=44, bootstrap=boot,
        )
    )
    assert fm11.coverage_normal >= sr11.coverage_normal
    assert sr11.coverage_bootstrap >= sr11.coverage_normal
    # the quoted coverage levels apply where enough replications are defined
    if sr11.n_defined >= 200:
        assert abs(sr11.coverage_normal - 0.88) <= 0.04
    if fm11.n_defined >= 200:
        assert abs(fm11.coverage_normal - 0.90) <= 0.04

    elapsed = time.monotonic() - start
    assert elapsed < 1800.0
    print(
        "ACCEPTANCE 4 PASS: "
        f"cov(sr,n=2)={small.coverage_normal:.3f}, "
        f"n=11 normal sr={sr11.coverage_normal:.3f} (defined {sr11.n_defined}) "
        f"fm={fm11.coverage_normal:.3f}, boot sr={sr11.coverage_bootstrap:.3f}, "
        f"in {elapsed:.1f}s"
    )


def test_criterion_5_bootstrap_exactness():
    """Exhaustive sign enumeration: E*[mean*] and V*[mean*] exact for N <= 12."""
    rng = np.random.default_rng(55)
    for size in range(2, 13):
        values = rng.standard_normal(size)
        mean = values.mean()
        eps = values - mean
        stars = np.array(
            [
                mean + float(np.mean(eps * np.asarray(signs)))
                for signs in itertools.product((-1.0, 1.0), repeat=size)
            ]
        )
        assert abs(stars.mean() - mean) < 1e-12
        assert abs(stars.var() - float(np.sum(eps**2)) / size**2) < 1e-12
    print("ACCEPTANCE 5 PASS: bootstrap mean and variance exact for N(a) <= 12")


def test_criterion_6_dummy_regression_equivalence():
    """Saturated dummy least squares equals cell-mean contrasts on 100 datasets."""
    from spillover import dataset_from_matrices

    rng = np.random.default_rng(66)
    checked = 0
    attempts = 0
    while checked < 100:
        attempts += 1
        assert attempts < 1000
        n = int(rng.integers(1, 4))
        G = int(rng.integers(30, 60))
        D = (rng.random((G, n + 1)) < rng.uniform(0.3, 0.7)).astype(int)
        Y = rng.standard_normal((G, n + 1))
        ds = dataset_from_matrices(D, Y)
        table = build_cell_table(ds)
        if (table.counts == 0).any():
            continue
        checked += 1
        Dv = ds.treatment.astype(float)
        s = ds.assignment_codes() % (n + 1)
        cols = [np.ones(ds.n_units), Dv]
        cols += [(s == sv) * (1 - Dv) for sv in range(1, n + 1)]
        cols += [(s == sv) * Dv for sv in range(1, n + 1)]
        beta, *_ = np.linalg.lstsq(np.column_stack(cols), ds.outcome, rcond=None)
        a = EffectiveAssignment.count
        mu = table.mean
        assert abs(beta[0] - mu(a(0, 0))) < 1e-10
        assert abs(beta[1] - (mu(a(1, 0)) - mu(a(0, 0)))) < 1e-10
        for sv in range(1, n + 1):
            assert abs(beta[1 + sv] - (mu(a(0, sv)) - mu(a(0, 0)))) < 1e-10
            assert abs(beta[1 + n + sv] - (mu(a(1, sv)) - mu(a(1, 0)))) < 1e-10
        eff = direct_and_spillover(table)
        if eff.direct[0].defined:
            assert abs(beta[1] - eff.direct[0].value) < 1e-10
    print(f"ACCEPTANCE 6 PASS: dummy-regression equivalence on {checked} datasets")


def test_criterion_7_design_closed_forms():
    """Minimum assignment probabilities and the design crossover at n = 4."""
    for n in range(1, 17):
        assert SimpleRandom(0.5).pi_min(n) == 0.5 ** (n + 1)
        assert TwoStageFixedMargins().pi_min(n) == 1.0 / ((n + 1) * (n + 2))
    for n in range(1, 4):
        assert SimpleRandom(0.5).pi_min(n) > TwoStageFixedMargins().pi_min(n)
    for n in range(4, 17):
        assert TwoStageFixedMargins().pi_min(n) > SimpleRandom(0.5).pi_min(n)
    print("ACCEPTANCE 7 PASS: pi_min closed forms exact for n=1..16, crossover at n=4")


def _exchangeability_rejection_rate(means, sigma, n_groups, reps, seed, level=0.05):
    model = table_model(means, mode=SATURATED, noise=GaussianNoise(sigma))
    lookup = model.mean_table(2)
    mech = SimpleRandom(0.5)
    rejections = 0
    testable = 0
    for r in range(reps):
        rng = np.random.default_rng([seed, r])
        D, _ = mech.draw_groups(2, n_groups, rng)
        codes = saturated_codes(D).ravel()
        y = model.sample(lookup[codes], rng)
        table = cell_table_from_codes(
            codes, y, np.repeat(np.arange(n_groups), 3), 2, SATURATED, n_groups
        )
        result = exchangeability_test(table)
        if result.testable:
            testable += 1
            rejections += result.p_value < level
    assert testable == reps
    return rejections / reps


def test_criterion_8_exchangeability_test_calibration():
    """Size close to nominal under an exchangeable process; power under a 0.3 gap."""
    start = time.monotonic()
    vectors = [(0, 0), (0, 1), (1, 0), (1, 1)]
    exchangeable_means = {
        (d, v): 0.2 * d + 0.1 * (sum(v) > 0) for d in (0, 1) for v in vectors
    }
    size = _exchangeability_rejection_rate(
        exchangeable_means, sigma=0.5, n_groups=2000, reps=2000, seed=88
    )
    assert 0.03 <= size <= 0.07

    gap_means = dict(exchangeable_means)
    gap_means[(0, (1, 0))] = gap_means[(0, (0, 1))] + 0.3
    power = _exchangeability_rejection_rate(
        gap_means, sigma=0.5, n_groups=2000, reps=2000, seed=89
    )
    assert power >= 0.9
    elapsed = time.monotonic() - start
    print(f"ACCEPTANCE 8 PASS: size={size:.3f}, power={power:.3f} in {elapsed:.1f}s")
