import math

import numpy as np
import pytest
from scipy import stats

from mrrlink.montecarlo import (
    BinnedDensity,
    RunningStats,
    compare_density,
    compare_density_arrays,
    derive_seed,
    empirical_pdf,
    run_trials,
    splitmix64,
    trial_rng,
)


def squared_error_trial(rng):
    x = rng.normal(1.0, 2.0, size=3)
    return {"se": float(((x - 1.0) ** 2).mean()), "x": x}


def sometimes_failing_trial(rng):
    u = rng.random()
    return {"v": math.nan if u < 0.1 else u}


def test_splitmix64_reference_value():
    # first output of the reference generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF


def test_derived_seeds_stable_and_distinct():
    seeds = [derive_seed(42, i) for i in range(10_000)]
    assert len(set(seeds)) == len(seeds)
    assert seeds == [derive_seed(42, i) for i in range(10_000)]
    assert derive_seed(42, 0) != derive_seed(43, 0)
    assert trial_rng(7, 3).random() == trial_rng(7, 3).random()


def test_worker_count_does_not_change_output():
    a = run_trials(squared_error_trial, 2000, 11, workers=1, collect=True)
    b = run_trials(squared_error_trial, 2000, 11, workers=8, collect=True)
    for key in ("se", "x"):
        sa, sb = a.stats[key], b.stats[key]
        assert (sa.count, sa.mean, sa.M2) == (sb.count, sb.mean, sb.M2)
        assert np.array_equal(a.samples[key], b.samples[key])


@pytest.mark.parametrize("n", [0, -3])
def test_non_positive_trial_count_rejected(n):
    with pytest.raises(ValueError):
        run_trials(squared_error_trial, n, 1)


def test_failed_trials_excluded_from_stats_but_kept():
    out = run_trials(sometimes_failing_trial, 1000, 5, collect=True)
    n_nan = int(np.isnan(out.samples["v"]).sum())
    assert n_nan > 0
    assert out.stats["v"].count == 1000 - n_nan


def test_standard_error_scaling():
    # standard error goes as 1/sqrt(n): quadrupling halves it, doubling gives 1/sqrt(2)
    base = run_trials(squared_error_trial, 10_000, 3).stats["se"].sem
    double = run_trials(squared_error_trial, 20_000, 4).stats["se"].sem
    quad = run_trials(squared_error_trial, 40_000, 5).stats["se"].sem
    assert quad / base == pytest.approx(0.5, rel=0.05)
    assert double / base == pytest.approx(1 / math.sqrt(2), rel=0.05)


def test_streaming_stats_match_two_pass():
    x = np.random.Generator(np.random.PCG64(9)).lognormal(3.0, 1.0, 1_000_000)
    rs = RunningStats()
    for chunk in np.array_split(x, 997):
        part = RunningStats()
        part.push_many(chunk)
        rs.merge(part)
    mean = x.sum() / x.size
    var = ((x - mean) ** 2).sum() / (x.size - 1)
    assert rs.count == x.size
    assert rs.mean == pytest.approx(mean, rel=1e-12)
    assert rs.variance == pytest.approx(var, rel=1e-12)


def test_push_matches_push_many():
    x = np.random.Generator(np.random.PCG64(10)).normal(5, 3, 10_000)
    a, b = RunningStats(), RunningStats()
    for v in x:
        a.push(v)
    b.push_many(x)
    assert a.mean == pytest.approx(b.mean, rel=1e-12)
    assert a.variance == pytest.approx(b.variance, rel=1e-10)


def test_constant_sample_single_unit_bin():
    d = empirical_pdf(np.full(100, 3.0))
    assert d.density.tolist() == [1.0]
    assert d.widths.tolist() == [1.0]


def test_empirical_pdf_unit_mass():
    x = np.random.Generator(np.random.PCG64(1)).gamma(2.0, size=20_000)
    d = empirical_pdf(x)
    assert float((d.density * d.widths).sum()) == pytest.approx(1.0, rel=1e-12)


def test_uniform_flat_within_multinomial_bounds():
    n = 100_000
    x = np.random.Generator(np.random.PCG64(2)).random(n)
    d = empirical_pdf(x, bins=np.linspace(0, 1, 51))
    p = 1 / 50
    counts = d.density * d.widths * n
    sigma = math.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) < 3 * sigma + 1)


def test_gaussian_histogram_against_density():
    x = np.random.Generator(np.random.PCG64(3)).normal(0, 1, 100_000)
    cmp = compare_density(empirical_pdf(x), stats.norm.pdf)
    assert cmp["sup_norm_rel_peak"] < 0.05
    assert cmp["l1_distance"] < 0.05


def test_identical_densities_compare_to_zero():
    edges = np.linspace(0, 2, 21)
    dens = np.full(20, 0.5)
    cmp = compare_density(BinnedDensity(edges, dens), lambda t: np.where((t >= 0) & (t <= 2), 0.5, 0.0))
    assert cmp["sup_norm_rel_peak"] == pytest.approx(0.0, abs=1e-14)
    assert cmp["l1_distance"] == pytest.approx(0.0, abs=1e-14)
    assert compare_density_arrays(dens, dens, np.diff(edges)) == {"sup_norm_rel_peak": 0.0, "l1_distance": 0.0}


def test_disjoint_supports_l1_two():
    emp = BinnedDensity(np.linspace(0, 1, 11), np.ones(10))
    cmp = compare_density(emp, lambda t: np.where((t >= 5) & (t <= 6), 1.0, 0.0))
    assert cmp["l1_distance"] == pytest.approx(2.0)
    p = np.array([1.0, 0.0])
    q = np.array([0.0, 1.0])
    assert compare_density_arrays(p, q, [1.0, 1.0])["l1_distance"] == 2.0
