import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special, stats

from phi2robust.stochastics import (
    DiscreteMarginal,
    MarginalDistribution,
    RngStream,
    normal_quantile,
    regularized_incomplete_beta,
    sample,
    student_t_cdf,
    student_t_quantile,
)


def test_same_path_is_bit_identical():
    a = RngStream(42, (3, 1)).generator().random(1000)
    b = RngStream(42).child(3).child(1).generator().random(1000)
    assert np.array_equal(a, b)


def test_sibling_streams_are_uncorrelated():
    s = RngStream(7)
    u = s.child(0).generator().random(100_000)
    v = s.child(1).generator().random(100_000)
    assert abs(np.corrcoef(u, v)[0, 1]) < 0.02


def test_different_seeds_differ():
    assert not np.array_equal(RngStream(1).generator().random(8), RngStream(2).generator().random(8))


def test_seed_range_rejected():
    with pytest.raises(ValueError):
        RngStream(-1)


def test_exponential_mean():
    d = MarginalDistribution.exponential(0.8)
    x = sample(d, RngStream(11), 1_000_000)
    se = x.std() / 1000
    assert abs(x.mean() - 1.25) < 4 * se


def test_uniform_support():
    x = sample(MarginalDistribution.uniform(0, 1), RngStream(3), 100_000)
    assert x.min() >= 0 and x.max() <= 1


def test_lognormal_mean():
    x = sample(MarginalDistribution.lognormal(0.0, 0.04), RngStream(5), 1_000_000)
    se = x.std() / 1000
    assert abs(x.mean() - math.exp(0.02)) < 4 * se


def test_scalar_sample():
    assert isinstance(sample(MarginalDistribution.normal(0, 1), RngStream(1)), float)


def test_quantile_examples():
    assert MarginalDistribution.exponential(0.8).quantile(0.5) == pytest.approx(math.log(2) / 0.8, abs=1e-12)
    assert MarginalDistribution.normal(0, 1).quantile(0.5) == pytest.approx(0.0, abs=1e-15)
    assert MarginalDistribution.normal(0, 1).quantile(0.975) == pytest.approx(1.959964, abs=1e-6)


@pytest.mark.parametrize("u", [0.0, 1.0, -0.1, 1.5])
def test_quantile_domain(u):
    with pytest.raises(ValueError):
        MarginalDistribution.normal(0, 1).quantile(u)


@pytest.mark.parametrize("bad", [
    lambda: MarginalDistribution.exponential(0.0),
    lambda: MarginalDistribution.exponential(-1.0),
    lambda: MarginalDistribution.uniform(1.0, 1.0),
    lambda: MarginalDistribution.normal(0.0, 0.0),
    lambda: MarginalDistribution.lognormal(0.0, -1.0),
])
def test_invalid_parameters_rejected(bad):
    with pytest.raises(ValueError):
        bad()


@pytest.mark.parametrize("dist", [
    MarginalDistribution.uniform(-1, 3),
    MarginalDistribution.exponential(0.8),
    MarginalDistribution.normal(2, 0.5),
    MarginalDistribution.lognormal(0.1, 0.04),
])
def test_quantile_inverts_cdf(dist):
    u = np.linspace(0.001, 0.999, 999)
    x = dist.quantile(u)
    assert np.allclose(dist.quantile(dist.cdf(x)), x, rtol=0, atol=1e-9 * (1 + np.abs(x)).max())


@pytest.mark.parametrize("dist", [
    MarginalDistribution.uniform(-1, 3),
    MarginalDistribution.exponential(0.8),
    MarginalDistribution.normal(2, 0.5),
    MarginalDistribution.lognormal(0.1, 0.04),
])
def test_sample_mean_and_variance(dist):
    x = sample(dist, RngStream(9), 1_000_000)
    se = math.sqrt(dist.variance() / x.size)
    assert abs(x.mean() - dist.mean()) < 4 * se


def test_normal_quantile_accuracy():
    p = np.concatenate([np.logspace(-15, -1, 200), np.linspace(0.1, 0.9, 200), 1 - np.logspace(-12, -1, 200)])
    ref = special.ndtri(p)
    assert np.max(np.abs(normal_quantile(p) - ref) / np.maximum(1, np.abs(ref))) < 1e-9


@given(st.floats(0.001, 50), st.floats(0.001, 50), st.floats(0, 1))
@settings(max_examples=200, deadline=None)
def test_incomplete_beta_matches_scipy(a, b, x):
    assert regularized_incomplete_beta(a, b, x) == pytest.approx(special.betainc(a, b, x), abs=1e-10)


def test_t_quantile_examples():
    assert student_t_quantile(0.5, 7) == 0.0
    assert student_t_quantile(0.975, 19) == pytest.approx(2.093024, abs=1e-4)
    assert student_t_quantile(0.975, 10 ** 6) == pytest.approx(1.959964, abs=1e-3)


@given(st.floats(1e-6, 1 - 1e-6), st.integers(1, 500))
@settings(max_examples=300, deadline=None)
def test_t_quantile_matches_scipy(p, df):
    q = student_t_quantile(p, df)
    assert q == pytest.approx(stats.t.ppf(p, df), abs=1e-6 * max(1.0, abs(q)))


def test_t_cdf_roundtrip():
    for df in (1, 2, 3, 19, 49):
        for p in (0.01, 0.3, 0.9, 0.975):
            assert student_t_cdf(student_t_quantile(p, df), df) == pytest.approx(p, abs=1e-10)


@pytest.mark.parametrize("args", [(0.0, 5), (1.0, 5), (0.5, 0)])
def test_t_quantile_domain(args):
    with pytest.raises(ValueError):
        student_t_quantile(*args)


def test_discrete_marginal():
    d = DiscreteMarginal([0.0, 1.0], [0.3, 0.7])
    assert d.mean() == pytest.approx(0.7)
    assert d.variance() == pytest.approx(0.21)
    x = d.sample(RngStream(1).generator(), 100_000)
    assert set(np.unique(x)) <= {0.0, 1.0}
    with pytest.raises(ValueError):
        DiscreteMarginal([0, 1], [0.5, 0.6])
