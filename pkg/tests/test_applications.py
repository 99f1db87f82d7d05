import math

import numpy as np
import pytest
from scipy import stats

from phi2robust.applications import (
    HedgeConfig,
    QueueConfig,
    bs_delta,
    bs_price,
    hedge_cost,
    hedge_marginal,
    hedging_error,
    hedging_errors,
    lindley_waiting_times,
    queue_cost,
    queue_marginal,
    waiting_time_of_last,
)
from phi2robust.processes import Ar2LogIncrementSpec, ar2_log_increments
from phi2robust.serial_anova import baseline_mean, pinned_sums
from phi2robust.stochastics import RngStream


def test_lindley_examples():
    assert np.array_equal(lindley_waiting_times([0, 1, 1], [0, 0, 0]), [0, 0, 0])
    assert np.array_equal(lindley_waiting_times([9, 1, 1], [3, 3, 9]), [0, 2, 4])
    with pytest.raises(ValueError):
        lindley_waiting_times([1, 2], [1, 2, 3])


def test_last_waiting_time_matches_recursion():
    rng = RngStream(1).generator()
    u = rng.exponential(1.25, (50, 30))
    s = rng.exponential(1.0, (50, 30))
    assert np.allclose(waiting_time_of_last(u, s), lindley_waiting_times(u, s)[:, -1])


def test_queue_config_validation():
    with pytest.raises(ValueError):
        QueueConfig(arrival_rate=0.0)
    with pytest.raises(ValueError):
        QueueConfig(measure="median")


def test_queue_baseline_values():
    tail = QueueConfig()
    mean = QueueConfig(measure="mean")
    p, _ = baseline_mean(queue_cost(tail), queue_marginal(tail), 1_000_000, RngStream(2))
    assert p == pytest.approx(0.48, abs=0.01)
    m, se = baseline_mean(queue_cost(mean), queue_marginal(mean), 200_000, RngStream(3))
    assert m == pytest.approx(3.0, abs=0.1)


def test_queue_tail_values_binary():
    cfg = QueueConfig()
    cost = queue_cost(cfg)
    paths = queue_marginal(cfg).sample(RngStream(4).generator(), (1000, 30))
    v = cost.evaluate(paths, RngStream(5).generator())
    assert set(np.unique(v)) <= {0.0, 1.0}


def test_queue_services_independent_of_pins():
    # services come from the cell's aux stream only, so pinned values never shift them
    seen = []
    cfg = QueueConfig(measure="mean")
    base = queue_cost(cfg)

    def spy(paths, aux):
        state = aux.bit_generator.state
        seen.append(aux.exponential(1.0, paths.shape))
        aux.bit_generator.state = state
        return base.func(paths, aux)

    from phi2robust.serial_anova import TrajectoryCost
    cost = TrajectoryCost(30, spy, uses_aux=True)
    pinned_sums(cost, queue_marginal(cfg), (0.1, 5.0), 3, RngStream(6))
    pinned_sums(cost, queue_marginal(cfg), (2.0, 0.3), 3, RngStream(6))
    assert np.array_equal(seen[0], seen[1])


def test_bs_price_examples():
    assert bs_price(100, 100, 0.05, 0.2, 1.0) == pytest.approx(10.4506, abs=1e-3)
    assert bs_price(1e4, 100, 0.05, 0.2, 1.0) == pytest.approx(1e4 - 100 * math.exp(-0.05), abs=1e-6)
    assert bs_price(120, 100, 0.05, 0.2, 0.0) == 20.0
    grid = np.linspace(50, 150, 101)
    assert np.all(np.diff(bs_price(grid, 100, 0.05, 0.2, 0.5)) > 0)
    with pytest.raises(ValueError):
        bs_price(100, 100, 0.05, 0.0, 1.0)
    with pytest.raises(ValueError):
        bs_price(100, 100, 0.05, 0.2, -1.0)


def test_bs_price_matches_independent_formula():
    S, K, r, sig, tau = 93.0, 100.0, 0.03, 0.25, 0.7
    d1 = (math.log(S / K) + (r + sig ** 2 / 2) * tau) / (sig * math.sqrt(tau))
    d2 = d1 - sig * math.sqrt(tau)
    ref = S * stats.norm.cdf(d1) - K * math.exp(-r * tau) * stats.norm.cdf(d2)
    assert bs_price(S, K, r, sig, tau) == pytest.approx(ref, abs=1e-10)


def test_bs_delta_examples():
    assert bs_delta(1e4, 100, 0.05, 0.2, 1.0) == pytest.approx(1.0, abs=1e-9)
    assert bs_delta(1.0, 100, 0.05, 0.2, 1.0) == pytest.approx(0.0, abs=1e-9)
    assert bs_delta(100, 100, 0.05, 0.2, 1.0) == pytest.approx(0.63683, abs=1e-4)
    assert bs_delta(100, 100, 0.05, 0.2, 1.0) == pytest.approx(stats.norm.cdf(0.35), abs=1e-12)
    assert bs_delta(100, 100, 0.05, 0.2, 1.0, "printed") == pytest.approx(stats.norm.cdf(0.15), abs=1e-12)
    with pytest.raises(ValueError):
        bs_delta(100, 100, 0.05, 0.2, 1.0, "other")
    assert bs_delta(101, 100, 0.05, 0.2, 0.0) == 1.0
    assert bs_delta(99, 100, 0.05, 0.2, 0.0) == 0.0
    assert bs_delta(100, 100, 0.05, 0.2, 0.0) == 0.5


def test_hedge_config():
    cfg = HedgeConfig()
    assert cfg.steps == 100
    with pytest.raises(ValueError):
        HedgeConfig(dt=0.03)
    with pytest.raises(ValueError):
        HedgeConfig(sigma=0.0)
    with pytest.raises(ValueError):
        HedgeConfig(delta="gamma")


def test_hedging_error_constant_path_finite():
    cfg = HedgeConfig()
    he = hedging_error(np.full(cfg.steps + 1, cfg.strike), cfg)
    assert math.isfinite(he)
    with pytest.raises(ValueError):
        hedging_error(np.full(cfg.steps, 100.0), cfg)


@pytest.mark.parametrize("convention", ["standard", "printed"])
def test_hedging_error_hand_recursion(convention):
    cfg = HedgeConfig(maturity=0.5, dt=0.25, delta=convention)
    path = np.array([100.0, 104.0, 97.0])
    K, r, s = cfg.strike, cfg.r, cfg.sigma
    d0 = bs_delta(100, K, r, s, 0.5, convention)
    c = bs_price(100, K, r, s, 0.5) - 100 * d0
    d1 = bs_delta(104, K, r, s, 0.25, convention)
    c = math.exp(r * 0.25) * c - 104 * (d1 - d0)
    d2 = bs_delta(97, K, r, s, 0.0, convention)
    c = math.exp(r * 0.25) * c - 97 * (d2 - d1)
    assert hedging_error(path, cfg) == pytest.approx(max(97 - K, 0) - c - 97 * d2, abs=1e-12)


def test_hedging_error_shrinks_with_finer_rebalancing():
    coarse = HedgeConfig(dt=0.02)
    fine = HedgeConfig(dt=0.01)
    rng = RngStream(7).generator()
    d = rng.normal(fine.increment_mean, math.sqrt(fine.increment_variance), (10_000, fine.steps))
    prices = 100 * np.exp(np.concatenate([np.zeros((10_000, 1)), np.cumsum(d, axis=1)], axis=1))
    e_fine = np.abs(hedging_errors(prices, fine))
    e_coarse = np.abs(hedging_errors(prices[:, ::2], coarse))
    diff = e_coarse - e_fine
    assert diff.mean() > 3 * diff.std(ddof=1) / math.sqrt(diff.size)


def test_hedge_cost_matches_direct_errors():
    cfg = HedgeConfig()
    ratios = hedge_marginal(cfg).sample(RngStream(8).generator(), (5, cfg.steps))
    prices = 100 * np.cumprod(np.hstack([np.ones((5, 1)), ratios]), axis=1)
    assert np.allclose(hedge_cost(cfg).evaluate(ratios), np.abs(hedging_errors(prices, cfg)))


def test_ar_zero_reproduces_baseline():
    cfg = HedgeConfig()
    n = 40_000
    base, se0 = baseline_mean(hedge_cost(cfg), hedge_marginal(cfg), n, RngStream(9))
    spec = Ar2LogIncrementSpec.for_gbm(0.0, 0.0, cfg.mu, cfg.sigma, cfg.dt)
    d = ar2_log_increments(spec, n, cfg.steps, RngStream(10).generator())
    prices = 100 * np.exp(np.concatenate([np.zeros((n, 1)), np.cumsum(d, axis=1)], axis=1))
    e = np.abs(hedging_errors(prices, cfg))
    se1 = e.std(ddof=1) / math.sqrt(n)
    assert abs(e.mean() - base) < 4 * math.hypot(se0, se1)
