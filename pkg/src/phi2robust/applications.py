"""Application harnesses: a single-server FCFS queue and discrete delta hedging."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .serial_anova import TrajectoryCost
from .stochastics import MarginalDistribution, normal_cdf

__all__ = [
    "QueueConfig",
    "HedgeConfig",
    "lindley_waiting_times",
    "waiting_time_of_last",
    "queue_cost",
    "queue_marginal",
    "bs_price",
    "bs_delta",
    "hedging_error",
    "hedging_errors",
    "hedge_cost",
    "hedge_marginal",
]


# ---------------------------------------------------------------------------
# queue
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QueueConfig:
    """M/M/1 baseline; ``measure`` is ``"tail"`` for P(W_T > b) or ``"mean"`` for E[W_T]."""

    arrival_rate: float = 0.8
    service_rate: float = 1.0
    customer: int = 30
    threshold: float = 2.0
    measure: str = "tail"

    def __post_init__(self):
        if self.arrival_rate <= 0 or self.service_rate <= 0:
            raise ValueError("rates must be positive")
        if self.customer < 1:
            raise ValueError("customer index must be positive")
        if self.measure not in ("tail", "mean"):
            raise ValueError(f"measure must be 'tail' or 'mean', got {self.measure!r}")


def lindley_waiting_times(interarrivals, services) -> np.ndarray:
    """``W_1 = 0``, ``W_t = max(W_{t-1} + S_{t-1} - U_t, 0)``.

    ``interarrivals[t]`` is the gap before customer ``t``, so the first entry
    is never used.  Works on 1-D sequences or row-wise on 2-D arrays.
    """
    u = np.asarray(interarrivals, dtype=float)
    s = np.asarray(services, dtype=float)
    if u.shape != s.shape:
        raise ValueError(f"interarrival and service shapes differ: {u.shape} vs {s.shape}")
    if u.shape[-1] < 1:
        raise ValueError("need at least one customer")
    w = np.zeros(u.shape)
    for t in range(1, u.shape[-1]):
        w[..., t] = np.maximum(w[..., t - 1] + s[..., t - 1] - u[..., t], 0.0)
    return w


def waiting_time_of_last(interarrivals: np.ndarray, services: np.ndarray) -> np.ndarray:
    """Row-wise ``W_T`` without storing the full recursion."""
    w = np.zeros(interarrivals.shape[0])
    for t in range(1, interarrivals.shape[1]):
        w += services[:, t - 1] - interarrivals[:, t]
        np.maximum(w, 0.0, out=w)
    return w


def queue_marginal(config: QueueConfig) -> MarginalDistribution:
    return MarginalDistribution.exponential(config.arrival_rate)


def queue_cost(config: QueueConfig) -> TrajectoryCost:
    """Cost on the interarrival sequence; service times are auxiliary noise.

    Services are drawn as one ``(m, T)`` block from the auxiliary generator,
    so they do not depend on which interarrivals are pinned.
    """
    mean_service = 1.0 / config.service_rate
    b = config.threshold

    def func(paths, aux):
        services = aux.exponential(mean_service, paths.shape)
        w = waiting_time_of_last(paths, services)
        return (w > b).astype(float) if config.measure == "tail" else w

    name = f"queue-{config.measure}(T={config.customer}, b={b})"
    return TrajectoryCost(config.customer, func, uses_aux=True, name=name)


# ---------------------------------------------------------------------------
# hedging
# ---------------------------------------------------------------------------

def bs_price(S, K, r, sigma, tau):
    """Black-Scholes European call value; ``(S - K)^+`` at ``tau = 0``."""
    S = np.asarray(S, dtype=float)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if tau == 0:
        out = np.maximum(S - K, 0.0)
    else:
        sq = sigma * math.sqrt(tau)
        d1 = (np.log(S / K) + (r + 0.5 * sigma ** 2) * tau) / sq
        out = S * normal_cdf(d1) - K * math.exp(-r * tau) * normal_cdf(d1 - sq)
    return out if out.ndim else float(out)


_DELTA_DRIFT = {"standard": 0.5, "printed": -0.5}


def bs_delta(S, K, r, sigma, tau, convention: str = "standard"):
    """Hedge ratio ``Phi((log(S/K) + (r + c sigma^2) tau) / (sigma sqrt(tau)))``.

    ``convention="standard"`` is the Black-Scholes delta ``Phi(d1)`` (c = 1/2);
    ``"printed"`` uses c = -1/2, i.e. ``Phi(d2)``.  At ``tau = 0`` the limit
    is used: 1 above the strike, 0 below, 1/2 at it.
    """
    if convention not in _DELTA_DRIFT:
        raise ValueError(f"convention must be 'standard' or 'printed', got {convention!r}")
    c = _DELTA_DRIFT[convention]
    S = np.asarray(S, dtype=float)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if tau == 0:
        out = np.where(S > K, 1.0, np.where(S < K, 0.0, 0.5))
    else:
        out = normal_cdf((np.log(S / K) + (r + c * sigma ** 2) * tau) / (sigma * math.sqrt(tau)))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class HedgeConfig:
    maturity: float = 1.0
    dt: float = 0.01
    x0: float = 100.0
    strike: float = 100.0
    mu: float = 0.1
    sigma: float = 0.2
    r: float = 0.05
    delta: str = "standard"

    def __post_init__(self):
        if self.delta not in _DELTA_DRIFT:
            raise ValueError(f"delta must be 'standard' or 'printed', got {self.delta!r}")
        if self.dt <= 0 or self.sigma <= 0 or self.maturity <= 0:
            raise ValueError("dt, sigma and maturity must be positive")
        steps = self.maturity / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError(f"dt={self.dt} does not divide maturity={self.maturity}")

    @property
    def steps(self) -> int:
        return int(round(self.maturity / self.dt))

    @property
    def increment_mean(self) -> float:
        return (self.mu - 0.5 * self.sigma ** 2) * self.dt

    @property
    def increment_variance(self) -> float:
        return self.sigma ** 2 * self.dt


def hedging_errors(prices: np.ndarray, config: HedgeConfig) -> np.ndarray:
    """Terminal hedging error of each row of an ``(m, steps + 1)`` price array."""
    prices = np.asarray(prices, dtype=float)
    if prices.ndim != 2 or prices.shape[1] != config.steps + 1:
        raise ValueError(f"expected price paths with {config.steps + 1} points, got {prices.shape}")
    K, r, sig, T, dt = config.strike, config.r, config.sigma, config.maturity, config.dt
    growth = math.exp(r * dt)
    x0 = prices[:, 0]
    delta = bs_delta(x0, K, r, sig, T, config.delta)
    cash = bs_price(x0, K, r, sig, T) - x0 * delta
    n = config.steps
    for k in range(1, n + 1):
        tau = 0.0 if k == n else T - k * dt
        x = prices[:, k]
        new = bs_delta(x, K, r, sig, tau, config.delta)
        cash = growth * cash - x * (new - delta)
        delta = new
    xt = prices[:, -1]
    return np.maximum(xt - K, 0.0) - cash - xt * delta


def hedging_error(path, config: HedgeConfig) -> float:
    path = np.asarray(path, dtype=float)
    if path.ndim != 1:
        raise ValueError("path must be one-dimensional")
    return float(hedging_errors(path[None, :], config)[0])


def hedge_marginal(config: HedgeConfig) -> MarginalDistribution:
    """Baseline law of one gross return ``X_k / X_{k-1}``."""
    return MarginalDistribution.lognormal(config.increment_mean, config.increment_variance)


def hedge_cost(config: HedgeConfig) -> TrajectoryCost:
    """``|H_e|`` as a function of the ``steps`` gross returns."""
    def func(ratios, aux):
        prices = config.x0 * np.cumprod(np.hstack([np.ones((ratios.shape[0], 1)), ratios]), axis=1)
        return np.abs(hedging_errors(prices, config))

    return TrajectoryCost(config.steps, func, name="abs-hedging-error")
