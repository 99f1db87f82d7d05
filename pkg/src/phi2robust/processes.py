"""Parametric serially dependent input models used as comparison points.

Each sampler preserves a prescribed one-dimensional marginal exactly, so the
only departure from the i.i.d. baseline is the dependency structure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .divergence import gaussian_phi2, gaussian_phi2_two_lag, phi2_from_pairs
from .stochastics import MarginalDistribution, RngStream, normal_cdf

__all__ = [
    "StationarityError",
    "EmbeddedAr1Spec",
    "EmbeddedMcSpec",
    "Ar2LogIncrementSpec",
    "embedded_ar1_paths",
    "embedded_ar1_path",
    "embedded_mc_paths",
    "embedded_mc_path",
    "embedded_mc_states",
    "embedded_ar1_latent",
    "ar2_log_increments",
    "ar2_log_increment_path",
    "gaussian_one_dep_check",
    "lag1_phi2",
]

_U_EPS = 2.0 ** -53


class StationarityError(ValueError):
    pass


def _to_marginal(marginal: MarginalDistribution, z_std: np.ndarray) -> np.ndarray:
    # map standard-normal scores to the target law without rounding u to 1
    u = np.clip(normal_cdf(z_std), _U_EPS, 1.0 - _U_EPS)
    if marginal.family == "exponential":
        upper = np.clip(normal_cdf(-z_std), _U_EPS, 1.0)
        return -np.log(upper) / marginal.params[0]
    return marginal.quantile(u)


@dataclass(frozen=True)
class EmbeddedAr1Spec:
    """Latent ``zeta_t = beta0 + beta1 zeta_{t-1} + N(0, sigma2)`` pushed through CDFs."""

    beta0: float
    beta1: float
    sigma2: float
    marginal: MarginalDistribution

    def __post_init__(self):
        if not abs(self.beta1) < 1:
            raise StationarityError(f"|beta1| must be < 1, got {self.beta1}")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")

    @property
    def stationary_mean(self) -> float:
        return self.beta0 / (1.0 - self.beta1)

    @property
    def stationary_variance(self) -> float:
        return self.sigma2 / (1.0 - self.beta1 ** 2)

    @property
    def phi2(self) -> float:
        """Exact lag-one phi^2; the copula of consecutive inputs is Gaussian(beta1)."""
        return gaussian_phi2(self.beta1)


def _ar1_latent(beta1: float, n_paths: int, T: int, rng: np.random.Generator) -> np.ndarray:
    # standardised stationary AR(1) scores, shape (n_paths, T)
    eps = rng.standard_normal((n_paths, T))
    eps[:, 0] /= math.sqrt(1.0 - beta1 ** 2)
    return lfilter([math.sqrt(1.0 - beta1 ** 2)], [1.0, -beta1], eps, axis=1)


def embedded_ar1_paths(spec: EmbeddedAr1Spec, n_paths: int, T: int,
                       rng: np.random.Generator) -> np.ndarray:
    # zeta standardised by its stationary law is a unit-variance AR(1) with the same beta1
    z = _ar1_latent(spec.beta1, n_paths, T, rng)
    return _to_marginal(spec.marginal, z)


def embedded_ar1_path(spec: EmbeddedAr1Spec, T: int, stream: RngStream) -> np.ndarray:
    return embedded_ar1_paths(spec, 1, T, stream.generator())[0]


def embedded_ar1_latent(spec: EmbeddedAr1Spec, T: int, stream: RngStream) -> np.ndarray:
    """The unstandardised ``zeta`` path behind :func:`embedded_ar1_path`."""
    z = _ar1_latent(spec.beta1, 1, T, stream.generator())[0]
    return spec.stationary_mean + math.sqrt(spec.stationary_variance) * z


@dataclass(frozen=True)
class EmbeddedMcSpec:
    """Two-state chain J picks the lower or upper slice of the uniform scale.

    From state 0 the chain stays with probability ``a + theta``; from state 1
    it moves to 0 with probability ``a``.
    """

    a: float
    theta: float
    marginal: MarginalDistribution

    def __post_init__(self):
        if not 0 < self.a < 1:
            raise StationarityError(f"a must lie in (0, 1), got {self.a}")
        if not -self.a < self.theta < 1 - self.a:
            raise StationarityError(f"theta must lie in (-a, 1 - a), got {self.theta}")

    @property
    def pi0(self) -> float:
        return self.a / (1.0 - self.theta)

    @property
    def phi2(self) -> float:
        """Exact lag-one phi^2: the pair density is constant on the four state blocks."""
        p0 = self.pi0
        p1 = 1.0 - p0
        stay0 = self.a + self.theta
        joint = {(0, 0): p0 * stay0, (0, 1): p0 * (1 - stay0),
                 (1, 0): p1 * self.a, (1, 1): p1 * (1 - self.a)}
        marg = (p0, p1)
        return sum(v * v / (marg[i] * marg[j]) for (i, j), v in joint.items()) - 1.0


def embedded_mc_states(spec: EmbeddedMcSpec, n_paths: int, T: int,
                       rng: np.random.Generator) -> np.ndarray:
    v = rng.uniform(size=(n_paths, T))
    j = np.empty((n_paths, T), dtype=np.int8)
    j[:, 0] = v[:, 0] >= spec.pi0
    stay0 = spec.a + spec.theta
    for t in range(1, T):
        p0 = np.where(j[:, t - 1] == 0, stay0, spec.a)
        j[:, t] = v[:, t] >= p0
    return j


def embedded_mc_paths(spec: EmbeddedMcSpec, n_paths: int, T: int,
                      rng: np.random.Generator) -> np.ndarray:
    j = embedded_mc_states(spec, n_paths, T, rng)
    w = rng.uniform(size=(n_paths, T))
    pi0 = spec.pi0
    u = np.where(j == 0, w * pi0, pi0 + w * (1.0 - pi0))
    u = np.clip(u, _U_EPS, 1.0 - _U_EPS)
    return spec.marginal.quantile(u)


def embedded_mc_path(spec: EmbeddedMcSpec, T: int, stream: RngStream) -> np.ndarray:
    return embedded_mc_paths(spec, 1, T, stream.generator())[0]


@dataclass(frozen=True)
class Ar2LogIncrementSpec:
    """AR(2) log-increments whose stationary law is Normal(m, v).

    ``beta0`` and the innovation variance are solved from the stationary mean
    and the Yule-Walker variance identity.
    """

    beta1: float
    beta2: float
    m: float
    v: float

    def __post_init__(self):
        b1, b2 = self.beta1, self.beta2
        if not (b2 < 1 + b1 and b2 < 1 - b1 and abs(b2) < 1):
            raise StationarityError(f"(beta1, beta2) = ({b1}, {b2}) is outside the stationarity triangle")
        if self.v <= 0:
            raise ValueError("stationary variance must be positive")

    @classmethod
    def for_gbm(cls, beta1: float, beta2: float, mu: float, sigma: float, dt: float):
        return cls(beta1, beta2, (mu - 0.5 * sigma ** 2) * dt, sigma ** 2 * dt)

    @property
    def beta0(self) -> float:
        return self.m * (1.0 - self.beta1 - self.beta2)

    @property
    def noise_variance(self) -> float:
        b1, b2 = self.beta1, self.beta2
        return self.v * (1.0 + b2) * ((1.0 - b2) ** 2 - b1 ** 2) / (1.0 - b2)

    @property
    def rho1(self) -> float:
        return self.beta1 / (1.0 - self.beta2)

    @property
    def rho2(self) -> float:
        return self.beta1 * self.rho1 + self.beta2

    @property
    def phi2(self) -> float:
        """Exact lag-one phi^2 of consecutive increments."""
        return gaussian_phi2(self.rho1)

    @property
    def phi2_two_lag(self) -> float:
        """Exact chi^2 distance of an increment triple from its 1-dependent counterpart."""
        return gaussian_phi2_two_lag(self.rho1, self.rho2)


def ar2_log_increments(spec: Ar2LogIncrementSpec, n_paths: int, steps: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Stationary increments, shape ``(n_paths, steps)``."""
    b1, b2 = spec.beta1, spec.beta2
    sd = math.sqrt(spec.v)
    rho = spec.rho1
    z = rng.standard_normal((n_paths, steps))
    out = np.empty((n_paths, steps))
    # first two from the stationary pair law, then the recursion on deviations
    out[:, 0] = z[:, 0]
    if steps > 1:
        out[:, 1] = rho * z[:, 0] + math.sqrt(1.0 - rho * rho) * z[:, 1]
    if steps > 2:
        noise = math.sqrt(spec.noise_variance / spec.v) * z[:, 2:]
        zi = np.stack([b1 * out[:, 1] + b2 * out[:, 0], b2 * out[:, 1]], axis=1)
        out[:, 2:] = lfilter([1.0], [1.0, -b1, -b2], noise, axis=1, zi=zi)[0]
    return spec.m + sd * out


def ar2_log_increment_path(spec: Ar2LogIncrementSpec, steps: int, stream: RngStream,
                           x0: float = 100.0) -> np.ndarray:
    """Price path of length ``steps + 1`` starting at ``x0``."""
    d = ar2_log_increments(spec, 1, steps, stream.generator())[0]
    return x0 * np.exp(np.concatenate([[0.0], np.cumsum(d)]))


def gaussian_one_dep_check(rho1: float, n_samples: int, stream: RngStream) -> tuple[float, float]:
    """Sample correlations of ``(X1, X2)`` and ``(X1, X3)`` for the Gaussian 1-dependent chain."""
    if not abs(rho1) < 1:
        raise StationarityError("|rho1| must be < 1")
    rng = stream.generator()
    z = rng.standard_normal((3, n_samples))
    s = math.sqrt(1.0 - rho1 ** 2)
    x1 = z[0]
    x2 = rho1 * x1 + s * z[1]
    x3 = rho1 * x2 + s * z[2]
    return float(np.corrcoef(x1, x2)[0, 1]), float(np.corrcoef(x1, x3)[0, 1])


def lag1_phi2(paths: np.ndarray, bins: int = 200) -> float:
    """Histogram phi^2 of consecutive pairs pooled over all paths and positions."""
    paths = np.asarray(paths, dtype=float)
    return phi2_from_pairs(paths[:, :-1].ravel(), paths[:, 1:].ravel(), bins=bins)
