"""Nested Monte Carlo ANOVA for serial-dependency sensitivity coefficients.

A trajectory cost ``h(X_1, ..., X_T)`` is evaluated with two (one-lag) or
three (two-lag) consecutive coordinates pinned and the rest drawn i.i.d. from
the baseline marginal.  Summing over the pin position gives one response of a
two-way random-effects layout whose interaction variance component is the
squared first-order coefficient of the worst-case expansion.

Substream layout for one estimator sample drawn from ``stream``::

    stream.child(0)          outer draws (middle point first, for two lags)
    stream.child(1, i, j)    cell (i, j): .child(0) inputs, .child(1) auxiliary noise

Replication ``r`` of a batch uses ``stream.child(r)``.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .stochastics import DiscreteMarginal, RngStream, student_t_quantile

__all__ = [
    "ConfigError",
    "NonPositiveVarianceError",
    "StateSpaceTooLargeError",
    "TrajectoryCost",
    "PinnedEvaluation",
    "AnovaConfig",
    "AnovaEstimate",
    "CoefficientEstimate",
    "WorstCaseBand",
    "BandRow",
    "TwoLagRow",
    "pinned_sums",
    "pinned_sum_sample",
    "anova_statistic",
    "algorithm1_sample",
    "algorithm2_sample",
    "anova_replications",
    "coefficient_ci",
    "baseline_mean",
    "first_order_band",
    "two_lag_band",
    "OracleResult",
    "enumeration_oracle",
]


class ConfigError(ValueError):
    pass


class NonPositiveVarianceError(ArithmeticError):
    """The replication mean is not positive, so its square root has no delta-method CI."""

    def __init__(self, mean, spread):
        super().__init__(f"mean of variance samples is {mean:.6g} (sd {spread:.6g}); "
                         "the delta-method interval needs a positive mean")
        self.mean = mean
        self.spread = spread


class StateSpaceTooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class TrajectoryCost:
    """Cost of a length-``horizon`` input sequence.

    ``func(paths, aux)`` maps an ``(m, horizon)`` array to ``m`` costs.
    ``aux`` is a generator for randomness internal to the system (service
    times, say) when ``uses_aux`` is set, otherwise ``None``.  Auxiliary draws
    must depend only on the batch shape, never on the input values, so pinned
    and unpinned evaluations share them.
    """

    horizon: int
    func: Callable[[np.ndarray, np.random.Generator | None], np.ndarray]
    uses_aux: bool = False
    name: str = "cost"

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be positive")

    def evaluate(self, paths: np.ndarray, aux: np.random.Generator | None = None) -> np.ndarray:
        paths = np.asarray(paths, dtype=float)
        if paths.ndim != 2 or paths.shape[1] != self.horizon:
            raise ValueError(f"expected paths of shape (m, {self.horizon}), got {paths.shape}")
        if self.uses_aux and aux is None:
            raise ValueError(f"{self.name} needs an auxiliary generator")
        return np.asarray(self.func(paths, aux if self.uses_aux else None), dtype=float)

    def __call__(self, path: Sequence[float], aux: np.random.Generator | None = None) -> float:
        return float(self.evaluate(np.asarray(path, dtype=float)[None, :], aux)[0])


@dataclass(frozen=True)
class PinnedEvaluation:
    """Coordinates fixed in an otherwise i.i.d. trajectory, 1-based indices."""

    pins: tuple[tuple[int, float], ...]
    horizon: int

    def __post_init__(self):
        idx = [t for t, _ in self.pins]
        if len(set(idx)) != len(idx):
            raise ConfigError(f"pinned indices must be distinct, got {idx}")
        if any(not 1 <= t <= self.horizon for t in idx):
            raise ConfigError(f"pinned indices must lie in [1, {self.horizon}], got {idx}")

    def apply(self, paths: np.ndarray) -> np.ndarray:
        for t, v in self.pins:
            paths[..., t - 1] = v
        return paths

    def evaluate(self, cost: TrajectoryCost, marginal, n: int, stream: RngStream) -> np.ndarray:
        paths = self.apply(marginal.sample(stream.child(0).generator(), (n, cost.horizon)))
        aux = stream.child(1).generator() if cost.uses_aux else None
        return cost.evaluate(paths, aux)


def pinned_sums(cost: TrajectoryCost, marginal, values: Sequence[float], n: int,
                stream: RngStream) -> np.ndarray:
    """``n`` independent copies of the pinned sum over all pin positions.

    With ``values = (x, y)`` each copy is ``sum_{t=2}^T h(X^{(X_{t-1}=x, X_t=y)})``;
    with ``(x, y, z)`` it is the three-point analogue over ``t = 3..T``.  Every
    term uses its own fresh free coordinates.
    """
    width = len(values)
    T = cost.horizon
    if width not in (2, 3):
        raise ConfigError("pin two or three consecutive coordinates")
    if T < width:
        raise ConfigError(f"horizon {T} too short to pin {width} coordinates")
    terms = T - width + 1
    paths = marginal.sample(stream.child(0).generator(), (n, terms, T))
    pos = np.arange(terms)
    for k, v in enumerate(values):
        paths[:, pos, pos + k] = v
    aux = stream.child(1).generator() if cost.uses_aux else None
    h = cost.evaluate(paths.reshape(n * terms, T), aux)
    return h.reshape(n, terms).sum(axis=1)


def pinned_sum_sample(cost: TrajectoryCost, marginal, x: float, y: float,
                      stream: RngStream) -> float:
    return float(pinned_sums(cost, marginal, (x, y), 1, stream)[0])


@dataclass(frozen=True)
class AnovaConfig:
    outer: int
    inner: int

    def __post_init__(self):
        if self.outer < 2:
            raise ConfigError(f"outer sample size K must be >= 2, got {self.outer}")
        if self.inner < 2:
            raise ConfigError(f"inner sample size n must be >= 2, got {self.inner}")


@dataclass(frozen=True)
class AnovaEstimate:
    value: float
    config: AnovaConfig
    lag: int
    s_interaction: float = field(default=math.nan, compare=False)
    s_error: float = field(default=math.nan, compare=False)


def anova_statistic(z: np.ndarray) -> tuple[float, float, float]:
    """Interaction-variance estimate from a ``(K, K, n)`` response array.

    Returns ``((s_I^2 - s_eps^2) / n, s_I^2, s_eps^2)``.
    """
    K, K2, n = z.shape
    if K != K2:
        raise ValueError("response array must be (K, K, n)")
    cell = z.mean(axis=2)
    row = cell.mean(axis=1, keepdims=True)
    col = cell.mean(axis=0, keepdims=True)
    grand = cell.mean()
    s_i = n / (K - 1) ** 2 * float(np.sum((cell - row - col + grand) ** 2))
    s_e = float(np.sum((z - cell[:, :, None]) ** 2)) / (K * K * (n - 1))
    return (s_i - s_e) / n, s_i, s_e


def _anova_sample(cost, marginal, config: AnovaConfig, stream: RngStream, lag: int,
                  pool: ThreadPoolExecutor | None) -> AnovaEstimate:
    K, n = config.outer, config.inner
    outer = stream.child(0).generator()
    middle = (float(marginal.sample(outer)),) if lag == 2 else ()
    xs = marginal.sample(outer, K)
    ys = marginal.sample(outer, K)

    def cell(ij):
        i, j = ij
        pins = (xs[i],) + middle + (ys[j],)
        return pinned_sums(cost, marginal, pins, n, stream.child(1, i, j))

    cells = list(itertools.product(range(K), range(K)))
    results = pool.map(cell, cells) if pool is not None else map(cell, cells)
    z = np.stack(list(results)).reshape(K, K, n)
    w, s_i, s_e = anova_statistic(z)
    return AnovaEstimate(w, config, lag, s_i, s_e)


def algorithm1_sample(cost: TrajectoryCost, marginal, config: AnovaConfig, stream: RngStream,
                      pool: ThreadPoolExecutor | None = None) -> AnovaEstimate:
    """One unbiased sample of ``Var0(R)``, the one-lag interaction variance."""
    if cost.horizon < 2:
        raise ConfigError("one-lag estimation needs horizon >= 2")
    return _anova_sample(cost, marginal, config, stream, 1, pool)


def algorithm2_sample(cost: TrajectoryCost, marginal, config: AnovaConfig, stream: RngStream,
                      pool: ThreadPoolExecutor | None = None) -> AnovaEstimate:
    """One unbiased sample of ``Var0(S)``, the additional two-lag interaction variance."""
    if cost.horizon < 3:
        raise ConfigError("two-lag estimation needs horizon >= 3")
    return _anova_sample(cost, marginal, config, stream, 2, pool)


def anova_replications(cost: TrajectoryCost, marginal, config: AnovaConfig, reps: int,
                       stream: RngStream, lag: int = 1, threads: int = 1) -> list[AnovaEstimate]:
    sampler = {1: algorithm1_sample, 2: algorithm2_sample}[lag]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return [sampler(cost, marginal, config, stream.child(r), pool) for r in range(reps)]
    return [sampler(cost, marginal, config, stream.child(r)) for r in range(reps)]


@dataclass(frozen=True)
class CoefficientEstimate:
    """Point estimate and delta-method interval for ``sqrt(Var)``."""

    point: float
    ci_low: float
    ci_high: float
    n: int
    alpha: float
    mean_w: float = math.nan
    sd_w: float = math.nan

    @classmethod
    def exact(cls, value: float) -> "CoefficientEstimate":
        return cls(value, value, value, 0, 0.0, value * value, 0.0)


def coefficient_ci(samples: Sequence[AnovaEstimate | float], alpha: float = 0.05) -> CoefficientEstimate:
    w = np.array([s.value if isinstance(s, AnovaEstimate) else float(s) for s in samples])
    N = w.size
    if N < 2:
        raise ConfigError("need at least two replications")
    if not 0 < alpha < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    mean = math.fsum(w) / N
    nu = math.sqrt(math.fsum((w - mean) ** 2) / (N - 1))
    if mean <= 0:
        raise NonPositiveVarianceError(mean, nu)
    point = math.sqrt(mean)
    half = nu / (2.0 * point) * student_t_quantile(1.0 - alpha / 2.0, N - 1) / math.sqrt(N)
    return CoefficientEstimate(point, point - half, point + half, N, alpha, mean, nu)


def baseline_mean(cost: TrajectoryCost, marginal, n_paths: int, stream: RngStream,
                  chunk: int = 1 << 14) -> tuple[float, float]:
    """Plain Monte Carlo ``E0[h]`` with its standard error.

    Chunk ``k`` draws inputs from ``stream.child(k, 0)`` and auxiliary noise
    from ``stream.child(k, 1)``.
    """
    s1 = []
    s2 = []
    for k, start in enumerate(range(0, n_paths, chunk)):
        m = min(chunk, n_paths - start)
        paths = marginal.sample(stream.child(k, 0).generator(), (m, cost.horizon))
        aux = stream.child(k, 1).generator() if cost.uses_aux else None
        h = cost.evaluate(paths, aux)
        s1.append(float(h.sum()))
        s2.append(float((h * h).sum()))
    mean = math.fsum(s1) / n_paths
    var = max(math.fsum(s2) / n_paths - mean * mean, 0.0) * n_paths / max(n_paths - 1, 1)
    return mean, math.sqrt(var / n_paths)


# ---------------------------------------------------------------------------
# worst-case bands
# ---------------------------------------------------------------------------

class BandRow(NamedTuple):
    eta: float
    lower: float
    upper: float
    lower_ci: float
    upper_ci: float
    lower_ci_inner: float
    upper_ci_inner: float


class TwoLagRow(NamedTuple):
    eta1: float
    eta2: float
    lower: float
    upper: float
    lower_ci: float
    upper_ci: float


@dataclass(frozen=True)
class WorstCaseBand:
    """Baseline plus expansion coefficients; evaluate with :meth:`at`.

    ``xi2`` shifts both ends by ``xi2 * eta`` (the curvature term is shared by
    the max and min problems).  ``coef_s`` is the two-lag coefficient.
    """

    baseline: float
    xi1: CoefficientEstimate
    baseline_se: float = 0.0
    xi2: float | None = None
    coef_s: CoefficientEstimate | None = None

    def at(self, eta: float, eta2: float = 0.0, which: str = "point") -> tuple[float, float]:
        if eta < 0 or eta2 < 0:
            raise ValueError("budgets must be non-negative")
        pick = {"point": "point", "high": "ci_high", "low": "ci_low"}[which]
        half = getattr(self.xi1, pick) * math.sqrt(eta)
        if eta2:
            if self.coef_s is None:
                raise ValueError("band has no two-lag coefficient")
            half += getattr(self.coef_s, pick) * math.sqrt(eta2)
        shift = self.xi2 * eta if self.xi2 is not None else 0.0
        return self.baseline - half + shift, self.baseline + half + shift


def _check_grid(grid):
    grid = [float(e) for e in grid]
    if any(e < 0 for e in grid):
        raise ValueError("eta grid must be non-negative")
    return grid


def first_order_band(baseline: float, xi1: CoefficientEstimate, eta_grid) -> list[BandRow]:
    band = WorstCaseBand(baseline, xi1)
    rows = []
    for eta in _check_grid(eta_grid):
        lo, hi = band.at(eta)
        lo_w, hi_w = band.at(eta, which="high")
        lo_n, hi_n = band.at(eta, which="low")
        rows.append(BandRow(eta, lo, hi, lo_w, hi_w, lo_n, hi_n))
    return rows


def two_lag_band(baseline: float, xi1: CoefficientEstimate, coef_s: CoefficientEstimate,
                 eta1_grid, eta2_grid) -> list[TwoLagRow]:
    band = WorstCaseBand(baseline, xi1, coef_s=coef_s)
    rows = []
    for e1 in _check_grid(eta1_grid):
        for e2 in _check_grid(eta2_grid):
            lo, hi = band.at(e1, e2)
            lo_w, hi_w = band.at(e1, e2, which="high")
            rows.append(TwoLagRow(e1, e2, lo, hi, lo_w, hi_w))
    return rows


# ---------------------------------------------------------------------------
# exact enumeration on finite state spaces
# ---------------------------------------------------------------------------

class OracleResult(NamedTuple):
    e0h: float
    H: np.ndarray
    R: np.ndarray
    var_r: float
    xi2: float
    S: np.ndarray | None
    var_s: float | None


def enumeration_oracle(marginal: DiscreteMarginal, cost: TrajectoryCost, T: int | None = None,
                       limit: int = 10 ** 7) -> OracleResult:
    """Exact ``E0[h]``, ``H``, ``R``, ``Var0(R)``, ``Xi_2``, ``S`` and ``Var0(S)``.

    Sums over every outcome of an i.i.d. finite-state sequence.  Tables are
    indexed by state position in ``marginal.values``.  ``S`` is ``None`` for
    ``T < 3``.
    """
    T = cost.horizon if T is None else T
    if T != cost.horizon:
        raise ConfigError(f"T={T} does not match cost horizon {cost.horizon}")
    if cost.uses_aux:
        raise ConfigError("enumeration needs a deterministic cost")
    if T < 2:
        raise ConfigError("enumeration needs T >= 2")
    m = len(marginal.values)
    total = m ** T
    if total > limit:
        raise StateSpaceTooLargeError(f"{m}^{T} = {total} outcomes exceed the limit {limit}")

    p = np.asarray(marginal.probs)
    vals = np.asarray(marginal.values)
    idx = np.indices((m,) * T).reshape(T, -1).T
    prob = np.prod(p[idx], axis=1)
    h = cost.evaluate(vals[idx])
    ph = prob * h
    e0h = float(ph.sum())

    H = np.zeros((m, m))
    for t in range(1, T):
        H += np.bincount(idx[:, t - 1] * m + idx[:, t], weights=ph, minlength=m * m).reshape(m, m)
    H /= np.outer(p, p)
    R = H - (H @ p)[:, None] - (p @ H)[None, :] + p @ H @ p
    var_r = float(p @ (R ** 2) @ p)

    r_terms = R[idx[:, :-1], idx[:, 1:]]
    rs = r_terms.sum(axis=1)
    pair_sum = 0.5 * (rs ** 2 - (r_terms ** 2).sum(axis=1))
    numer = float(np.sum(ph * pair_sum))
    xi2 = numer / var_r if var_r > 1e-14 else 0.0

    S = var_s = None
    if T >= 3:
        G = np.zeros((m, m, m))
        for t in range(2, T):
            code = (idx[:, t - 2] * m + idx[:, t - 1]) * m + idx[:, t]
            G += np.bincount(code, weights=ph, minlength=m ** 3).reshape(m, m, m)
        G /= p[:, None, None] * p[None, :, None] * p[None, None, :]
        left = np.einsum("abc,c->ab", G, p)
        right = np.einsum("abc,a->bc", G, p)
        mid = np.einsum("abc,a,c->b", G, p, p)
        S = G - left[:, :, None] - right[None, :, :] + mid[None, :, None]
        var_s = float(np.einsum("abc,a,b,c->", S ** 2, p, p, p))
    return OracleResult(e0h, H, R, var_r, xi2, S, var_s)
