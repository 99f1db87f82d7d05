"""Worst-case bounds for a two-variable cost under a phi^2 dependency budget.

For independent baseline marginals the optimal first-order deviation of
``E[h(X, Y)]`` over joint laws with the same marginals and phi^2 <= eta is
``sqrt(Var0(r) * eta)``, where ``r`` is the interaction (double-centred) part
of ``h``.  The maximiser has likelihood ratio ``1 + sqrt(eta / Var0(r)) * r``
with respect to the product baseline.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .divergence import CopulaSpec
from .stochastics import MarginalDistribution, RngStream, normal_cdf

__all__ = [
    "BudgetTooLargeError",
    "BivariateCost",
    "BivariateWorstCase",
    "anova_residual",
    "residual_variance",
    "proposition1_bounds",
    "worst_case_density",
    "WorstCaseDensity",
    "copula_sample",
    "expected_h_under_copula",
]

Marginals = tuple[MarginalDistribution, MarginalDistribution]


class BudgetTooLargeError(ValueError):
    """The worst-case likelihood ratio would go negative at this budget."""

    def __init__(self, eta, max_eta):
        super().__init__(f"eta={eta} exceeds the largest feasible budget {max_eta:.6g}")
        self.eta = eta
        self.max_eta = max_eta


@dataclass(frozen=True)
class BivariateCost:
    """A vectorised cost ``h(x, y)`` plus how to integrate it.

    ``method`` is ``"quadrature"`` (Gauss-Legendre in quantile space, for
    smooth costs) or ``"montecarlo"``.  ``size`` is the node count per axis or
    the Monte Carlo sample count respectively.
    """

    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    method: str = "quadrature"
    size: int = 64

    def __post_init__(self):
        if self.method not in ("quadrature", "montecarlo"):
            raise ValueError(f"method must be 'quadrature' or 'montecarlo', got {self.method!r}")
        if self.size < 2:
            raise ValueError("size must be at least 2")

    def __call__(self, x, y):
        return self.func(np.asarray(x, dtype=float), np.asarray(y, dtype=float))


def _quantile_rule(dist: MarginalDistribution, nodes: int):
    g, w = np.polynomial.legendre.leggauss(nodes)
    u = 0.5 * (g + 1.0)
    return dist.quantile(u), 0.5 * w


class _Quad:
    """Tensor-quadrature view of ``h`` under the product baseline."""

    def __init__(self, cost: BivariateCost, marginals: Marginals, nodes: int | None = None):
        self.cost = cost
        m = nodes or cost.size
        self.xs, self.wx = _quantile_rule(marginals[0], m)
        self.ys, self.wy = _quantile_rule(marginals[1], m)
        hm = cost(self.xs[:, None], self.ys[None, :])
        self.mean = float(self.wx @ hm @ self.wy)
        self.row = hm @ self.wy          # E0[h | X = xs_i]
        self.col = self.wx @ hm          # E0[h | Y = ys_j]
        self.resid = hm - self.row[:, None] - self.col[None, :] + self.mean

    def cond_x(self, x):
        x = np.asarray(x, dtype=float)
        return self.cost(x[..., None], self.ys) @ self.wy

    def cond_y(self, y):
        y = np.asarray(y, dtype=float)
        return self.cost(self.xs, y[..., None]) @ self.wx

    def r(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return self.cost(x, y) - self.cond_x(x) - self.cond_y(y) + self.mean

    def variance(self) -> float:
        return float(self.wx @ (self.resid ** 2) @ self.wy)


def anova_residual(cost: BivariateCost, marginals: Marginals, x, y,
                   stream: RngStream | None = None):
    """Interaction residual ``r(x, y)``.

    Quadrature costs return the value.  Monte Carlo costs return
    ``(value, standard_error)`` and need a ``stream``.
    """
    if cost.method == "quadrature":
        out = _Quad(cost, marginals).r(x, y)
        return out if np.ndim(out) else float(out)
    if stream is None:
        raise ValueError("Monte Carlo integration needs a stream")
    rng = stream.generator()
    xs = marginals[0].sample(rng, cost.size)
    ys = marginals[1].sample(rng, cost.size)
    f = cost(xs, ys) - cost(np.full_like(ys, x), ys) - cost(xs, np.full_like(xs, y))
    value = float(cost(x, y)) + f.mean()
    return value, float(f.std(ddof=1) / math.sqrt(f.size))


def residual_variance(cost: BivariateCost, marginals: Marginals,
                      stream: RngStream | None = None, blocks: int = 32):
    """``Var0(r(X, Y))`` under independent marginals.

    The Monte Carlo route averages ``blocks`` interaction mean squares of
    ``size x size`` outer grids, each unbiased for ``Var0(r)``, and returns
    ``(value, standard_error)``.
    """
    if cost.method == "quadrature":
        return _Quad(cost, marginals).variance()
    if stream is None:
        raise ValueError("Monte Carlo integration needs a stream")
    k = cost.size
    vals = np.empty(blocks)
    for b in range(blocks):
        rng = stream.child(b).generator()
        xs = marginals[0].sample(rng, k)
        ys = marginals[1].sample(rng, k)
        hm = cost(xs[:, None], ys[None, :])
        resid = hm - hm.mean(axis=1, keepdims=True) - hm.mean(axis=0, keepdims=True) + hm.mean()
        vals[b] = np.sum(resid ** 2) / (k - 1) ** 2
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(blocks))


@dataclass(frozen=True)
class BivariateWorstCase:
    baseline_mean: float
    residual_variance: float
    marginals: Marginals

    def __post_init__(self):
        if self.residual_variance < 0:
            raise ValueError("residual_variance must be non-negative")

    @classmethod
    def from_cost(cls, cost: BivariateCost, marginals: Marginals) -> "BivariateWorstCase":
        q = _Quad(cost, marginals)
        return cls(q.mean, max(q.variance(), 0.0), tuple(marginals))


def proposition1_bounds(wc: BivariateWorstCase, eta: float) -> tuple[float, float]:
    if eta < 0:
        raise ValueError("eta must be non-negative")
    half = math.sqrt(wc.residual_variance * eta)
    return wc.baseline_mean - half, wc.baseline_mean + half


@dataclass(frozen=True)
class WorstCaseDensity:
    """Likelihood ratio ``1 + sign * scale * r(x, y)`` against the baseline."""

    scale: float
    sign: int
    _quad: _Quad

    def __call__(self, x, y):
        out = 1.0 + self.sign * self.scale * self._quad.r(x, y)
        return out if np.ndim(out) else float(out)

    def expectation(self, func) -> float:
        """``E_f[func(X, Y)]`` by tensor quadrature against the baseline."""
        q = self._quad
        xs, wx, ys, wy = q.xs, q.wx, q.ys, q.wy
        lr = 1.0 + self.sign * self.scale * q.resid
        return float(wx @ (lr * func(xs[:, None], ys[None, :])) @ wy)

    def phi2(self) -> float:
        q = self._quad
        lr = 1.0 + self.sign * self.scale * q.resid
        return float(q.wx @ ((lr - 1.0) ** 2) @ q.wy)

    def x_marginal(self, x):
        """Integral of the ratio over the baseline y-law at each ``x``; 1 exactly."""
        x = np.asarray(x, dtype=float)
        return self(x[..., None], self._quad.ys) @ self._quad.wy

    def y_marginal(self, y):
        y = np.asarray(y, dtype=float)
        return self(self._quad.xs, y[..., None]) @ self._quad.wx


def worst_case_density(cost: BivariateCost, marginals: Marginals, eta: float,
                       direction: str = "upper", grid: int = 101) -> WorstCaseDensity:
    """Likelihood ratio attaining the first-order bound in ``direction``.

    Non-negativity is checked on a ``grid x grid`` lattice in quantile space;
    a violation raises :class:`BudgetTooLargeError` carrying the largest
    feasible ``eta`` on that lattice.
    """
    direction = direction.lower()
    if direction not in ("upper", "lower"):
        raise ValueError("direction must be 'upper' or 'lower'")
    if eta < 0:
        raise ValueError("eta must be non-negative")
    q = _Quad(cost, marginals)
    var = q.variance()
    sign = 1 if direction == "upper" else -1
    if var <= 0:
        if eta == 0:
            return WorstCaseDensity(0.0, sign, q)
        raise ValueError("Var0(r) is zero; no dependency direction moves the cost")
    scale = math.sqrt(eta / var)

    u = np.clip(np.linspace(0.0, 1.0, grid), 1e-9, 1 - 1e-9)
    gx = marginals[0].quantile(u)
    gy = marginals[1].quantile(u)
    if marginals[0].family == "uniform":
        gx = np.linspace(*marginals[0].support, grid)
    if marginals[1].family == "uniform":
        gy = np.linspace(*marginals[1].support, grid)
    rg = q.r(gx[:, None], gy[None, :])
    worst = float(np.max(-sign * rg))
    if worst > 0:
        max_eta = var / worst ** 2
        if eta > max_eta:
            raise BudgetTooLargeError(eta, max_eta)
    return WorstCaseDensity(scale, sign, q)


# ---------------------------------------------------------------------------
# copulas
# ---------------------------------------------------------------------------

def _positive_stable(alpha: float, rng: np.random.Generator, size: int):
    # Kanter's representation: Laplace transform exp(-s^alpha)
    if alpha == 1.0:
        return np.ones(size)
    theta = rng.uniform(0.0, math.pi, size)
    w = rng.exponential(1.0, size)
    a = (np.sin(alpha * theta) / np.sin(theta) ** (1.0 / alpha)
         * (np.sin((1.0 - alpha) * theta) / w) ** ((1.0 - alpha) / alpha))
    return a


def _amh_conditional_inverse(u, w, t):
    # solves dC/du (v | u) = w for v; quadratic in v
    a = 1.0 - u
    qa = t - w * t * t * a * a
    qb = 1.0 - t - 2.0 * w * t * a * (1.0 - t * a)
    qc = -w * (1.0 - t * a) ** 2
    disc = np.sqrt(np.maximum(qb * qb - 4.0 * qa * qc, 0.0))
    # numerically stable root; qc <= 0 so this picks the root in [0, 1]
    denom = qb + disc
    v = np.where(np.abs(denom) > 1e-300, -2.0 * qc / np.where(denom == 0, 1.0, denom), 0.0)
    return np.clip(v, 0.0, 1.0)


def copula_sample(copula: CopulaSpec, stream: RngStream | np.random.Generator, size: int | None = None):
    """Draw ``(u, v)`` pairs; returns two arrays (or two floats if ``size`` is None)."""
    rng = stream.generator() if isinstance(stream, RngStream) else stream
    m = 1 if size is None else int(size)
    t = copula.parameter
    fam = copula.family
    if fam == "gaussian":
        z1 = rng.standard_normal(m)
        z2 = t * z1 + math.sqrt(1.0 - t * t) * rng.standard_normal(m)
        u, v = normal_cdf(z1), normal_cdf(z2)
    elif fam == "clayton":
        frailty = rng.gamma(1.0 / t, 1.0, m)
        e = rng.exponential(1.0, (2, m))
        u, v = (1.0 + e / frailty) ** (-1.0 / t)
    elif fam == "gumbel":
        s = _positive_stable(1.0 / t, rng, m)
        e = rng.exponential(1.0, (2, m))
        u, v = np.exp(-((e / s) ** (1.0 / t)))
    else:
        u = rng.uniform(size=m)
        w = rng.uniform(size=m)
        v = w if t == 0.0 else _amh_conditional_inverse(u, w, t)
    if size is None:
        return float(u[0]), float(v[0])
    return u, v


_CHUNK = 1 << 16


def expected_h_under_copula(cost: BivariateCost, marginals: Marginals, copula: CopulaSpec,
                            n_samples: int, stream: RngStream, threads: int = 1):
    """Monte Carlo ``E[h(Q_X(U), Q_Y(V))]`` with ``(U, V)`` from ``copula``.

    Work is split into fixed chunks, each with its own substream, and the
    chunk sums are combined in chunk order, so results do not depend on
    ``threads``.
    """
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    sizes = [_CHUNK] * (n_samples // _CHUNK)
    if n_samples % _CHUNK:
        sizes.append(n_samples % _CHUNK)

    def chunk(k):
        u, v = copula_sample(copula, stream.child(k), sizes[k])
        u = np.clip(u, 1e-16, 1 - 1e-16)
        v = np.clip(v, 1e-16, 1 - 1e-16)
        h = cost(marginals[0].quantile(u), marginals[1].quantile(v))
        return float(h.sum()), float((h * h).sum())

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(chunk, range(len(sizes))))
    else:
        parts = [chunk(k) for k in range(len(sizes))]
    s1 = math.fsum(p[0] for p in parts)
    s2 = math.fsum(p[1] for p in parts)
    mean = s1 / n_samples
    var = max(s2 / n_samples - mean * mean, 0.0) * n_samples / (n_samples - 1)
    return mean, math.sqrt(var / n_samples)
