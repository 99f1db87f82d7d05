"""Chi-square distance and phi^2-coefficient on discrete and copula laws."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .stochastics import normal_quantile

__all__ = [
    "AbsoluteContinuityError",
    "QuadratureError",
    "DiscreteJoint",
    "CopulaSpec",
    "chi_square_distance",
    "phi2_coefficient",
    "phi2_of_copula",
    "Phi2Quadrature",
    "phi2_from_pairs",
    "unit_square_rule",
    "gaussian_phi2",
    "gaussian_chi_square",
    "gaussian_phi2_two_lag",
]


class AbsoluteContinuityError(ValueError):
    """P1 puts mass where P2 has none, so dP1/dP2 does not exist."""


class QuadratureError(ArithmeticError):
    """Grid doubling failed to converge; ``iterates`` holds the last two values."""

    def __init__(self, message, iterates):
        super().__init__(message)
        self.iterates = iterates


@dataclass(frozen=True)
class DiscreteJoint:
    """Bivariate pmf on an ``m x k`` grid of atoms."""

    pmf: np.ndarray

    def __post_init__(self):
        pmf = np.array(self.pmf, dtype=float)
        if pmf.ndim != 2 or pmf.size == 0:
            raise ValueError(f"pmf must be a non-empty 2-D array, got shape {pmf.shape}")
        if np.any(pmf < 0) or not np.all(np.isfinite(pmf)):
            raise ValueError("pmf entries must be finite and non-negative")
        if abs(pmf.sum() - 1.0) > 1e-12:
            raise ValueError(f"pmf must sum to 1, sums to {pmf.sum()!r}")
        pmf.setflags(write=False)
        object.__setattr__(self, "pmf", pmf)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pmf.shape

    def row_marginal(self) -> np.ndarray:
        return self.pmf.sum(axis=1)

    def col_marginal(self) -> np.ndarray:
        return self.pmf.sum(axis=0)

    def independent_counterpart(self) -> "DiscreteJoint":
        prod = np.outer(self.row_marginal(), self.col_marginal())
        return DiscreteJoint(prod / prod.sum())


def chi_square_distance(p1: DiscreteJoint, p2: DiscreteJoint) -> float:
    """Sum of (p1/p2 - 1)^2 p2 over the grid."""
    a, b = p1.pmf, p2.pmf
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if np.any((a > 0) & (b <= 0)):
        raise AbsoluteContinuityError("p1 is not absolutely continuous with respect to p2")
    pos = b > 0
    return float(np.sum((a[pos] - b[pos]) ** 2 / b[pos]))


def phi2_coefficient(joint: DiscreteJoint) -> float:
    pmf = joint.pmf
    prod = np.outer(pmf.sum(axis=1), pmf.sum(axis=0))
    # cells with zero product mass carry zero joint mass as well
    pos = prod > 0
    return float(np.sum((pmf[pos] - prod[pos]) ** 2 / prod[pos]))


def phi2_from_pairs(prev, curr, bins: int = 200, debias: bool = True) -> float:
    """phi^2 of the empirical copula of ``(prev, curr)`` on a ``bins x bins`` grid.

    Both coordinates are rank-transformed so each bin row and column carries
    mass ``1/bins``.  With ``debias`` the null expectation ``(bins-1)^2/n`` of
    the plug-in statistic is subtracted.
    """
    prev = np.asarray(prev, dtype=float)
    curr = np.asarray(curr, dtype=float)
    if prev.shape != curr.shape or prev.ndim != 1:
        raise ValueError("prev and curr must be 1-D arrays of equal length")
    n = prev.size
    ri = np.empty(n, dtype=np.int64)
    ci = np.empty(n, dtype=np.int64)
    ri[np.argsort(prev, kind="stable")] = np.arange(n)
    ci[np.argsort(curr, kind="stable")] = np.arange(n)
    ri = ri * bins // n
    ci = ci * bins // n
    counts = np.bincount(ri * bins + ci, minlength=bins * bins).reshape(bins, bins)
    value = phi2_coefficient(DiscreteJoint(counts / n))
    if debias:
        value -= (bins - 1) ** 2 / n
    return value


# ---------------------------------------------------------------------------
# copulas
# ---------------------------------------------------------------------------

_COPULAS = ("gaussian", "gumbel", "clayton", "amh")


@dataclass(frozen=True)
class CopulaSpec:
    family: str
    parameter: float

    def __post_init__(self):
        fam = self.family.lower()
        object.__setattr__(self, "family", fam)
        t = float(self.parameter)
        object.__setattr__(self, "parameter", t)
        ok = {
            "gaussian": -1.0 < t < 1.0,
            "gumbel": t >= 1.0,
            "clayton": t > 0.0,
            "amh": -1.0 <= t <= 1.0,
        }.get(fam)
        if ok is None:
            raise ValueError(f"unknown copula family {self.family!r}; expected one of {_COPULAS}")
        if not ok:
            raise ValueError(f"parameter {t} outside the admissible range for {fam}")

    def is_independence(self) -> bool:
        t = self.parameter
        return (self.family == "gumbel" and t == 1.0) or (self.family != "gumbel" and t == 0.0)

    def cdf(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        t = self.parameter
        if self.family == "gaussian":
            from scipy.stats import multivariate_normal

            a = normal_quantile(np.clip(u, 1e-300, 1 - 1e-16))
            b = normal_quantile(np.clip(v, 1e-300, 1 - 1e-16))
            mvn = multivariate_normal(mean=[0.0, 0.0], cov=[[1.0, t], [t, 1.0]])
            return mvn.cdf(np.stack([a, b], axis=-1))
        if self.family == "gumbel":
            return np.exp(-(((-np.log(u)) ** t + (-np.log(v)) ** t) ** (1.0 / t)))
        if self.family == "clayton":
            return np.maximum(u ** -t + v ** -t - 1.0, 0.0) ** (-1.0 / t)
        return u * v / (1.0 - t * (1.0 - u) * (1.0 - v))

    def density(self, u, v):
        """Copula density c(u, v) on the open unit square."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        t = self.parameter
        if self.family == "gaussian":
            a = normal_quantile(u)
            b = normal_quantile(v)
            s = 1.0 - t * t
            return np.exp(-(t * t * (a * a + b * b) - 2.0 * t * a * b) / (2.0 * s)) / math.sqrt(s)
        if self.family == "clayton":
            lu, lv = np.log(u), np.log(v)
            # u^-t + v^-t - 1 written to stay accurate as t -> 0
            log_base = np.log1p(np.expm1(-t * lu) + np.expm1(-t * lv))
            return (1.0 + t) * np.exp((-t - 1.0) * (lu + lv) + (-2.0 - 1.0 / t) * log_base)
        if self.family == "gumbel":
            x = -np.log(u)
            y = -np.log(v)
            s = x ** t + y ** t
            a = s ** (1.0 / t)
            return (np.exp(-a) / (u * v) * (x * y) ** (t - 1.0) * s ** (1.0 / t - 2.0)
                    * (a + t - 1.0))
        d = 1.0 - t * (1.0 - u) * (1.0 - v)
        return (1.0 + t * ((1.0 + u) * (1.0 + v) - 3.0) + t * t * (1.0 - u) * (1.0 - v)) / d ** 3

    def kendall_tau(self) -> float:
        t = self.parameter
        if self.family == "gaussian":
            return 2.0 / math.pi * math.asin(t)
        if self.family == "gumbel":
            return 1.0 - 1.0 / t
        if self.family == "clayton":
            return t / (t + 2.0)
        if t == 0.0:
            return 0.0
        if t == 1.0:
            return 1.0 / 3.0
        return 1.0 - 2.0 * (t + (1.0 - t) ** 2 * math.log1p(-t)) / (3.0 * t * t)


def unit_square_rule(nodes: int, clip: float = 1e-6):
    """Nodes and weights on ``[clip, 1 - clip]`` for corner-singular integrands.

    Each half of the interval is mapped to log-distance from its endpoint and
    integrated with ``nodes // 2`` Gauss-Legendre points, so power-law blow-ups
    at 0 and 1 become smooth in the integration variable.
    """
    if nodes < 2 or nodes % 2:
        raise ValueError("nodes must be an even integer >= 2")
    g, w = np.polynomial.legendre.leggauss(nodes // 2)
    lo, hi = math.log(clip), math.log(0.5)
    ell = 0.5 * (hi - lo) * g + 0.5 * (hi + lo)
    dist = np.exp(ell)
    wt = 0.5 * (hi - lo) * w * dist
    x = np.concatenate([dist, 1.0 - dist[::-1]])
    weights = np.concatenate([wt, wt[::-1]])
    return x, weights


class Phi2Quadrature(NamedTuple):
    value: float
    grid_size: int
    previous: float
    clipped_mass: float


def phi2_of_copula(copula: CopulaSpec, grid_size: int = 64, clip: float = 1e-6,
                   rtol: float = 1e-3, max_doublings: int = 3,
                   full_output: bool = False):
    """phi^2 of a copula, the integral of (c - 1)^2 over the unit square.

    Tensor quadrature over ``[clip, 1 - clip]^2`` with grid doubling until two
    successive values agree to ``rtol``.  Copulas with tail dependence
    (Gumbel with theta > 1, Clayton) have infinite phi^2; for those the value
    is specific to ``clip``.  ``clipped_mass`` is the copula mass outside the
    clipped square.
    """
    if grid_size < 64:
        raise ValueError("grid_size must be at least 64")
    if copula.is_independence():
        out = Phi2Quadrature(0.0, grid_size, 0.0, 0.0)
        return out if full_output else 0.0

    def integrate(m):
        x, w = unit_square_rule(m, clip)
        uu, vv = np.meshgrid(x, x, indexing="ij")
        c = copula.density(uu, vv)
        ww = np.outer(w, w)
        return float(np.sum(ww * (c - 1.0) ** 2)), float(np.sum(ww * c))

    size = grid_size
    cur, mass = integrate(size)
    for _ in range(max_doublings):
        prev = cur
        size *= 2
        cur, mass = integrate(size)
        if abs(cur - prev) <= max(rtol * abs(cur), 1e-12):
            out = Phi2Quadrature(cur, size, prev, 1.0 - mass)
            return out if full_output else cur
    raise QuadratureError(
        f"phi^2 quadrature for {copula} did not converge to rtol={rtol} by grid {size}",
        (prev, cur),
    )



def gaussian_phi2(rho: float) -> float:
    """Closed-form phi^2 of a bivariate normal with correlation ``rho``."""
    if not abs(rho) < 1:
        raise ValueError("|rho| must be < 1")
    return rho * rho / (1.0 - rho * rho)


def gaussian_chi_square(cov_p, cov_q) -> float:
    """chi^2(N(0, cov_p), N(0, cov_q)); infinite when the integral diverges."""
    cov_p = np.asarray(cov_p, dtype=float)
    cov_q = np.asarray(cov_q, dtype=float)
    a = 2.0 * np.linalg.inv(cov_p) - np.linalg.inv(cov_q)
    eig = np.linalg.eigvalsh(0.5 * (a + a.T))
    if np.min(eig) <= 0:
        return math.inf
    _, logdet_p = np.linalg.slogdet(cov_p)
    _, logdet_q = np.linalg.slogdet(cov_q)
    log_int = 0.5 * logdet_q - logdet_p - 0.5 * float(np.sum(np.log(eig)))
    return max(math.expm1(log_int), 0.0)


def gaussian_phi2_two_lag(rho1: float, rho2: float) -> float:
    """Two-lag phi^2 of a stationary Gaussian triple with lag correlations ``rho1, rho2``.

    The reference law is the Gaussian 1-dependent counterpart, whose lag-two
    correlation is ``rho1**2``.
    """
    cov = np.array([[1.0, rho1, rho2], [rho1, 1.0, rho1], [rho2, rho1, 1.0]])
    ref = np.array([[1.0, rho1, rho1 ** 2], [rho1, 1.0, rho1], [rho1 ** 2, rho1, 1.0]])
    return gaussian_chi_square(cov, ref)
