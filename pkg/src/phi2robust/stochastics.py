"""Random streams, marginal laws and the special functions behind them.

Streams are immutable ``(master_seed, path)`` descriptors.  Drawing from one
builds a local Philox generator keyed by a ``SeedSequence`` over the path, so a
substream is a pure function of its address and can be materialised from any
thread in any order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtr

__all__ = [
    "RngStream",
    "MarginalDistribution",
    "DiscreteMarginal",
    "sample",
    "normal_cdf",
    "normal_quantile",
    "regularized_incomplete_beta",
    "student_t_cdf",
    "student_t_quantile",
]

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Address of a reproducible random substream.

    ``RngStream(seed).child(3).child(0, 7)`` always yields the same draws,
    independent of how many other streams were opened before it.
    """

    master_seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= int(self.master_seed) <= _U64:
            raise ValueError(f"master_seed must fit in 64 bits, got {self.master_seed}")
        if any(int(p) < 0 for p in self.path):
            raise ValueError(f"substream indices must be non-negative, got {self.path}")
        object.__setattr__(self, "path", tuple(int(p) for p in self.path))

    def child(self, *indices: int) -> "RngStream":
        return RngStream(self.master_seed, self.path + tuple(indices))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.master_seed), spawn_key=self.path)
        return np.random.Generator(np.random.Philox(seq))


# ---------------------------------------------------------------------------
# normal distribution
# ---------------------------------------------------------------------------

# Wichura (1988), algorithm AS241 PPND16: relative error about 1e-16.
_A = (3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
      5.2264952788528545610e3)
_C = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
      3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


def _poly(coefs, x):
    out = np.zeros_like(x)
    for c in reversed(coefs):
        out = out * x + c
    return out


def _check_probability(u):
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0.0) & (u < 1.0))):
        raise ValueError("probability must lie strictly inside (0, 1)")
    return u


def normal_quantile(p):
    """Standard normal inverse CDF (AS241), scalar or array."""
    p = _check_probability(p)
    scalar = p.ndim == 0
    p = np.atleast_1d(p)
    q = p - 0.5
    out = np.empty_like(p)

    central = np.abs(q) <= 0.425
    if central.any():
        qc = q[central]
        r = 0.180625 - qc * qc
        out[central] = qc * _poly(_A, r) / _poly(_B, r)

    tail = ~central
    if tail.any():
        r = np.sqrt(-np.log(np.minimum(p[tail], 1.0 - p[tail])))
        val = np.empty_like(r)
        near = r <= 5.0
        rn = r[near] - 1.6
        val[near] = _poly(_C, rn) / _poly(_D, rn)
        rf = r[~near] - 5.0
        val[~near] = _poly(_E, rf) / _poly(_F, rf)
        out[tail] = np.where(q[tail] < 0, -val, val)

    return float(out[0]) if scalar else out


def normal_cdf(x):
    return ndtr(x)


# ---------------------------------------------------------------------------
# Student t via the regularized incomplete beta function
# ---------------------------------------------------------------------------

def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, 10_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError("shape parameters must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_cdf(t: float, df: float) -> float:
    x = df / (df + t * t)
    tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, x)
    return 1.0 - tail if t > 0 else tail


def _student_t_pdf(t: float, df: float) -> float:
    log_c = math.lgamma(0.5 * (df + 1)) - math.lgamma(0.5 * df) - 0.5 * math.log(df * math.pi)
    return math.exp(log_c - 0.5 * (df + 1) * math.log1p(t * t / df))


def student_t_quantile(p: float, df: int) -> float:
    """Quantile of Student's t with ``df`` degrees of freedom.

    Starts from the Cornish-Fisher expansion around the normal quantile and
    refines with safeguarded Newton steps on the incomplete-beta CDF.
    """
    p = float(_check_probability(p))
    if df < 1:
        raise ValueError(f"df must be a positive integer, got {df}")
    if p == 0.5:
        return 0.0
    if df == 1:
        return math.tan(math.pi * (p - 0.5))
    if df == 2:
        a = 2.0 * p - 1.0
        return a * math.sqrt(2.0 / (1.0 - a * a))
    if p < 0.5:
        return -student_t_quantile(1.0 - p, df)

    z = normal_quantile(p)
    g1 = (z ** 3 + z) / 4.0
    g2 = (5 * z ** 5 + 16 * z ** 3 + 3 * z) / 96.0
    g3 = (3 * z ** 7 + 19 * z ** 5 + 17 * z ** 3 - 15 * z) / 384.0
    t = z + g1 / df + g2 / df ** 2 + g3 / df ** 3

    lo, hi = 0.0, max(2.0 * t, 1.0)
    while student_t_cdf(hi, df) < p:
        hi *= 2.0
    for _ in range(100):
        err = student_t_cdf(t, df) - p
        if err > 0:
            hi = min(hi, t)
        else:
            lo = max(lo, t)
        step = err / _student_t_pdf(t, df)
        t_new = t - step
        if not lo < t_new < hi:
            t_new = 0.5 * (lo + hi)
        if abs(t_new - t) <= 1e-13 * max(1.0, abs(t)):
            return t_new
        t = t_new
    return t


# ---------------------------------------------------------------------------
# marginal distributions
# ---------------------------------------------------------------------------

_FAMILIES = ("uniform", "exponential", "normal", "lognormal")


@dataclass(frozen=True)
class MarginalDistribution:
    """A univariate law from one of four families.

    Use the constructors :meth:`uniform`, :meth:`exponential`, :meth:`normal`
    and :meth:`lognormal`; parameters are validated once, here.  The normal
    and lognormal families are parameterised by variance, not standard
    deviation.
    """

    family: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {_FAMILIES}")
        p = tuple(float(v) for v in self.params)
        object.__setattr__(self, "params", p)
        if not all(math.isfinite(v) for v in p):
            raise ValueError(f"parameters must be finite, got {p}")
        if self.family == "uniform":
            if len(p) != 2 or not p[0] < p[1]:
                raise ValueError(f"uniform needs a < b, got {p}")
        elif self.family == "exponential":
            if len(p) != 1 or p[0] <= 0:
                raise ValueError(f"exponential rate must be positive, got {p}")
        elif len(p) != 2 or p[1] <= 0:
            raise ValueError(f"{self.family} variance must be positive, got {p}")

    @classmethod
    def uniform(cls, a: float = 0.0, b: float = 1.0) -> "MarginalDistribution":
        return cls("uniform", (a, b))

    @classmethod
    def exponential(cls, rate: float) -> "MarginalDistribution":
        return cls("exponential", (rate,))

    @classmethod
    def normal(cls, mean: float = 0.0, variance: float = 1.0) -> "MarginalDistribution":
        return cls("normal", (mean, variance))

    @classmethod
    def lognormal(cls, mu: float, sigma2: float) -> "MarginalDistribution":
        return cls("lognormal", (mu, sigma2))

    @property
    def support(self) -> tuple[float, float]:
        if self.family == "uniform":
            return self.params
        if self.family == "normal":
            return (-math.inf, math.inf)
        return (0.0, math.inf)

    def mean(self) -> float:
        f, p = self.family, self.params
        if f == "uniform":
            return 0.5 * (p[0] + p[1])
        if f == "exponential":
            return 1.0 / p[0]
        if f == "normal":
            return p[0]
        return math.exp(p[0] + 0.5 * p[1])

    def variance(self) -> float:
        f, p = self.family, self.params
        if f == "uniform":
            return (p[1] - p[0]) ** 2 / 12.0
        if f == "exponential":
            return 1.0 / p[0] ** 2
        if f == "normal":
            return p[1]
        return math.expm1(p[1]) * math.exp(2 * p[0] + p[1])

    def sample(self, rng: np.random.Generator, size=None):
        f, p = self.family, self.params
        if f == "uniform":
            return rng.uniform(p[0], p[1], size)
        if f == "exponential":
            return rng.exponential(1.0 / p[0], size)
        if f == "normal":
            return rng.normal(p[0], math.sqrt(p[1]), size)
        return rng.lognormal(p[0], math.sqrt(p[1]), size)

    def cdf(self, x):
        f, p = self.family, self.params
        x = np.asarray(x, dtype=float)
        if f == "uniform":
            out = np.clip((x - p[0]) / (p[1] - p[0]), 0.0, 1.0)
        elif f == "exponential":
            out = np.where(x > 0, -np.expm1(-p[0] * np.maximum(x, 0.0)), 0.0)
        elif f == "normal":
            out = ndtr((x - p[0]) / math.sqrt(p[1]))
        else:
            with np.errstate(divide="ignore"):
                out = np.where(x > 0, ndtr((np.log(np.maximum(x, 1e-300)) - p[0]) / math.sqrt(p[1])), 0.0)
        return out if out.ndim else float(out)

    def quantile(self, u):
        u = _check_probability(u)
        f, p = self.family, self.params
        if f == "uniform":
            out = p[0] + u * (p[1] - p[0])
        elif f == "exponential":
            out = -np.log1p(-u) / p[0]
        elif f == "normal":
            out = p[0] + math.sqrt(p[1]) * normal_quantile(u)
        else:
            out = np.exp(p[0] + math.sqrt(p[1]) * normal_quantile(u))
        out = np.asarray(out, dtype=float)
        return out if out.ndim else float(out)

    def pdf(self, x):
        f, p = self.family, self.params
        x = np.asarray(x, dtype=float)
        if f == "uniform":
            out = np.where((x >= p[0]) & (x <= p[1]), 1.0 / (p[1] - p[0]), 0.0)
        elif f == "exponential":
            out = np.where(x >= 0, p[0] * np.exp(-p[0] * np.maximum(x, 0.0)), 0.0)
        elif f == "normal":
            out = np.exp(-0.5 * (x - p[0]) ** 2 / p[1]) / math.sqrt(2 * math.pi * p[1])
        else:
            xs = np.maximum(x, 1e-300)
            out = np.where(
                x > 0,
                np.exp(-0.5 * (np.log(xs) - p[0]) ** 2 / p[1]) / (xs * math.sqrt(2 * math.pi * p[1])),
                0.0,
            )
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class DiscreteMarginal:
    """Finite-support law; used for exact enumeration checks."""

    values: tuple[float, ...]
    probs: tuple[float, ...] = field(default=())

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        probs = tuple(float(p) for p in self.probs) or tuple(1.0 / len(vals) for _ in vals)
        if len(vals) == 0 or len(vals) != len(probs):
            raise ValueError("values and probs must be non-empty and of equal length")
        if any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError(f"probs must be non-negative and sum to 1, got {probs}")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "probs", probs)

    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))

    def variance(self) -> float:
        v = np.asarray(self.values)
        return float(np.dot((v - self.mean()) ** 2, self.probs))

    def sample(self, rng: np.random.Generator, size=None):
        idx = rng.choice(len(self.values), size=size, p=self.probs)
        return np.asarray(self.values)[idx]


def sample(dist, stream: RngStream, size: int | Sequence[int] | None = None):
    """Draw from ``dist`` using a fresh generator for ``stream``."""
    return dist.sample(stream.generator(), size)
