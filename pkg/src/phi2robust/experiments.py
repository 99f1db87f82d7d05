"""Experiment driver: validated specs in, flat record tables out.

Every experiment returns a list of dict records.  Each record carries a
``record`` field naming its table (``band``, ``copula``, ``coefficient``,
...).  The writers render them as one CSV (union of columns, blanks where a
field does not apply) or as JSON with the same records.

Randomness is drawn from ``RngStream(seed)`` children fixed per experiment
component, so the output depends only on the audited spec and never on the
thread count.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping

import numpy as np

from .applications import (
    HedgeConfig,
    QueueConfig,
    hedge_cost,
    hedge_marginal,
    queue_cost,
    queue_marginal,
    waiting_time_of_last,
    hedging_errors,
)
from .bivariate import (
    BivariateCost,
    BivariateWorstCase,
    expected_h_under_copula,
    proposition1_bounds,
)
from .divergence import CopulaSpec, phi2_of_copula
from .processes import (
    Ar2LogIncrementSpec,
    EmbeddedAr1Spec,
    EmbeddedMcSpec,
    ar2_log_increments,
    embedded_ar1_paths,
    embedded_mc_paths,
    lag1_phi2,
)
from .serial_anova import (
    AnovaConfig,
    ConfigError,
    TrajectoryCost,
    anova_replications,
    baseline_mean,
    coefficient_ci,
    enumeration_oracle,
    first_order_band,
    two_lag_band,
)
from .stochastics import DiscreteMarginal, MarginalDistribution, RngStream

__all__ = [
    "ExperimentSpec",
    "KINDS",
    "parse_eta_grid",
    "run_experiment",
    "execute",
    "render",
    "write_output",
]

_U64 = 2 ** 64


def _grid(a: float, b: float, step: float) -> list[float]:
    n = int(math.floor((b - a) / step + 1e-9))
    return [round(a + k * step, 12) for k in range(n + 1)]


def parse_eta_grid(text: str) -> tuple[float, ...]:
    """``"a:b:step"`` to an inclusive grid; a single number is a one-point grid."""
    parts = text.split(":")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"cannot parse eta grid {text!r}") from None
    if len(vals) == 1:
        grid = vals
    elif len(vals) == 3:
        a, b, step = vals
        if step <= 0 or b < a:
            raise ConfigError(f"eta grid {text!r} needs a <= b and step > 0")
        grid = _grid(a, b, step)
    else:
        raise ConfigError(f"eta grid {text!r} must be 'a:b:step'")
    if any(e < 0 or not math.isfinite(e) for e in grid):
        raise ConfigError("eta values must be finite and non-negative")
    return tuple(grid)


# ---------------------------------------------------------------------------
# defaults
# ---------------------------------------------------------------------------

_COPULAS = {
    "gaussian": [-0.6, -0.3, 0.1, 0.3, 0.6],
    "gumbel": [1.1, 1.25, 1.5, 2.0, 3.0],
    "clayton": [0.2, 0.5, 1.0, 2.0, 4.0],
    "amh": [-1.0, -0.5, 0.3, 0.6, 1.0],
}

_QUEUE = {"arrival_rate": 0.8, "service_rate": 1.0}
_HEDGE = {"maturity": 1.0, "dt": 0.01, "x0": 100.0, "strike": 100.0, "mu": 0.1, "sigma": 0.2, "r": 0.05,
          "delta": "standard"}
_SERIAL = {"model": "queue-tail", "T": 30, "b": 2.0, "samples": 100_000, **_QUEUE, **_HEDGE}
_SYMMETRIC = [-0.2, -0.15, -0.1, -0.05, 0.0, 0.05, 0.1, 0.15, 0.2]

# kind -> (params, outer, inner, reps, eta grid, --paper-scale overrides)
_DEFAULTS: dict[str, tuple[dict, int, int, int, tuple, dict]] = {
    "bivariate-bounds": ({"cost": "x2y2", "samples": 100_000, "copulas": _COPULAS},
                         None, None, None, _grid(0.0, 0.2, 0.01), {"samples": 1_000_000}),
    "copula-compare": ({"cost": "x2y2", "samples": 100_000, "copulas": _COPULAS},
                       None, None, None, (), {"samples": 1_000_000}),
    "serial-xi1": (dict(_SERIAL), 20, 100, 50, _grid(0.0, 0.05, 0.005), {"samples": 1_000_000}),
    "serial-2dep": ({**_SERIAL, "eta2_grid": [0.0, 0.01, 0.02, 0.04]},
                    20, 100, 20, _grid(0.0, 0.05, 0.01), {"samples": 1_000_000}),
    "queue-xi1-vs-T": ({"T_values": [10, 15, 20, 25, 30, 35, 40, 45, 50], "b": 2.0, **_QUEUE},
                       20, 100, 50, (), {}),
    "queue-xi1-vs-b": ({"b_values": [1, 2, 3, 4, 5, 6, 7, 8, 9, 10], "T": 30, **_QUEUE},
                       20, 100, 50, (), {}),
    "queue-compare": ({"T": 30, "measure": "mean", "samples": 100_000, "phi2_pairs": 10_000_000,
                       "bins": 200, "sensitivity_bins": [100, 400],
                       "ar1_beta0": 1.0, "ar1_sigma2": 0.5, "ar1_beta1": _SYMMETRIC,
                       "mc": {"0.5": _SYMMETRIC, "0.3": _SYMMETRIC}, **_QUEUE},
                      20, 100, 50, _grid(0.0, 0.05, 0.0025), {"samples": 1_000_000}),
    "hedge-experiment": ({**_HEDGE, "samples": 100_000, "two_lag": True,
                          "ar1_beta1": _SYMMETRIC,
                          "ar2_fixed_beta1": {"beta1": 0.1, "beta2": _SYMMETRIC},
                          "ar2_fixed_beta2": {"beta2": 0.1, "beta1": _SYMMETRIC}},
                         20, 100, 20, _grid(0.0, 0.05, 0.0025), {"samples": 1_000_000}),
    "oracle-check": ({"values": [0.0, 1.0], "probs": [0.3, 0.7], "lag1_T": 3, "lag2_T": 4},
                     4, 4, 10_000, (), {}),
}

KINDS = tuple(_DEFAULTS)


@dataclass(frozen=True)
class ExperimentSpec:
    """What to run.  ``None`` fields take the kind's defaults in :meth:`resolved`."""

    kind: str
    seed: int = 0
    params: Mapping[str, Any] = field(default_factory=dict)
    outer: int | None = None
    inner: int | None = None
    reps: int | None = None
    alpha: float = 0.05
    eta_grid: tuple[float, ...] | None = None
    out: str | None = None
    format: str = "csv"
    threads: int = 1
    paper_scale: bool = False

    def __post_init__(self):
        if self.kind not in _DEFAULTS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; choose from {', '.join(KINDS)}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < _U64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        defaults = _DEFAULTS[self.kind][0]
        unknown = sorted(set(self.params) - set(defaults))
        if unknown:
            raise ConfigError(f"unknown parameter(s) for {self.kind}: {', '.join(unknown)}")
        for name in ("outer", "inner", "reps"):
            v = getattr(self, name)
            if v is not None and (not isinstance(v, int) or v < 2):
                raise ConfigError(f"{name} must be an integer >= 2")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be 'csv' or 'json'")
        if not isinstance(self.threads, int) or self.threads < 1:
            raise ConfigError("threads must be a positive integer")
        if self.eta_grid is not None and any(e < 0 for e in self.eta_grid):
            raise ConfigError("eta values must be non-negative")

    def resolved(self) -> "ExperimentSpec":
        params, outer, inner, reps, grid, big = _DEFAULTS[self.kind]
        merged = json.loads(json.dumps(params))
        if self.paper_scale:
            merged.update(big)
        merged.update(self.params)
        return replace(
            self,
            params=merged,
            outer=self.outer if self.outer is not None else outer,
            inner=self.inner if self.inner is not None else inner,
            reps=self.reps if self.reps is not None else reps,
            eta_grid=tuple(self.eta_grid) if self.eta_grid is not None else tuple(grid),
        )

    def audit(self) -> dict:
        """Everything that determines the output; ``threads`` and ``out`` are excluded."""
        r = self.resolved()
        return {
            "kind": r.kind,
            "seed": r.seed,
            "params": r.params,
            "outer": r.outer,
            "inner": r.inner,
            "reps": r.reps,
            "alpha": r.alpha,
            "eta_grid": list(r.eta_grid),
            "format": r.format,
            "paper_scale": r.paper_scale,
        }


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _anova(spec: ExperimentSpec) -> AnovaConfig:
    return AnovaConfig(spec.outer, spec.inner)


def _coef_record(est, **extra) -> dict:
    rec = {"record": "coefficient", **extra}
    rec.update(point=est.point, ci_low=est.ci_low, ci_high=est.ci_high, n=est.n,
               mean_w=est.mean_w, sd_w=est.sd_w)
    return rec


def _replicate_records(samples, **extra) -> list[dict]:
    return [{"record": "replicate", **extra, "rep": k, "w": s.value} for k, s in enumerate(samples)]


def _band_records(rows) -> list[dict]:
    return [{"record": "band", **row._asdict()} for row in rows]


def _xy_cost(name: str) -> BivariateCost:
    funcs = {"x2y2": lambda x, y: x * x * y * y, "xy": lambda x, y: x * y}
    if name not in funcs:
        raise ConfigError(f"unknown bivariate cost {name!r}; choose from {', '.join(funcs)}")
    return BivariateCost(funcs[name])


def _toy_cost(T: int) -> TrajectoryCost:
    return TrajectoryCost(T, lambda paths, aux: np.prod(paths, axis=1), name=f"product(T={T})")


def _serial_model(p: Mapping) -> tuple[TrajectoryCost, Any]:
    model = p["model"]
    try:
        if model in ("queue-tail", "queue-mean"):
            cfg = QueueConfig(p["arrival_rate"], p["service_rate"], int(p["T"]), float(p["b"]),
                              "tail" if model == "queue-tail" else "mean")
            return queue_cost(cfg), queue_marginal(cfg)
        if model == "hedge":
            cfg = _hedge_config(p)
            return hedge_cost(cfg), hedge_marginal(cfg)
        if model == "toy":
            return _toy_cost(int(p["T"])), DiscreteMarginal([0.0, 1.0], [0.3, 0.7])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown model {model!r}; choose queue-tail, queue-mean, hedge or toy")


def _hedge_config(p: Mapping) -> HedgeConfig:
    try:
        return HedgeConfig(**{k: p[k] if k == "delta" else float(p[k]) for k in _HEDGE})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _mean_se(s1: float, s2: float, n: int) -> tuple[float, float]:
    mean = s1 / n
    var = max(s2 / n - mean * mean, 0.0) * n / (n - 1)
    return mean, math.sqrt(var / n)


def _chunked_mean(n: int, stream: RngStream, draw: Callable[[int, RngStream], np.ndarray],
                  chunk: int = 1 << 14) -> tuple[float, float]:
    s1, s2 = [], []
    for k, start in enumerate(range(0, n, chunk)):
        h = draw(min(chunk, n - start), stream.child(k))
        s1.append(float(h.sum()))
        s2.append(float((h * h).sum()))
    return _mean_se(math.fsum(s1), math.fsum(s2), n)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def _copula_records(spec: ExperimentSpec, wc: BivariateWorstCase, cost: BivariateCost,
                    root: RngStream) -> list[dict]:
    p = spec.params
    records = []
    for f_idx, (family, params) in enumerate(sorted(p["copulas"].items())):
        for k, theta in enumerate(params):
            try:
                cop = CopulaSpec(family, float(theta))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            q = phi2_of_copula(cop, full_output=True)
            mean, se = expected_h_under_copula(cost, wc.marginals, cop, int(p["samples"]),
                                               root.child(1, f_idx, k), spec.threads)
            rec = {"record": "copula", "family": family, "param": float(theta),
                   "kendall_tau": cop.kendall_tau(), "phi2": q.value, "mean": mean, "stderr": se}
            lo, hi = proposition1_bounds(wc, q.value)
            rec.update(lower=lo, upper=hi, inside=bool(lo - 3 * se <= mean <= hi + 3 * se))
            records.append(rec)
    return records


def _bivariate(spec: ExperimentSpec, root: RngStream, with_band: bool) -> list[dict]:
    cost = _xy_cost(spec.params["cost"])
    u = MarginalDistribution.uniform(0.0, 1.0)
    wc = BivariateWorstCase.from_cost(cost, (u, u))
    records = [{"record": "baseline", "mean": wc.baseline_mean,
                "residual_sd": math.sqrt(wc.residual_variance)}]
    if with_band:
        for eta in spec.eta_grid:
            lo, hi = proposition1_bounds(wc, eta)
            records.append({"record": "band", "eta": eta, "lower": lo, "upper": hi})
    records += _copula_records(spec, wc, cost, root)
    return records


def _run_bivariate_bounds(spec, root):
    return _bivariate(spec, root, with_band=True)


def _run_copula_compare(spec, root):
    return _bivariate(spec, root, with_band=False)


def _serial(spec: ExperimentSpec, root: RngStream, lag: int) -> list[dict]:
    p = spec.params
    cost, marginal = _serial_model(p)
    mean, se = baseline_mean(cost, marginal, int(p["samples"]), root.child(0))
    records = [{"record": "baseline", "mean": mean, "stderr": se}]
    w1 = anova_replications(cost, marginal, _anova(spec), spec.reps, root.child(1), 1, spec.threads)
    xi1 = coefficient_ci(w1, spec.alpha)
    records += _replicate_records(w1, lag=1)
    records.append(_coef_record(xi1, lag=1))
    if lag == 1:
        records += _band_records(first_order_band(mean, xi1, spec.eta_grid))
        return records
    w2 = anova_replications(cost, marginal, _anova(spec), spec.reps, root.child(2), 2, spec.threads)
    coef_s = coefficient_ci(w2, spec.alpha)
    records += _replicate_records(w2, lag=2)
    records.append(_coef_record(coef_s, lag=2))
    records += _band_records(two_lag_band(mean, xi1, coef_s, spec.eta_grid, p["eta2_grid"]))
    return records


def _run_serial_xi1(spec, root):
    return _serial(spec, root, 1)


def _run_serial_2dep(spec, root):
    return _serial(spec, root, 2)


def _queue_sweep(spec: ExperimentSpec, root: RngStream, points: list[tuple[int, float]]) -> list[dict]:
    p = spec.params
    records = []
    for k, (T, b) in enumerate(points):
        try:
            cfg = QueueConfig(p["arrival_rate"], p["service_rate"], int(T), float(b), "tail")
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        w = anova_replications(queue_cost(cfg), queue_marginal(cfg), _anova(spec), spec.reps,
                               root.child(k), 1, spec.threads)
        records.append(_coef_record(coefficient_ci(w, spec.alpha), t=int(T), b=float(b)))
    return records


def _run_queue_vs_T(spec, root):
    return _queue_sweep(spec, root, [(T, spec.params["b"]) for T in spec.params["T_values"]])


def _run_queue_vs_b(spec, root):
    return _queue_sweep(spec, root, [(spec.params["T"], b) for b in spec.params["b_values"]])


def _run_queue_compare(spec, root):
    """Mean (or tail) waiting under embedded AR(1)/MC arrivals against the first-order band."""
    p = spec.params
    try:
        cfg = QueueConfig(p["arrival_rate"], p["service_rate"], int(p["T"]), 2.0, p["measure"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cost, marginal = queue_cost(cfg), queue_marginal(cfg)
    n = int(p["samples"])
    mean, se = baseline_mean(cost, marginal, n, root.child(0))
    w = anova_replications(cost, marginal, _anova(spec), spec.reps, root.child(1), 1, spec.threads)
    xi1 = coefficient_ci(w, spec.alpha)
    records = [{"record": "baseline", "mean": mean, "stderr": se}, _coef_record(xi1, lag=1)]
    records += _band_records(first_order_band(mean, xi1, spec.eta_grid))

    models = [("embedded-ar1", EmbeddedAr1Spec(p["ar1_beta0"], b, p["ar1_sigma2"], marginal),
               {"beta1": b}) for b in p["ar1_beta1"]]
    for a_text, thetas in sorted(p["mc"].items()):
        models += [("embedded-mc", EmbeddedMcSpec(float(a_text), th, marginal),
                    {"a": float(a_text), "theta": th}) for th in thetas]
    T = cfg.customer
    mean_service = 1.0 / cfg.service_rate
    for k, (name, model, labels) in enumerate(models):
        sampler = embedded_ar1_paths if name == "embedded-ar1" else embedded_mc_paths

        def draw(m, s, model=model, sampler=sampler):
            u = sampler(model, m, T, s.child(0).generator())
            services = s.child(1).generator().exponential(mean_service, (m, T))
            wt = waiting_time_of_last(u, services)
            return (wt > cfg.threshold).astype(float) if cfg.measure == "tail" else wt

        est, est_se = _chunked_mean(n, root.child(2, k, 0), draw)
        pairs = int(p["phi2_pairs"])
        path_len = 11
        long = sampler(model, -(-pairs // (path_len - 1)), path_len, root.child(2, k, 1).generator())
        rec = {"record": "model", "model": name, **labels, "mean": est, "stderr": est_se,
               "phi2_hist": lag1_phi2(long, bins=int(p["bins"])), "phi2_exact": model.phi2}
        for bins in p["sensitivity_bins"]:
            rec[f"phi2_hist_{int(bins)}"] = lag1_phi2(long, bins=int(bins))
        del long
        eta = rec["phi2_hist"]
        lo, hi = first_order_band(mean, xi1, [max(eta, 0.0)])[0][3:5]
        rec.update(band_lower_ci=lo, band_upper_ci=hi,
                   inside=bool(est + 1.96 * est_se >= lo - 1.96 * se and est - 1.96 * est_se <= hi + 1.96 * se))
        records.append(rec)
    return records


def _run_hedge(spec, root):
    """Baseline, one- and two-lag coefficients, and AR(1)/AR(2) comparison dots."""
    p = spec.params
    cfg = _hedge_config(p)
    cost, marginal = hedge_cost(cfg), hedge_marginal(cfg)
    n = int(p["samples"])
    mean, se = baseline_mean(cost, marginal, n, root.child(0))
    records = [{"record": "baseline", "mean": mean, "stderr": se}]
    w1 = anova_replications(cost, marginal, _anova(spec), spec.reps, root.child(1), 1, spec.threads)
    xi1 = coefficient_ci(w1, spec.alpha)
    records += _replicate_records(w1, lag=1)
    records.append(_coef_record(xi1, lag=1))
    coef_s = None
    if p["two_lag"]:
        w2 = anova_replications(cost, marginal, _anova(spec), spec.reps, root.child(2), 2, spec.threads)
        coef_s = coefficient_ci(w2, spec.alpha)
        records += _replicate_records(w2, lag=2)
        records.append(_coef_record(coef_s, lag=2))
    records += _band_records(first_order_band(mean, xi1, spec.eta_grid))

    models = [("ar1", b, 0.0) for b in p["ar1_beta1"]]
    fb1 = p["ar2_fixed_beta1"]
    models += [("ar2-fixed-beta1", fb1["beta1"], b2) for b2 in fb1["beta2"]]
    fb2 = p["ar2_fixed_beta2"]
    models += [("ar2-fixed-beta2", b1, fb2["beta2"]) for b1 in fb2["beta1"]]
    for k, (name, b1, b2) in enumerate(models):
        try:
            model = Ar2LogIncrementSpec.for_gbm(b1, b2, cfg.mu, cfg.sigma, cfg.dt)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

        def draw(m, s, model=model):
            d = ar2_log_increments(model, m, cfg.steps, s.generator())
            logp = np.concatenate([np.zeros((m, 1)), np.cumsum(d, axis=1)], axis=1)
            return np.abs(hedging_errors(cfg.x0 * np.exp(logp), cfg))

        est, est_se = _chunked_mean(n, root.child(3, k), draw)
        eta1, eta2 = model.phi2, model.phi2_two_lag
        rec = {"record": "model", "model": name, "beta1": b1, "beta2": b2, "mean": est,
               "stderr": est_se, "eta1": eta1, "eta2": eta2}
        lo, hi = first_order_band(mean, xi1, [eta1])[0][3:5]
        rec.update(band_lower_ci=lo, band_upper_ci=hi)
        if coef_s is not None and math.isfinite(eta2):
            row = two_lag_band(mean, xi1, coef_s, [eta1], [eta2])[0]
            rec.update(band2_lower_ci=row.lower_ci, band2_upper_ci=row.upper_ci)
        records.append(rec)
    return records


def _run_oracle_check(spec, root):
    """Grand means of one- and two-lag estimator samples on a finite toy against exact enumeration."""
    p = spec.params
    try:
        marginal = DiscreteMarginal(p["values"], p["probs"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    records = []
    for lag, T in ((1, int(p["lag1_T"])), (2, int(p["lag2_T"]))):
        cost = _toy_cost(T)
        oracle = enumeration_oracle(marginal, cost)
        exact = oracle.var_r if lag == 1 else oracle.var_s
        w = np.array([s.value for s in anova_replications(cost, marginal, _anova(spec), spec.reps,
                                                          root.child(lag), lag, spec.threads)])
        mean = math.fsum(w) / w.size
        se = float(np.std(w, ddof=1)) / math.sqrt(w.size)
        records.append({"record": "oracle", "quantity": "var_r" if lag == 1 else "var_s",
                        "t": T, "oracle": exact, "estimate": mean, "stderr": se,
                        "z": (mean - exact) / se if se > 0 else 0.0,
                        "e0h": oracle.e0h, "xi2": oracle.xi2})
    return records


_RUNNERS = {
    "bivariate-bounds": _run_bivariate_bounds,
    "copula-compare": _run_copula_compare,
    "serial-xi1": _run_serial_xi1,
    "serial-2dep": _run_serial_2dep,
    "queue-xi1-vs-T": _run_queue_vs_T,
    "queue-xi1-vs-b": _run_queue_vs_b,
    "queue-compare": _run_queue_compare,
    "hedge-experiment": _run_hedge,
    "oracle-check": _run_oracle_check,
}


def execute(spec: ExperimentSpec) -> list[dict]:
    """Run ``spec`` and return its records without writing anything."""
    r = spec.resolved()
    return _RUNNERS[r.kind](r, RngStream(r.seed))


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.9f}"
    return str(v)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return round(v, 9) if math.isfinite(v) else str(v)
    return v


def render(records: list[dict], meta: dict, fmt: str = "csv") -> str:
    """CSV with a ``# {meta}`` first line, or JSON ``{"meta": ..., "records": [...]}``."""
    if fmt == "json":
        recs = [{k: _json_value(v) for k, v in r.items()} for r in records]
        return json.dumps({"meta": meta, "records": recs}, indent=1, sort_keys=False) + "\n"
    columns: list[str] = []
    for r in records:
        for k in r:
            if k not in columns:
                columns.append(k)
    buf = io.StringIO()
    buf.write("# " + json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in records:
        writer.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def write_output(text: str, path: str | None) -> None:
    if path is None or path == "-":
        import sys
        sys.stdout.write(text)
        return
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent) or not os.access(parent, os.W_OK):
        raise ConfigError(f"cannot write to {path!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def run_experiment(spec: ExperimentSpec) -> list[dict]:
    """Validate, run, and write ``spec`` to ``spec.out`` (stdout when unset)."""
    r = spec.resolved()
    if r.out not in (None, "-"):
        parent = os.path.dirname(os.path.abspath(r.out))
        if not os.path.isdir(parent) or not os.access(parent, os.W_OK):
            raise ConfigError(f"cannot write to {r.out!r}")
    records = execute(r)
    write_output(render(records, r.audit(), r.format), r.out)
    return records
