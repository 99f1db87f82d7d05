"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Seeds are fixed up front and never tuned.  The queue and hedging checks run
at the stated desk scale and take several minutes each.
"""

import filecmp
import math
import time

import numpy as np
import pytest

from phi2robust.bivariate import (
    BivariateCost,
    BivariateWorstCase,
    proposition1_bounds,
    residual_variance,
    worst_case_density,
)
from phi2robust.cli import main
from phi2robust.experiments import ExperimentSpec, execute
from phi2robust.processes import gaussian_one_dep_check
from phi2robust.serial_anova import (
    AnovaConfig,
    TrajectoryCost,
    anova_replications,
    enumeration_oracle,
)
from phi2robust.stochastics import DiscreteMarginal, MarginalDistribution, RngStream

SEED = 1
U = MarginalDistribution.uniform(0.0, 1.0)
X2Y2 = BivariateCost(lambda x, y: x * x * y * y)
TOY = DiscreteMarginal([0.0, 1.0], [0.3, 0.7])


def toy_cost(T):
    return TrajectoryCost(T, lambda p, aux: np.prod(p, axis=1), name=f"product(T={T})")


def overlaps(lo, hi, a, b):
    return lo <= b and hi >= a


def fmt_ci(rec):
    return f"{rec['point']:.4f} ({rec['ci_low']:.4f}, {rec['ci_high']:.4f})"


def test_criterion_01_bivariate_closed_form(report):
    t0 = time.perf_counter()
    v = residual_variance(X2Y2, (U, U))
    dt = time.perf_counter() - t0
    err = abs(v - (4 / 45) ** 2)
    report(1, "Var0(r) for x^2 y^2 equals (4/45)^2", err <= 1e-8 and dt < 1.0,
           f"value {v:.12f}, |error| {err:.1e}, {dt:.3f}s")


def test_criterion_02_worst_case_density(report):
    t0 = time.perf_counter()
    eta = 0.04
    f = worst_case_density(X2Y2, (U, U), eta, "upper")
    grid = np.linspace(0.0, 1.0, 101)
    mass = f.expectation(lambda x, y: np.ones_like(x * y))
    marg = max(np.max(np.abs(f.x_marginal(grid) - 1)), np.max(np.abs(f.y_marginal(grid) - 1)))
    phi2 = f.phi2()
    _, upper = proposition1_bounds(BivariateWorstCase.from_cost(X2Y2, (U, U)), eta)
    eh = f.expectation(X2Y2.func)
    dt = time.perf_counter() - t0
    ok = (abs(mass - 1) <= 1e-6 and marg <= 1e-6 and abs(phi2 - eta) <= 1e-6
          and abs(eh - upper) <= 1e-6 and dt < 5)
    report(2, "worst-case density at eta=0.04", ok,
           f"mass-1 {mass - 1:.1e}, marginal dev {marg:.1e}, phi2 {phi2:.9f}, "
           f"E[h] {eh:.9f} vs bound {upper:.9f}, {dt:.2f}s")


def test_criterion_03_copula_dominance(report):
    t0 = time.perf_counter()
    recs = execute(ExperimentSpec("copula-compare", seed=SEED, params={"samples": 100_000}))
    cop = [r for r in recs if r["record"] == "copula"]
    dt = time.perf_counter() - t0
    bad = [f"{r['family']}({r['param']})" for r in cop if not r["inside"]]
    families = {r["family"] for r in cop}
    ok = not bad and len(cop) == 20 and len(families) == 4 and dt < 60
    report(3, "copula points inside the band (+-3 se)", ok,
           f"{len(cop) - len(bad)}/{len(cop)} inside, outside: {bad or 'none'}, {dt:.1f}s")


def test_criterion_04_unbiasedness(report):
    t0 = time.perf_counter()
    cfg = AnovaConfig(4, 4)
    parts = []
    ok = True
    for lag, T in ((1, 3), (2, 4)):
        oracle = enumeration_oracle(TOY, toy_cost(T))
        exact = oracle.var_r if lag == 1 else oracle.var_s
        w = np.array([s.value for s in anova_replications(toy_cost(T), TOY, cfg, 10_000,
                                                          RngStream(SEED, (4, lag)), lag)])
        se = w.std(ddof=1) / math.sqrt(w.size)
        z = (w.mean() - exact) / se
        ok &= abs(z) <= 3
        parts.append(f"lag {lag}: mean {w.mean():.5f} vs oracle {exact:.5f} (z={z:+.2f})")
    dt = time.perf_counter() - t0
    report(4, "one- and two-lag estimator means match enumeration", ok and dt < 120,
           "; ".join(parts) + f", {dt:.0f}s")


def test_criterion_05_variance_scaling(report):
    t0 = time.perf_counter()
    var = {}
    for K in (10, 20):
        w = [s.value for s in anova_replications(toy_cost(3), TOY, AnovaConfig(K, 2), 1000,
                                                 RngStream(SEED, (5, K)))]
        var[K] = float(np.var(w, ddof=1))
    ratio = var[10] / var[20]
    dt = time.perf_counter() - t0
    report(5, "estimator variance K=10 over K=20 in [2, 8]", 2 <= ratio <= 8 and dt < 120,
           f"ratio {ratio:.3f} (n=2, 1000 samples each), {dt:.0f}s")


def test_criterion_06_queue_horizon_sweep(report):
    recs = execute(ExperimentSpec("queue-xi1-vs-T", seed=SEED,
                                  params={"T_values": [10, 30, 50], "b": 2.0}))
    by_t = {r["t"]: r for r in recs}
    r30 = by_t[30]
    ci_ok = overlaps(r30["ci_low"], r30["ci_high"], 0.149, 0.186)
    pts = [by_t[t]["point"] for t in (10, 30, 50)]
    inc = pts[0] < pts[1] < pts[2]
    report(6, "M/M/1 Xi1 at T=30, b=2 and T-sweep", ci_ok and inc,
           f"T=30 {fmt_ci(r30)} vs reference (0.149, 0.186); points T=10,30,50: "
           + ", ".join(f"{p:.4f}" for p in pts))


def test_criterion_07_queue_threshold_sweep(report):
    recs = execute(ExperimentSpec("queue-xi1-vs-b", seed=SEED,
                                  params={"b_values": [1, 4, 10], "T": 30}))
    by_b = {r["b"]: r for r in recs}
    ref = {1.0: (0.123, 0.146), 4.0: (0.185, 0.216), 10.0: (0.075, 0.088)}
    ci_ok = all(overlaps(by_b[b]["ci_low"], by_b[b]["ci_high"], *ref[b]) for b in ref)
    p = [by_b[b]["point"] for b in (1.0, 4.0, 10.0)]
    peak = p[1] > p[0] and p[1] > p[2]
    report(7, "M/M/1 Xi1 over b is unimodal and matches rows", ci_ok and peak,
           "; ".join(f"b={int(b)} {fmt_ci(by_b[b])} vs {ref[b]}" for b in ref))


def test_criterion_08_hedging(report):
    t0 = time.perf_counter()
    recs = execute(ExperimentSpec("hedge-experiment", seed=SEED))
    dt = time.perf_counter() - t0
    base = next(r for r in recs if r["record"] == "baseline")
    xi1 = next(r for r in recs if r["record"] == "coefficient" and r["lag"] == 1)
    xs = next(r for r in recs if r["record"] == "coefficient" and r["lag"] == 2)
    ok_base = abs(base["mean"] - 4.81) <= 0.15
    ok_xi1 = overlaps(xi1["ci_low"], xi1["ci_high"], 1.9709, 2.2786)
    ok_s = overlaps(xs["ci_low"], xs["ci_high"], 1.9026, 2.2179)
    report(8, "hedging baseline and coefficients", ok_base and ok_xi1 and ok_s and dt <= 1800,
           f"E|He| {base['mean']:.4f} +- {base['stderr']:.4f} vs 4.81 +- 0.15 "
           f"[{'ok' if ok_base else 'miss'}]; Xi1 {fmt_ci(xi1)} vs [1.9709, 2.2786] "
           f"[{'ok' if ok_xi1 else 'miss'}]; sqrt VarS {fmt_ci(xs)} vs [1.9026, 2.2179] "
           f"[{'ok' if ok_s else 'miss'}]; {dt / 60:.1f} min")


def test_criterion_09_gaussian_one_dependence(report):
    t0 = time.perf_counter()
    n = 1_000_000
    c12, c13 = gaussian_one_dep_check(0.5, n, RngStream(SEED, (9,)))
    dt = time.perf_counter() - t0
    z12 = (c12 - 0.5) / ((1 - 0.25) / math.sqrt(n))
    z13 = (c13 - 0.25) / ((1 - 0.0625) / math.sqrt(n))
    report(9, "Gaussian 1-dependent counterpart correlations", abs(z12) <= 3 and abs(z13) <= 3 and dt < 10,
           f"corr12 {c12:.5f} (z={z12:+.2f}), corr13 {c13:.5f} (z={z13:+.2f}), {dt:.2f}s")


def test_criterion_10_parametric_dominance(report):
    params = {"measure": "mean", "ar1_beta1": [-0.2, 0.2],
              "mc": {"0.3": [-0.2, 0.2], "0.5": [-0.2, 0.2]}}
    recs = execute(ExperimentSpec("queue-compare", seed=SEED, params=params))
    xi1 = next(r for r in recs if r["record"] == "coefficient")
    models = [r for r in recs if r["record"] == "model"]
    bad = [r for r in models if not r["inside"]]

    def label(r):
        if r["model"] == "embedded-ar1":
            return f"AR1(b1={r['beta1']})"
        return f"MC(a={r['a']},th={r['theta']})"

    detail = ", ".join(f"{label(r)} eta {r['phi2_hist']:.4f} mean {r['mean']:.3f} "
                       f"band [{r['band_lower_ci']:.3f}, {r['band_upper_ci']:.3f}]" for r in models)
    report(10, "embedded AR(1)/MC dominated by the first-order band", len(models) == 6 and not bad,
           f"Xi1 (mean waiting) {fmt_ci(xi1)}; {detail}")


_SMALL = {
    "bivariate-bounds": ["--samples", "150000", "--eta-grid", "0:0.1:0.05"],
    "copula-compare": ["--samples", "150000"],
    "serial-xi1": ["--model", "queue-tail", "--set", "T=10", "--outer", "10", "--inner", "50",
                   "--reps", "3", "--samples", "40000"],
    "serial-2dep": ["--model", "queue-mean", "--set", "T=10", "--outer", "20", "--inner", "50",
                    "--reps", "3", "--samples", "40000", "--eta-grid", "0:0.02:0.01"],
    "queue-experiment": ["--sweep", "compare", "--set", "T=10", "--samples", "40000",
                         "--set", "phi2_pairs=200000", "--set", "ar1_beta1=[0.2]",
                         "--set", 'mc={"0.5": [0.2]}', "--outer", "8", "--inner", "20", "--reps", "3"],
    "hedge-experiment": ["--set", "dt=0.1", "--samples", "40000", "--outer", "8", "--inner", "50",
                         "--reps", "3", "--set", "ar1_beta1=[0.0,0.2]",
                         "--set", 'ar2_fixed_beta1={"beta1": 0.1, "beta2": [0.1]}',
                         "--set", 'ar2_fixed_beta2={"beta2": 0.1, "beta1": [0.2]}'],
    "oracle-check": ["--reps", "200"],
}
_EXTRA = {
    "queue-experiment T": ["queue-experiment", "--sweep", "T", "--set", "T_values=[5,10]",
                           "--outer", "10", "--inner", "50", "--reps", "3"],
    "queue-experiment b": ["queue-experiment", "--sweep", "b", "--set", "b_values=[1,3]",
                           "--set", "T=10", "--outer", "10", "--inner", "50", "--reps", "3"],
}


def test_criterion_11_determinism(report, tmp_path):
    runs = {name: [name] + args for name, args in _SMALL.items()}
    runs.update(_EXTRA)
    results = []
    for k, (name, argv) in enumerate(runs.items()):
        for fmt in ("csv", "json"):
            paths = []
            for threads in (1, 8):
                out = tmp_path / f"{k}-{fmt}-t{threads}.out"
                code = main(argv + ["--seed", "11", "--threads", str(threads), "--format", fmt,
                                    "--out", str(out)])
                paths.append(out if code == 0 else None)
            same = all(paths) and filecmp.cmp(paths[0], paths[1], shallow=False)
            results.append((f"{name} [{fmt}]", same))
    bad = [n for n, same in results if not same]
    report(11, "byte-identical output for --threads 1 vs 8", not bad,
           f"{len(results) - len(bad)}/{len(results)} identical, differing: {bad or 'none'}")
