"""Acceptance suite.

Each test exercises one acceptance criterion end to end at its stated
tolerance and prints a single [PASS]/[FAIL] line before asserting, so a
plain ``pytest -s tests/test_acceptance.py`` doubles as a checklist.
"""
import time
from pathlib import Path

import numpy as np
import pytest

from transportlab.estimators import (
    gk_estimate,
    gk_replica_integrals,
    linear_response_fit,
    martingale_estimate,
    nemd_estimate,
    nemd_replica_estimates,
)
from transportlab.experiments import (
    bias_slope_study,
    fit_bias_slope,
    load_config,
    run_experiment,
    validate_config,
)
from transportlab.integrators import IntegratorRun, SchemeSpec
from transportlab.model import ForcingSpec, PhysicalParams, PotentialModel, TWO_PI
from transportlab.oracle import (
    free_langevin_mobility,
    gk_oracle_1d,
    mobility_oracle_1d,
    overdamped_mobility_gk_1d,
    poisson_solve_1d,
    steady_velocity_1d,
)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"
COS = PotentialModel.cosine1d(0.5)
ZERO = PotentialModel.zero(1)
P1 = PhysicalParams(1.0, 1.0, (1.0,))


def _report(name: str, ok: bool, detail: str) -> bool:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return ok


def _run(scheme, dt, eta, model=ZERO, params=P1, seed=0):
    sch = scheme if scheme in ("EM", "MALA") else SchemeSpec.from_name(scheme)
    return IntegratorRun(sch, dt, ForcingSpec.axis(model.domain.dim, 0, eta), params, model, seed)


def test_free_particle_mobility_nemd():
    t0 = time.perf_counter()
    run = _run("CBABC", 0.01, 0.5, seed=2)
    res = nemd_estimate(run, n_iter=10_000_000)
    elapsed = time.perf_counter() - t0
    width = 2 * res.ci_halfwidth_95
    covered = abs(res.value - 1.0) <= res.ci_halfwidth_95
    ok = covered and width <= 0.05 and elapsed <= 60.0
    _report(
        "free-particle mobility, NEMD",
        ok,
        f"alpha={res.value:.4f} ci_width={width:.4f} runtime={elapsed:.1f}s",
    )
    assert covered, f"alpha=1 not inside the 95% interval: {res.value} +- {res.ci_halfwidth_95}"
    assert width <= 0.05
    assert elapsed <= 60.0


def test_free_particle_mobility_gk():
    t0 = time.perf_counter()
    run = _run("CBABC", 0.01, 0.0, seed=3)
    res = gk_estimate(run, n_replicas=10_000, horizon=20.0, n_burn=0)
    elapsed = time.perf_counter() - t0
    width = 2 * res.ci_halfwidth_95
    covered = abs(res.value - 1.0) <= res.ci_halfwidth_95
    ok = covered and width <= 0.05 and elapsed <= 60.0
    _report(
        "free-particle mobility, GK at 10^4 replicas",
        ok,
        f"alpha={res.value:.4f} ci_width={width:.4f} runtime={elapsed:.1f}s",
    )
    assert covered, f"alpha=1 not inside the 95% interval: {res.value} +- {res.ci_halfwidth_95}"
    assert elapsed <= 60.0
    # The per-replica integral p0 * int_0^T p_t dt has variance
    # 2T - 1 + exp(-2T) = 39.0 at T = 20, so the replica-mean interval is
    # 3.92 * sqrt(39/K) wide: 0.245 at K = 10^4.  A width of 0.05 requires
    # K >= 2.4e5 for this estimator, whatever the implementation.
    assert width <= 0.05, (
        f"95% CI width {width:.3f} > 0.05: per-replica variance is "
        f"{res.asymptotic_variance:.1f} (analytic 39.0), so 10^4 replicas "
        f"cannot reach a 0.05-wide interval (needs ~2.4e5)"
    )


def test_free_particle_mobility_gk_at_sufficient_replicas():
    # same estimator, replica count sized for the 0.05-wide interval
    run = _run("CBABC", 0.01, 0.0, seed=3)
    res = gk_estimate(run, n_replicas=240_000, horizon=20.0, n_burn=0)
    width = 2 * res.ci_halfwidth_95
    covered = abs(res.value - 1.0) <= res.ci_halfwidth_95
    ok = covered and width <= 0.05
    _report(
        "free-particle mobility, GK at 2.4e5 replicas",
        ok,
        f"alpha={res.value:.4f} ci_width={width:.4f}",
    )
    assert covered
    assert width <= 0.05


def test_overdamped_benchmark():
    t0 = time.perf_counter()
    grid_n = 1024
    points, all_ok, details = [], True, []
    # independent streams per eta: common random numbers would correlate the
    # response errors and invalidate the residual-based stderr of the fit
    for seed, eta in ((31, 0.2), (32, 0.4)):
        run = _run("EM", 0.002, eta, model=COS, seed=seed)
        reps = nemd_replica_estimates(run, 5_000_000, 8)
        vals = np.array([r.value for r in reps])
        target = steady_velocity_1d(COS, eta, grid_n) / eta
        combined = np.sqrt(vals.var(ddof=1) / len(vals))
        ok = abs(vals.mean() - target) <= 3 * combined
        all_ok &= ok
        details.append(f"eta={eta}: {vals.mean():.4f} vs {target:.4f} (3sig={3*combined:.4f})")
        points.extend((eta, r) for r in reps)
    fit = linear_response_fit(points)
    mob = mobility_oracle_1d(COS, grid_n)
    fit_ok = abs(fit.alpha - mob) <= 3 * fit.stderr
    elapsed = time.perf_counter() - t0
    ok = all_ok and fit_ok and elapsed <= 120.0
    _report(
        "1D overdamped benchmark",
        ok,
        "; ".join(details) + f"; fit alpha={fit.alpha:.4f} vs oracle {mob:.4f} "
        f"(3*stderr={3*fit.stderr:.4f}) runtime={elapsed:.1f}s",
    )
    assert all_ok
    assert fit_ok
    assert elapsed <= 120.0


def test_timestep_bias_slopes_2d():
    t0 = time.perf_counter()
    config = load_config(CONFIG_DIR / "bias_slopes_2d.yaml")
    out = bias_slope_study(config)
    elapsed = time.perf_counter() - t0
    fits = out["fits"]
    bac, cbabc = fits["BAC"], fits["CBABC"]
    ok = (
        "slope" in bac
        and 0.7 <= bac["slope"] <= 1.3
        and bac["r_squared"] >= 0.9
        and "slope" in cbabc
        and 1.6 <= cbabc["slope"] <= 2.4
        and cbabc["r_squared"] >= 0.9
        and elapsed <= 900.0
    )
    _report(
        "timestep-bias slopes (2D)",
        ok,
        f"BAC slope={bac.get('slope', float('nan')):.2f} R2={bac.get('r_squared', 0):.3f}; "
        f"CBABC slope={cbabc.get('slope', float('nan')):.2f} R2={cbabc.get('r_squared', 0):.3f}; "
        f"runtime={elapsed:.0f}s",
    )
    assert "slope" in bac, bac
    assert 0.7 <= bac["slope"] <= 1.3
    assert bac["r_squared"] >= 0.9
    assert "slope" in cbabc, cbabc
    assert 1.6 <= cbabc["slope"] <= 2.4
    assert cbabc["r_squared"] >= 0.9
    assert elapsed <= 900.0


def test_gk_quadrature_correction():
    t0 = time.perf_counter()
    n = 1024
    q = np.arange(n) / n
    vp = -0.5 * TWO_PI * np.sin(TWO_PI * q)
    oracle = gk_oracle_1d(COS, 1.0, vp, vp, n)
    dts = [0.01, 0.02, 0.04, 0.08]
    biases, sigmas = [], []
    for dt in dts:
        run = _run("EM", dt, 0.0, model=COS, seed=19)
        res = gk_estimate(run, "potential_grad", "potential_grad", n_replicas=250_000,
                          horizon=1.5, quadrature="rectangle")
        biases.append(res.value - oracle)
        sigmas.append(res.ci_halfwidth_95 / 1.96)
    fit = fit_bias_slope(dts, biases, sigmas)
    run_m = _run("MALA", 0.005, 0.0, model=COS, seed=19)
    res_m = gk_estimate(run_m, "potential_grad", "potential_grad", n_replicas=20_000,
                        horizon=1.5, quadrature="rectangle")
    se_m = res_m.ci_halfwidth_95 / 1.96
    mala_ok = abs(res_m.value - oracle) <= 3 * se_m
    elapsed = time.perf_counter() - t0
    slope_ok = 0.7 <= fit.slope <= 1.3
    ok = slope_ok and mala_ok and elapsed <= 600.0
    _report(
        "GK quadrature correction (EM rectangle vs oracle, MALA anchor)",
        ok,
        f"EM bias slope={fit.slope:.2f} R2={fit.r_squared:.3f}; "
        f"MALA at dt=0.005: {res_m.value:.4f} vs oracle {oracle:.4f} (3sig={3*se_m:.4f}); "
        f"runtime={elapsed:.0f}s",
    )
    assert slope_ok, fit
    assert mala_ok
    assert elapsed <= 600.0


def test_clt_scaling():
    products = {}
    for model, seed in ((ZERO, 5), (COS, 6)):
        for eta in (0.1, 0.2, 0.4):
            run = _run("CBABC", 0.01, eta, model=model, seed=seed)
            reps = nemd_replica_estimates(run, 5000, 200, n_burn=500)
            vals = np.array([r.value for r in reps])
            products[(model.kind, eta)] = vals.var(ddof=1) * eta**2 * (4500 * 0.01)
    ratios = {}
    for kind in ("zero", "cosine1d"):
        vals = [v for (k, _), v in products.items() if k == kind]
        ratios[kind] = max(vals) / min(vals)
    anchor = products[("zero", 0.2)]
    anchor_ok = abs(anchor - 2.0) <= 0.3 * 2.0
    ok = all(r < 1.5 for r in ratios.values()) and anchor_ok
    _report(
        "CLT scaling of the NEMD variance",
        ok,
        f"max/min products: flat={ratios['zero']:.3f}, cosine={ratios['cosine1d']:.3f}; "
        f"free-particle normalized product={anchor:.3f} (target 2.0 +- 30%)",
    )
    assert ratios["zero"] < 1.5
    assert ratios["cosine1d"] < 1.5
    assert anchor_ok


def test_gk_variance_growth():
    run = _run("CBABC", 0.01, 0.0, seed=6)
    horizons = [5.0, 10.0, 20.0, 40.0]
    variances = [
        float(gk_replica_integrals(run, "velocity", "conjugate_velocity", 2000, T).var(ddof=1))
        for T in horizons
    ]
    slope, intercept = np.polyfit(horizons, variances, 1)
    pred = np.polyval([slope, intercept], horizons)
    arr = np.asarray(variances)
    r2 = 1 - np.sum((arr - pred) ** 2) / np.sum((arr - arr.mean()) ** 2)
    ok = slope > 0 and r2 > 0.9
    _report(
        "GK variance growth in T",
        ok,
        f"variances={[round(v, 1) for v in variances]} slope={slope:.2f} R2={r2:.4f}",
    )
    assert slope > 0
    assert r2 > 0.9


def test_martingale_estimator():
    t0 = time.perf_counter()
    n = 1024
    q = np.arange(n) / n
    vp = -0.5 * TWO_PI * np.sin(TWO_PI * q)
    from transportlab.oracle import gibbs_weights_1d

    w = gibbs_weights_1d(COS, 1.0, n)
    cos_centered = np.cos(TWO_PI * q) - w @ np.cos(TWO_PI * q)
    oracle = gk_oracle_1d(COS, 1.0, cos_centered, vp, n)
    run = _run("EM", 0.01, 0.0, model=COS, seed=21)
    res_t = martingale_estimate(run, R="cos_q", n_iter=5000, n_replicas=20_000)
    res_2t = martingale_estimate(run, R="cos_q", n_iter=10_000, n_replicas=20_000)
    se = res_t.ci_halfwidth_95 / 1.96
    match_ok = abs(res_t.value - oracle) <= 3 * se
    var_ok = res_2t.asymptotic_variance <= 1.5 * res_t.asymptotic_variance
    elapsed = time.perf_counter() - t0
    ok = match_ok and var_ok
    _report(
        "martingale estimator",
        ok,
        f"M={res_t.value:+.5f} vs oracle {oracle:+.1e} (3sig={3*se:.5f}); "
        f"Var(2t)/Var(t)={res_2t.asymptotic_variance/res_t.asymptotic_variance:.3f}; "
        f"runtime={elapsed:.0f}s",
    )
    assert match_ok
    assert var_ok


def test_oracle_internal_consistency():
    n = 1024
    q = np.arange(n) / n
    sol = poisson_solve_1d(ZERO, 1.0, np.sin(TWO_PI * q), n)
    err_1024 = np.max(np.abs(sol.values - np.sin(TWO_PI * q) / (4 * np.pi**2)))
    errs = []
    for m in (256, 512):
        qm = np.arange(m) / m
        s = poisson_solve_1d(ZERO, 1.0, np.sin(TWO_PI * qm), m)
        errs.append(np.max(np.abs(s.values - np.sin(TWO_PI * qm) / (4 * np.pi**2))))
    ratio = errs[0] / errs[1]
    rels = {}
    for label, model in (("zero", ZERO), ("cosine", COS)):
        mob = mobility_oracle_1d(model, 1024)
        gk = overdamped_mobility_gk_1d(model, 1024)
        rels[label] = abs(mob - gk) / abs(gk)
    ok = err_1024 <= 1e-6 and 3.5 <= ratio <= 4.5 and all(r <= 1e-4 for r in rels.values())
    _report(
        "oracle internal consistency",
        ok,
        f"poisson max err={err_1024:.2e}, refinement ratio={ratio:.2f}, "
        f"mobility-vs-GK rel err: zero={rels['zero']:.2e}, cosine={rels['cosine']:.2e}",
    )
    assert err_1024 <= 1e-6
    assert 3.5 <= ratio <= 4.5
    assert all(r <= 1e-4 for r in rels.values())


def test_determinism_byte_identical_outputs(tmp_path):
    outputs = []
    for name in ("free_particle_nemd.yaml", "oracle_table.yaml"):
        config = load_config(CONFIG_DIR / name)
        pair = []
        for rep in ("a", "b"):
            out_dir = tmp_path / f"{name}-{rep}"
            run_experiment(config, out_dir=out_dir)
            pair.append((out_dir / f"{config.name}.csv").read_bytes())
        outputs.append(pair[0] == pair[1])
    ok = all(outputs)
    _report("determinism of experiment outputs", ok, f"byte-identical reruns: {outputs}")
    assert all(outputs)
