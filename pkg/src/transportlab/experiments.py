"""Config-driven experiment runner.

One YAML config describes one experiment: an oracle table, an NEMD eta sweep,
a Green-Kubo run, a martingale run, or one of three scaling studies (timestep
bias slopes, CLT variance scaling, Green-Kubo variance growth).  The runner
emits one CSV of per-cell rows and one JSON summary per experiment.

Reproducibility contract: outputs are a pure function of (config, seed).
Replica k always draws from the stream (seed, k) regardless of sweep cell or
worker assignment, and aggregation happens in a fixed cell order, so serial
and concurrent executions produce byte-identical CSVs.
"""
from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import CONFIG_SCHEMA_VERSION
from .estimators import (
    gk_estimate,
    gk_replica_integrals,
    linear_response_fit,
    nemd_replica_estimates,
    martingale_estimate,
)
from .integrators import OVERDAMPED_SCHEMES, IntegratorRun, SchemeSpec
from .model import ForcingSpec, PhysicalParams, PotentialModel
from .oracle import gk_oracle_1d, mobility_oracle_1d, steady_velocity_1d

__all__ = [
    "ConfigError",
    "ExperimentError",
    "ExperimentConfig",
    "SlopeFit",
    "load_config",
    "run_experiment",
    "bias_slope_study",
    "variance_scaling_study",
    "gk_variance_study",
    "fit_bias_slope",
]

KINDS = ("nemd-sweep", "gk-run", "martingale-run", "scaling-study", "oracle-table")
STUDIES = ("bias-dt", "variance-clt", "gk-variance")


class ConfigError(ValueError):
    """Invalid experiment config; the message names the offending field."""


class ExperimentError(RuntimeError):
    """A sweep cell failed (for example a NaN in a trajectory)."""


@dataclass(frozen=True)
class SlopeFit:
    """Ordinary least squares on log-log pairs."""

    slope: float
    intercept: float
    r_squared: float
    points: tuple

    @classmethod
    def fit(cls, xs, ys) -> "SlopeFit":
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if xs.shape != ys.shape or xs.ndim != 1:
            raise ValueError("need matching 1D x and y")
        if len(xs) < 3:
            raise ValueError(f"need at least 3 points for a slope fit, got {len(xs)}")
        if np.any(xs <= 0) or np.any(ys <= 0):
            raise ValueError("log-log fit needs positive values")
        lx, ly = np.log(xs), np.log(ys)
        slope, intercept = np.polyfit(lx, ly, 1)
        resid = ly - (slope * lx + intercept)
        sst = float(np.sum((ly - ly.mean()) ** 2))
        r2 = 1.0 if sst == 0 else 1.0 - float(np.sum(resid**2)) / sst
        return cls(float(slope), float(intercept), r2, tuple(zip(lx.tolist(), ly.tolist())))

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "points": [list(p) for p in self.points],
        }


def fit_bias_slope(dts, biases, sigmas) -> SlopeFit:
    """Fit log |bias| against log dt, excluding statistically-zero points.

    A point whose |bias| is below 2 sigma is indistinguishable from zero and
    would put log-of-noise into the fit, so it is dropped; fewer than 3
    surviving points is an error.
    """
    dts = np.asarray(dts, dtype=float)
    biases = np.asarray(biases, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    keep = np.abs(biases) >= 2.0 * sigmas
    if keep.sum() < 3:
        raise ValueError(
            f"only {int(keep.sum())} of {len(dts)} bias points are resolved at 2 sigma; need 3"
        )
    return SlopeFit.fit(dts[keep], np.abs(biases[keep]))


# ---------------------------------------------------------------------------
# config parsing


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description plus the raw mapping it came from."""

    kind: str
    name: str
    seed: int
    output: str
    raw: dict = field(repr=False)

    def __getitem__(self, key):
        return self.raw[key]

    def get(self, key, default=None):
        return self.raw.get(key, default)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()
        ).hexdigest()[:12]


def _fail(fieldname: str, msg: str):
    raise ConfigError(f"field {fieldname!r}: {msg}")


def _grid(raw: dict, fieldname: str, minimum=0.0, allow_zero_first=False, required=True):
    vals = raw.get(fieldname)
    if vals is None:
        if required:
            _fail(fieldname, "is required for this experiment kind")
        return None
    try:
        vals = [float(v) for v in vals]
    except (TypeError, ValueError):
        _fail(fieldname, "must be a list of numbers")
    if not vals:
        _fail(fieldname, "must be non-empty")
    lo = vals[0]
    if allow_zero_first:
        if lo < 0:
            _fail(fieldname, "entries must be >= 0")
    elif lo <= minimum:
        _fail(fieldname, f"entries must be > {minimum}")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        _fail(fieldname, "must be strictly increasing")
    return vals


def _positive_list(raw: dict, fieldname: str):
    """Aligned per-cell values (for example one horizon per timestep):
    positive and non-empty, but not required to be monotone."""
    vals = raw.get(fieldname)
    if vals is None:
        _fail(fieldname, "is required for this experiment kind")
    try:
        vals = [float(v) for v in vals]
    except (TypeError, ValueError):
        _fail(fieldname, "must be a list of numbers")
    if not vals:
        _fail(fieldname, "must be non-empty")
    if any(v <= 0 for v in vals):
        _fail(fieldname, "entries must be > 0")
    return vals


def _positive_int(raw: dict, fieldname: str, default=None, minimum=1):
    v = raw.get(fieldname, default)
    if v is None:
        _fail(fieldname, "is required for this experiment kind")
    if int(v) != v or int(v) < minimum:
        _fail(fieldname, f"must be an integer >= {minimum}")
    return int(v)


def build_model(raw: dict) -> PotentialModel:
    spec = raw.get("model", {"potential": "zero", "dim": 1})
    pot = spec.get("potential")
    length = float(spec.get("length", 1.0))
    if pot == "zero":
        return PotentialModel.zero(int(spec.get("dim", 1)), length)
    if pot == "cosine1d":
        return PotentialModel.cosine1d(float(spec.get("amplitude", 0.5)), length)
    if pot == "separable_cosine2d":
        amps = spec.get("amplitudes", (0.5, 0.5))
        if len(amps) != 2:
            _fail("model.amplitudes", "needs exactly two entries")
        return PotentialModel.separable_cosine2d(float(amps[0]), float(amps[1]), length)
    _fail("model.potential", f"unknown potential {pot!r}")


def build_params(raw: dict, dim: int) -> PhysicalParams:
    spec = raw.get("params", {})
    mass = spec.get("mass", 1.0)
    mass = (float(mass),) * dim if np.isscalar(mass) else tuple(float(m) for m in mass)
    if len(mass) != dim:
        _fail("params.mass", f"needs {dim} entries")
    try:
        return PhysicalParams(float(spec.get("beta", 1.0)), float(spec.get("gamma", 1.0)), mass)
    except ValueError as exc:
        _fail("params", str(exc))


def build_forcing(raw: dict, dim: int, eta: float) -> ForcingSpec:
    direction = raw.get("forcing", {}).get("direction")
    if direction is None:
        return ForcingSpec.axis(dim, 0, eta)
    try:
        return ForcingSpec(eta, tuple(float(x) for x in direction))
    except ValueError as exc:
        _fail("forcing.direction", str(exc))


def _check_scheme(name: str, fieldname: str = "scheme") -> str:
    if name in OVERDAMPED_SCHEMES:
        return name
    try:
        SchemeSpec.from_name(name)
    except ValueError as exc:
        _fail(fieldname, str(exc))
    return name


def validate_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    kind = raw.get("kind")
    if kind not in KINDS:
        _fail("kind", f"must be one of {KINDS}, got {kind!r}")
    if "seed" not in raw:
        _fail("seed", "is required (no wall-clock default)")
    seed = raw["seed"]
    if int(seed) != seed:
        _fail("seed", "must be an integer")
    name = str(raw.get("name", kind))
    output = str(raw.get("output", "out"))

    model = build_model(raw)
    build_params(raw, model.domain.dim)

    if kind == "oracle-table":
        if model.domain.dim != 1:
            _fail("model", "oracle-table requires a 1D model")
        _grid(raw, "eta_grid", allow_zero_first=True)
        _positive_int(raw, "grid_n", default=1024, minimum=128)
    elif kind == "nemd-sweep":
        _check_scheme(str(raw.get("scheme", "")))
        _grid(raw, "eta_grid")
        _grid(raw, "dt_grid")
        _grid(raw, "horizons")
        _positive_int(raw, "replicas", default=1)
    elif kind == "gk-run":
        _check_scheme(str(raw.get("scheme", "")))
        _grid(raw, "dt_grid")
        _grid(raw, "horizons")
        _positive_int(raw, "replicas", default=1000, minimum=2)
    elif kind == "martingale-run":
        _grid(raw, "dt_grid")
        _grid(raw, "horizons")
        _positive_int(raw, "replicas", default=1000, minimum=2)
    else:  # scaling-study
        study = raw.get("study")
        if study not in STUDIES:
            _fail("study", f"must be one of {STUDIES}, got {study!r}")
        if study == "bias-dt":
            schemes = raw.get("schemes")
            if not schemes:
                _fail("schemes", "is required for the bias-dt study")
            for s in schemes:
                _check_scheme(str(s), "schemes")
            _grid(raw, "eta_grid")
            dts = _grid(raw, "dt_grid")
            if len(dts) < 3:
                _fail("dt_grid", "bias-dt study needs at least 3 timesteps")
            if max(dts) / min(dts) < 4.0:
                _fail("dt_grid", "bias-dt study needs a dt range spanning at least a factor 4")
            horizons = _positive_list(raw, "horizons")
            if len(horizons) not in (1, len(dts)):
                _fail("horizons", "must have one entry or one per dt")
            _positive_int(raw, "replicas", default=6, minimum=2)
            ref = raw.get("reference", {"type": "richardson"})
            if ref.get("type") not in ("richardson", "oracle"):
                _fail("reference.type", "must be 'richardson' or 'oracle'")
        elif study == "variance-clt":
            _check_scheme(str(raw.get("scheme", "")))
            _grid(raw, "eta_grid")
            _grid(raw, "dt_grid")
            _grid(raw, "horizons")
            _positive_int(raw, "replicas", default=200, minimum=100)
        else:  # gk-variance
            _check_scheme(str(raw.get("scheme", "")))
            _grid(raw, "dt_grid")
            _grid(raw, "horizons")
            _positive_int(raw, "replicas", default=2000, minimum=1000)

    return ExperimentConfig(kind=kind, name=name, seed=int(seed), output=output, raw=raw)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} does not contain a mapping")
    return validate_config(raw)


# ---------------------------------------------------------------------------
# runner plumbing


def _make_run(config: ExperimentConfig, scheme: str, dt: float, eta: float) -> IntegratorRun:
    model = build_model(config.raw)
    dim = model.domain.dim
    params = build_params(config.raw, dim)
    forcing = build_forcing(config.raw, dim, eta)
    scheme_obj = scheme if scheme in OVERDAMPED_SCHEMES else SchemeSpec.from_name(scheme)
    return IntegratorRun(scheme_obj, dt, forcing, params, model, config.seed)


def _potential_label(config: ExperimentConfig) -> str:
    model = build_model(config.raw)
    if model.kind == "zero":
        return "zero"
    amp = ",".join(repr(a) for a in model.amplitudes)
    return f"{model.kind}({amp})"


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _write_summary(path: Path, summary: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _map_cells(fn, cells, workers: int):
    """Evaluate fn over cells, preserving cell order in the result."""
    if workers <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, cells))


def _combine_replicas(results) -> tuple[float, float]:
    """Mean and squared standard error of a replica batch (batch-means
    variance when there is a single replica)."""
    if len(results) == 1:
        r = results[0]
        return r.value, (r.ci_halfwidth_95 / 1.96) ** 2
    vals = np.array([r.value for r in results])
    return float(vals.mean()), float(vals.var(ddof=1) / len(vals))


# ---------------------------------------------------------------------------
# experiment kinds


def _run_oracle_table(config: ExperimentConfig, out_dir: Path) -> dict:
    model = build_model(config.raw)
    params = build_params(config.raw, model.domain.dim)
    grid_n = int(config.get("grid_n", 1024))
    beta = params.beta
    mobility = mobility_oracle_1d(model, grid_n, beta=beta)
    rows = []
    for eta in config["eta_grid"]:
        sv = steady_velocity_1d(model, float(eta), grid_n, beta=beta)
        rows.append(
            [config.name, _potential_label(config), beta, float(eta), grid_n, sv, mobility, config.seed, config.config_hash]
        )
    header = ["experiment_id", "potential", "beta", "eta", "grid_n", "steady_velocity", "mobility", "seed", "config_hash"]
    _write_csv(out_dir / f"{config.name}.csv", header, rows)
    return {"mobility": mobility, "rows": len(rows)}


def _nemd_cell(config: ExperimentConfig, scheme: str, eta: float, dt: float, horizon: float, replicas: int, observable: str):
    run = _make_run(config, scheme, dt, eta)
    n_iter = int(round(horizon / dt))
    burn_frac = float(config.get("burn_frac", 0.1))
    n_burn = int(burn_frac * n_iter)
    try:
        return nemd_replica_estimates(run, n_iter, replicas, observable=observable, n_burn=n_burn)
    except FloatingPointError as exc:
        raise ExperimentError(f"cell eta={eta} dt={dt} horizon={horizon}: {exc}") from exc


def _run_nemd_sweep(config: ExperimentConfig, out_dir: Path, workers: int) -> dict:
    scheme = str(config["scheme"])
    observable = str(config.get("observable", "velocity"))
    replicas = int(config.get("replicas", 1))
    cells = [
        (eta, dt, horizon)
        for dt in config["dt_grid"]
        for horizon in config["horizons"]
        for eta in config["eta_grid"]
    ]
    results = _map_cells(
        lambda c: _nemd_cell(config, scheme, c[0], c[1], c[2], replicas, observable), cells, workers
    )
    model_label = _potential_label(config)
    params = build_params(config.raw, build_model(config.raw).domain.dim)
    rows, fits = [], {}
    for (eta, dt, horizon), reps in zip(cells, results):
        estimate, var = _combine_replicas(reps)
        n_iter = int(round(horizon / dt))
        rows.append(
            [config.name, model_label, scheme, params.beta, params.gamma, eta, dt, n_iter,
             replicas, estimate, var, 1.96 * np.sqrt(var), config.seed, config.config_hash]
        )
    header = ["experiment_id", "potential", "scheme", "beta", "gamma", "eta", "dt", "n_iter",
              "replicas", "estimate", "variance", "ci95", "seed", "config_hash"]
    _write_csv(out_dir / f"{config.name}.csv", header, rows)

    for dt in config["dt_grid"]:
        for horizon in config["horizons"]:
            points = []
            for (eta, dtc, hc), reps in zip(cells, results):
                if dtc == dt and hc == horizon:
                    points.extend((eta, r) for r in reps)
            fit = linear_response_fit(points)
            fits[f"dt={dt!r},t={horizon!r}"] = {"alpha": fit.alpha, "stderr": fit.stderr}
    return {"fits": fits, "rows": len(rows)}


def _run_gk(config: ExperimentConfig, out_dir: Path, workers: int) -> dict:
    scheme = str(config["scheme"])
    replicas = int(config.get("replicas", 1000))
    quadrature = config.get("quadrature")
    overdamped = scheme in OVERDAMPED_SCHEMES
    obs_r = str(config.get("response", "potential_grad" if overdamped else "velocity"))
    obs_s = str(config.get("conjugate", "potential_grad" if overdamped else "conjugate_velocity"))
    cells = [(dt, T) for dt in config["dt_grid"] for T in config["horizons"]]

    def cell(c):
        dt, T = c
        run = _make_run(config, scheme, dt, 0.0)
        n_burn = config.get("n_burn")
        try:
            return gk_estimate(run, obs_r, obs_s, replicas, T, quadrature=quadrature,
                               n_burn=None if n_burn is None else int(n_burn))
        except FloatingPointError as exc:
            raise ExperimentError(f"cell dt={dt} T={T}: {exc}") from exc

    results = _map_cells(cell, cells, workers)
    model_label = _potential_label(config)
    params = build_params(config.raw, build_model(config.raw).domain.dim)
    rows = []
    for (dt, T), res in zip(cells, results):
        quad = quadrature or ("trapezoid" if _make_run(config, scheme, dt, 0.0).weak_order == 2 else "rectangle")
        rows.append(
            [config.name, model_label, scheme, params.beta, params.gamma, 0.0, dt, T, quad,
             replicas, res.value, res.asymptotic_variance, res.ci_halfwidth_95, config.seed, config.config_hash]
        )
    header = ["experiment_id", "potential", "scheme", "beta", "gamma", "eta", "dt", "horizon", "quadrature",
              "replicas", "estimate", "variance", "ci95", "seed", "config_hash"]
    _write_csv(out_dir / f"{config.name}.csv", header, rows)
    return {"estimates": {f"dt={dt!r},T={T!r}": r.value for (dt, T), r in zip(cells, results)}}


def _run_martingale(config: ExperimentConfig, out_dir: Path, workers: int) -> dict:
    replicas = int(config.get("replicas", 1000))
    observable = str(config.get("observable", "cos_q"))
    aux_steps = int(config.get("aux_steps", 10_000_000))
    cells = [(dt, t) for dt in config["dt_grid"] for t in config["horizons"]]

    def cell(c):
        dt, t = c
        run = _make_run(config, "EM", dt, 0.0)
        try:
            return martingale_estimate(run, R=observable, n_iter=int(round(t / dt)),
                                       n_replicas=replicas, aux_steps=aux_steps)
        except FloatingPointError as exc:
            raise ExperimentError(f"cell dt={dt} t={t}: {exc}") from exc

    results = _map_cells(cell, cells, workers)
    model_label = _potential_label(config)
    params = build_params(config.raw, build_model(config.raw).domain.dim)
    rows = [
        [config.name, model_label, "EM", params.beta, params.gamma, 0.0, dt, t, replicas,
         res.value, res.asymptotic_variance, res.ci_halfwidth_95, config.seed, config.config_hash]
        for (dt, t), res in zip(cells, results)
    ]
    header = ["experiment_id", "potential", "scheme", "beta", "gamma", "eta", "dt", "horizon",
              "replicas", "estimate", "variance", "ci95", "seed", "config_hash"]
    _write_csv(out_dir / f"{config.name}.csv", header, rows)
    return {"estimates": {f"dt={dt!r},t={t!r}": r.value for (dt, t), r in zip(cells, results)}}


# ---------------------------------------------------------------------------
# scaling studies


def _replica_alphas(config: ExperimentConfig, scheme: str, dt: float, horizon: float, replicas: int) -> np.ndarray:
    """Per-replica linear-response slopes over the eta grid.

    Replica k runs the whole eta sweep on its own stream (common random
    numbers across eta), yielding one slope estimate per replica; the replica
    scatter then gives an honest variance for the averaged slope.

    The through-origin fit uses equal weights on the responses eta * A_hat:
    their variance sigma^2_{R,eta} / t is eta-independent at leading order,
    so equal weights are the correct inverse-variance weighting, and keeping
    the weights deterministic makes the fitted slope directly comparable
    between timestep cells (estimated weights would inject weight noise into
    the small bias differences this study resolves).
    """
    observable = str(config.get("observable", "velocity"))
    etas = np.array([float(e) for e in config["eta_grid"]])
    n_iter = int(round(horizon / dt))
    n_burn = int(float(config.get("burn_frac", 0.1)) * n_iter)
    per_eta = []
    for eta in etas:
        run = _make_run(config, scheme, dt, float(eta))
        try:
            per_eta.append(nemd_replica_estimates(run, n_iter, replicas, observable=observable, n_burn=n_burn))
        except FloatingPointError as exc:
            raise ExperimentError(f"cell scheme={scheme} eta={eta} dt={dt}: {exc}") from exc
    denom = float(np.sum(etas**2))
    alphas = np.zeros(replicas)
    for eta, reps in zip(etas, per_eta):
        for k in range(replicas):
            alphas[k] += eta**2 * reps[k].value / denom
    return alphas


def bias_slope_study(config: ExperimentConfig, out_dir: Path | None = None, workers: int = 1) -> dict:
    """Timestep-bias slopes of the NEMD mobility for each scheme.

    The reference mobility is either the 1D quadrature oracle or a Richardson
    extrapolation of the second-order scheme at the two finest timesteps,
    computed replica by replica so that bias uncertainties come from honest
    replica scatter.
    """
    schemes = [str(s) for s in config["schemes"]]
    dts = [float(v) for v in config["dt_grid"]]
    horizons = [float(v) for v in config["horizons"]]
    if len(horizons) == 1:
        horizons = horizons * len(dts)
    replicas = int(config.get("replicas", 6))
    ref_spec = config.get("reference", {"type": "richardson"})

    cells = [(s, dt, t) for s in schemes for dt, t in zip(dts, horizons)]
    all_alphas = dict(
        zip(cells, _map_cells(lambda c: _replica_alphas(config, c[0], c[1], c[2], replicas), cells, workers))
    )

    if ref_spec["type"] == "oracle":
        model = build_model(config.raw)
        params = build_params(config.raw, model.domain.dim)
        grid_n = int(config.get("grid_n", 1024))
        ref_alphas = np.full(replicas, mobility_oracle_1d(model, grid_n, beta=params.beta))
        ref_desc = "oracle"
    else:
        ref_scheme = next((s for s in schemes if s == "CBABC"), None)
        if ref_scheme is None:
            raise ConfigError("field 'reference': richardson reference needs scheme CBABC in 'schemes'")
        pair = [float(v) for v in ref_spec.get("pair", dts[:2])]
        if len(pair) != 2 or pair[0] >= pair[1] or any(p not in dts for p in pair):
            raise ConfigError("field 'reference.pair': needs two increasing entries from dt_grid")
        dt_f, dt_c = pair
        r2 = (dt_c / dt_f) ** 2
        fine = all_alphas[(ref_scheme, dt_f, horizons[dts.index(dt_f)])]
        coarse = all_alphas[(ref_scheme, dt_c, horizons[dts.index(dt_c)])]
        # per-replica extrapolation keeps the bias differences below exactly
        # correlated with the reference, so replica scatter stays honest
        ref_alphas = (r2 * fine - coarse) / (r2 - 1.0)
        ref_desc = f"richardson({ref_scheme},{dt_f!r},{dt_c!r})"

    rows, fits = [], {}
    for scheme in schemes:
        b_means, b_sigmas = [], []
        for dt, t in zip(dts, horizons):
            alphas = all_alphas[(scheme, dt, t)]
            diffs = alphas - ref_alphas
            b_mean = float(diffs.mean())
            b_sig = float(np.sqrt(diffs.var(ddof=1) / replicas))
            b_means.append(b_mean)
            b_sigmas.append(b_sig)
            excluded = int(abs(b_mean) < 2.0 * b_sig)
            rows.append(
                [config.name, scheme, dt, t, replicas, float(alphas.mean()),
                 float(np.sqrt(alphas.var(ddof=1) / replicas)), ref_desc, abs(b_mean), b_sig,
                 excluded, config.seed, config.config_hash]
            )
        try:
            fits[scheme] = fit_bias_slope(dts, b_means, b_sigmas).to_dict()
        except ValueError as exc:
            fits[scheme] = {"error": str(exc)}

    header = ["experiment_id", "scheme", "dt", "horizon", "replicas", "alpha", "alpha_stderr",
              "reference", "abs_bias", "bias_sigma", "excluded", "seed", "config_hash"]
    if out_dir is not None:
        _write_csv(out_dir / f"{config.name}.csv", header, rows)
    return {"fits": fits, "reference": ref_desc, "rows": rows, "header": header}


def variance_scaling_study(config: ExperimentConfig, out_dir: Path | None = None, workers: int = 1) -> dict:
    """Replica variance of the NEMD estimator over an (eta, horizon) grid,
    reported together with the CLT-normalized product Var * eta^2 * t."""
    scheme = str(config["scheme"])
    observable = str(config.get("observable", "velocity"))
    replicas = int(config.get("replicas", 200))
    if replicas < 100:
        raise ConfigError("field 'replicas': variance-clt study needs at least 100 replicas")
    dt = float(config["dt_grid"][0])
    cells = [(eta, t) for eta in config["eta_grid"] for t in config["horizons"]]

    def cell(c):
        eta, t = c
        run = _make_run(config, scheme, dt, eta)
        n_iter = int(round(t / dt))
        reps = nemd_replica_estimates(run, n_iter, replicas, observable=observable,
                                      n_burn=int(0.1 * n_iter))
        vals = np.array([r.value for r in reps])
        return float(vals.var(ddof=1)), float(vals.mean())

    results = _map_cells(cell, cells, workers)
    rows = []
    for (eta, t), (var, mean) in zip(cells, results):
        rows.append(
            [config.name, scheme, eta, t, dt, replicas, mean, var, var * eta**2 * t,
             config.seed, config.config_hash]
        )
    header = ["experiment_id", "scheme", "eta", "horizon", "dt", "replicas", "mean_estimate",
              "var_estimate", "normalized_product", "seed", "config_hash"]
    if out_dir is not None:
        _write_csv(out_dir / f"{config.name}.csv", header, rows)
    products = {(eta, t): var * eta**2 * t for (eta, t), (var, _) in zip(cells, results)}
    return {"rows": rows, "header": header, "products": products}


def gk_variance_study(config: ExperimentConfig, out_dir: Path | None = None, workers: int = 1) -> dict:
    """Replica variance of the per-trajectory Green-Kubo integral as a
    function of the truncation horizon T, with a linear fit in T."""
    scheme = str(config["scheme"])
    replicas = int(config.get("replicas", 2000))
    if replicas < 1000:
        raise ConfigError("field 'replicas': gk-variance study needs at least 1000 replicas")
    dt = float(config["dt_grid"][0])
    overdamped = scheme in OVERDAMPED_SCHEMES
    obs_r = str(config.get("response", "potential_grad" if overdamped else "velocity"))
    obs_s = str(config.get("conjugate", "potential_grad" if overdamped else "conjugate_velocity"))
    horizons = [float(t) for t in config["horizons"]]

    def cell(T):
        run = _make_run(config, scheme, dt, 0.0)
        vals = gk_replica_integrals(run, obs_r, obs_s, replicas, T)
        return float(vals.var(ddof=1))

    variances = _map_cells(cell, horizons, workers)
    slope, intercept = np.polyfit(horizons, variances, 1)
    pred = np.polyval([slope, intercept], horizons)
    sst = float(np.sum((np.asarray(variances) - np.mean(variances)) ** 2))
    r2 = 1.0 if sst == 0 else 1.0 - float(np.sum((np.asarray(variances) - pred) ** 2)) / sst
    rows = [
        [config.name, scheme, T, dt, replicas, var, config.seed, config.config_hash]
        for T, var in zip(horizons, variances)
    ]
    header = ["experiment_id", "scheme", "horizon", "dt", "replicas", "var_integral", "seed", "config_hash"]
    if out_dir is not None:
        _write_csv(out_dir / f"{config.name}.csv", header, rows)
    return {
        "rows": rows,
        "header": header,
        "fit": {"slope": float(slope), "intercept": float(intercept), "r_squared": r2},
    }


# ---------------------------------------------------------------------------
# entry point


def run_experiment(config: ExperimentConfig, out_dir=None, workers: int = 1) -> dict:
    """Execute one experiment and write its CSV and JSON summary.

    Returns the summary dict (which is also written to
    ``<out>/<name>_summary.json``).
    """
    t0 = time.perf_counter()
    out = Path(out_dir) if out_dir is not None else Path(config.output)
    if config.kind == "oracle-table":
        body = _run_oracle_table(config, out)
    elif config.kind == "nemd-sweep":
        body = _run_nemd_sweep(config, out, workers)
    elif config.kind == "gk-run":
        body = _run_gk(config, out, workers)
    elif config.kind == "martingale-run":
        body = _run_martingale(config, out, workers)
    else:
        study = config["study"]
        if study == "bias-dt":
            body = {k: v for k, v in bias_slope_study(config, out, workers).items() if k != "rows" and k != "header"}
        elif study == "variance-clt":
            res = variance_scaling_study(config, out, workers)
            body = {"products": {f"eta={e!r},t={t!r}": p for (e, t), p in res["products"].items()}}
        else:
            res = gk_variance_study(config, out, workers)
            body = {"fit": res["fit"]}
    summary = {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "experiment_id": config.name,
        "kind": config.kind,
        "seed": config.seed,
        "config_hash": config.config_hash,
        "config": config.raw,
        "csv": str(out / f"{config.name}.csv"),
        "wall_time_s": round(time.perf_counter() - t0, 3),
        **body,
    }
    _write_summary(out / f"{config.name}_summary.json", summary)
    return summary
