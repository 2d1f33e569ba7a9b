"""Transport-coefficient estimators and their statistical machinery.

Three estimator families:

* NEMD: long time averages of a response observable along the eta-forced
  dynamics, divided by eta; confidence intervals from batch means.
* Green-Kubo: replica averages of the truncated time-integrated correlation
  of a conjugate observable pair along the equilibrium dynamics, with a
  rectangle or trapezoid quadrature matched to the scheme's weak order.
* Girsanov martingale: a centered time average multiplied by the running
  stochastic integral of the forcing against the driving noise, with
  time-uniform variance.

Plus the supporting pieces: batch-means asymptotic variance, multi-origin
correlation curves, and weighted linear-response slope fits.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .integrators import (
    OBSERVABLE_CODES,
    IntegratorRun,
    replica_rng,
    run_trajectory_obs,
)
from .model import (
    OverdampedState,
    PhaseState,
    _axis_cdf,
    potential_gradient,
    sample_momenta,
)

__all__ = [
    "MisuseError",
    "EstimatorResult",
    "CorrelationCurve",
    "LinearResponseFit",
    "response_velocity",
    "conjugate_response_velocity",
    "batch_means_variance",
    "nemd_estimate",
    "nemd_replica_estimates",
    "linear_response_fit",
    "gk_estimate",
    "gk_replica_integrals",
    "correlation_curve",
    "martingale_estimate",
]

IC_GRID_N = 4096


class MisuseError(ValueError):
    """An estimator was invoked outside its defining regime."""


@dataclass(frozen=True)
class EstimatorResult:
    """Point estimate with an asymptotic-variance-based 95% interval.

    For time-average estimators ``asymptotic_variance`` is per unit physical
    time and ``ci_halfwidth_95 = 1.96 sqrt(asymptotic_variance / horizon)``;
    for replica-average estimators it is the per-replica variance and the
    interval uses ``n_effective`` (the replica count) in place of the
    horizon.
    """

    value: float
    asymptotic_variance: float
    n_effective: float
    ci_halfwidth_95: float
    horizon: float
    eta: float


@dataclass(frozen=True)
class CorrelationCurve:
    """Centered lag correlation estimates from one long trajectory."""

    lag_times: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    quadrature: str = "rectangle"

    def integral(self) -> float:
        """Quadrature of the curve over its lag grid."""
        dt = float(self.lag_times[1] - self.lag_times[0]) if len(self.lag_times) > 1 else 1.0
        if self.quadrature == "trapezoid":
            w = np.full(len(self.values), dt)
            w[0] = w[-1] = 0.5 * dt
            return float(w @ self.values)
        return float(dt * self.values[:-1].sum()) if len(self.values) > 1 else float(dt * self.values.sum())


@dataclass(frozen=True)
class LinearResponseFit:
    """Weighted least-squares slope of the response through the origin."""

    alpha: float
    stderr: float
    points: tuple


def response_velocity(forcing, params):
    """Observable R(q, p) = F^T M^{-1} p, the velocity along the forcing."""
    f_over_m = forcing.f_array / params.mass_array

    def R(state) -> float:
        if not isinstance(state, PhaseState):
            raise TypeError("response_velocity is defined on phase-space states")
        return float(np.dot(f_over_m, state.p))

    return R


def conjugate_response_velocity(forcing, params):
    """Conjugate observable S(q, p) = beta F^T M^{-1} p for the constant-force
    perturbation of Langevin dynamics."""
    base = response_velocity(forcing, params)
    beta = params.beta

    def S(state) -> float:
        return beta * base(state)

    return S


def batch_means_variance(series, n_batches: int = 32) -> float:
    """Asymptotic variance (per sample) of a stationary series by batch means.

    Splits the series into ``n_batches`` contiguous batches and returns
    batch_length * Var(batch means).
    """
    series = np.asarray(series, dtype=float)
    n = series.shape[0]
    if n < 2 * n_batches:
        raise ValueError(f"series of length {n} is too short for {n_batches} batches")
    m = n // n_batches
    means = series[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(m * means.var(ddof=1))


def _ic_tables(run: IntegratorRun, grid_n: int = IC_GRID_N):
    L = run.model.domain.length
    beta = run.params.beta
    return [_axis_cdf(a, L, beta, grid_n) for a in run.model.amplitudes]


def _equilibrium_state(run: IntegratorRun, rng: np.random.Generator, tables):
    """Draw (q, p) from the canonical measure (q only, overdamped)."""
    q = np.array([np.interp(rng.random(), cdf, x) for x, cdf in tables])
    q = run.model.domain.wrap(q)
    if run.is_overdamped:
        return OverdampedState(float(q[0]))
    return PhaseState(q, sample_momenta(run.params, rng))


def _eval_observable(run: IntegratorRun, name: str, state) -> float:
    """Python-side evaluation of a named observable, matching the kernels."""
    model, params, forcing = run.model, run.params, run.forcing
    if run.is_overdamped:
        vprime = float(potential_gradient(model, state.q)[0])
        if name == "velocity":
            return forcing.eta - vprime
        if name == "conjugate_velocity":
            return params.beta * (forcing.eta - vprime)
        if name == "cos_q":
            return float(np.cos(2.0 * np.pi * state.q / model.domain.length))
        if name == "sin_q":
            return float(np.sin(2.0 * np.pi * state.q / model.domain.length))
        if name == "potential_grad":
            return vprime
        raise ValueError(f"observable {name!r} undefined for overdamped runs")
    if name == "velocity":
        return response_velocity(forcing, params)(state)
    if name == "conjugate_velocity":
        return conjugate_response_velocity(forcing, params)(state)
    if name == "cos_q":
        return float(np.cos(2.0 * np.pi * state.q[0] / model.domain.length))
    if name == "sin_q":
        return float(np.sin(2.0 * np.pi * state.q[0] / model.domain.length))
    if name == "potential_grad":
        return float(np.dot(forcing.f_array, potential_gradient(model, state.q)))
    if name == "kinetic_ratio":
        return float(np.mean(params.beta * state.p**2 / params.mass_array))
    raise ValueError(f"unknown observable {name!r}")


def _check_finite(arr, context: str):
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite trajectory values in {context}")


def _single_nemd(run, observable, n_iter, n_burn, rng, tables) -> EstimatorResult:
    eta = run.forcing.eta
    state = _equilibrium_state(run, rng, tables)
    if n_burn:
        run_trajectory_obs(run, state, n_burn, observable, rng)
    obs = run_trajectory_obs(run, state, n_iter - n_burn, observable, rng)
    _check_finite(obs, f"nemd eta={eta} dt={run.dt}")
    series = obs / eta
    n_post = series.shape[0]
    value = float(series.mean())
    sig2 = batch_means_variance(series) if n_post >= 64 else float(series.var(ddof=1))
    horizon = n_post * run.dt
    asym = sig2 * run.dt
    ci = 1.96 * np.sqrt(asym / horizon)
    marginal = float(series.var())
    n_eff = n_post * marginal / sig2 if sig2 > 0 else float(n_post)
    return EstimatorResult(value, asym, n_eff, ci, horizon, eta)


def nemd_estimate(run: IntegratorRun, observable: str = "velocity", n_iter: int = 1_000_000, n_burn=None) -> EstimatorResult:
    """Linear-response estimate: time average of R along the forced dynamics
    divided by eta, from one trajectory started at equilibrium.

    The first ``n_burn`` steps (default 10% of ``n_iter``) are discarded.
    """
    if run.forcing.eta == 0.0:
        raise MisuseError("nemd_estimate divides by eta; forcing.eta must be nonzero")
    if n_burn is None:
        n_burn = n_iter // 10
    if not 0 <= n_burn < n_iter:
        raise ValueError(f"need 0 <= n_burn < n_iter, got {n_burn}, {n_iter}")
    rng = replica_rng(run.seed, 0)
    return _single_nemd(run, observable, n_iter, n_burn, rng, _ic_tables(run))


def nemd_replica_estimates(
    run: IntegratorRun,
    n_iter: int,
    n_replicas: int,
    observable: str = "velocity",
    n_burn=None,
) -> list[EstimatorResult]:
    """Independent NEMD estimates from replicas 0..n_replicas-1.

    Replica k draws from the stream (seed, k), so sweeps over eta or dt with
    the same seed reuse common random numbers replica by replica.
    """
    if run.forcing.eta == 0.0:
        raise MisuseError("nemd_estimate divides by eta; forcing.eta must be nonzero")
    if n_burn is None:
        n_burn = n_iter // 10
    tables = _ic_tables(run)
    return [
        _single_nemd(run, observable, n_iter, n_burn, replica_rng(run.seed, k), tables)
        for k in range(n_replicas)
    ]


def linear_response_fit(points) -> LinearResponseFit:
    """Weighted least squares of E_eta(R) = eta * estimate against eta,
    through the origin, weighted by the inverse variance of each response.

    The standard error is the residual-scaled normal-equations value, so
    exact collinear points give stderr = 0.
    """
    pts = list(points)
    if len(pts) < 2:
        raise ValueError("need at least 2 points to fit a slope")
    etas = np.array([float(e) for e, _ in pts])
    if len(set(etas.tolist())) < 2:
        raise ValueError("need at least 2 distinct eta values")
    values = np.array([r.value for _, r in pts])
    var_hat = np.array([(r.ci_halfwidth_95 / 1.96) ** 2 for _, r in pts])
    if np.any(var_hat <= 0):
        raise ValueError("every point needs a positive variance")
    y = etas * values
    w = 1.0 / (etas**2 * var_hat)
    denom = float(np.sum(w * etas**2))
    alpha = float(np.sum(w * etas * y) / denom)
    resid = y - alpha * etas
    chi2 = float(np.sum(w * resid**2))
    stderr = float(np.sqrt(max(chi2, 0.0) / (len(pts) - 1) / denom))
    return LinearResponseFit(alpha, stderr, tuple(pts))


def _quadrature_weights(n_steps: int, dt: float, quadrature: str) -> np.ndarray:
    """Weights over the observable grid X^0..X^N for the lag integral."""
    w = np.full(n_steps + 1, dt)
    if quadrature == "rectangle":
        w[-1] = 0.0
    elif quadrature == "trapezoid":
        w[0] = w[-1] = 0.5 * dt
    else:
        raise ValueError(f"unknown quadrature {quadrature!r}")
    return w


def gk_replica_integrals(
    run: IntegratorRun,
    R: str,
    S: str,
    n_replicas: int,
    horizon: float,
    quadrature=None,
    n_burn=None,
) -> np.ndarray:
    """Per-replica truncated Green-Kubo integrals Q(int_0^T R(X_t) S(X_0) dt).

    Each replica starts from an equilibrium draw followed by ``n_burn`` steps
    of the same chain (default: one physical time unit), so initial states
    follow the chain's own stationary measure.
    """
    if run.forcing.eta != 0.0:
        raise MisuseError("Green-Kubo estimation requires the equilibrium dynamics (eta = 0)")
    n_steps = int(round(horizon / run.dt))
    if n_steps < 1:
        raise ValueError("horizon shorter than one step")
    if quadrature is None:
        quadrature = "trapezoid" if run.weak_order == 2 else "rectangle"
    if n_burn is None:
        n_burn = int(round(1.0 / run.dt))
    weights = _quadrature_weights(n_steps, run.dt, quadrature)
    tables = _ic_tables(run)
    buf = np.empty(n_steps)
    burn_buf = np.empty(n_burn) if n_burn else None
    r_full = np.empty(n_steps + 1)
    out = np.empty(n_replicas)
    for k in range(n_replicas):
        rng = replica_rng(run.seed, k)
        state = _equilibrium_state(run, rng, tables)
        if n_burn:
            run_trajectory_obs(run, state, n_burn, R, rng, out=burn_buf)
        r_full[0] = _eval_observable(run, R, state)
        s0 = _eval_observable(run, S, state)
        run_trajectory_obs(run, state, n_steps, R, rng, out=buf)
        r_full[1:] = buf
        out[k] = s0 * float(weights @ r_full)
    _check_finite(out, f"gk dt={run.dt} T={horizon}")
    return out


def gk_estimate(
    run: IntegratorRun,
    R: str = "velocity",
    S: str = "conjugate_velocity",
    n_replicas: int = 1000,
    horizon: float = 20.0,
    quadrature=None,
    n_burn=None,
) -> EstimatorResult:
    """Green-Kubo estimate: replica average of the truncated time-integrated
    correlation of (R, S) along the equilibrium dynamics.

    The quadrature defaults to trapezoid for weak-order-2 schemes and
    rectangle otherwise.  R and S must have zero equilibrium mean.
    """
    if n_replicas < 2:
        raise ValueError("need at least 2 replicas for a variance")
    vals = gk_replica_integrals(run, R, S, n_replicas, horizon, quadrature, n_burn)
    var_rep = float(vals.var(ddof=1))
    n_steps = int(round(horizon / run.dt))
    return EstimatorResult(
        value=float(vals.mean()),
        asymptotic_variance=var_rep,
        n_effective=float(n_replicas),
        ci_halfwidth_95=1.96 * np.sqrt(var_rep / n_replicas),
        horizon=n_steps * run.dt,
        eta=0.0,
    )


def correlation_curve(r_series, s_series, dt: float, max_lag: int, n_batches: int = 32, quadrature: str = "rectangle") -> CorrelationCurve:
    """Multi-time-origin lag correlation of two observable series recorded
    along one long equilibrium trajectory.

    Both series are centered by their trajectory means; the lag-k value
    averages R(X^{n+k}) S(X^n) over all admissible origins, and origin
    batching gives a standard error per lag.
    """
    r = np.asarray(r_series, dtype=float)
    s = np.asarray(s_series, dtype=float)
    if r.shape != s.shape or r.ndim != 1:
        raise ValueError("need two equal-length 1D series")
    n = r.shape[0]
    if max_lag >= n:
        raise ValueError(f"max_lag {max_lag} must be below the series length {n}")
    rc = r - r.mean()
    sc = s - s.mean()
    lags = np.arange(max_lag + 1)
    values = np.empty(max_lag + 1)
    stderr = np.empty(max_lag + 1)
    for k in lags:
        prod = rc[k:] * sc[: n - k] if k else rc * sc
        values[k] = prod.mean()
        nb = min(n_batches, prod.shape[0])
        m = prod.shape[0] // nb
        means = prod[: m * nb].reshape(nb, m).mean(axis=1)
        stderr[k] = float(np.sqrt(means.var(ddof=1) / nb))
    return CorrelationCurve(lags * dt, values, stderr, quadrature)


def martingale_estimate(
    run: IntegratorRun,
    R: str = "cos_q",
    n_iter: int = 2000,
    n_replicas: int = 1000,
    n_burn=None,
    r_bar=None,
    aux_steps: int = 10_000_000,
) -> EstimatorResult:
    """Girsanov-martingale estimate of the linear response of R for the 1D
    overdamped dynamics at equilibrium.

    Each replica multiplies the centered time average of R over X^0..X^{N-1}
    by Z = sqrt(dt) * (F / sigma) * sum of the very Gaussians that drove the
    integrator, with sigma = sqrt(2/beta) and unit forcing direction.  The
    centering constant is the chain's own long-run mean of R, estimated once
    from an auxiliary run of ``aux_steps`` steps unless ``r_bar`` is given.
    """
    if not run.is_overdamped or run.scheme != "EM":
        raise MisuseError("martingale_estimate is defined for the overdamped EM chain (nondegenerate noise)")
    if run.forcing.eta != 0.0:
        raise MisuseError("martingale_estimate runs the reference equilibrium dynamics (eta = 0)")
    if n_replicas < 2:
        raise ValueError("need at least 2 replicas for a variance")
    if n_burn is None:
        n_burn = int(round(1.0 / run.dt))
    obs_code = OBSERVABLE_CODES[R]
    tables = _ic_tables(run)
    amps0 = float(run.model.amps[0])
    L = run.model.domain.length
    beta = run.params.beta

    if r_bar is None:
        rng = replica_rng(run.seed, n_replicas)  # stream disjoint from the replicas
        state = _equilibrium_state(run, rng, tables)
        chunk = np.empty(min(aux_steps, 1 << 20))
        left, total = aux_steps, 0.0
        while left > 0:
            part = chunk[: min(left, chunk.shape[0])]
            run_trajectory_obs(run, state, part.shape[0], R, rng, out=part)
            total += part.sum()
            left -= part.shape[0]
        r_bar = total / aux_steps

    u_coeff = np.sqrt(beta / 2.0)  # sigma^{-1} F with F = 1
    vals = np.empty(n_replicas)
    burn_buf = np.empty(n_burn) if n_burn else None
    for k in range(n_replicas):
        rng = replica_rng(run.seed, k)
        state = _equilibrium_state(run, rng, tables)
        if n_burn:
            run_trajectory_obs(run, state, n_burn, R, rng, out=burn_buf)
        qa = np.array([state.q])
        sum_obs, sum_g = _kernels.overdamped_em_martingale(rng, qa, run.dt, amps0, L, beta, n_iter, obs_code)
        state.q = float(qa[0])
        z = np.sqrt(run.dt) * u_coeff * sum_g
        vals[k] = (sum_obs / n_iter - r_bar) * z
    _check_finite(vals, f"martingale dt={run.dt}")
    var_rep = float(vals.var(ddof=1))
    return EstimatorResult(
        value=float(vals.mean()),
        asymptotic_variance=var_rep,
        n_effective=float(n_replicas),
        ci_halfwidth_95=1.96 * np.sqrt(var_rep / n_replicas),
        horizon=n_iter * run.dt,
        eta=0.0,
    )
