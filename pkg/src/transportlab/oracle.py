"""Simulation-free reference values.

Everything here is deterministic quadrature or finite differences:

* the closed-form stationary density of the forced 1D overdamped dynamics,
  evaluated by trapezoid quadrature;
* the steady drift velocity and its eta-derivative (the mobility);
* a periodic finite-difference solver for the generator Poisson equation,
  which realizes time-integrated correlation values without simulation;
* closed-form free-particle results.

These are the ground truths the Monte Carlo estimators are validated against.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .model import PhysicalParams, PotentialModel, TWO_PI

__all__ = [
    "GridDensity",
    "PoissonSolution",
    "stationary_density_1d",
    "steady_velocity_1d",
    "mobility_oracle_1d",
    "poisson_solve_1d",
    "gk_oracle_1d",
    "free_langevin_mobility",
    "overdamped_mobility_gk_1d",
    "gibbs_weights_1d",
]


@dataclass(frozen=True)
class GridDensity:
    """Probability density tabulated on n uniform nodes of [0, L)."""

    grid: np.ndarray
    values: np.ndarray
    length: float

    def integral(self) -> float:
        """Torus trapezoid integral (equal weights on a periodic grid)."""
        h = self.length / len(self.grid)
        return float(h * self.values.sum())


@dataclass(frozen=True)
class PoissonSolution:
    """Grid solution of -L Phi = R - <R> with Gibbs-mean-zero gauge."""

    grid: np.ndarray
    values: np.ndarray
    residual: float
    gauge: float


def _require_1d(model: PotentialModel):
    if model.domain.dim != 1:
        raise ValueError("this oracle is defined for 1D models only")


def _grid(model: PotentialModel, grid_n: int):
    L = model.domain.length
    h = L / grid_n
    return np.arange(grid_n) * h, h


def _vprime(model: PotentialModel, x: np.ndarray) -> np.ndarray:
    a = model.amplitudes[0]
    w = TWO_PI / model.domain.length
    return -a * w * np.sin(w * x)


def _vvalue(model: PotentialModel, x: np.ndarray) -> np.ndarray:
    a = model.amplitudes[0]
    w = TWO_PI / model.domain.length
    return a * np.cos(w * x)


def gibbs_weights_1d(model: PotentialModel, beta: float, grid_n: int) -> np.ndarray:
    """Normalized weights w_i with sum(w_i f_i) ~ integral of f against the
    Gibbs measure on the periodic grid (equal-spacing trapezoid)."""
    q, _ = _grid(model, grid_n)
    g = np.exp(-beta * _vvalue(model, q))
    return g / g.sum()


def stationary_density_1d(model: PotentialModel, eta: float, grid_n: int, beta: float = 1.0) -> GridDensity:
    """Stationary density of dq = (-V'(q) + eta) dt + sqrt(2/beta) dW on the torus.

    Uses the closed form psi_eta(q) proportional to
    integral over one period of exp(beta * (V(q+y) - V(q) - eta y)) dy,
    evaluated with trapezoid quadrature in y on a grid_n x grid_n tensor grid,
    then normalized to unit torus integral.
    """
    _require_1d(model)
    if grid_n < 128:
        raise ValueError(f"grid_n must be at least 128, got {grid_n}")
    L = model.domain.length
    q, h = _grid(model, grid_n)
    y = np.linspace(0.0, L, grid_n + 1)
    vq = _vvalue(model, q)
    vqy = _vvalue(model, q[:, None] + y[None, :])
    integrand = np.exp(beta * (vqy - vq[:, None] - eta * y[None, :]))
    wy = np.full(grid_n + 1, h)
    wy[0] = wy[-1] = 0.5 * h
    psi = integrand @ wy
    psi /= h * psi.sum()
    return GridDensity(q, psi, L)


def steady_velocity_1d(model: PotentialModel, eta: float, grid_n: int, beta: float = 1.0) -> float:
    """Steady-state mean drift velocity, integral of (eta - V') psi_eta."""
    dens = stationary_density_1d(model, eta, grid_n, beta=beta)
    h = model.domain.length / grid_n
    return float(h * np.sum((eta - _vprime(model, dens.grid)) * dens.values))


def mobility_oracle_1d(model: PotentialModel, grid_n: int, beta: float = 1.0, h_eta: float = 1e-3) -> float:
    """Mobility as the eta-derivative of the steady velocity at eta = 0.

    Central difference with step h_eta, Richardson-checked against h_eta/2;
    a relative disagreement beyond 1e-5 means grid_n is too small.
    """
    _require_1d(model)

    def sv(eta):
        return steady_velocity_1d(model, eta, grid_n, beta=beta)

    d1 = (sv(h_eta) - sv(-h_eta)) / (2.0 * h_eta)
    d2 = (sv(0.5 * h_eta) - sv(-0.5 * h_eta)) / h_eta
    if abs(d1 - d2) > 1e-5 * max(1.0, abs(d2)):
        raise ValueError(
            f"finite-difference mobility did not converge (h={d1!r}, h/2={d2!r}); increase grid_n"
        )
    return d2


def poisson_solve_1d(model: PotentialModel, beta: float, R_values: np.ndarray, grid_n: int) -> PoissonSolution:
    """Solve -L Phi = R - <R>_nu0 with L = (-V') d/dq + (1/beta) d^2/dq^2.

    Centered second-order differences with periodic boundary.  The singular
    cyclic system is solved in bordered form with the constraint
    <Phi>_nu0 = 0, which both fixes the constant nullspace and sets the gauge.
    """
    _require_1d(model)
    if grid_n < 256:
        raise ValueError(f"grid_n must be at least 256, got {grid_n}")
    R_values = np.asarray(R_values, dtype=float)
    if R_values.shape != (grid_n,):
        raise ValueError(f"R_values must have shape ({grid_n},), got {R_values.shape}")

    q, h = _grid(model, grid_n)
    vp = _vprime(model, q)
    idx = np.arange(grid_n)
    up = (idx + 1) % grid_n
    dn = (idx - 1) % grid_n

    # rows of L: L[i, i +/- 1] = -/+ vp_i/(2h) + 1/(beta h^2), L[i, i] = -2/(beta h^2)
    c_diff = 1.0 / (beta * h * h)
    rows = np.concatenate([idx, idx, idx])
    cols = np.concatenate([idx, up, dn])
    vals = np.concatenate([
        np.full(grid_n, -2.0 * c_diff),
        -vp / (2.0 * h) + c_diff,
        vp / (2.0 * h) + c_diff,
    ])
    L_op = sp.csr_matrix((vals, (rows, cols)), shape=(grid_n, grid_n))
    A = (-L_op).tocsr()

    w = gibbs_weights_1d(model, beta, grid_n)
    rhs = R_values - float(w @ R_values)

    ones = np.ones((grid_n, 1))
    M = sp.bmat([[A, ones], [sp.csr_matrix(w[None, :]), None]], format="csc")
    sol = spla.spsolve(M, np.concatenate([rhs, [0.0]]))
    if not np.all(np.isfinite(sol)):
        raise RuntimeError("Poisson solve produced non-finite values (singular system beyond gauge)")
    phi, lam = sol[:-1], sol[-1]
    residual = float(np.max(np.abs(A @ phi + lam - rhs)))
    gauge = float(w @ phi)
    if abs(gauge) > 1e-10:
        raise RuntimeError(f"gauge violation {gauge:g} exceeds 1e-10")
    return PoissonSolution(q, phi, residual, gauge)


def _on_grid(f, q: np.ndarray) -> np.ndarray:
    if callable(f):
        return np.asarray([float(f(x)) for x in q])
    arr = np.asarray(f, dtype=float)
    if arr.shape != q.shape:
        raise ValueError(f"grid function has shape {arr.shape}, expected {q.shape}")
    return arr


def gk_oracle_1d(model: PotentialModel, beta: float, R, S, grid_n: int) -> float:
    """Time-integrated equilibrium correlation, computed as <Phi S> under the
    Gibbs measure with Phi the Poisson solution for R.

    R and S may be callables of q or arrays tabulated on the oracle grid.
    """
    q, _ = _grid(model, grid_n)
    rv = _on_grid(R, q)
    sv = _on_grid(S, q)
    sol = poisson_solve_1d(model, beta, rv, grid_n)
    w = gibbs_weights_1d(model, beta, grid_n)
    return float(w @ (sol.values * sv))


def free_langevin_mobility(params: PhysicalParams, direction=None) -> float:
    """Mobility of the free (V = 0) Langevin particle: F^T M^{-1} F / gamma.

    Independent of beta, which cancels between the mobility matrix and the
    linear-response prefactor.
    """
    m = params.mass_array
    if direction is None:
        f = np.zeros_like(m)
        f[0] = 1.0
    else:
        f = np.asarray(direction, dtype=float)
    return float(np.sum(f * f / m) / params.gamma)


def overdamped_mobility_gk_1d(model: PotentialModel, grid_n: int, beta: float = 1.0) -> float:
    """Overdamped mobility through the Green-Kubo route: the velocity response
    (eta - V') splits into the explicit eta term and the linear response of
    -V', giving 1 - <Phi_{V'} (beta V')> under the Gibbs measure."""
    q, _ = _grid(model, grid_n)
    vp = _vprime(model, q)
    return 1.0 - gk_oracle_1d(model, beta, vp, beta * vp, grid_n)
