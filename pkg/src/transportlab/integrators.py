"""Time discretization of the equilibrium and forced dynamics.

Underdamped Langevin dynamics is integrated by splitting schemes composed of
three exactly integrable sub-flows:

* A: free streaming, q <- q + h M^{-1} p
* B: force kick,     p <- p + h (-grad V(q) + eta F)
* C: exact Ornstein-Uhlenbeck update of p

A scheme is an ordered stage sequence with per-stage step fractions; the
fractions of every label sum to one, so first- and second-order schemes share
a single execution path.  The 1D overdamped dynamics is integrated by
Euler-Maruyama, or by a Metropolis-corrected chain (MALA) at equilibrium.

Randomness discipline: every trajectory owns one counter-based stream
(Philox), derived from (seed, replica index), and Gaussians are consumed in a
fixed per-stage order.  Replicas and eta sweeps can therefore reuse common
random numbers, and the Python steppers below replay kernel trajectories
bitwise when handed the same generator state.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from . import _kernels
from .model import (
    ForcingSpec,
    OverdampedState,
    PhaseState,
    PhysicalParams,
    PotentialModel,
    potential_gradient,
)

__all__ = [
    "SchemeSpec",
    "IntegratorRun",
    "flow_A",
    "flow_B",
    "flow_C",
    "step_splitting",
    "step_overdamped_em",
    "step_mala",
    "replica_rng",
    "OBSERVABLE_CODES",
]

OVERDAMPED_SCHEMES = ("EM", "MALA")

OBSERVABLE_CODES = {
    "velocity": _kernels.OBS_VELOCITY,
    "conjugate_velocity": _kernels.OBS_CONJ_VELOCITY,
    "cos_q": _kernels.OBS_COS_Q,
    "potential_grad": _kernels.OBS_VPRIME,
    "kinetic_ratio": _kernels.OBS_KINETIC,
    "sin_q": _kernels.OBS_SIN_Q,
}

_STAGE_CODE = {"A": _kernels.STAGE_A, "B": _kernels.STAGE_B, "C": _kernels.STAGE_C}


@dataclass(frozen=True)
class SchemeSpec:
    """Ordered composition of sub-flows with per-stage fractions of dt."""

    stages: tuple[tuple[str, float], ...]
    name: str = ""

    def __post_init__(self):
        if not self.stages:
            raise ValueError("scheme needs at least one stage")
        totals: dict[str, float] = {}
        for label, frac in self.stages:
            if label not in _STAGE_CODE:
                raise ValueError(f"unknown stage label {label!r}")
            if not frac > 0:
                raise ValueError(f"stage fractions must be positive, got {frac}")
            totals[label] = totals.get(label, 0.0) + frac
        for label, tot in totals.items():
            if abs(tot - 1.0) > 1e-12:
                raise ValueError(f"fractions for stage {label} sum to {tot}, expected 1")

    @classmethod
    def from_name(cls, name: str) -> "SchemeSpec":
        """Build a scheme from a stage string such as "BAC" or "CBABC".

        Each occurrence of a label gets fraction 1/(number of occurrences),
        which reproduces the canonical first-order (B, A, C) and symmetric
        second-order (C/2, B/2, A, B/2, C/2) compositions.
        """
        letters = name.upper()
        counts = {ch: letters.count(ch) for ch in set(letters)}
        if not letters or any(ch not in _STAGE_CODE for ch in letters):
            raise ValueError(f"scheme name must be a string over A/B/C, got {name!r}")
        stages = tuple((ch, 1.0 / counts[ch]) for ch in letters)
        return cls(stages, name=letters)

    @classmethod
    def first_order_bac(cls) -> "SchemeSpec":
        return cls.from_name("BAC")

    @classmethod
    def second_order_cbabc(cls) -> "SchemeSpec":
        return cls.from_name("CBABC")

    @property
    def weak_order(self) -> int:
        """2 for palindromic (symmetric) compositions, else 1."""
        return 2 if self.stages == self.stages[::-1] else 1

    @property
    def n_noise_stages(self) -> int:
        return sum(1 for label, _ in self.stages if label == "C")

    def kernel_arrays(self, dt: float, params: PhysicalParams):
        """Stage tables for the kernels: codes, stage steps, and the exact
        Ornstein-Uhlenbeck coefficients of every C stage (matching flow_C
        bitwise)."""
        codes = np.array([_STAGE_CODE[label] for label, _ in self.stages], dtype=np.int64)
        h_arr = np.array([frac * dt for _, frac in self.stages], dtype=float)
        m = params.mass_array
        rho = np.empty((len(self.stages), len(m)))
        cn = np.empty_like(rho)
        for s, h in enumerate(h_arr):
            r = np.exp(-params.gamma * h / m)
            rho[s] = r
            cn[s] = np.sqrt((1.0 - r * r) * m / params.beta)
        return codes, h_arr, rho, cn


@dataclass(frozen=True)
class IntegratorRun:
    """Everything needed to reproduce one discretized trajectory."""

    scheme: Union[SchemeSpec, str]
    dt: float
    forcing: ForcingSpec
    params: PhysicalParams
    model: PotentialModel
    seed: int

    def __post_init__(self):
        if isinstance(self.scheme, str):
            if self.scheme not in OVERDAMPED_SCHEMES:
                object.__setattr__(self, "scheme", SchemeSpec.from_name(self.scheme))
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        d = self.model.domain.dim
        if self.params.dim != d or len(self.forcing.direction) != d:
            raise ValueError("model, params and forcing dimensions must agree")
        if self.is_overdamped:
            if d != 1:
                raise ValueError("overdamped schemes are 1D only")
            if self.scheme == "MALA" and self.forcing.eta != 0.0:
                raise ValueError("MALA requires forcing.eta = 0 (equilibrium only)")

    @property
    def is_overdamped(self) -> bool:
        return isinstance(self.scheme, str)

    @property
    def scheme_name(self) -> str:
        return self.scheme if self.is_overdamped else (self.scheme.name or "custom")

    @property
    def weak_order(self) -> int:
        if self.is_overdamped:
            return 1
        return self.scheme.weak_order


def replica_rng(seed: int, replica: int = 0) -> np.random.Generator:
    """Counter-based stream for one replica, derived from (seed, replica).

    Identical across runs and independent of how replicas are partitioned
    over workers; the same replica index yields the same numbers in every
    cell of a sweep (common random numbers).
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(replica,))))


def flow_A(state: PhaseState, h: float, params: PhysicalParams, model: PotentialModel) -> PhaseState:
    """Free streaming for time h: q <- wrap(q + h M^{-1} p)."""
    q = model.domain.wrap(state.q + h * state.p / params.mass_array)
    return PhaseState(q, state.p)


def flow_B(state: PhaseState, h: float, forcing: ForcingSpec, model: PotentialModel) -> PhaseState:
    """Force kick for time h: p <- p + h (-grad V(q) + eta F)."""
    p = state.p + h * (-potential_gradient(model, state.q) + forcing.eta * forcing.f_array)
    return PhaseState(state.q, p)


def flow_C(state: PhaseState, h: float, params: PhysicalParams, rng: np.random.Generator) -> PhaseState:
    """Exact Ornstein-Uhlenbeck update of p for time h.

    Consumes one standard Gaussian per coordinate even when h = 0, so that
    variate consumption is independent of parameter values.
    """
    m = params.mass_array
    rho = np.exp(-params.gamma * h / m)
    g = np.array([rng.standard_normal() for _ in range(len(m))])
    p = rho * state.p + np.sqrt((1.0 - rho * rho) * m / params.beta) * g
    return PhaseState(state.q, p)


def step_splitting(run: IntegratorRun, state: PhaseState, rng: np.random.Generator) -> PhaseState:
    """One full step of the splitting scheme, stages applied left to right."""
    if run.is_overdamped:
        raise ValueError("step_splitting requires a SchemeSpec run")
    for label, frac in run.scheme.stages:
        h = frac * run.dt
        if label == "A":
            state = flow_A(state, h, run.params, run.model)
        elif label == "B":
            state = flow_B(state, h, run.forcing, run.model)
        else:
            state = flow_C(state, h, run.params, rng)
    return state


def step_overdamped_em(
    state: OverdampedState,
    dt: float,
    forcing: ForcingSpec,
    model: PotentialModel,
    beta: float,
    rng: np.random.Generator,
) -> OverdampedState:
    """Euler-Maruyama step of dq = (eta - V'(q)) dt + sqrt(2/beta) dW."""
    if model.domain.dim != 1:
        raise ValueError("overdamped dynamics is 1D only")
    vprime = float(potential_gradient(model, state.q)[0])
    q = state.q + dt * (forcing.eta - vprime) + np.sqrt(2.0 * dt / beta) * rng.standard_normal()
    return OverdampedState(model.domain.wrap(q))


def step_mala(
    state: OverdampedState,
    dt: float,
    model: PotentialModel,
    beta: float,
    rng: np.random.Generator,
) -> OverdampedState:
    """Metropolis-corrected EM step targeting exp(-beta V) exactly.

    The proposal is generated unwrapped and, because the potential is
    periodic and the proposal kernel translation-equivariant, the chain
    projected to the torus satisfies detailed balance for the Gibbs measure.
    On rejection the state is returned unchanged.
    """
    if model.domain.dim != 1:
        raise ValueError("overdamped dynamics is 1D only")
    g = rng.standard_normal()
    u = rng.random()
    x = state.q
    vpx = float(potential_gradient(model, x)[0])
    y = x - dt * vpx + np.sqrt(2.0 * dt / beta) * g
    vx = model.value(x)
    vy = model.value(y)
    vpy = float(potential_gradient(model, y)[0])
    fwd = y - x + dt * vpx
    bwd = x - y + dt * vpy
    logr = -beta * (vy - vx) - beta * (bwd * bwd - fwd * fwd) / (4.0 * dt)
    if np.log(u) < logr:
        return OverdampedState(model.domain.wrap(y))
    return OverdampedState(x)


def _kernel_args(run: IntegratorRun):
    return (
        run.model.amps,
        float(run.model.domain.length),
        float(run.params.beta),
        float(run.params.gamma),
        run.params.mass_array,
        float(run.forcing.eta),
        run.forcing.f_array,
    )


def run_trajectory_obs(
    run: IntegratorRun,
    state,
    n_steps: int,
    observable: str,
    rng: np.random.Generator,
    out: np.ndarray | None = None,
):
    """Advance n_steps with the fast kernels, recording the named observable
    after every step.  Mutates and returns ``state``; observables land in
    ``out`` (allocated when not supplied)."""
    obs_code = OBSERVABLE_CODES[observable]
    if out is None:
        out = np.empty(n_steps)
    if out.shape != (n_steps,):
        raise ValueError("out must have shape (n_steps,)")
    amps, L, beta, gamma, mass, eta, fdir = _kernel_args(run)
    if run.is_overdamped:
        qa = np.array([state.q], dtype=float)
        if run.scheme == "EM":
            _kernels.overdamped_em_obs(rng, qa, run.dt, amps[0], L, beta, eta, obs_code, out)
        else:
            _kernels.mala_obs(rng, qa, run.dt, amps[0], L, beta, obs_code, out)
        state.q = float(qa[0])
    else:
        if observable == "kinetic_ratio" and run.forcing.eta != 0.0:
            raise ValueError("kinetic_ratio is an equilibrium diagnostic")
        codes, h_arr, rho, cn = run.scheme.kernel_arrays(run.dt, run.params)
        _kernels.splitting_obs(
            rng, state.q, state.p, codes, h_arr, rho, cn, amps, L, beta, mass, eta, fdir, obs_code, out
        )
    if not np.isfinite(out[-1] if n_steps else 0.0):
        raise FloatingPointError("trajectory produced non-finite values")
    return out
