"""Periodic domains, separable cosine potentials, physical parameters, and
equilibrium sampling of initial conditions.

All types in this module are immutable after construction and safe to share
across workers.  Random streams are never stored on a model object; every
sampling routine takes an explicit ``numpy.random.Generator``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi

__all__ = [
    "TorusDomain",
    "PotentialModel",
    "PhysicalParams",
    "ForcingSpec",
    "PhaseState",
    "OverdampedState",
    "potential_value",
    "potential_gradient",
    "sample_momenta",
    "sample_position_1d",
    "sample_position",
]


@dataclass(frozen=True)
class TorusDomain:
    """Periodic cubic box [0, L)^d."""

    dim: int
    length: float = 1.0

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        if not self.length > 0:
            raise ValueError(f"length must be positive, got {self.length}")

    def wrap(self, q):
        """Map every coordinate into [0, L).

        ``np.mod`` can round a tiny negative argument up to L itself, so the
        result is clamped back to 0 in that case.
        """
        out = np.mod(np.asarray(q, dtype=float), self.length)
        if out.ndim == 0:
            x = float(out)
            return 0.0 if x >= self.length else x
        out[out >= self.length] = 0.0
        return out


@dataclass(frozen=True)
class PotentialModel:
    """Separable single-mode cosine potential V(q) = sum_i a_i cos(2 pi q_i / L).

    ``kind`` is one of ``"zero"``, ``"cosine1d"``, ``"separable_cosine2d"``;
    all three share the same per-axis amplitude representation (the zero
    potential has every amplitude equal to 0).
    """

    kind: str
    domain: TorusDomain
    amplitudes: tuple[float, ...]

    KINDS = ("zero", "cosine1d", "separable_cosine2d")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if len(self.amplitudes) != self.domain.dim:
            raise ValueError("one amplitude per axis required")
        object.__setattr__(self, "amplitudes", tuple(float(a) for a in self.amplitudes))

    @staticmethod
    def zero(dim: int = 1, length: float = 1.0) -> "PotentialModel":
        return PotentialModel("zero", TorusDomain(dim, length), (0.0,) * dim)

    @staticmethod
    def cosine1d(amplitude: float = 0.5, length: float = 1.0) -> "PotentialModel":
        return PotentialModel("cosine1d", TorusDomain(1, length), (amplitude,))

    @staticmethod
    def separable_cosine2d(a1: float = 0.5, a2: float = 0.5, length: float = 1.0) -> "PotentialModel":
        return PotentialModel("separable_cosine2d", TorusDomain(2, length), (a1, a2))

    @property
    def amps(self) -> np.ndarray:
        return np.asarray(self.amplitudes, dtype=float)

    def value(self, q):
        return potential_value(self, q)

    def gradient(self, q):
        return potential_gradient(self, q)


def _coords(model: PotentialModel, q) -> np.ndarray:
    """Normalize q to shape (..., d)."""
    qa = np.asarray(q, dtype=float)
    d = model.domain.dim
    if qa.ndim == 0:
        if d != 1:
            raise ValueError(f"scalar position given for a {d}-dimensional model")
        qa = qa.reshape(1)
    if qa.shape[-1] != d:
        raise ValueError(f"position has last dimension {qa.shape[-1]}, expected {d}")
    return qa


def potential_value(model: PotentialModel, q):
    """Potential energy at position(s) q of shape (d,) or (..., d)."""
    qa = _coords(model, q)
    w = TWO_PI / model.domain.length
    vals = (model.amps * np.cos(w * qa)).sum(axis=-1)
    return float(vals) if vals.ndim == 0 else vals


def potential_gradient(model: PotentialModel, q):
    """Analytic gradient of the potential, same shape as the position input."""
    qa = _coords(model, q)
    w = TWO_PI / model.domain.length
    return -model.amps * w * np.sin(w * qa)


@dataclass(frozen=True)
class PhysicalParams:
    """Inverse temperature beta, friction gamma, diagonal mass matrix."""

    beta: float
    gamma: float
    mass: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        mass = self.mass
        if np.isscalar(mass):
            mass = (float(mass),)
        object.__setattr__(self, "mass", tuple(float(m) for m in np.atleast_1d(mass)))
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if any(m <= 0 for m in self.mass):
            raise ValueError("all mass entries must be positive")

    @property
    def dim(self) -> int:
        return len(self.mass)

    @property
    def mass_array(self) -> np.ndarray:
        return np.asarray(self.mass, dtype=float)


@dataclass(frozen=True)
class ForcingSpec:
    """Constant external force eta * F with |F| = 1."""

    eta: float
    direction: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        object.__setattr__(self, "direction", tuple(float(f) for f in np.atleast_1d(self.direction)))
        norm = float(np.linalg.norm(self.direction))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"|direction| must be 1 within 1e-12, got {norm}")

    @staticmethod
    def axis(dim: int, axis: int = 0, eta: float = 0.0) -> "ForcingSpec":
        f = np.zeros(dim)
        f[axis] = 1.0
        return ForcingSpec(eta, tuple(f))

    @property
    def f_array(self) -> np.ndarray:
        return np.asarray(self.direction, dtype=float)


@dataclass
class PhaseState:
    """Position on the torus and momentum."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.q = np.atleast_1d(np.asarray(self.q, dtype=float)).copy()
        self.p = np.atleast_1d(np.asarray(self.p, dtype=float)).copy()
        if self.q.shape != self.p.shape:
            raise ValueError("q and p must have matching shapes")


@dataclass
class OverdampedState:
    """Position-only state of the 1D overdamped dynamics."""

    q: float

    def __post_init__(self):
        self.q = float(self.q)


def sample_momenta(params: PhysicalParams, rng: np.random.Generator) -> np.ndarray:
    """Draw p from the Gaussian momentum marginal with covariance M / beta."""
    return rng.standard_normal(params.dim) * np.sqrt(params.mass_array / params.beta)


def _axis_cdf(amplitude: float, length: float, beta: float, grid_n: int):
    """Inverse-CDF table for one axis of the Gibbs position density."""
    x = np.linspace(0.0, length, grid_n + 1)
    w = np.exp(-beta * amplitude * np.cos(TWO_PI * x / length))
    incr = 0.5 * (w[1:] + w[:-1]) * (length / grid_n)
    cdf = np.concatenate([[0.0], np.cumsum(incr)])
    cdf /= cdf[-1]
    return x, cdf


def sample_position_1d(model: PotentialModel, beta: float, grid_n: int, rng: np.random.Generator, size=None):
    """Draw q from the 1D density proportional to exp(-beta V) by inverse CDF.

    The CDF is tabulated by trapezoid quadrature on a uniform grid of
    ``grid_n`` cells and inverted with linear interpolation.
    """
    if model.domain.dim != 1:
        raise ValueError("sample_position_1d requires a 1D model")
    if grid_n < 256:
        raise ValueError(f"grid_n must be at least 256, got {grid_n}")
    x, cdf = _axis_cdf(model.amplitudes[0], model.domain.length, beta, grid_n)
    u = rng.random(size)
    q = np.interp(u, cdf, x)
    q = model.domain.wrap(q)
    return float(q) if size is None else q


def sample_position(model: PotentialModel, beta: float, grid_n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw a d-dimensional position from exp(-beta V); valid because the
    potential is separable, so coordinates are independent."""
    L = model.domain.length
    out = np.empty(model.domain.dim)
    for i, a in enumerate(model.amplitudes):
        x, cdf = _axis_cdf(a, L, beta, grid_n)
        out[i] = np.interp(rng.random(), cdf, x)
    return model.domain.wrap(out)
