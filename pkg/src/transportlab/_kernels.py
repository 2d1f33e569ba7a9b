"""Numba hot loops for trajectory generation.

Every kernel draws its Gaussians scalar-by-scalar from the ``Generator``
passed in, in a fixed per-stage order, so the Python reference steppers in
``integrators`` produce bitwise-identical trajectories when handed the same
generator state.  Kernels mutate the state arrays in place and record one
observable value per completed step.
"""
import numpy as np
from numba import njit

OBS_VELOCITY = 0
OBS_CONJ_VELOCITY = 1
OBS_COS_Q = 2
OBS_VPRIME = 3
OBS_KINETIC = 4
OBS_SIN_Q = 5

STAGE_A = 0
STAGE_B = 1
STAGE_C = 2

_JIT = dict(cache=True, nogil=True)


@njit(**_JIT)
def _wrap1(x, L):
    x = x % L
    if x >= L:
        x -= L
    return x


@njit(**_JIT)
def _obs_under(code, q, p, beta, mass, fdir, amps, c):
    if code == OBS_VELOCITY or code == OBS_CONJ_VELOCITY:
        s = 0.0
        for i in range(q.shape[0]):
            s += fdir[i] * p[i] / mass[i]
        if code == OBS_CONJ_VELOCITY:
            s *= beta
        return s
    if code == OBS_COS_Q:
        return np.cos(c * q[0])
    if code == OBS_SIN_Q:
        return np.sin(c * q[0])
    if code == OBS_VPRIME:
        s = 0.0
        for i in range(q.shape[0]):
            s += fdir[i] * (-amps[i] * c * np.sin(c * q[i]))
        return s
    # OBS_KINETIC: averaged p^2 / (m / beta)
    s = 0.0
    for i in range(q.shape[0]):
        s += beta * p[i] * p[i] / mass[i]
    return s / q.shape[0]


@njit(**_JIT)
def splitting_obs(gen, q, p, codes, h_arr, rho, cn, amps, L, beta, mass, eta, fdir, obs_code, obs_out):
    """Advance len(obs_out) steps of the splitting scheme; record the
    observable after each full step.

    Per-stage constants are precomputed: h_arr[s] is the stage time step,
    rho[s, i] and cn[s, i] the Ornstein-Uhlenbeck decay and noise
    coefficients (meaningful on C stages only).
    """
    d = q.shape[0]
    c = 2.0 * np.pi / L
    n_stages = codes.shape[0]
    for step in range(obs_out.shape[0]):
        for s in range(n_stages):
            code = codes[s]
            if code == STAGE_A:
                h = h_arr[s]
                for i in range(d):
                    q[i] = _wrap1(q[i] + h * p[i] / mass[i], L)
            elif code == STAGE_B:
                h = h_arr[s]
                for i in range(d):
                    force = amps[i] * c * np.sin(c * q[i]) + eta * fdir[i]
                    p[i] += h * force
            else:
                for i in range(d):
                    p[i] = rho[s, i] * p[i] + cn[s, i] * gen.standard_normal()
        obs_out[step] = _obs_under(obs_code, q, p, beta, mass, fdir, amps, c)


@njit(**_JIT)
def _obs_over(code, q, beta, eta, a, c):
    vprime = -a * c * np.sin(c * q)
    if code == OBS_VELOCITY:
        return eta - vprime
    if code == OBS_CONJ_VELOCITY:
        return beta * (eta - vprime)
    if code == OBS_COS_Q:
        return np.cos(c * q)
    if code == OBS_SIN_Q:
        return np.sin(c * q)
    return vprime


@njit(**_JIT)
def overdamped_em_obs(gen, qa, dt, a, L, beta, eta, obs_code, obs_out):
    """Euler-Maruyama chain for dq = (eta - V') dt + sqrt(2/beta) dW."""
    q = qa[0]
    c = 2.0 * np.pi / L
    sig = np.sqrt(2.0 * dt / beta)
    for step in range(obs_out.shape[0]):
        vprime = -a * c * np.sin(c * q)
        q = _wrap1(q + dt * (eta - vprime) + sig * gen.standard_normal(), L)
        obs_out[step] = _obs_over(obs_code, q, beta, eta, a, c)
    qa[0] = q


@njit(**_JIT)
def overdamped_em_martingale(gen, qa, dt, a, L, beta, n_steps, obs_code):
    """EM chain at eta = 0 returning (sum of observable over the pre-step
    states X^0..X^{N-1}, sum of the Gaussians that drove those steps)."""
    q = qa[0]
    c = 2.0 * np.pi / L
    sig = np.sqrt(2.0 * dt / beta)
    sum_obs = 0.0
    sum_g = 0.0
    for _ in range(n_steps):
        sum_obs += _obs_over(obs_code, q, beta, 0.0, a, c)
        g = gen.standard_normal()
        sum_g += g
        vprime = -a * c * np.sin(c * q)
        q = _wrap1(q - dt * vprime + sig * g, L)
    qa[0] = q
    return sum_obs, sum_g


@njit(**_JIT)
def mala_obs(gen, qa, dt, a, L, beta, obs_code, obs_out):
    """Metropolis-adjusted EM chain targeting exp(-beta V); returns the
    number of accepted proposals.  Consumes one Gaussian then one uniform
    per step."""
    q = qa[0]
    c = 2.0 * np.pi / L
    sig = np.sqrt(2.0 * dt / beta)
    n_accept = 0
    for step in range(obs_out.shape[0]):
        g = gen.standard_normal()
        u = gen.random()
        vx = a * np.cos(c * q)
        vpx = -a * c * np.sin(c * q)
        y = q - dt * vpx + sig * g
        vy = a * np.cos(c * y)
        vpy = -a * c * np.sin(c * y)
        fwd = y - q + dt * vpx
        bwd = q - y + dt * vpy
        logr = -beta * (vy - vx) - beta * (bwd * bwd - fwd * fwd) / (4.0 * dt)
        if np.log(u) < logr:
            q = _wrap1(y, L)
            n_accept += 1
        obs_out[step] = _obs_over(obs_code, q, beta, 0.0, a, c)
    qa[0] = q
    return n_accept
