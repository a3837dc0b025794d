"""Stochastic trajectories of a continuously monitored qubit.

Measurement of sigma_x with strength gamma: the receiver's state rho, the two
coding states rho_i (conditioned on the same record) and the Bayes filter
P_i all share one Wiener increment per step.  Bloch components are used
throughout; the dynamics never leave the x-z plane, so y is not tracked.

Two steppers are available:

``"kraus"`` (default)
    The exact measurement-operator update exp(4 gamma dy sigma_x) applied to
    rho and to each rho_i, with P_i updated by the matching likelihood, so
    rho = sum P_i rho_i holds to rounding error.  Without feedback this is the
    exact solution sampled on the time grid.  With feedback one more common
    linear map, a boost along z, is applied after the symmetrizing rotation:
    it replaces the realized squared step (8 gamma dy)^2 by its Ito value
    8 gamma dt in the opening angle of the coding states.  Without it the
    angle picks up a zero-mean random error of order sqrt(t dt).
``"euler"``
    Euler-Maruyama on the Ito equations, coding states projected back to the
    unit circle and (P1, P2) renormalized after every step.  Kept as an
    independent route; its mixture-consistency error grows like sqrt(dt).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .qubit import SIGMA_X, coding_states

BLOCK_SIZE = 2048
NOISE_CHUNK = 1024
FIELDS = ("t", "x", "z", "x1", "z1", "x2", "z2", "p1", "y")


class StepError(FloatingPointError):
    """An integration step left the physical region."""

    def __init__(self, message, trajectory=None, time=None):
        super().__init__(f"{message} (trajectory {trajectory}, t={time})")
        self.trajectory = trajectory
        self.time = time


# -- increments -------------------------------------------------------------


def sme_increment(x, z, dW, dt, gamma):
    """Bloch-form increment (dx, dz) of the sigma_x measurement SME.

    dx = sqrt(8 gamma) (1 - x^2) dW
    dz = -4 gamma z dt - sqrt(8 gamma) x z dW
    """
    s = math.sqrt(8.0 * gamma)
    dx = s * (1.0 - x * x) * dW
    dz = -4.0 * gamma * z * dt - s * x * z * dW
    return dx, dz


def sme_increment_matrix(rho, dW, dt, gamma):
    """Same increment in density-matrix form (independent route)."""
    sx = SIGMA_X
    comm = sx @ rho - rho @ sx
    double = sx @ comm - comm @ sx
    mean = np.trace(sx @ rho).real
    return -gamma * double * dt + math.sqrt(2.0 * gamma) * (sx @ rho + rho @ sx - 2.0 * mean * rho) * dW


def record_increment(x, dW, dt, gamma):
    return x * dt + dW / math.sqrt(8.0 * gamma)


def coding_state_increment(xi, zi, x_mix, dW, dt, gamma):
    """Increment of coding state i driven by the record generated by rho.

    The record dy = x_mix dt + dW / sqrt(8 gamma) rewritten from the point of
    view of state i gives dW_i = dW + sqrt(8 gamma) (x_mix - x_i) dt.
    """
    dWi = dW + math.sqrt(8.0 * gamma) * (x_mix - xi) * dt
    return sme_increment(xi, zi, dWi, dt, gamma)


def bayes_increment(p_i, x_i, x_mix, dW, gamma):
    return math.sqrt(8.0 * gamma) * (x_i - x_mix) * p_i * dW


# -- feedback ---------------------------------------------------------------


def feedback_angle(x, z, p1, p2, dW, dt, gamma):
    """Rotation that re-symmetrizes the coding states after one step.

    States before the step are (x, z) and (-x, z).  To O(dt^{3/2}),
    phi = sqrt(8 gamma) z dW + 8 gamma z x (p1 - p2) dt, equivalently
    8 gamma z dy.  Positive phi means the pair drifted toward +x; undo it with
    ``rotate_xz(state, ROTATION_SIGN * phi)``.
    """
    return math.sqrt(8.0 * gamma) * z * dW + 8.0 * gamma * z * x * (p1 - p2) * dt


def feedback_hamiltonian_coeff(y_rate, z, gamma):
    """Rotation rate of the feedback generator (hbar = 1), for logging.

    ``phi / dt`` written through the record rate: 8 gamma z dy/dt.
    """
    return 8.0 * gamma * z * y_rate


def symmetrizing_angle(x1, z1, x2, z2):
    """Mean polar angle (from +z toward +x) of the two coding states."""
    return 0.5 * (np.arctan2(x1, z1) + np.arctan2(x2, z2))


def rotate_components(x, z, phi):
    c, s = np.cos(phi), np.sin(phi)
    return x * c - z * s, x * s + z * c


def asymmetry(x1, z1, x2, z2):
    return np.abs(z1 - z2) + np.abs(x1 + x2)


def resolve_rotation_sign(gamma=1.0, dt=1e-4):
    """Pick the sign of phi in ``rotate_xz`` that restores the symmetry.

    One Euler step is taken from a symmetric pair with a fixed kick; the sign
    that shrinks the asymmetry wins.  Raises if neither does.
    """
    x, z = math.sin(math.pi / 5), math.cos(math.pi / 5)
    p1, p2 = 0.6, 0.4
    x_mix = (p1 - p2) * x
    dW = math.sqrt(dt)
    dx1, dz1 = coding_state_increment(x, z, x_mix, dW, dt, gamma)
    dx2, dz2 = coding_state_increment(-x, z, x_mix, dW, dt, gamma)
    a = (x + dx1, z + dz1, -x + dx2, z + dz2)
    before = asymmetry(*a)
    phi = feedback_angle(x, z, p1, p2, dW, dt, gamma)
    best = None
    for sign in (1.0, -1.0):
        x1, z1 = rotate_components(a[0], a[1], sign * phi)
        x2, z2 = rotate_components(a[2], a[3], sign * phi)
        after = asymmetry(x1, z1, x2, z2)
        if after < before and (best is None or after < best[1]):
            best = (sign, after)
    if best is None:
        raise RuntimeError("neither rotation sign restores the coding-state symmetry")
    return best[0]


ROTATION_SIGN = resolve_rotation_sign()


# -- configuration and results ----------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    gamma: float = 1.0
    dt: float = 1e-4
    t_max: float = 1.0
    theta0: float = math.pi / 4
    feedback: bool = False
    seed: int = 0
    n_traj: int = 1
    p1: float = 0.5
    scheme: str = "auto"  # "auto" | "euler" | "kraus"
    save_every: int = 100

    def __post_init__(self):
        if self.gamma <= 0 or self.dt <= 0 or self.t_max <= 0 or self.n_traj < 1:
            raise ValueError("gamma, dt, t_max and n_traj must be positive")
        if self.gamma * self.dt > 1e-2:
            raise ValueError(f"gamma*dt = {self.gamma * self.dt} exceeds 1e-2")
        if self.scheme not in ("auto", "euler", "kraus"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.save_every < 1:
            raise ValueError("save_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    @property
    def resolved_scheme(self) -> str:
        return "kraus" if self.scheme == "auto" else self.scheme

    def save_steps(self) -> np.ndarray:
        idx = np.arange(0, self.n_steps + 1, self.save_every)
        if idx[-1] != self.n_steps:
            idx = np.append(idx, self.n_steps)
        return idx

    def to_dict(self) -> dict:
        d = asdict(self)
        d["resolved_scheme"] = self.resolved_scheme
        return d


@dataclass
class TrajectoryBatch:
    """Saved samples, each field an array of shape (n_save, n_traj)."""

    config: SimConfig
    t: np.ndarray  # (n_save,)
    x: np.ndarray
    z: np.ndarray
    x1: np.ndarray
    z1: np.ndarray
    x2: np.ndarray
    z2: np.ndarray
    p1: np.ndarray
    y: np.ndarray
    max_mixture_error: np.ndarray  # (n_traj,), over every step
    max_asymmetry: np.ndarray  # (n_traj,), post-rotation, feedback only

    @property
    def p2(self):
        return 1.0 - self.p1

    def at_time(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.t - t)))
        if abs(self.t[i] - t) > 0.5 * self.config.dt:
            raise KeyError(f"time {t} was not saved")
        return i

    def trajectory(self, j: int) -> dict:
        out = {"t": self.t}
        for f in FIELDS[1:]:
            out[f] = getattr(self, f)[:, j]
        return out

    def tan_theta(self):
        return self.x1 / self.z1


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for one trajectory, independent of scheduling."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


# -- engine -----------------------------------------------------------------


def _noise(gens, n, dt):
    return np.sqrt(dt) * np.stack([g.standard_normal(n) for g in gens], axis=1)


def _run_block(config: SimConfig, start: int, stop: int, increments=None):
    gamma, dt = config.gamma, config.dt
    n = stop - start
    scheme = config.resolved_scheme
    ens = coding_states(config.theta0, config.p1)
    x1 = np.full(n, ens.rho1.x)
    z1 = np.full(n, ens.rho1.z)
    x2 = np.full(n, ens.rho2.x)
    z2 = np.full(n, ens.rho2.z)
    p1 = np.full(n, ens.p1)
    p2 = np.full(n, ens.p2)
    x = p1 * x1 + p2 * x2
    z = p1 * z1 + p2 * z2
    y = np.zeros(n)

    save = config.save_steps()
    out = {f: np.empty((len(save), n)) for f in FIELDS[1:]}
    max_mix = np.zeros(n)
    max_asym = np.zeros(n)
    gens = None if increments is not None else [trajectory_rng(config.seed, j) for j in range(start, stop)]
    s8 = math.sqrt(8.0 * gamma)
    ito_boost = math.tanh(math.sqrt(8.0 * gamma * dt))
    n_steps = config.n_steps
    si = 0
    buf, buf_pos = None, 0

    def store(i):
        for f, v in (("x", x), ("z", z), ("x1", x1), ("z1", z1), ("x2", x2), ("z2", z2), ("p1", p1), ("y", y)):
            out[f][i] = v

    if save[0] == 0:
        store(0)
        si = 1

    for step in range(1, n_steps + 1):
        if increments is not None:
            dW = increments[step - 1]
        else:
            if buf is None or buf_pos == buf.shape[0]:
                buf = _noise(gens, min(NOISE_CHUNK, n_steps - step + 1), dt)
                buf_pos = 0
            dW = buf[buf_pos]
            buf_pos += 1

        half_sin = 0.5 * (x1 - x2)  # sine of the half opening angle before the step
        if scheme == "euler":
            dx, dz = sme_increment(x, z, dW, dt, gamma)
            dx1, dz1 = coding_state_increment(x1, z1, x, dW, dt, gamma)
            dx2, dz2 = coding_state_increment(x2, z2, x, dW, dt, gamma)
            dp1 = bayes_increment(p1, x1, x, dW, gamma)
            dp2 = bayes_increment(p2, x2, x, dW, gamma)
            y = y + record_increment(x, dW, dt, gamma)
            x, z = x + dx, z + dz
            r = np.hypot(x, z)
            # a tangential Euler step of length d overshoots the sphere by d^2/2
            excess = r - (1.0 + 1e-3 + 4.0 * gamma * dW * dW)
            if np.any(excess > 0):
                j = int(np.argmax(excess))
                raise StepError("Bloch norm blew up; halve dt", start + j, step * dt)
            over = r > 1.0
            if np.any(over):
                x = np.where(over, x / r, x)
                z = np.where(over, z / r, z)
            x1, z1, x2, z2 = x1 + dx1, z1 + dz1, x2 + dx2, z2 + dz2
            p1, p2 = p1 + dp1, p2 + dp2
        else:
            dy = x * dt + dW / s8
            a = 8.0 * gamma * dy
            T = np.tanh(a)
            sech = 1.0 / np.cosh(a)
            d = 1.0 + x * T
            d1 = 1.0 + x1 * T
            d2 = 1.0 + x2 * T
            p1 = p1 * d1 / d
            p2 = p2 * d2 / d
            x, z = (x + T) / d, z * sech / d
            x1, z1 = (x1 + T) / d1, z1 * sech / d1
            x2, z2 = (x2 + T) / d2, z2 * sech / d2
            y = y + dy

        # project pure coding states back to the unit circle
        r1 = np.hypot(x1, z1)
        r2 = np.hypot(x2, z2)
        x1, z1, x2, z2 = x1 / r1, z1 / r1, x2 / r2, z2 / r2
        psum = p1 + p2
        p1, p2 = p1 / psum, p2 / psum

        if config.feedback:
            phi = ROTATION_SIGN * symmetrizing_angle(x1, z1, x2, z2)
            x, z = rotate_components(x, z, phi)
            x1, z1 = rotate_components(x1, z1, phi)
            x2, z2 = rotate_components(x2, z2, phi)
            if scheme == "kraus":
                x, z, x1, z1, x2, z2, p1, p2 = _ito_opening(x, z, x1, z1, x2, z2, p1, p2, half_sin, ito_boost)
            np.maximum(max_asym, asymmetry(x1, z1, x2, z2), out=max_asym)

        mix = np.maximum(np.abs(x - (p1 * x1 + p2 * x2)), np.abs(z - (p1 * z1 + p2 * z2)))
        np.maximum(max_mix, mix, out=max_mix)

        if step == save[si]:
            _check(x, z, p1, start, step * dt)
            store(si)
            si += 1

    _check(x, z, p1, start, n_steps * dt)
    return out, max_mix, max_asym


def _boost_z(x, z, T):
    """Bloch action of exp(c sigma_z) . exp(c sigma_z), T = tanh(2c); returns (x', z', trace)."""
    d = 1.0 + z * T
    return x * np.sqrt(1.0 - T * T) / d, (z + T) / d, d


def _ito_opening(x, z, x1, z1, x2, z2, p1, p2, half_sin, tb):
    """Reset the opening angle of a symmetric pair to its Ito value.

    A sigma_x boost of rapidity b moves the half angle alpha (sin alpha = s)
    to the mean of gd(eta + b) and gd(eta - b), tanh eta = s.  The realized b
    is random; with b^2 at its mean 8 gamma dt the target angle follows from
    the same formula, and a common z boost carries the pair there.  Being one
    linear map for rho and both rho_i, it keeps rho = sum P_i rho_i.
    """
    target = 0.5 * (np.arcsin((half_sin + tb) / (1.0 + half_sin * tb)) + np.arcsin((half_sin - tb) / (1.0 - half_sin * tb)))
    actual = 0.5 * (np.arctan2(x1, z1) - np.arctan2(x2, z2))
    ok = (target > 0) & (actual > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        # artanh(cos a) = ln cot(a/2); the z boost shifts artanh(z) additively
        shift = np.where(ok, np.log(np.tan(0.5 * actual) / np.tan(0.5 * target)), 0.0)
    T = np.tanh(shift)
    x, z, d = _boost_z(x, z, T)
    x1, z1, d1 = _boost_z(x1, z1, T)
    x2, z2, d2 = _boost_z(x2, z2, T)
    p1, p2 = p1 * d1 / d, p2 * d2 / d
    psum = p1 + p2
    return x, z, x1, z1, x2, z2, p1 / psum, p2 / psum


def _check(x, z, p1, start, t):
    bad = np.flatnonzero(x * x + z * z > (1.0 + 1e-3) ** 2)
    if bad.size:
        raise StepError("Bloch norm blew up; halve dt", start + int(bad[0]), t)
    bad = np.flatnonzero((p1 < -1e-9) | (p1 > 1.0 + 1e-9) | ~np.isfinite(p1))
    if bad.size:
        raise StepError("P1 left [0, 1]", start + int(bad[0]), t)


def _worker_count(workers):
    if workers is None:
        workers = int(os.environ.get("QD_THREADS", "1") or 1)
    return max(1, workers)


def simulate(config: SimConfig, seed: int | None = None, increments=None, workers: int | None = None) -> TrajectoryBatch:
    """Integrate ``config.n_traj`` trajectories.

    ``increments`` (shape (n_steps, n_traj)) replaces the sampled dW, e.g.
    zeros to force the noiseless evolution.  Trajectory j always uses the
    stream ``trajectory_rng(seed, j)``, so results do not depend on
    ``workers`` (default: the ``QD_THREADS`` environment variable, else 1).
    """
    if seed is not None:
        config = replace(config, seed=seed)
    if increments is not None:
        increments = np.asarray(increments, dtype=float)
        if increments.shape != (config.n_steps, config.n_traj):
            raise ValueError(f"increments must have shape {(config.n_steps, config.n_traj)}")
    blocks = [(s, min(s + BLOCK_SIZE, config.n_traj)) for s in range(0, config.n_traj, BLOCK_SIZE)]
    workers = min(_worker_count(workers), len(blocks))
    if workers > 1 and increments is None:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_block, [config] * len(blocks), *zip(*blocks)))
    else:
        results = [
            _run_block(config, s, e, None if increments is None else increments[:, s:e]) for s, e in blocks
        ]
    fields = {f: np.concatenate([r[0][f] for r in results], axis=1) for f in FIELDS[1:]}
    return TrajectoryBatch(
        config=config,
        t=config.save_steps() * config.dt,
        max_mixture_error=np.concatenate([r[1] for r in results]),
        max_asymmetry=np.concatenate([r[2] for r in results]),
        **fields,
    )
