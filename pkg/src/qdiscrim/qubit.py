"""Two-level-system primitives: Bloch vectors, the symmetric coding pair,
Shannon entropy and the projective-measurement benchmark.

All information quantities are in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NORM_TOL = 1e-12

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1j], [1j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class BlochState:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if self.norm() > 1.0 + NORM_TOL:
            raise ValueError(f"Bloch vector outside the unit ball: {self}")

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def is_pure(self, tol: float = NORM_TOL) -> bool:
        return abs(self.norm() - 1.0) <= tol

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def density_matrix(self) -> np.ndarray:
        return 0.5 * (IDENTITY + self.x * SIGMA_X + self.y * SIGMA_Y + self.z * SIGMA_Z)

    @classmethod
    def from_density_matrix(cls, rho: np.ndarray) -> "BlochState":
        return cls(
            float(np.trace(rho @ SIGMA_X).real),
            float(np.trace(rho @ SIGMA_Y).real),
            float(np.trace(rho @ SIGMA_Z).real),
        )


@dataclass(frozen=True)
class CodingEnsemble:
    """Two pure states placed symmetrically about the z-axis.

    ``theta`` is the angle each Bloch vector makes with the z-axis, i.e.
    half the angle between the two states.
    """

    theta: float
    rho1: BlochState
    rho2: BlochState
    p1: float = 0.5
    p2: float = 0.5

    def __post_init__(self):
        if self.p1 < 0 or self.p2 < 0 or abs(self.p1 + self.p2 - 1.0) > 1e-12:
            raise ValueError(f"invalid priors ({self.p1}, {self.p2})")

    @property
    def priors(self) -> tuple[float, float]:
        return (self.p1, self.p2)


def _check_theta(theta: float) -> None:
    if not (0.0 <= theta <= math.pi / 2):
        raise ValueError(f"theta must lie in [0, pi/2], got {theta}")


def coding_states(theta: float, p1: float = 0.5) -> CodingEnsemble:
    _check_theta(theta)
    s, c = math.sin(theta), math.cos(theta)
    return CodingEnsemble(
        theta=theta,
        rho1=BlochState(s, 0.0, c),
        rho2=BlochState(-s, 0.0, c),
        p1=p1,
        p2=1.0 - p1,
    )


def shannon_entropy(p) -> float:
    """Entropy ``-sum p ln p`` in nats, with ``0 ln 0 = 0``."""
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"not a probability vector: {p}")
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def binary_entropy(p):
    """Vectorized ``H(p, 1-p)`` in nats. Inputs are clipped to [0, 1]."""
    p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(p > 0, p * np.log(p), 0.0) - np.where(q > 0, q * np.log(q), 0.0)
    return h


def optimal_mutual_info(theta: float) -> float:
    """Mutual information of the projective sigma_x measurement, equal priors."""
    _check_theta(theta)
    s = math.sin(theta)
    total = math.log(2.0)
    for q in (0.5 + 0.5 * s, 0.5 - 0.5 * s):
        if q > 0:
            total += q * math.log(q)
    return total


def rotate_xz(state: BlochState, phi: float) -> BlochState:
    """Rotate in the x-z plane: (x, z) -> (x cos phi - z sin phi, x sin phi + z cos phi)."""
    c, s = math.cos(phi), math.sin(phi)
    return BlochState(state.x * c - state.z * s, state.y, state.x * s + state.z * c)


def mixture(ensemble: CodingEnsemble) -> BlochState:
    a, b = ensemble.rho1, ensemble.rho2
    p1, p2 = ensemble.p1, ensemble.p2
    return BlochState(p1 * a.x + p2 * b.x, p1 * a.y + p2 * b.y, p1 * a.z + p2 * b.z)
