"""Discrete weak sigma_x measurements and their repetition.

A weak measurement M(k) has the two operators ``aI +/- b sigma_x`` with
``a = (sqrt(k) + sqrt(1-k))/2`` and ``b = (sqrt(k) - sqrt(1-k))/2``.  Repeating
it with ``k = 1/2 - sqrt(eps * dt)`` gives the continuous measurement in the
limit ``dt -> 0``; matching the one-step variance to the stochastic master
equation fixes ``eps = EPSILON_PER_GAMMA * gamma``.

The exact outcome tree (``enumerate_outcome_tree``) is a brute-force oracle:
it applies every outcome string operator by operator and never uses the fact
that the operators commute.  ``weak_sequence_mi_counts`` does use it and is
kept as an independent second route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy import optimize, special

from .qubit import BlochState, CodingEnsemble, binary_entropy, shannon_entropy

MAX_TREE_DEPTH = 25
_CHUNK_DEPTH = 16

# eps / gamma; the value the one-step variance calibration converges to
EPSILON_PER_GAMMA = 2.0


class TreeTooLargeError(MemoryError):
    pass


@dataclass(frozen=True)
class WeakMeasurement:
    k: float
    a: float
    b: float

    @property
    def bias(self) -> float:
        """``2ab = k - 1/2``; the outcome-probability slope in x."""
        return 2.0 * self.a * self.b

    def operators(self) -> tuple[np.ndarray, np.ndarray]:
        sx = np.array([[0.0, 1.0], [1.0, 0.0]])
        eye = np.eye(2)
        return self.a * eye + self.b * sx, self.a * eye - self.b * sx


@dataclass(frozen=True)
class ContinuumSchedule:
    epsilon: float
    dt: float

    def __post_init__(self):
        if self.epsilon <= 0 or self.dt <= 0 or self.epsilon * self.dt >= 0.25:
            raise ValueError("need epsilon, dt > 0 and epsilon * dt < 1/4")

    @property
    def k(self) -> float:
        return 0.5 - math.sqrt(self.epsilon * self.dt)

    @classmethod
    def for_gamma(cls, gamma: float, dt: float) -> "ContinuumSchedule":
        return cls(EPSILON_PER_GAMMA * gamma, dt)


def weak_operators(k: float) -> WeakMeasurement:
    if not (0.0 <= k <= 1.0):
        raise ValueError(f"k must lie in [0, 1], got {k}")
    rk, rq = math.sqrt(k), math.sqrt(1.0 - k)
    return WeakMeasurement(k=k, a=0.5 * (rk + rq), b=0.5 * (rk - rq))


def _update(x, z, a, b, sign):
    """Vectorized outcome update. Returns (probability, x', z')."""
    ab2 = 2.0 * a * b * sign
    prob = (a * a + b * b) + ab2 * x
    with np.errstate(divide="ignore", invalid="ignore"):
        xn = (ab2 + (a * a + b * b) * x) / prob
        zn = (a * a - b * b) * z / prob
    # impossible outcomes leave the (irrelevant) state as it was
    return prob, np.where(prob > 0, xn, x), np.where(prob > 0, zn, z)


def apply_weak(state: BlochState, m: WeakMeasurement, outcome: int) -> tuple[BlochState, float]:
    """Apply the ``outcome`` (+1 or -1) operator; return (posterior, probability)."""
    if outcome not in (1, -1):
        raise ValueError("outcome must be +1 or -1")
    prob = (m.a * m.a + m.b * m.b) + 2.0 * m.a * m.b * outcome * state.x
    if prob <= 0.0:
        # zero-probability branch: state undefined, keep the input
        return state, 0.0
    _, x, z = _update(state.x, state.z, m.a, m.b, outcome)
    y = (m.a * m.a - m.b * m.b) * state.y / prob
    return BlochState(float(x), float(y), float(z)), float(prob)


@dataclass
class OutcomeTree:
    """Leaves of the outcome tree in lexicographic order (+ before -)."""

    probabilities: np.ndarray
    posteriors: np.ndarray  # shape (2**n, 2)

    def __len__(self):
        return len(self.probabilities)

    def __iter__(self):
        return zip(self.probabilities, map(tuple, self.posteriors))


def _grow(state, m):
    """One tree level; children interleaved so leaves stay in lexicographic order."""
    w1, x1, z1, w2, x2, z2 = state
    kids = []
    for sign in (1.0, -1.0):
        q1, nx1, nz1 = _update(x1, z1, m.a, m.b, sign)
        q2, nx2, nz2 = _update(x2, z2, m.a, m.b, sign)
        kids.append((w1 * q1, nx1, nz1, w2 * q2, nx2, nz2))
    return tuple(np.stack([p, q], axis=-1).reshape(-1) for p, q in zip(*kids))


def _iter_tree(ensemble: CodingEnsemble, k: float, n_steps: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield (w1, w2) chunks: joint probabilities of each string with each state."""
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    if n_steps > MAX_TREE_DEPTH:
        raise TreeTooLargeError(f"n_steps={n_steps} exceeds the cap of {MAX_TREE_DEPTH}")
    m = weak_operators(k)
    r1, r2 = ensemble.rho1, ensemble.rho2
    one = np.ones(1)
    state = (one * ensemble.p1, one * r1.x, one * r1.z, one * ensemble.p2, one * r2.x, one * r2.z)
    head = max(0, n_steps - _CHUNK_DEPTH)
    for _ in range(head):
        state = _grow(state, m)
    for i in range(len(state[0])):
        sub = tuple(s[i : i + 1] for s in state)
        for _ in range(n_steps - head):
            sub = _grow(sub, m)
        yield sub[0], sub[3]


def enumerate_outcome_tree(ensemble: CodingEnsemble, k: float, n_steps: int) -> OutcomeTree:
    probs, posts = [], []
    for w1, w2 in _iter_tree(ensemble, k, n_steps):
        tot = w1 + w2
        with np.errstate(divide="ignore", invalid="ignore"):
            p1 = np.where(tot > 0, w1 / tot, ensemble.p1)
        probs.append(tot)
        posts.append(np.stack([p1, 1.0 - p1], axis=-1))
    return OutcomeTree(np.concatenate(probs), np.concatenate(posts))


def weak_sequence_mi(ensemble: CodingEnsemble, k: float, n_steps: int) -> float:
    """Prior entropy minus expected posterior entropy over the exact tree."""
    h_post = []
    for w1, w2 in _iter_tree(ensemble, k, n_steps):
        tot = w1 + w2
        with np.errstate(divide="ignore", invalid="ignore"):
            p1 = np.where(tot > 0, w1 / tot, 0.5)
        h_post.append(math.fsum(tot * binary_entropy(p1)))
    return shannon_entropy(ensemble.priors) - math.fsum(h_post)


def weak_sequence_mi_counts(ensemble: CodingEnsemble, k: float, n_steps: int) -> float:
    """Same quantity from the outcome counts alone.

    The operators commute, so a string's weight depends only on how many
    ``+`` outcomes it holds; per coding state the count is a mixture of two
    binomials over the hidden sigma_x eigenvalue.
    """
    m = weak_operators(k)
    n = np.arange(n_steps + 1)
    logc = special.gammaln(n_steps + 1) - special.gammaln(n + 1) - special.gammaln(n_steps - n + 1)
    qp = 0.5 + m.bias  # P(+ | eigenvalue +1)
    qm = 0.5 - m.bias

    def log_binom(q):
        with np.errstate(divide="ignore"):
            return logc + special.xlogy(n, q) + special.xlog1py(n_steps - n, -q)

    lp, lm = log_binom(qp), log_binom(qm)

    def log_weight(x, prior):
        if prior == 0:
            return np.full(n_steps + 1, -np.inf)
        terms = []
        for w, lb in ((0.5 * (1 + x), lp), (0.5 * (1 - x), lm)):
            terms.append(np.log(w) + lb if w > 0 else np.full(n_steps + 1, -np.inf))
        return math.log(prior) + np.logaddexp(*terms)

    l1 = log_weight(ensemble.rho1.x, ensemble.p1)
    l2 = log_weight(ensemble.rho2.x, ensemble.p2)
    lt = np.logaddexp(l1, l2)
    # counts no string can produce carry no weight
    live = np.isfinite(lt)
    p1 = np.where(live, np.exp(l1 - np.where(live, lt, 0.0)), 0.5)
    h = math.fsum(np.exp(lt) * binary_entropy(p1))
    return shannon_entropy(ensemble.priors) - h


def sample_weak_sequence(
    ensemble: CodingEnsemble, k: float, n_steps: int, n_samples: int, rng: np.random.Generator
) -> np.ndarray:
    """Monte Carlo over outcome strings; returns posterior P1 per sample.

    The preparation is drawn from the priors and outcomes are sampled step by
    step from the true coding state's outcome probabilities.
    """
    m = weak_operators(k)
    r1, r2 = ensemble.rho1, ensemble.rho2
    which = rng.random(n_samples) < ensemble.p1
    tx = np.where(which, r1.x, r2.x)
    tz = np.where(which, r1.z, r2.z)
    x1 = np.full(n_samples, r1.x)
    z1 = np.full(n_samples, r1.z)
    x2 = np.full(n_samples, r2.x)
    z2 = np.full(n_samples, r2.z)
    p1 = np.full(n_samples, ensemble.p1)
    for _ in range(n_steps):
        q_plus, _, _ = _update(tx, tz, m.a, m.b, 1.0)
        sign = np.where(rng.random(n_samples) < q_plus, 1.0, -1.0)
        q1, x1n, z1n = _update(x1, z1, m.a, m.b, sign)
        q2, x2n, z2n = _update(x2, z2, m.a, m.b, sign)
        _, tx, tz = _update(tx, tz, m.a, m.b, sign)
        num = p1 * q1
        p1 = num / (num + (1.0 - p1) * q2)
        x1, z1, x2, z2 = x1n, z1n, x2n, z2n
    return p1


def calibrate_epsilon(gamma: float, dt: float, x: float = 0.3) -> float:
    """Fit eps so one weak step's x-variance equals the SME rate 8 gamma (1-x^2)^2 dt.

    The state is the pure x-z state with the given x component.
    """
    z = math.sqrt(1.0 - x * x)
    target = 8.0 * gamma * (1.0 - x * x) ** 2 * dt

    def excess(eps):
        m = weak_operators(0.5 - math.sqrt(eps * dt))
        var = 0.0
        for sign in (1, -1):
            post, prob = apply_weak(BlochState(x, 0.0, z), m, sign)
            var += prob * (post.x - x) ** 2
        return var - target

    hi = 0.25 / dt * (1 - 1e-12)
    return optimize.brentq(excess, 1e-12 * gamma, hi, xtol=1e-14 * gamma, rtol=1e-14)
