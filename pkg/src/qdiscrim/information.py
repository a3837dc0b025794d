"""Mutual information against measurement time, and the channel rate.

M(t) is the prior entropy minus the expected posterior entropy over the
outcome law (v without feedback, u with feedback).  The rate of a pipelined
channel is M(t_meas) / max(t_prep, t_meas); the receiver picks t_meas to
maximize it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate

from .closed_form import gamma_integral
from .qubit import binary_entropy, shannon_entropy

log = logging.getLogger(__name__)

LN2 = math.log(2.0)
QUAD_TOL = 1e-8
ENVELOPE_SIGMAS = 10.0
SEARCH_HORIZON = 50.0  # upper bracket for t_meas, in units of 1/gamma
_COARSE_POINTS = 25


class NumericError(ArithmeticError):
    pass


@dataclass
class MICurve:
    t: np.ndarray
    M: np.ndarray
    method: str  # "quadrature" | "monte-carlo"
    err: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass(frozen=True)
class RatePoint:
    t_prep: float
    t_meas_opt: float
    rate: float
    percent_increase: float = float("nan")
    feedback: bool = False
    baseline_rate: float = float("nan")
    baseline_t_meas: float = float("nan")
    scanned: bool = False  # dense-scan fallback was needed


def _h2(p):
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log(p) - (1.0 - p) * math.log1p(-p)


def _two_gaussian_average(h, scale, weight_plus, bound):
    """∫ h(w) [w+ N(w; 1, s^2) + w- N(w; -1, s^2)] dw over a truncated domain."""
    inv = 1.0 / (2.0 * scale * scale)
    norm = 1.0 / (scale * math.sqrt(2.0 * math.pi))
    wp, wm = weight_plus, 1.0 - weight_plus

    def integrand(w):
        return h(w) * norm * (wp * math.exp(-inv * (w - 1.0) ** 2) + wm * math.exp(-inv * (w + 1.0) ** 2))

    lo, hi = -1.0 - bound, 1.0 + bound
    pts = [p for p in (-1.0, 0.0, 1.0) if lo < p < hi]
    val, err = integrate.quad(integrand, lo, hi, points=pts, epsabs=1e-11, epsrel=1e-11, limit=400)
    if not math.isfinite(val) or err > QUAD_TOL:
        raise NumericError(f"quadrature error estimate {err:.2e} above {QUAD_TOL:.0e}")
    return val


def mutual_info_nofb(theta: float, gamma: float, t: float, p1: float = 0.5) -> float:
    """M(t) without feedback, nats."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return 0.0
    s = math.sin(theta)
    p2 = 1.0 - p1
    a_per_v = 8.0 * gamma * t
    scale = 1.0 / math.sqrt(a_per_v)

    def h(v):
        tau = math.tanh(a_per_v * v)
        w1 = p1 * (1.0 + s * tau)
        w2 = p2 * (1.0 - s * tau)
        return _h2(w1 / (w1 + w2))

    x_mix = (p1 - p2) * s
    avg = _two_gaussian_average(h, scale, 0.5 * (1.0 + x_mix), ENVELOPE_SIGMAS * scale)
    return shannon_entropy((p1, p2)) - avg


def mutual_info_fb(theta0: float, gamma: float, t: float, p1: float = 0.5) -> float:
    """M(t) with the symmetry-restoring feedback, nats."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    G = gamma_integral(theta0, gamma, t)
    if G == 0.0:
        return 0.0
    bias = 0.5 * math.log(p1 / (1.0 - p1))
    scale = 1.0 / math.sqrt(8.0 * G)

    def h(u):
        return _h2(0.5 * (1.0 + math.tanh(8.0 * G * u + bias)))

    avg = _two_gaussian_average(h, scale, p1, ENVELOPE_SIGMAS * scale)
    return shannon_entropy((p1, 1.0 - p1)) - avg


def mutual_info(theta: float, gamma: float, t: float, feedback: bool) -> float:
    return mutual_info_fb(theta, gamma, t) if feedback else mutual_info_nofb(theta, gamma, t)


def mi_curve(theta: float, gamma: float, t_grid, feedback: bool = False) -> MICurve:
    t_grid = np.asarray(t_grid, dtype=float)
    M = np.array([mutual_info(theta, gamma, t, feedback) for t in t_grid])
    return MICurve(t=t_grid, M=M, method="quadrature", err=np.full(len(t_grid), QUAD_TOL))


def mutual_info_mc(samples, priors=(0.5, 0.5)) -> tuple[float, float]:
    """Monte Carlo estimate from samples of P1(t), with a jackknife standard error."""
    p = np.asarray(samples, dtype=float)
    n = p.size
    if n < 100:
        raise ValueError(f"need at least 100 samples, got {n}")
    h = binary_entropy(p)
    total = h.sum()
    loo = (total - h) / (n - 1)  # leave-one-out means
    est = shannon_entropy(priors) - total / n
    se = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return float(est), float(se)


def transmission_rate(M: float, t_prep: float, t_meas: float) -> float:
    if t_prep <= 0 or t_meas <= 0:
        raise ValueError("times must be positive")
    return M / max(t_prep, t_meas)


def golden_section_max(f, lo, hi, rtol=1e-6, max_iter=200):
    """Maximize a unimodal f on [lo, hi]; returns (x, f(x)), ties toward smaller x."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= rtol * max(abs(a), abs(b), 1e-300):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    best = min(((fc, c), (fd, d)), key=lambda p: (-p[0], p[1]))
    return best[1], best[0]


def _is_unimodal(values, slack=1e-12):
    i = int(np.argmax(values))
    rising = np.all(np.diff(values[: i + 1]) >= -slack)
    falling = np.all(np.diff(values[i:]) <= slack)
    return bool(rising and falling), i


@lru_cache(maxsize=200_000)
def _mi_cached(theta, gamma, t, feedback):
    return mutual_info(theta, gamma, t, feedback)


def optimal_rate(theta: float, gamma: float, t_prep: float, feedback: bool) -> RatePoint:
    """Best pipelined rate for a given preparation time.

    M is nondecreasing, so measuring for less than t_prep never helps and the
    search runs over t_meas in [t_prep, SEARCH_HORIZON / gamma].
    """
    if t_prep <= 0:
        raise ValueError("t_prep must be positive")
    hi = max(SEARCH_HORIZON / gamma, t_prep)

    def rate(t):
        return _mi_cached(theta, gamma, t, feedback) / max(t_prep, t)

    if hi == t_prep:
        return RatePoint(t_prep, t_prep, rate(t_prep), feedback=feedback)
    grid = t_prep * np.geomspace(1.0, hi / t_prep, _COARSE_POINTS)
    grid[0], grid[-1] = t_prep, hi
    values = np.array([rate(t) for t in grid])
    M = values * grid
    if np.any(np.diff(M) < -1e-8):
        raise NumericError(f"M(t) decreases on the search grid (theta={theta}, t_prep={t_prep})")
    unimodal, i = _is_unimodal(values)
    scanned = False
    if not unimodal:
        log.warning("rate not unimodal for theta=%g t_prep=%g; dense scan", theta, t_prep)
        scanned = True
        grid = t_prep * np.geomspace(1.0, hi / t_prep, 20 * _COARSE_POINTS)
        grid[0], grid[-1] = t_prep, hi
        values = np.array([rate(t) for t in grid])
        i = int(np.argmax(values))
    lo_b = grid[max(i - 1, 0)]
    hi_b = grid[min(i + 1, len(grid) - 1)]
    t_opt, r_opt = golden_section_max(rate, lo_b, hi_b)
    for t_c, r_c in ((grid[i], values[i]), (lo_b, rate(lo_b))):
        if r_c > r_opt or (r_c == r_opt and t_c < t_opt):
            t_opt, r_opt = t_c, r_c
    return RatePoint(float(t_prep), float(t_opt), float(r_opt), feedback=feedback, scanned=scanned)


def percent_increase(theta: float, gamma: float, t_prep: float) -> RatePoint:
    base = optimal_rate(theta, gamma, t_prep, feedback=False)
    fb = optimal_rate(theta, gamma, t_prep, feedback=True)
    inc = 100.0 * (fb.rate - base.rate) / base.rate if base.rate > 0 else 0.0
    return RatePoint(
        t_prep=fb.t_prep,
        t_meas_opt=fb.t_meas_opt,
        rate=fb.rate,
        percent_increase=inc,
        feedback=True,
        baseline_rate=base.rate,
        baseline_t_meas=base.t_meas_opt,
        scanned=fb.scanned or base.scanned,
    )


def enhancement_curve(theta: float, gamma: float, t_prep_grid) -> list[RatePoint]:
    grid = np.asarray(t_prep_grid, dtype=float)
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("t_prep grid must be positive and increasing")
    return [percent_increase(theta, gamma, float(tp)) for tp in grid]


def enhancement_peak(theta: float, gamma: float, t_prep_grid) -> RatePoint:
    """Peak of the enhancement curve, refined by golden section in log t_prep."""
    curve = enhancement_curve(theta, gamma, t_prep_grid)
    inc = np.array([p.percent_increase for p in curve])
    i = int(np.argmax(inc))
    grid = np.asarray(t_prep_grid, dtype=float)
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    if lo == hi:
        return curve[i]
    s, _ = golden_section_max(
        lambda s: percent_increase(theta, gamma, math.exp(s)).percent_increase, math.log(lo), math.log(hi), rtol=1e-4
    )
    best = percent_increase(theta, gamma, math.exp(s))
    return best if best.percent_increase >= curve[i].percent_increase else curve[i]
