"""Closed-form laws for the posterior of the preparation.

Without feedback the state at time t depends on the record only through
v = y(t)/t, and

    P_i(t) ∝ P_i(0) Tr[exp(8 gamma t v sigma_x) rho_i(0)]
    p(v)   = sqrt(4 gamma t / pi) exp(-4 gamma t (v^2 + 1)) Tr[exp(8 gamma t v sigma_x) rho(0)]

i.e. v is a two-Gaussian mixture with means +/-1 and variance 1/(8 gamma t).

With feedback the filter is a classical two-state measurement whose
accumulated strength is Gamma(t) = ∫ gamma sin^2 theta(t') dt', with
tan theta(t) = tan theta0 exp(-4 gamma t).  The outcome u has components
centred on +1 (preparation 1) and -1 (preparation 2), variance 1/(8 Gamma),
and P_+ ∝ P_+(0) exp(8 Gamma u).

Exponentials are handled in log space so gamma t up to ~10 and large |v|
stay finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .qubit import coding_states


def _log_trace_exp(a, x):
    """log Tr[exp(a sigma_x) rho] for a state with <sigma_x> = x."""
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore"):
        lp = math.log(0.5 * (1.0 + x)) if x > -1.0 else -np.inf
        lm = math.log(0.5 * (1.0 - x)) if x < 1.0 else -np.inf
    return np.logaddexp(lp + a, lm - a)


@dataclass(frozen=True)
class NoFeedbackLaw:
    gamma: float
    t: float
    theta: float
    p1: float = 0.5
    exponent_axis: str = "x"  # "z": sigma_z exponent, a deliberately wrong variant for negative controls

    @property
    def x1(self) -> float:
        return coding_states(self.theta).rho1.x

    @property
    def x2(self) -> float:
        return coding_states(self.theta).rho2.x

    @property
    def x_mix(self) -> float:
        return self.p1 * self.x1 + (1.0 - self.p1) * self.x2

    @property
    def priors(self):
        return (self.p1, 1.0 - self.p1)

    def _component(self, i):
        # Tr[exp(a sigma) rho_i] only needs <sigma> of rho_i along the exponent axis
        e = coding_states(self.theta).rho1 if i == 1 else coding_states(self.theta).rho2
        return e.x if self.exponent_axis == "x" else e.z

    def scale(self) -> float:
        """Standard deviation of each Gaussian component of v."""
        return 1.0 / math.sqrt(8.0 * self.gamma * self.t)


@dataclass(frozen=True)
class FeedbackLaw:
    theta0: float
    gamma: float
    t: float
    p1: float = 0.5

    @property
    def Gamma(self) -> float:
        return gamma_integral(self.theta0, self.gamma, self.t)

    @property
    def priors(self):
        return (self.p1, 1.0 - self.p1)

    def scale(self) -> float:
        return 1.0 / math.sqrt(8.0 * self.Gamma)


def _log_posterior_pair(l1, l2, p1):
    with np.errstate(divide="ignore"):
        a = (math.log(p1) if p1 > 0 else -np.inf) + l1
        b = (math.log(1.0 - p1) if p1 < 1 else -np.inf) + l2
    tot = np.logaddexp(a, b)
    return np.exp(a - tot), np.exp(b - tot)


def posterior_v(law: NoFeedbackLaw, v):
    """(P1(t), P2(t)) given the outcome parameter v."""
    a = 8.0 * law.gamma * law.t * np.asarray(v, dtype=float)
    l1 = _log_trace_exp(a, law._component(1))
    l2 = _log_trace_exp(a, law._component(2))
    p1, _ = _log_posterior_pair(l1, l2, law.p1)
    return p1, 1.0 - p1


def density_v(law: NoFeedbackLaw, v):
    if law.t <= 0:
        raise ValueError("density of v is defined for t > 0 only")
    gt = law.gamma * law.t
    v = np.asarray(v, dtype=float)
    if law.exponent_axis == "x":
        x = law.x_mix
        # expanded form: two Gaussians of weight (1 +/- x)/2 centred on +/-1
        return math.sqrt(4.0 * gt / math.pi) * (
            0.5 * (1.0 + x) * np.exp(-4.0 * gt * (v - 1.0) ** 2)
            + 0.5 * (1.0 - x) * np.exp(-4.0 * gt * (v + 1.0) ** 2)
        )
    zmix = law.p1 * law._component(1) + (1.0 - law.p1) * law._component(2)
    return np.exp(0.5 * math.log(4.0 * gt / math.pi) - 4.0 * gt * (v * v + 1.0) + _log_trace_exp(8.0 * gt * v, zmix))


def cdf_v(law: NoFeedbackLaw, v):
    s = math.sqrt(8.0 * law.gamma * law.t)
    x = law.x_mix
    v = np.asarray(v, dtype=float)
    return 0.5 * (1.0 + x) * special.ndtr((v - 1.0) * s) + 0.5 * (1.0 - x) * special.ndtr((v + 1.0) * s)


def p1_cdf_nofb(law: NoFeedbackLaw, p):
    """CDF of P1(t) induced by the law of v (P1 is increasing in v)."""
    p = np.asarray(p, dtype=float)
    s1, s2 = law.x1, law.x2
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (p / (1.0 - p)) * ((1.0 - law.p1) / law.p1)
        # r = (1 + s1 T)/(1 + s2 T) with T = tanh(8 gamma t v)
        T = (r - 1.0) / (s1 - r * s2)
        v = np.arctanh(np.clip(T, -1.0, 1.0)) / (8.0 * law.gamma * law.t)
    out = cdf_v(law, v)
    out = np.where(T >= 1.0, 1.0, np.where(T <= -1.0, 0.0, out))
    out = np.where(p <= 0.0, 0.0, np.where(p >= 1.0, 1.0, out))
    return out


def gamma_integral(theta0: float, gamma: float, t: float) -> float:
    """Accumulated classical strength Gamma(t) = (1/8) ln[(1+tan^2)/(1+tan^2 e^{-8 gamma t})]."""
    if not (0.0 <= theta0 <= math.pi / 2):
        raise ValueError("theta0 must lie in [0, pi/2]")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if theta0 == math.pi / 2:
        return gamma * t
    tan2 = math.tan(theta0) ** 2
    # (1/8)[ln(1+tan2) - ln(1+tan2 e^{-8gt})], written to stay accurate as tan2 grows
    return 0.125 * (math.log1p(tan2) - math.log1p(tan2 * math.exp(-8.0 * gamma * t)))


def classical_strength(theta0: float, gamma: float, t):
    """gamma_c(t) = gamma sin^2 theta(t), tan theta(t) = tan theta0 e^{-4 gamma t}."""
    if theta0 == math.pi / 2:
        return gamma * np.ones_like(np.asarray(t, dtype=float))
    xi = math.tan(theta0) * np.exp(-4.0 * gamma * np.asarray(t, dtype=float))
    return gamma * xi * xi / (1.0 + xi * xi)


def feedback_tan_theta(theta0: float, gamma: float, t):
    return math.tan(theta0) * np.exp(-4.0 * gamma * np.asarray(t, dtype=float))


def posterior_u(law: FeedbackLaw, u):
    G = law.Gamma
    a = 8.0 * G * np.asarray(u, dtype=float)
    p1, _ = _log_posterior_pair(a, -a, law.p1)
    return p1, 1.0 - p1


def density_u(law: FeedbackLaw, u):
    G = law.Gamma
    if G <= 0:
        raise ValueError("density of u is degenerate at Gamma = 0")
    u = np.asarray(u, dtype=float)
    return math.sqrt(4.0 * G / math.pi) * (
        law.p1 * np.exp(-4.0 * G * (u - 1.0) ** 2) + (1.0 - law.p1) * np.exp(-4.0 * G * (u + 1.0) ** 2)
    )


def cdf_u(law: FeedbackLaw, u):
    s = math.sqrt(8.0 * law.Gamma)
    u = np.asarray(u, dtype=float)
    return law.p1 * special.ndtr((u - 1.0) * s) + (1.0 - law.p1) * special.ndtr((u + 1.0) * s)


def p1_cdf_fb(law: FeedbackLaw, p):
    p = np.asarray(p, dtype=float)
    G = law.Gamma
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = np.log(p) - np.log1p(-p) - math.log(law.p1) + math.log1p(-law.p1)
        u = lr / (16.0 * G)
    out = cdf_u(law, u)
    return np.where(p <= 0.0, 0.0, np.where(p >= 1.0, 1.0, out))


def pushforward_cdf(posterior, density, lo, hi, n=200_001):
    """Numerical CDF of P1 = posterior(w) with w ~ density on [lo, hi].

    Makes no use of monotonicity or of the Gaussian form, so it follows
    whatever ``posterior``/``density`` actually compute.
    """
    w = np.linspace(lo, hi, n)
    dens = density(w)
    mass = np.empty(n)
    # trapezoid weights
    h = w[1] - w[0]
    mass[:] = dens * h
    mass[0] *= 0.5
    mass[-1] *= 0.5
    p1 = np.asarray(posterior(w)[0], dtype=float)
    order = np.argsort(p1, kind="stable")
    ps = p1[order]
    cum = np.cumsum(mass[order])
    cum /= cum[-1]

    def cdf(p):
        idx = np.searchsorted(ps, np.asarray(p, dtype=float), side="right")
        return np.where(idx == 0, 0.0, cum[np.maximum(idx - 1, 0)])

    return cdf
