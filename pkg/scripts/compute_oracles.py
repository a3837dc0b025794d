"""Recompute the reference values frozen into the test suite.

Uses mpmath at 40 digits and only textbook formulas, so nothing here depends
on the package.  Run:  python3 scripts/compute_oracles.py
"""

from mpmath import mp, mpf, binomial, cos, exp, log, pi, quad, sin, sqrt, tan, inf

mp.dps = 40


def H(*p):
    return -sum(q * log(q) for q in p if q > 0)


def opt_mi(theta):
    # Helstrom-type two-outcome measurement: outcome probabilities (1 +/- sin)/2
    q = (1 + sin(theta)) / 2
    return log(2) - H(q, 1 - q)


def mi_nofb(theta, gt):
    """Trace form: p(v) ∝ exp(-4gt(v^2+1)) Tr[exp(8gt v sx) rho]."""
    s = sin(theta)

    def tr(v, x):  # Tr[exp(a sx) rho] = cosh a + x sinh a
        a = 8 * gt * v
        return (exp(a) + exp(-a)) / 2 + x * (exp(a) - exp(-a)) / 2

    def f(v):
        pref = sqrt(4 * gt / pi) * exp(-4 * gt * (v * v + 1))
        t1, t2 = tr(v, s) / 2, tr(v, -s) / 2
        pv = pref * (t1 + t2)
        return pv * H(t1 / (t1 + t2), t2 / (t1 + t2))

    return log(2) - quad(f, [-inf, -1, 0, 1, inf])


def Gamma(theta, gt):
    # integral of sin^2 theta(t), tan theta(t) = tan theta0 exp(-4 t)
    return quad(lambda s: 1 / (1 + 1 / (tan(theta) ** 2 * exp(-8 * s))), [0, gt])


def mi_fb(theta, gt):
    G = Gamma(theta, gt)

    def f(u):
        w1 = exp(-4 * G * (u - 1) ** 2)
        w2 = exp(-4 * G * (u + 1) ** 2)
        pu = sqrt(4 * G / pi) * (w1 + w2) / 2
        return pu * H(w1 / (w1 + w2), w2 / (w1 + w2))

    return log(2) - quad(f, [-inf, -1, 0, 1, inf])


def weak_tree_mi(theta, k, n):
    # P(+ | sigma_x = +1) = k, P(+ | -1) = 1 - k; each coding state mixes the two
    s = sin(theta)
    tot = mpf(0)
    for m in range(n + 1):
        c = binomial(n, m)
        lik = []
        for x in (s, -s):
            lik.append(c * ((1 + x) / 2 * k**m * (1 - k) ** (n - m) + (1 - x) / 2 * (1 - k) ** m * k ** (n - m)))
        w = (lik[0] + lik[1]) / 2
        tot += w * H(lik[0] / 2 / w, lik[1] / 2 / w)
    return log(2) - tot


if __name__ == "__main__":
    for name, th in (("pi/8", pi / 8), ("pi/4", pi / 4), ("3pi/8", 3 * pi / 8)):
        print(f"optimal_mutual_info({name}) = {mp.nstr(opt_mi(th), 15)}")
    print("H(0.8535534, 0.1464466) =", mp.nstr(H(mpf("0.8535534"), mpf("0.1464466")), 15))
    print("mi_nofb(pi/4, gt=0.5) =", mp.nstr(mi_nofb(pi / 4, mpf("0.5")), 15))
    print("mi_nofb(pi/8, gt=1) =", mp.nstr(mi_nofb(pi / 8, 1), 15))
    print("mi_fb(pi/8, gt=1) =", mp.nstr(mi_fb(pi / 8, 1), 15))
    print("mi_fb(pi/8, gt=20) =", mp.nstr(mi_fb(pi / 8, 20), 15))
    print("Gamma(pi/4, gt=1) =", mp.nstr(Gamma(pi / 4, 1), 15))
    print("Gamma(pi/8, gt=inf) =", mp.nstr(log(1 + tan(pi / 8) ** 2) / 8, 15))
    for n in (1, 5, 10, 12):
        print(f"weak_tree_mi(pi/4, k=0.8, n={n}) =", mp.nstr(weak_tree_mi(pi / 4, mpf("0.8"), n), 15))
    print("weak_tree_mi(pi/8, k=0.7, n=12, priors equal) =", mp.nstr(weak_tree_mi(pi / 8, mpf("0.7"), 12), 15))
