"""Regenerate the frozen reference values in ``tests/oracle_values.py``.

Every value is computed with mpmath at 30 digits from the defining integrals
(first-passage densities and payoffs), without calling into ``skewvol``.
Run: ``python3 tests/oracles/make_oracles.py``.
"""

import mpmath as mp

mp.mp.dps = 30
SP, SM = mp.mpf("0.2"), mp.mpf("0.9")
P = SM / (SP + SM)
Q = SP / (SP + SM)


def h(s, y):
    y = abs(y)
    return y / mp.sqrt(2 * mp.pi * s**3) * mp.exp(-y * y / (2 * s))


def psi(a, s, k):
    # integral of exp(a x) h(s, x) over the half-line beyond k
    if k >= 0:
        return mp.quad(lambda x: mp.exp(a * x) * h(s, x), [k, k + 1, mp.inf])
    return mp.quad(lambda x: mp.exp(a * x) * h(s, x), [-mp.inf, k - 1, k])


def phi(t, sp=SP, sm=SM):
    # sp*sm times the mean over [sm, sp] of exp(-x^2 t/8) / (x^2 sqrt(2 pi t))
    f = lambda x: mp.exp(-x * x * t / 8) / (x * x * mp.sqrt(2 * mp.pi * t))
    return sp * sm * mp.quad(f, [sp, sm]) / (sm - sp)


def phi_integral(T):
    return mp.quad(phi, [0, T])


def density(x, T):
    # density of X_T at x != 0
    if x > 0:
        alpha, sx = P, SP
    else:
        alpha, sx = Q, SM
    f = lambda s: phi(T - s) * h(s, x) * mp.exp(-sx * sx * s / 8)
    return 2 * alpha * mp.exp(-sx * x / 2) * mp.quad(f, [0, T / 4, T])


def call(K, T):
    # E[(S_T - K)^+] for K >= 1: S = exp(SP x) on x >= 0
    k = mp.log(K) / SP

    def inner(s):
        g = lambda x: (mp.exp(SP * x) - K) * h(s, x) * mp.exp(-SP * x / 2)
        return mp.quad(g, [k, k + 1, mp.inf])

    f = lambda s: phi(T - s) * mp.exp(-SP * SP * s / 8) * inner(s)
    return 2 * P * mp.quad(f, [0, T / 4, T])


def put(K, T):
    k = mp.log(K) / SM

    def inner(s):
        g = lambda x: (K - mp.exp(SM * x)) * h(s, x) * mp.exp(-SM * x / 2)
        return mp.quad(g, [-mp.inf, k - 1, k])

    f = lambda s: phi(T - s) * mp.exp(-SM * SM * s / 8) * inner(s)
    return 2 * Q * mp.quad(f, [0, T / 4, T])


if __name__ == "__main__":
    out = {
        "PSI": {(a, s, k): psi(mp.mpf(a), mp.mpf(s), mp.mpf(k))
                for a, s, k in [("0.1", "1", "0"), ("0.45", "0.3", "0.5"), ("-0.1", "2", "0.2"),
                                ("0.45", "0.5", "-1"), ("-0.45", "0.5", "-0.2")]},
        "PHI": {t: phi(mp.mpf(t)) for t in ("0.01", "0.5", "1", "5")},
        "PHI_INTEGRAL": {T: phi_integral(mp.mpf(T)) for T in ("0.1", "1", "5")},
        "DENSITY_T1": {x: density(mp.mpf(x), 1) for x in ("-1.5", "-0.3", "0.2", "1.7")},
        "CALL": {(K, T): call(mp.mpf(K), mp.mpf(T)) for K, T in [("1.1", "1"), ("1", "1"), ("1.3", "5")]},
        "PUT": {(K, T): put(mp.mpf(K), mp.mpf(T)) for K, T in [("0.8", "1"), ("0.6", "0.1")]},
    }
    for name, table in out.items():
        print(f"{name} = {{")
        for key, val in table.items():
            print(f"    {key!r}: {mp.nstr(val, 20)},")
        print("}")
