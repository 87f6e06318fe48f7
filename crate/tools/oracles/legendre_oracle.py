"""Y_lm(θ,0), (m/sinθ)Y_lm and ∂θ Y_lm at real cosθ > 1 from the Legendre
polynomial definition, using exact rational derivatives and 60-digit floats."""
import sys
from fractions import Fraction
from math import comb, factorial

import mpmath as mp

mp.mp.dps = 60


def legendre_coeffs(l):
    # Rodrigues: P_l(x) = 1/(2^l l!) d^l/dx^l (x^2-1)^l
    c = [Fraction(0)] * (2 * l + 1)
    for k in range(l + 1):
        c[2 * k] = Fraction(comb(l, k) * (-1) ** (l - k))
    for _ in range(l):
        c = [c[i + 1] * (i + 1) for i in range(len(c) - 1)]
    return [v / (2**l * factorial(l)) for v in c]


def deriv(c, a):
    for _ in range(a):
        c = [c[i + 1] * (i + 1) for i in range(len(c) - 1)]
    return c


def poly(c, x):
    v = sum(v * x**i for i, v in enumerate(c))
    return mp.mpf(v.numerator) / v.denominator


def values(l, m, x):
    a = abs(m)
    sin_t = mp.mpc(0, -1) * mp.sqrt(x * x - 1)
    norm = mp.sqrt(mp.mpf(2 * l + 1) / (4 * mp.pi) * mp.factorial(l - a) / mp.factorial(l + a))
    c = legendre_coeffs(l)
    da = poly(deriv(c, a), Fraction(x))
    da1 = poly(deriv(c, a + 1), Fraction(x))
    # P_l^a = (-1)^a (1-x^2)^{a/2} d^a P_l, with (1-x^2)^{1/2} = sinθ
    y = (-1) ** a * norm * sin_t**a * da
    dy_dx = (-1) ** a * norm * (sin_t**a * da1 - a * x * sin_t ** (a - 2) * da)
    if m < 0:
        y *= (-1) ** a
        dy_dx *= (-1) ** a
    pi = m / sin_t * y
    tau = -sin_t * dy_dx
    return y, pi, tau


if __name__ == "__main__":
    l, m, x = (int(sys.argv[1]), int(sys.argv[2]), int(sys.argv[3])) if len(sys.argv) > 3 else (40, 7, 3)
    for name, v in zip(("Y", "Pi", "tau"), values(l, m, x)):
        print(f"{name} {mp.nstr(v.real, 20)} {mp.nstr(v.imag, 20)}")
