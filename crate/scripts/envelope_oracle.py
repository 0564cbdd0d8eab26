"""Reference values and expansion coefficients for the diffusion envelope C(z).

Run with mpmath/sympy installed:

    python3 scripts/envelope_oracle.py

Writes crates/core/tests/data/envelope_oracle.csv (60-digit evaluation at
100 log-spaced points in [1e-4, 1e4]) and prints the small-z and large-z
expansion coefficients hard-coded in crates/core/src/envelopes.rs.
"""
import sympy as sp
from mpmath import mp, mpf, sqrt, pi, erfc, exp, log10

mp.dps = 60


def envelope(z):
    z = mpf(z)
    x = 1 / sqrt(z)
    poly = z ** mpf(-1.5) - mpf(1.5) * z ** mpf(-0.5) + sqrt(pi) / 4 + 3 * sqrt(z) - 3 * sqrt(pi) / 2 * z
    tail = sqrt(pi / z) * erfc(x) * exp(1 / z) * (
        -z ** mpf(-1.5) + z ** mpf(-0.5) - mpf(7) / 4 * sqrt(z) + mpf(1.5) * z ** mpf(1.5)
    )
    return 4 / sqrt(pi) * (poly + tail)


def write_table(path):
    with open(path, "w") as fh:
        fh.write("# z,C(z) at 60 significant digits\n")
        for k in range(100):
            z = mpf(10) ** (-4 + 8 * mpf(k) / 99)
            fh.write(f"{mp.nstr(z, 30)},{mp.nstr(envelope(z), 30)}\n")


def coefficients():
    x = sp.symbols("x", positive=True)  # x = z^(-1/2)
    z = sp.symbols("z", positive=True)
    p = -x**3 + x - sp.Rational(7, 4) / x + sp.Rational(3, 2) / x**3
    poly = x**3 - sp.Rational(3, 2) * x + sp.sqrt(sp.pi) / 4 + 3 / x - 3 * sp.sqrt(sp.pi) / 2 / x**2
    # large z: erfcx(x) = sum (-x)^n / Gamma(1 + n/2), convergent
    n_terms = 48
    erfcx = sum((-x) ** n / sp.gamma(sp.Rational(n, 2) + 1) for n in range(n_terms + 8))
    large = sp.expand(4 / sp.sqrt(sp.pi) * (poly + sp.sqrt(sp.pi) * x * erfcx * p))
    print("large-z coefficients of x^m, m = 3..", n_terms)
    for m in range(3, n_terms + 1):
        print(f"    {sp.N(large.coeff(x, m), 22)},")
    # small z: sqrt(pi) x erfcx(x) ~ sum (-1)^k (2k-1)!! (z/2)^k, asymptotic.
    # Expand in s = sqrt(z); only odd powers of s survive besides 1 - 6z.
    s = sp.symbols("s", positive=True)
    k_terms = 16
    series = sum((-1) ** k * sp.factorial2(2 * k - 1) * (s**2 / 2) ** k for k in range(k_terms + 3))
    ps = -s**-3 + 1 / s - sp.Rational(7, 4) * s + sp.Rational(3, 2) * s**3
    polys = s**-3 - sp.Rational(3, 2) / s + 3 * s
    small = sp.expand(4 / sp.sqrt(sp.pi) * (polys + series * ps))
    print("small-z coefficients of z^(k+1/2), k = 0..", k_terms)
    for k in range(-2, k_terms + 1):
        print(f"    k={k}: {sp.N(small.coeff(s, 2 * k + 1), 22)},")
    for k in range(0, 3):
        print(f"    even power s^{2*k}: {sp.N(small.coeff(s, 2 * k), 22)}")


if __name__ == "__main__":
    write_table("crates/core/tests/data/envelope_oracle.csv")
    coefficients()
