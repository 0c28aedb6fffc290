"""Independent reference computations used to produce frozen test fixtures.

Nothing here imports the package; each routine takes a different numerical
route from the code it checks.
"""

import math

import numpy as np


def mode_integrand(r, s1, s2):
    return 1.0 / ((s1 * s2 - r**2 * np.cos(r)) ** 2 + r**2 * (s1 - r * np.sin(r)) ** 2)


def _composite_gl(func, a, b, width, order=20):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, int(math.ceil((b - a) / width)) + 1)
    total = 0.0
    for lo in range(0, len(edges) - 1, 20000):
        left = edges[lo : lo + 20000]
        right = edges[lo + 1 : lo + 20001]
        left = left[: len(right)]
        half = 0.5 * (right - left)
        mid = 0.5 * (right + left)
        nodes = mid[:, None] + half[:, None] * x[None, :]
        total += float(np.sum(half * (func(nodes) @ w)))
    return total


def mode_integral_fixed(s1, s2, width=0.01):
    """2 * int_0^1e6 with fixed-order composite Gauss-Legendre panels."""
    f = lambda r: mode_integrand(r, s1, s2)  # noqa: E731
    head = _composite_gl(f, 0.0, 50.0, width)
    mid = _composite_gl(f, 50.0, 1e4, 10 * width)
    far = _composite_gl(f, 1e4, 1e6, 100.0, order=8)
    return 2.0 * (head + mid + far)


def mode_integral_richardson(s1, s2, width=0.01):
    coarse = mode_integral_fixed(s1, s2, 2 * width)
    fine = mode_integral_fixed(s1, s2, width)
    return fine, abs(fine - coarse)


def bisect_root(func, lo, hi, iters=300):
    flo = func(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = func(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def erf_series(x, terms=200):
    """Maclaurin series of erf; adequate for |x| <= 3."""
    total = 0.0
    term = x
    for k in range(terms):
        total += term / (2 * k + 1)
        term *= -x * x / (k + 1)
    return 2.0 / math.sqrt(math.pi) * total


def erfinv_newton(y, x0=0.0, iters=60):
    x = x0
    for _ in range(iters):
        x -= (erf_series(x) - y) / (2.0 / math.sqrt(math.pi) * math.exp(-x * x))
    return x
