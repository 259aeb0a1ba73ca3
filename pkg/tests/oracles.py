"""Independent reference computations used to freeze expected values in the tests.

Each oracle takes a different numerical route from the package: stdlib or
scipy special functions, adaptive quadrature, dense grid scans, brute-force
loops. `python tests/oracles.py` prints the values that the tests freeze.
"""

import itertools
import math

import numpy as np
from scipy import integrate, special


def newton_tanh_root(beta, start=1.0, iters=100):
    m = start
    for _ in range(iters):
        t = math.tanh(beta * m)
        m -= (m - t) / (1.0 - beta * (1.0 - t * t))
    return m


def deterministic_grid(alpha, points=1_000_000):
    """Largest positive root of erf(y) = y (sqrt(2 alpha) + 2/sqrt(pi) exp(-y^2)) by a dense scan."""
    ys = np.linspace(1e-6, 1.0 / math.sqrt(2.0 * alpha) + 1.0, points)
    f = special.erf(ys) - ys * (math.sqrt(2.0 * alpha) + 2.0 / math.sqrt(math.pi) * np.exp(-ys * ys))
    idx = np.nonzero((f[:-1] > 0) & (f[1:] <= 0))[0]
    if idx.size == 0:
        return 0.0, 0.5
    k = idx[-1]
    y = ys[k] - f[k] * (ys[k + 1] - ys[k]) / (f[k + 1] - f[k])
    return float(special.erf(y)), float(0.5 * special.erfc(y))


def _gauss(f):
    return integrate.quad(lambda z: f(z) * math.exp(-z * z / 2) / math.sqrt(2 * math.pi), -12, 12,
                          epsabs=1e-14, epsrel=1e-13, limit=400)[0]


def coupled_quad(alpha, beta, iters=20000, tol=1e-13):
    """Damped iteration of the (m, q) mean-field equations with adaptive quadrature."""
    m, r = 1.0, 0.0
    for _ in range(iters):
        sigma = math.sqrt(alpha * (1 - r) / (1 - beta * r) ** 2)
        t = _gauss(lambda z: math.tanh(beta * (m + sigma * z)))
        s = _gauss(lambda z: 1.0 / math.cosh(beta * (m + sigma * z)) ** 2)
        if max(abs(t - m), abs(s - r)) < tol:
            return t, 1 - s
        m, r = 0.5 * (m + t), 0.5 * (r + s)
    return m, 1 - r


def critical_alpha_scan(beta_inv, lo=0.0, hi=0.14, step=2e-4, threshold=1e-4):
    """Largest alpha on a grid at which the quadrature iteration keeps m > threshold."""
    last = 0.0
    for a in np.arange(lo + step, hi, step):
        if coupled_quad(a, 1.0 / beta_inv, iters=4000, tol=1e-9)[0] > threshold:
            last = a
        else:
            break
    return last


def kqueens_count(k):
    return sum(1 for p in itertools.permutations(range(k))
               if all(abs(p[i] - p[j]) != j - i for i in range(k) for j in range(i + 1, k)))


if __name__ == "__main__":
    print("m(2) =", repr(newton_tanh_root(2.0)))
    print("deterministic(0.1) =", deterministic_grid(0.1))
    print("coupled(0.05, 20) =", coupled_quad(0.05, 20.0))
    print("critical_alpha(0.5) in", critical_alpha_scan(0.5))
    print("8-queens solutions =", kqueens_count(8))
