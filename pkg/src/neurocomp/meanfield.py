"""Self-consistent mean-field equations of the stochastic Hopfield network.

Three levels of description are solved here:

* the single-pattern equation m = tanh(beta m);
* the coupled equations for (m1, q, sigma_z) at storage capacity alpha,
      m1 = <tanh(beta (m1 + z))>,  q = <tanh^2(beta (m1 + z))>,
      sigma_z^2 = alpha q / [1 - beta (1 - q)]^2,  z ~ N(0, sigma_z^2);
* their zero-noise limit, which collapses to one equation for
  y = m1 / sqrt(2 sigma^2):  y (sqrt(2 alpha) + 2/sqrt(pi) exp(-y^2)) = erf(y).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import Iterable

import numpy as np

from .numerics import erf, erfc, gaussian_expectation

DAMPING = 0.5
TOLERANCE = 1e-10
MAX_ITERATIONS = 100_000
HERMITE_ORDER = 60
# Gauss-Hermite handles the tanh integrands only while their transition width
# 1/beta is not much narrower than the Gaussian spread sigma_z.
HERMITE_LIMIT = 1.0
REPLICA_ALPHA_C = 0.138187


def solve_m1(beta: float) -> float:
    """Largest non-negative root of m = tanh(beta m).

    Returns 0 for beta <= 1. For beta > 1 Newton's method is started at m = 1;
    m - tanh(beta m) is convex on m > 0, so the iterates decrease monotonically
    onto the largest root.
    """
    if beta < 0:
        raise ValueError("beta must be non-negative")
    if beta <= 1.0:
        return 0.0
    if math.isinf(beta):
        return 1.0
    m = 1.0
    for _ in range(200):
        t = math.tanh(beta * m)
        f = m - t
        fp = 1.0 - beta * (1.0 - t * t)
        step = f / fp
        m -= step
        if abs(step) <= 1e-16 * max(m, 1e-300):
            break
    return m


@dataclass
class MeanFieldSolution:
    m1: float
    q: float
    sigma_z: float
    converged: bool
    iterations: int
    residual: float = math.nan


@lru_cache(maxsize=4)
def _legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(order)


def _panel_rule(m: float, sigma: float, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes u and weights for integrals against the standard normal density.

    Panels are refined geometrically around the kink u0 = -m/sigma of
    tanh(beta (m + sigma u)), whose width in u is 1/(beta sigma).
    """
    u0 = -m / sigma
    width = 1.0 / (beta * sigma)
    lo, hi = -12.0, 12.0
    cuts = {lo, hi}
    for k in range(-4, 60):
        d = width * 2.0 ** k
        if d > hi - lo:
            break
        for c in (u0 - d, u0 + d):
            if lo < c < hi:
                cuts.add(c)
    if lo < u0 < hi:
        cuts.add(u0)
    cuts.update(np.arange(lo, hi, 1.0).tolist())
    edges = np.array(sorted(cuts))
    x, w = _legendre(16)
    a = edges[:-1, None]
    b = edges[1:, None]
    nodes = (0.5 * (b - a) * x + 0.5 * (a + b)).ravel()
    weights = (0.5 * (b - a) * w).ravel()
    weights = weights * np.exp(-0.5 * nodes * nodes) / math.sqrt(2.0 * math.pi)
    return nodes, weights


def _tanh_moments(m: float, sigma: float, beta: float) -> tuple[float, float]:
    """Return (<tanh(beta(m+z))>, <sech^2(beta(m+z))>) for z ~ N(0, sigma^2)."""
    if sigma == 0.0:
        t = math.tanh(beta * m)
        return t, 1.0 - t * t
    if beta * sigma <= HERMITE_LIMIT:
        mean_t = gaussian_expectation(lambda z: np.tanh(beta * (m + z)), 0.0, sigma * sigma, HERMITE_ORDER)
        mean_s = gaussian_expectation(lambda z: 1.0 / np.cosh(beta * (m + z)) ** 2, 0.0, sigma * sigma, HERMITE_ORDER)
        return mean_t, mean_s
    u, w = _panel_rule(m, sigma, beta)
    arg = beta * (m + sigma * u)
    sech2 = 1.0 / np.cosh(np.clip(arg, -350.0, 350.0)) ** 2
    return float(w @ np.tanh(arg)), float(w @ sech2)


def _sigma_squared(alpha: float, beta: float, r: float) -> float:
    # r = 1 - q; sigma^2 = alpha q / (1 - beta r)^2
    denom = max(1.0 - beta * r, 1e-12)
    return alpha * (1.0 - r) / (denom * denom)


def solve_coupled(
    alpha: float,
    beta: float,
    damping: float = DAMPING,
    tol: float = TOLERANCE,
    max_iter: int = MAX_ITERATIONS,
    m_start: float = 1.0,
) -> MeanFieldSolution:
    """Damped fixed-point iteration of the (m1, q, sigma_z) equations.

    Starts from m1 = 1, q = 1. The unknown 1 - q is iterated directly as
    <sech^2>, which keeps precision when q is close to 1 at large beta.
    """
    if not (alpha > 0 and beta > 0):
        raise ValueError("alpha and beta must be positive")
    m, r = float(m_start), 0.0
    residual = math.inf
    for it in range(1, int(max_iter) + 1):
        sigma = math.sqrt(_sigma_squared(alpha, beta, r))
        t, s = _tanh_moments(m, sigma, beta)
        residual = max(abs(t - m), abs(s - r))
        if residual < tol:
            m, r = t, s
            break
        m = (1.0 - damping) * m + damping * t
        r = (1.0 - damping) * r + damping * s
    else:
        it = int(max_iter)
    converged = residual < tol
    if abs(m) < 1e-9:
        m = 0.0
    sigma = math.sqrt(_sigma_squared(alpha, beta, r))
    return MeanFieldSolution(max(m, 0.0), 1.0 - r, sigma, converged, it, residual)


def y_equation(y: float, alpha: float) -> float:
    """erf(y) - y (sqrt(2 alpha) + 2/sqrt(pi) exp(-y^2)); roots give m1 = erf(y)."""
    return erf(y) - y * (math.sqrt(2.0 * alpha) + 2.0 / math.sqrt(math.pi) * math.exp(-y * y))


def _y_upper(alpha: float) -> float:
    # beyond this the linear term alone exceeds erf(y) <= 1
    return 1.0 / math.sqrt(2.0 * alpha) + 1.0


def _max_y_equation(alpha: float, grid: int = 4000) -> tuple[float, float]:
    """Location and value of the maximum of the y-equation over y > 0."""
    hi = _y_upper(alpha)
    ys = np.linspace(hi / grid, hi, grid)
    vals = np.array([y_equation(y, alpha) for y in ys])
    k = int(np.argmax(vals))
    a = ys[max(k - 1, 0)]
    b = ys[min(k + 1, grid - 1)]
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = y_equation(c, alpha), y_equation(d, alpha)
    for _ in range(100):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = y_equation(c, alpha)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = y_equation(d, alpha)
        if b - a < 1e-14 * max(1.0, b):
            break
    y = 0.5 * (a + b)
    return y, y_equation(y, alpha)


def _bisect(f, a: float, b: float, tol: float = 1e-15) -> float:
    fa = f(a)
    if fa == 0.0:
        return a
    for _ in range(200):
        mid = 0.5 * (a + b)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (fa > 0):
            a, fa = mid, fm
        else:
            b = mid
        if b - a <= tol * max(1.0, abs(a)):
            break
    return 0.5 * (a + b)


def solve_deterministic(alpha: float) -> tuple[float, float]:
    """Zero-noise limit: returns (m1, steady-state error probability).

    The retrieval root is the largest positive root of the y-equation. It is
    bracketed between the maximum of the y-equation and the point
    1/sqrt(2 alpha) + 1 where the function is certainly negative, then bisected.
    When no positive root exists, m1 = 0 and the error probability is 1/2.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    y_star, f_star = _max_y_equation(alpha)
    if f_star <= 0.0:
        return 0.0, 0.5
    y = _bisect(lambda v: y_equation(v, alpha), y_star, _y_upper(alpha))
    return erf(y), 0.5 * erfc(y)


def retrieval_exists(alpha: float) -> bool:
    return _max_y_equation(alpha)[1] > 0.0


def critical_capacity(lo: float = 0.10, hi: float = 0.20, tol: float = 1e-12) -> float:
    """alpha at which the positive root of the y-equation disappears (bisection)."""
    if not retrieval_exists(lo) or retrieval_exists(hi):
        raise ValueError("bracket does not straddle the critical capacity")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if retrieval_exists(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class PhasePoint:
    alpha: float
    beta_inv: float
    retrieval: str


ORDERED = "ordered"
DISORDERED = "disordered"


def _retrieves(alpha: float, beta: float, threshold: float = 1e-4) -> bool:
    sol = solve_coupled(alpha, beta)
    return sol.m1 > threshold


def critical_alpha(beta_inv: float, tol: float = 1e-5) -> float:
    """Largest alpha with a retrieval solution of the coupled equations at noise beta_inv."""
    if beta_inv >= 1.0:
        return 0.0
    if beta_inv <= 0.0:
        return critical_capacity()
    beta = 1.0 / beta_inv
    lo, hi = 0.0, 0.15
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _retrieves(mid, beta):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def phase_boundary_scan(beta_inv_grid: Iterable[float], tol: float = 1e-5) -> list[PhasePoint]:
    """Critical storage capacity for each noise level on the grid.

    Each entry carries the boundary alpha; points with alpha below it are in
    the ordered (retrieval) phase.
    """
    out = []
    for t in beta_inv_grid:
        a = critical_alpha(float(t), tol)
        out.append(PhasePoint(a, float(t), ORDERED if a > 0 else DISORDERED))
    return out


def mixed_state_rhs(m: float, beta: float, n: int = 3) -> float:
    """<xi^1 tanh(beta m sum_{nu<=n} xi^nu)> for the symmetric ansatz (m, ..., m, 0, ...)."""
    total = 0.0
    for signs in product((-1, 1), repeat=n - 1):
        total += math.tanh(beta * m * (1 + sum(signs)))
    return total / 2 ** (n - 1)


def solve_mixed(beta: float, n: int = 3, grid: int = 2000) -> float:
    """Largest root m > 0 of m = <xi^1 tanh(beta m sum xi^nu)>, or 0 if none.

    Only existence of the root is established here; its stability is not.
    """
    if n % 2 == 0:
        raise ValueError("mixed states need an odd number of patterns")
    ms = np.linspace(1.0, 1.0 / grid, grid)
    g = np.array([mixed_state_rhs(m, beta, n) - m for m in ms])
    for k in range(len(ms) - 1):
        # scanning downward from m = 1 where g < 0
        if g[k] < 0 <= g[k + 1]:
            return _bisect(lambda v: mixed_state_rhs(v, beta, n) - v, ms[k + 1], ms[k])
    return 0.0
