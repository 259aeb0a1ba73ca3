"""Shared numerical kernels.

Everything here is small and self-contained: the error function, Gauss-Hermite
averages over a normal variable, a cyclic Jacobi eigen-solver for small
symmetric matrices, a central-difference gradient used as the reference in all
gradient tests, and a seeded random stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)
_SERIES_CUTOFF = 3.0


def _erf_series(x: float) -> float:
    # erf(x) = 2/sqrt(pi) * exp(-x^2) * sum_n (2x^2)^n x / (1*3*...*(2n+1)).
    # All terms are positive, so there is no cancellation for 0 <= x < 3.
    if x == 0.0:
        return 0.0
    term = x
    total = x
    two_x2 = 2.0 * x * x
    n = 0
    while True:
        term *= two_x2 / (2 * n + 3)
        total += term
        n += 1
        if term <= 1e-17 * total:
            break
    return _TWO_OVER_SQRT_PI * math.exp(-x * x) * total


def _erfc_continued_fraction(x: float) -> float:
    # erfc(x) = exp(-x^2)/sqrt(pi) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    # evaluated with the modified Lentz algorithm; intended for x >= 3.
    tiny = 1e-300
    f = x
    c = f
    d = 0.0
    for j in range(1, 5000):
        a = 0.5 * j
        d = x + a * d
        d = 1.0 / (d if d != 0.0 else tiny)
        c = x + a / c
        if c == 0.0:
            c = tiny
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return math.exp(-x * x) / (math.sqrt(math.pi) * f)


def erf(x: float) -> float:
    """Error function, accurate to about 1e-15 absolute on the real line."""
    x = float(x)
    if math.isnan(x):
        return math.nan
    if x < 0.0:
        return -erf(-x)
    if x < _SERIES_CUTOFF:
        return _erf_series(x)
    return 1.0 - _erfc_continued_fraction(x)


def erfc(x: float) -> float:
    """Complementary error function 1 - erf(x).

    For x >= 3 the value comes straight from the continued fraction, so it keeps
    full relative precision deep into the tail (erfc(20) ~ 5e-176), which the
    naive difference 1 - erf(x) cannot.
    """
    x = float(x)
    if math.isnan(x):
        return math.nan
    if x < 0.0:
        return 2.0 - erfc(-x)
    if x < _SERIES_CUTOFF:
        return 1.0 - _erf_series(x)
    return _erfc_continued_fraction(x)


@lru_cache(maxsize=32)
def _hermite_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.hermite.hermgauss(order)
    return nodes, weights


def gaussian_expectation(
    f: Callable[[np.ndarray], np.ndarray],
    mean: float,
    variance: float,
    order: int = 60,
) -> float:
    """Average of f(z) for z ~ N(mean, variance) by Gauss-Hermite quadrature.

    `f` must accept a numpy array of abscissae. The rule is exact for
    polynomials of degree below 2*order.
    """
    if not variance > 0.0:
        raise ValueError(f"variance must be positive, got {variance!r}")
    if order < 2:
        raise ValueError("quadrature order must be at least 2")
    nodes, weights = _hermite_rule(int(order))
    z = mean + math.sqrt(2.0 * variance) * nodes
    return float(np.dot(weights, f(z)) / math.sqrt(math.pi))


@dataclass(frozen=True)
class SymmetricMatrix:
    """A real square matrix whose storage is exactly symmetric."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("symmetric matrix must be square")
        if not np.array_equal(a, a.T):
            raise ValueError("entries are not symmetric; use SymmetricMatrix.from_array")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @classmethod
    def from_array(cls, a) -> "SymmetricMatrix":
        a = np.asarray(a, dtype=float)
        return cls(0.5 * (a + a.T))

    @property
    def dimension(self) -> int:
        return self.entries.shape[0]


def symmetric_eigen(
    m, threshold: float = 1e-14, max_sweeps: int = 100
) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a small symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues in descending order and the matching orthonormal
    eigenvectors as columns. Sweeps stop once the off-diagonal Frobenius norm
    drops below `threshold` times the norm of the whole matrix. Each vector is
    signed so that its largest-magnitude component is positive.
    """
    if not isinstance(m, SymmetricMatrix):
        m = SymmetricMatrix.from_array(m)
    a = m.entries.copy()
    n = a.shape[0]
    v = np.eye(n)
    scale = max(np.linalg.norm(a), np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = math.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0))
        if off <= threshold * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(apq) < 1e-150 * abs(diff):
                    # theta^2 would overflow; t = 1/(2 theta) to full precision
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J the rotation in the (p, q) plane.
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = v[:, order]
    for k in range(n):
        j = int(np.argmax(np.abs(vectors[:, k])))
        if vectors[j, k] < 0:
            vectors[:, k] = -vectors[:, k]
    return values, vectors


def finite_diff_gradient(
    f: Callable[[np.ndarray], float], params, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient (f(p + h e_i) - f(p - h e_i)) / 2h.

    `params` may have any shape; the gradient has the same shape.
    """
    if not h > 0:
        raise ValueError("step h must be positive")
    p = np.array(params, dtype=float)
    grad = np.zeros_like(p)
    flat = p.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = f(p)
        flat[i] = keep - h
        down = f(p)
        flat[i] = keep
        gflat[i] = (up - down) / (2.0 * h)
    return grad


class RandomStream:
    """Seeded source of random numbers.

    Wraps numpy's PCG64 bit generator, which has a published algorithm and
    gives the same sequence on every platform for a given seed. A stream is
    owned by one caller; use `spawn` to hand independent streams to parallel
    workers.
    """

    MASK = (1 << 64) - 1

    def __init__(self, seed: int = 0):
        self.seed = int(seed) & self.MASK
        self._seq = np.random.SeedSequence(self.seed)
        self.generator = np.random.Generator(np.random.PCG64(self._seq))

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0):
        return self.generator.uniform(low, high, size)

    def normal(self, size=None, loc: float = 0.0, scale: float = 1.0):
        return self.generator.normal(loc, scale, size)

    def integers(self, low: int, high: int | None = None, size=None):
        return self.generator.integers(low, high, size)

    def binomial(self, n, prob, size=None):
        return self.generator.binomial(n, prob, size)

    def spins(self, shape) -> np.ndarray:
        """Independent +1/-1 entries with probability 1/2 each."""
        return np.where(self.generator.random(shape) < 0.5, -1, 1).astype(np.int64)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def choice(self, a, size=None, replace: bool = True):
        return self.generator.choice(a, size=size, replace=replace)

    def spawn(self, count: int) -> list["RandomStream"]:
        """Independent child streams, reproducible from the parent seed."""
        children = []
        for child in self._seq.spawn(count):
            s = RandomStream.__new__(RandomStream)
            s.seed = self.seed
            s._seq = child
            s.generator = np.random.Generator(np.random.PCG64(child))
            children.append(s)
        return children


def as_stream(stream_or_seed) -> RandomStream:
    if isinstance(stream_or_seed, RandomStream):
        return stream_or_seed
    return RandomStream(0 if stream_or_seed is None else int(stream_or_seed))


def binomial_stderr(fraction: float, trials: int) -> float:
    return math.sqrt(max(fraction * (1.0 - fraction), 0.0) / max(trials, 1))


def batch_means_stderr(series: Sequence[float], batches: int = 20) -> float:
    """Standard error of the mean of a correlated series via batch means."""
    x = np.asarray(series, dtype=float)
    if x.size < 2:
        return math.nan
    batches = max(2, min(batches, x.size))
    size = x.size // batches
    means = x[: size * batches].reshape(batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(batches))
