"""Unsupervised Hebbian learning.

Linear units y_i = w_i . xi trained with Hebb's, Oja's, Sanger's and Oja's
M-rule; competitive learning with a single winning unit; and Kohonen's
self-organising map with a Gaussian neighbourhood function, including the
measurement of how densely the trained weights sample the input density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .numerics import RandomStream, symmetric_eigen


class LearningDiverged(RuntimeError):
    pass


class UnorderedMap(ValueError):
    pass


Sampler = Callable[[RandomStream, int], np.ndarray]


def data_sampler(points) -> Sampler:
    """Draw patterns uniformly (with replacement) from a finite data set."""
    X = np.asarray(points, dtype=float)

    def draw(stream: RandomStream, n: int) -> np.ndarray:
        return X[stream.integers(0, len(X), size=n)]

    return draw


def gaussian_sampler(covariance, mean=None) -> Sampler:
    C = np.asarray(covariance, dtype=float)
    values, vectors = symmetric_eigen(C)
    root = vectors * np.sqrt(np.clip(values, 0.0, None))
    mu = np.zeros(C.shape[0]) if mean is None else np.asarray(mean, dtype=float)

    def draw(stream: RandomStream, n: int) -> np.ndarray:
        return mu + stream.normal(size=(n, C.shape[0])) @ root.T

    return draw


def _rate(eta, t: int, steps: int) -> float:
    if callable(eta):
        return float(eta(t))
    if isinstance(eta, (tuple, list)):
        start, end = eta
        return start + (end - start) * t / max(steps - 1, 1)
    return float(eta)


# --------------------------------------------------------------------------
# Hebbian rules for linear units


def hebb_unsupervised_step(w, xi, eta: float) -> np.ndarray:
    """w' = w + eta (w . xi) xi."""
    if not eta > 0:
        raise ValueError("learning rate must be positive")
    w = np.asarray(w, dtype=float)
    xi = np.asarray(xi, dtype=float)
    return w + eta * float(w @ xi) * xi


def oja_step(w, xi, eta: float) -> np.ndarray:
    """w' = w + eta y (xi - y w) with y = w . xi."""
    w = np.asarray(w, dtype=float)
    xi = np.asarray(xi, dtype=float)
    y = float(w @ xi)
    return w + eta * y * (xi - y * w)


@dataclass
class OjaResult:
    w: np.ndarray
    norm_history: np.ndarray


def oja_train(sampler: Sampler | np.ndarray, eta, steps: int, stream: RandomStream, w0=None,
              record_every: int = 0) -> OjaResult:
    """Iterate Oja's rule on random draws.

    `eta` is a constant, a (start, end) pair decayed linearly, or a function
    of the step index. Raises LearningDiverged when |w| exceeds 10, which
    signals a learning rate too large for the data scale.
    """
    draw = sampler if callable(sampler) else data_sampler(sampler)
    first = draw(stream, 1)[0]
    N = first.size
    if w0 is None:
        w = stream.normal(size=N)
        w /= np.linalg.norm(w)
    else:
        w = np.array(w0, dtype=float)
    X = draw(stream, steps)
    norms = []
    for t in range(steps):
        xi = X[t]
        y = w @ xi
        w = w + _rate(eta, t, steps) * y * (xi - y * w)
        if record_every and t % record_every == 0:
            norms.append(np.linalg.norm(w))
        if not np.all(np.isfinite(w)) or np.linalg.norm(w) > 10.0:
            raise LearningDiverged(
                f"Oja's rule diverged at step {t} with eta={_rate(eta, t, steps)!r}; reduce the learning rate"
            )
    return OjaResult(w, np.array(norms))


# Three points in the plane whose C' = <xi xi^T> = (1/3)[[2, 1], [1, 2]] has
# leading eigenvector (1, 1)/sqrt(2), while their covariance matrix prefers (-1, 1)/sqrt(2).
OJA_EXAMPLE_POINTS = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])


def leading_eigenvector(data) -> tuple[float, np.ndarray]:
    """Largest eigenvalue and eigenvector of C' = <xi xi^T> (not mean-centred)."""
    X = np.asarray(data, dtype=float)
    values, vectors = symmetric_eigen(X.T @ X / len(X))
    return float(values[0]), vectors[:, 0]


def angle_degrees(u, v) -> float:
    """Angle between the lines spanned by u and v, in degrees (sign ignored)."""
    c = abs(float(np.dot(u, v))) / (np.linalg.norm(u) * np.linalg.norm(v))
    return math.degrees(math.acos(min(1.0, c)))


def sanger_step(bank, xi, eta: float) -> np.ndarray:
    """delta w_ij = eta y_i (xi_j - sum_{k<=i} y_k w_kj)."""
    W = np.asarray(bank, dtype=float)
    xi = np.asarray(xi, dtype=float)
    y = W @ xi
    back = np.cumsum(y[:, None] * W, axis=0)
    return W + eta * y[:, None] * (xi[None, :] - back)


def oja_m_step(bank, xi, eta: float) -> np.ndarray:
    """delta w_ij = eta y_i (xi_j - sum_{k<=M} y_k w_kj)."""
    W = np.asarray(bank, dtype=float)
    xi = np.asarray(xi, dtype=float)
    y = W @ xi
    return W + eta * y[:, None] * (xi[None, :] - y @ W)


def train_bank(rule, sampler: Sampler | np.ndarray, M: int, eta, steps: int, stream: RandomStream,
               W0=None) -> np.ndarray:
    """Apply `sanger_step` or `oja_m_step` to `steps` random draws."""
    draw = sampler if callable(sampler) else data_sampler(sampler)
    X = draw(stream, steps)
    W = stream.normal(size=(M, X.shape[1])) * 0.1 if W0 is None else np.array(W0, dtype=float)
    for t in range(steps):
        W = rule(W, X[t], _rate(eta, t, steps))
        if not np.all(np.isfinite(W)) or np.abs(W).max() > 10.0:
            raise LearningDiverged(f"weights diverged at step {t}; reduce the learning rate")
    return W


# --------------------------------------------------------------------------
# competitive learning


def winner(W, xi) -> int:
    """Index of the unit whose weight vector is closest to xi; ties go to the lowest index."""
    d = np.sum((np.asarray(W) - np.asarray(xi)) ** 2, axis=1)
    return int(np.argmin(d))


def competitive_step(W, xi, eta: float) -> tuple[np.ndarray, int]:
    """Move only the winning unit: w_i0 <- w_i0 + eta (xi - w_i0). Other rows are untouched."""
    W = np.array(W, dtype=float)
    i0 = winner(W, xi)
    W[i0] = W[i0] + eta * (np.asarray(xi, dtype=float) - W[i0])
    return W, i0


def quantisation_energy(W, data) -> float:
    """H = 1/2 sum_mu |xi_mu - w_{i0(mu)}|^2 over a sample."""
    X = np.asarray(data, dtype=float)
    d = np.sum((X[:, None, :] - np.asarray(W)[None, :, :]) ** 2, axis=2)
    return 0.5 * float(np.sum(d.min(axis=1)))


@dataclass
class CompetitiveResult:
    weights: np.ndarray
    assignments: np.ndarray  # winner of each training draw
    energy_trace: list = field(default_factory=list)


def competitive_train(bank, sampler: Sampler | np.ndarray, eta: float, steps: int, stream: RandomStream,
                      monitor_every: int = 0, monitor_sample: int = 500) -> CompetitiveResult:
    """Competitive learning from the given initial bank (rows are weight vectors).

    Use `random_unit_bank` for the unit-norm random start.
    """
    draw = sampler if callable(sampler) else data_sampler(sampler)
    W = np.array(bank, dtype=float)
    X = draw(stream, steps)
    probe = draw(stream, monitor_sample) if monitor_every else None
    winners = np.empty(steps, dtype=np.int64)
    trace = []
    for t in range(steps):
        W, winners[t] = competitive_step(W, X[t], eta)
        if monitor_every and (t + 1) % monitor_every == 0:
            trace.append(quantisation_energy(W, probe))
    return CompetitiveResult(W, winners, trace)


def random_unit_bank(M: int, N: int, stream: RandomStream) -> np.ndarray:
    W = stream.normal(size=(M, N))
    return W / np.linalg.norm(W, axis=1, keepdims=True)


# --------------------------------------------------------------------------
# self-organising maps


@dataclass
class Phase:
    """Learning rate and neighbourhood width for one training phase.

    eta decays linearly from eta_start to eta_end; sigma decays geometrically
    from sigma_start to sigma_end.
    """

    name: str
    steps: int
    eta_start: float
    eta_end: float
    sigma_start: float
    sigma_end: float

    def __post_init__(self):
        if min(self.eta_start, self.eta_end, self.sigma_start, self.sigma_end) <= 0:
            raise ValueError("eta and sigma must be positive")
        if self.eta_end > self.eta_start or self.sigma_end > self.sigma_start:
            raise ValueError("eta and sigma must be non-increasing")

    def at(self, t: int) -> tuple[float, float]:
        f = t / max(self.steps - 1, 1)
        eta = self.eta_start + (self.eta_end - self.eta_start) * f
        sigma = self.sigma_start * (self.sigma_end / self.sigma_start) ** f
        return eta, sigma


@dataclass
class SelfOrganizingMap:
    grid: np.ndarray  # (K, d) integer coordinates r_i
    weights: np.ndarray  # (K, N)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        if self.grid.ndim == 1:
            self.grid = self.grid[:, None]
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.ndim == 1:
            self.weights = self.weights[:, None]
        if len({tuple(r) for r in self.grid.tolist()}) != len(self.grid):
            raise ValueError("grid coordinates must be distinct")
        if len(self.grid) != len(self.weights):
            raise ValueError("one weight vector per grid point")

    @property
    def diameter(self) -> float:
        d = self.grid.max(axis=0) - self.grid.min(axis=0)
        return float(np.max(d))

    @classmethod
    def line(cls, K: int, weights) -> "SelfOrganizingMap":
        return cls(np.arange(K), weights)

    @classmethod
    def rectangle(cls, rows: int, cols: int, weights) -> "SelfOrganizingMap":
        g = np.array([(i, j) for i in range(rows) for j in range(cols)])
        return cls(g, weights)


def default_phases(diameter: float) -> list[Phase]:
    half = max(diameter / 2.0, 0.5)
    return [
        Phase("ordering", 10_000, 0.1, 0.1, half, half),
        Phase("convergence", 100_000, 0.1, 0.01, half, 0.5),
    ]


def neighbourhood(grid, i0: int, sigma: float) -> np.ndarray:
    """Lambda(i, i0) = exp(-|r_i - r_i0|^2 / (2 sigma^2))."""
    d2 = np.sum((grid - grid[i0]) ** 2, axis=1)
    return np.exp(-d2 / (2.0 * sigma * sigma))


def kohonen_step(som: SelfOrganizingMap, xi, eta: float, sigma: float) -> int:
    """delta w_i = eta Lambda(i, i0) (xi - w_i), in place; returns the winner i0."""
    xi = np.asarray(xi, dtype=float)
    i0 = winner(som.weights, xi)
    lam = neighbourhood(som.grid, i0, sigma)
    som.weights += (eta * lam)[:, None] * (xi - som.weights)
    return i0


def kohonen_energy(som: SelfOrganizingMap, data, sigma: float) -> float:
    """H = 1/2 sum_mu sum_i Lambda(i, i0(mu)) |xi_mu - w_i|^2."""
    X = np.asarray(data, dtype=float)
    total = 0.0
    for xi in X:
        i0 = winner(som.weights, xi)
        lam = neighbourhood(som.grid, i0, sigma)
        total += 0.5 * float(lam @ np.sum((xi - som.weights) ** 2, axis=1))
    return total


@dataclass
class KohonenLog:
    phases: list
    energy: list = field(default_factory=list)  # (phase, step, H) in the convergence phase


def init_from_data(K: int, sampler: Sampler, stream: RandomStream) -> np.ndarray:
    """Initial weights drawn from the input distribution, avoiding dead units."""
    return np.array(sampler(stream, K), dtype=float)


def kohonen_train(som: SelfOrganizingMap, sampler: Sampler | np.ndarray, steps: int | None, stream: RandomStream,
                  phases: Sequence[Phase] | None = None, monitor_every: int = 0,
                  monitor_sample: int = 200) -> KohonenLog:
    """Train the map in place through its phases (default: ordering then convergence).

    If `steps` is given it replaces the total step count, split between the
    phases in proportion to their default lengths.
    """
    draw = sampler if callable(sampler) else data_sampler(sampler)
    phases = list(phases) if phases is not None else default_phases(som.diameter)
    if steps is not None:
        total = sum(p.steps for p in phases)
        scaled = [max(1, int(round(p.steps * steps / total))) for p in phases]
        phases = [Phase(p.name, n, p.eta_start, p.eta_end, p.sigma_start, p.sigma_end) for p, n in zip(phases, scaled)]
    log = KohonenLog(phases)
    probe = draw(stream, monitor_sample) if monitor_every else None
    grid = som.grid
    for phase in phases:
        X = draw(stream, phase.steps)
        for t in range(phase.steps):
            eta, sigma = phase.at(t)
            xi = X[t]
            i0 = int(np.argmin(np.sum((som.weights - xi) ** 2, axis=1)))
            d2 = np.sum((grid - grid[i0]) ** 2, axis=1)
            som.weights += (eta * np.exp(-d2 / (2.0 * sigma * sigma)))[:, None] * (xi - som.weights)
            if monitor_every and phase.name == "convergence" and t % monitor_every == 0:
                log.energy.append((phase.name, t, kohonen_energy(som, probe, sigma)))
    return log


# density law


@dataclass
class DensityFit:
    exponent: float
    w: np.ndarray
    rho_hat: np.ndarray
    P: np.ndarray
    flat: bool = False


def is_ordered(weights) -> bool:
    d = np.diff(np.asarray(weights, dtype=float).reshape(-1))
    return bool(np.all(d > 0) or np.all(d < 0))


def kohonen_density_exponent(som_or_weights, P: Callable[[np.ndarray], np.ndarray], edge: int = 20,
                             flat_tol: float = 1e-6) -> DensityFit:
    """Fit the exponent of rho(w) ~ P(w)^exponent for a trained 1-D map.

    rho_hat at interior unit i is 2 / |w_{i+1} - w_{i-1}| (normalised to
    unit area); `edge` units at each end are excluded. The slope of log rho_hat
    against log P is fitted by least squares. If P barely varies over the
    retained weights the fit is degenerate and `flat` is set.
    """
    w = som_or_weights.weights if isinstance(som_or_weights, SelfOrganizingMap) else som_or_weights
    w = np.asarray(w, dtype=float).reshape(-1)
    if not is_ordered(w):
        raise UnorderedMap("the map is not ordered; the density estimate needs monotone weights")
    if np.all(np.diff(w) < 0):
        w = w[::-1]
    spacing = (w[2:] - w[:-2]) / 2.0
    centres = w[1:-1]
    rho = 1.0 / spacing
    rho = rho / (np.sum(rho * spacing))
    lo, hi = edge, len(centres) - edge
    if hi - lo < 3:
        raise ValueError("too few interior units after excluding the edges")
    c, r = centres[lo:hi], rho[lo:hi]
    p = np.asarray(P(c), dtype=float)
    logp = np.log(p)
    if np.ptp(logp) < flat_tol:
        return DensityFit(math.nan, c, r, p, flat=True)
    A = np.vstack([logp, np.ones_like(logp)]).T
    slope = float(np.linalg.lstsq(A, np.log(r), rcond=None)[0][0])
    return DensityFit(slope, c, r, p)


def ramp_density(x):
    """P(x) = 2x on (0, 1]."""
    return 2.0 * np.asarray(x, dtype=float)


def ramp_sampler() -> Sampler:
    # inverse transform: F(x) = x^2
    def draw(stream: RandomStream, n: int) -> np.ndarray:
        return np.sqrt(stream.uniform(size=(n, 1)))

    return draw


def uniform_sampler(low=0.0, high=1.0, dim: int = 1) -> Sampler:
    def draw(stream: RandomStream, n: int) -> np.ndarray:
        return stream.uniform(size=(n, dim), low=low, high=high)

    return draw


def parallelogram_sampler(a=(1.0, 0.0), b=(0.5, 0.8)) -> Sampler:
    """Uniform density on the parallelogram spanned by vectors a and b."""
    A = np.array([a, b], dtype=float)

    def draw(stream: RandomStream, n: int) -> np.ndarray:
        return stream.uniform(size=(n, 2)) @ A

    return draw


# kink detection


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def count_crossings(som: SelfOrganizingMap) -> int:
    """Number of proper intersections between non-adjacent edges of a 2-D elastic net.

    The net's edges join grid neighbours at unit distance; two edges sharing a
    unit are never counted. A map without kinks has 0 crossings.
    """
    grid = som.grid
    W = som.weights
    index = {tuple(r): i for i, r in enumerate(grid.astype(int).tolist())}
    edges = []
    for r, i in index.items():
        for step in ((1, 0), (0, 1)):
            j = index.get((r[0] + step[0], r[1] + step[1]))
            if j is not None:
                edges.append((i, j))
    count = 0
    for a in range(len(edges)):
        i1, j1 = edges[a]
        for b in range(a + 1, len(edges)):
            i2, j2 = edges[b]
            if len({i1, j1, i2, j2}) < 4:
                continue
            if _segments_cross(W[i1], W[j1], W[i2], W[j2]):
                count += 1
    return count


def write_map(path, som: SelfOrganizingMap) -> None:
    """CSV with grid coordinates followed by weight components, one unit per row."""
    d, N = som.grid.shape[1], som.weights.shape[1]
    head = [f"r{k}" for k in range(d)] + [f"w{k}" for k in range(N)]
    rows = [",".join(head)]
    for r, w in zip(som.grid, som.weights):
        rows.append(",".join([str(int(v)) for v in r] + [repr(float(v)) for v in w]))
    Path(path).write_text("\n".join(rows) + "\n")
