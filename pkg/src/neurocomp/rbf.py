"""Cover's theorem and radial-basis-function networks.

`cover_probability` is the exact fraction of the 2^p dichotomies of p points
in general position in m dimensions that a plane through the origin separates.
A radial-basis-function network maps inputs to u_j = exp(-|xi - w_j|^2/(2 s_j^2))
and reads out O = sum_j W_j u_j - theta. The threshold theta is zero
unless training is asked to fit it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .feedforward import LabeledSet
from .numerics import RandomStream, binomial_stderr


def cover_probability(p: int, m: int) -> Fraction:
    """P(p, m) = (1/2)^(p-1) sum_{k<m} C(p-1, k) for p > m, and 1 otherwise."""
    if p < 1 or m < 1:
        raise ValueError("p and m must be positive")
    if p <= m:
        return Fraction(1)
    return Fraction(sum(math.comb(p - 1, k) for k in range(m)), 2 ** (p - 1))


def max_separable_distribution(m: int, cutoff: float = 1e-15) -> list[tuple[int, Fraction]]:
    """(n, p_n) with p_n = (1/2)^n C(n-1, m-1), the probability that n is the largest separable count.

    Terms are listed from n = m until they fall below `cutoff` past the peak.
    """
    if m < 1:
        raise ValueError("m must be positive")
    out = []
    n = m
    while True:
        pn = Fraction(math.comb(n - 1, m - 1), 2**n)
        out.append((n, pn))
        if n > 2 * m and pn < cutoff:
            return out
        n += 1


def expected_max_separable(m: int) -> float:
    """<n> = sum_n n p_n, which equals 2m."""
    return float(sum(n * pn for n, pn in max_separable_distribution(m)))


# --------------------------------------------------------------------------
# Monte-Carlo separability


def unit_ball_points(p: int, m: int, stream: RandomStream) -> np.ndarray:
    x = stream.normal(size=(p, m))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x * stream.uniform(size=(p, 1)) ** (1.0 / m)


def perceptron_separable(X, t, cap: int) -> bool:
    """Fixed-increment perceptron without threshold: w <- w + t_mu xi_mu on each mistake.

    Returns True once every pattern satisfies t (w . xi) > 0, False after `cap` updates.
    """
    return bool(perceptron_separable_batch(np.asarray(X, float)[None], np.asarray(t, float)[None], cap)[0])


def perceptron_separable_batch(X, t, cap: int) -> np.ndarray:
    """The perceptron test run on independent problems X[k], t[k] in lock step.

    Every step corrects the lowest-index misclassified pattern of each
    unfinished problem, so each problem sees exactly the sequence of updates
    the single-problem rule would make.
    """
    K, p, m = X.shape
    Y = X * t[:, :, None]  # patterns pre-multiplied by their targets
    w = np.zeros((K, m))
    done = np.zeros(K, dtype=bool)
    active = np.arange(K)
    for _ in range(cap + 1):
        margins = np.einsum("kpm,km->kp", Y[active], w[active])
        wrong = margins <= 0
        solved = ~wrong.any(axis=1)
        done[active[solved]] = True
        keep = ~solved
        active = active[keep]
        if active.size == 0:
            break
        first = np.argmax(wrong[keep], axis=1)
        w[active] += Y[active, first]
    return done


@dataclass
class SeparabilityEstimate:
    fraction: float
    stderr: float
    trials: int


def separability_mc(p: int, m: int, trials: int, stream: RandomStream, cap_factor: int = 10_000) -> SeparabilityEstimate:
    """Fraction of random +-1 dichotomies of p points in the unit m-ball that are homogeneously separable.

    A trial that exhausts cap_factor * p perceptron updates counts as not
    separable, which biases the estimate slightly low.
    """
    X = np.stack([unit_ball_points(p, m, stream) for _ in range(trials)])
    t = np.where(stream.uniform(size=(trials, p)) < 0.5, -1.0, 1.0)
    f = float(np.mean(perceptron_separable_batch(X, t, cap_factor * p)))
    return SeparabilityEstimate(f, binomial_stderr(f, trials), trials)


# --------------------------------------------------------------------------
# networks


@dataclass
class RbfNetwork:
    centers: np.ndarray  # (m, N)
    widths: np.ndarray  # (m,)
    weights: np.ndarray  # (m,) or (m, M)
    diagnostics: list = field(default_factory=list)
    threshold: float | np.ndarray = 0.0

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        self.widths = np.asarray(self.widths, dtype=float).reshape(-1)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.widths.shape != (len(self.centers),):
            raise ValueError("one width per centre")

    def outputs(self, X) -> np.ndarray:
        return rbf_embed(self, X) @ self.weights - self.threshold


def rbf_embed(net: RbfNetwork, xi) -> np.ndarray:
    """u_j = exp(-|xi - w_j|^2 / (2 s_j^2)); accepts one pattern or a batch."""
    if np.any(net.widths <= 0):
        raise ValueError("widths must be positive")
    X = np.asarray(xi, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    d2 = np.sum((X[:, None, :] - net.centers[None, :, :]) ** 2, axis=2)
    U = np.exp(-d2 / (2.0 * net.widths**2))
    return U[0] if single else U


def nearest_centre_widths(centers, default: float = 1.0) -> np.ndarray:
    """s_j = min_{k != j} |w_j - w_k|; a lone centre keeps `default`."""
    C = np.asarray(centers, dtype=float)
    if len(C) < 2:
        return np.full(len(C), default)
    d = np.sqrt(np.sum((C[:, None, :] - C[None, :, :]) ** 2, axis=2))
    np.fill_diagonal(d, np.inf)
    s = d.min(axis=1)
    return np.where(s > 0, s, default)


def rbf_train(data: LabeledSet, m: int, eta_centers: float, eta_output: float, steps: int,
              stream: RandomStream, centers=None, widths=None, initial_width: float = 1.0,
              fit_threshold: bool = False) -> RbfNetwork:
    """Hybrid training: competitive learning of the centres, then the output weights.

    Centres start at m distinct training patterns (unless given). Each of
    `steps` draws moves only the unit with the largest u_j towards the
    pattern, and all widths are reset to the nearest-centre distance. Passing
    `centers` skips this phase; `widths` then fixes the widths too. The
    output weights solve U W = t exactly when m equals the number of patterns
    and U is invertible, otherwise they follow `steps` sequential
    gradient-descent steps on H = 1/2 sum (t - O)^2. With `fit_threshold`
    the gradient route also learns an output threshold, and the exact solve
    is skipped.
    """
    X = np.asarray(data.inputs, dtype=float).reshape(len(data), -1)
    T = data.targets.reshape(len(data), -1)
    p = len(X)
    if m < 1:
        raise ValueError("need at least one centre")
    diagnostics = []
    if centers is None:
        idx = stream.choice(p, size=m, replace=False) if m <= p else stream.integers(0, p, size=m)
        C = X[idx].copy()
        s = np.full(m, float(initial_width))
        for _ in range(steps):
            xi = X[int(stream.integers(0, p))]
            u = np.exp(-np.sum((xi - C) ** 2, axis=1) / (2.0 * s**2))
            j0 = int(np.argmax(u))
            s = nearest_centre_widths(C, initial_width)
            C[j0] += eta_centers * (xi - C[j0])
        s = nearest_centre_widths(C, initial_width)
    else:
        C = np.atleast_2d(np.asarray(centers, dtype=float))
        s = nearest_centre_widths(C, initial_width) if widths is None else np.broadcast_to(
            np.asarray(widths, dtype=float), (len(C),)).copy()
    net = RbfNetwork(C, s, np.zeros((len(C), T.shape[1])), diagnostics)
    U = rbf_embed(net, X)
    solved = False
    if len(C) == p and not fit_threshold:
        cond = np.linalg.cond(U)
        if np.isfinite(cond) and cond < 1e12:
            net.weights = np.linalg.solve(U, T)
            solved = True
        else:
            diagnostics.append(f"U is singular (condition number {cond:.3e}); using gradient descent")
    if not solved:
        Ua = np.hstack([U, -np.ones((p, 1))]) if fit_threshold else U
        W = np.zeros((Ua.shape[1], T.shape[1]))
        for _ in range(steps):
            mu = int(stream.integers(0, p))
            W += eta_output * np.outer(Ua[mu], T[mu] - Ua[mu] @ W)
        if fit_threshold:
            net.threshold = W[-1]
            W = W[:-1]
        net.weights = W
    if T.shape[1] == 1:
        net.weights = net.weights.reshape(-1)
        net.threshold = float(np.asarray(net.threshold).reshape(-1)[0])
    return net


def rbf_energy(net: RbfNetwork, data: LabeledSet) -> float:
    O = net.outputs(data.inputs).reshape(len(data), -1)
    return 0.5 * float(np.sum((data.targets.reshape(O.shape) - O) ** 2))
