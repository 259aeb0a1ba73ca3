"""Binary associative memory.

Patterns are stored as rows of a +/-1 integer matrix. Weights follow Hebb's
rule (or the pseudo-inverse variant that removes pattern overlaps). Dynamics
are either deterministic, S_i <- sgn(b_i) with sgn(0) = +1, or stochastic, with
S_i = +1 drawn with probability 1/(1 + exp(-2 beta b_i)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .numerics import RandomStream, as_stream, batch_means_stderr, binomial_stderr, erfc

SGN_ZERO = 1  # sgn(0) = +1 for spin updates
HEAVISIDE_ZERO = 1  # theta_H(0) = 1

DIAGONAL_KEPT = "kept"
DIAGONAL_ZEROED = "zeroed"

SYNCHRONOUS = "synchronous"
ASYNC_RANDOM = "async_random"
ASYNC_TYPEWRITER = "async_typewriter"


def sgn(x):
    """Sign function with sgn(0) = +1; works on scalars and arrays."""
    x = np.asarray(x)
    out = np.where(x < 0, -1, 1).astype(np.int64)
    return int(out) if out.ndim == 0 else out


@dataclass
class PatternSet:
    """p patterns of N bits each, stored as a p x N matrix of +/-1."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.atleast_2d(np.asarray(self.bits))
        if b.size == 0:
            raise ValueError("a pattern set needs p >= 1 and N >= 1")
        if not np.all((b == 1) | (b == -1)):
            raise ValueError("pattern entries must be +1 or -1")
        self.bits = b.astype(np.int64)

    @property
    def p(self) -> int:
        return self.bits.shape[0]

    @property
    def N(self) -> int:
        return self.bits.shape[1]

    @property
    def alpha(self) -> float:
        """Storage capacity p/N."""
        return self.p / self.N

    def __getitem__(self, mu) -> np.ndarray:
        return self.bits[mu]

    @classmethod
    def random(cls, p: int, N: int, stream: RandomStream) -> "PatternSet":
        return cls(stream.spins((p, N)))


def read_patterns(path) -> PatternSet:
    """Read the plain-text pattern format: a line "p N", then p rows of +/-1."""
    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    p, n = int(lines[0][0]), int(lines[0][1])
    rows = [[int(v) for v in ln] for ln in lines[1 : 1 + p]]
    if len(rows) != p or any(len(r) != n for r in rows):
        raise ValueError(f"{path}: expected {p} rows of {n} entries")
    return PatternSet(np.array(rows))


def write_patterns(path, patterns: PatternSet) -> None:
    rows = [f"{patterns.p} {patterns.N}"]
    rows += [" ".join(str(int(v)) for v in row) for row in patterns.bits]
    Path(path).write_text("\n".join(rows) + "\n")


@dataclass
class HopfieldNet:
    weights: np.ndarray
    thresholds: np.ndarray | None = None
    diagonal_mode: str = DIAGONAL_KEPT

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError("weights must be a square matrix")
        if not np.array_equal(w, w.T):
            raise ValueError("weights must be symmetric")
        if self.diagonal_mode not in (DIAGONAL_KEPT, DIAGONAL_ZEROED):
            raise ValueError(f"unknown diagonal mode {self.diagonal_mode!r}")
        if self.diagonal_mode == DIAGONAL_ZEROED and np.any(np.diag(w) != 0):
            raise ValueError("diagonal_mode is 'zeroed' but the diagonal is not zero")
        self.weights = w
        if self.thresholds is None:
            self.thresholds = np.zeros(w.shape[0])
        else:
            self.thresholds = np.asarray(self.thresholds, dtype=float).reshape(w.shape[0])

    @property
    def N(self) -> int:
        return self.weights.shape[0]

    def local_fields(self, state) -> np.ndarray:
        return self.weights @ np.asarray(state, dtype=float) - self.thresholds


def _symmetrised(w: np.ndarray) -> np.ndarray:
    return 0.5 * (w + w.T)


def hebb_weights(patterns: PatternSet, diagonal_mode: str = DIAGONAL_ZEROED) -> HopfieldNet:
    """w_ij = (1/N) sum_mu xi_i^mu xi_j^mu, optionally with w_ii = 0."""
    x = patterns.bits.astype(float)
    w = _symmetrised(x.T @ x / patterns.N)
    if diagonal_mode == DIAGONAL_ZEROED:
        np.fill_diagonal(w, 0.0)
    return HopfieldNet(w, None, diagonal_mode)


class SingularOverlapError(ValueError):
    pass


def hebb_pseudoinverse(patterns: PatternSet) -> HopfieldNet:
    """Weights w_ij = (1/N) sum_{mu,nu} xi_i^mu (Q^-1)_{mu nu} xi_j^nu.

    Q is the overlap matrix Q_{mu nu} = xi^mu . xi^nu / N. Every stored pattern
    is then mapped onto itself exactly by W. The diagonal is kept, since the
    exact-recall property depends on it.
    """
    x = patterns.bits.astype(float)
    q = x @ x.T / patterns.N
    rank = np.linalg.matrix_rank(q)
    if rank < patterns.p:
        raise SingularOverlapError(
            f"overlap matrix is singular (rank {rank} < p={patterns.p}); patterns are linearly dependent"
        )
    w = x.T @ np.linalg.solve(q, x) / patterns.N
    return HopfieldNet(_symmetrised(w), None, DIAGONAL_KEPT)


def hamming_distance(a, b) -> int:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a != b))


def update_deterministic(
    net: HopfieldNet,
    state,
    mode: str = ASYNC_RANDOM,
    stream: RandomStream | None = None,
    site: int | None = None,
) -> np.ndarray:
    """One deterministic update step; returns a new state array.

    synchronous: every spin is recomputed from the old state.
    async_random: one uniformly chosen site (or `site` if given).
    async_typewriter: the site `site` (callers advance it i = t mod N).
    """
    s = np.array(state, dtype=np.int64)
    if mode == SYNCHRONOUS:
        return sgn(net.local_fields(s))
    if mode == ASYNC_RANDOM:
        i = site if site is not None else int(as_stream(stream).integers(0, net.N))
    elif mode == ASYNC_TYPEWRITER:
        i = 0 if site is None else site % net.N
    else:
        raise ValueError(f"unknown update mode {mode!r}")
    b = float(net.weights[i] @ s) - net.thresholds[i]
    s[i] = SGN_ZERO if b >= 0 else -1
    return s


def run_deterministic(
    net: HopfieldNet,
    state,
    mode: str = ASYNC_TYPEWRITER,
    stream: RandomStream | None = None,
    max_sweeps: int = 1000,
) -> tuple[np.ndarray, bool]:
    """Iterate until a full sweep changes nothing. Returns (state, converged)."""
    s = np.array(state, dtype=np.int64)
    for _ in range(max_sweeps):
        if mode == SYNCHRONOUS:
            new = update_deterministic(net, s, SYNCHRONOUS)
            if np.array_equal(new, s):
                return s, True
            s = new
            continue
        old = s.copy()
        sites = range(net.N) if mode == ASYNC_TYPEWRITER else as_stream(stream).integers(0, net.N, net.N)
        for i in sites:
            s = update_deterministic(net, s, mode, site=int(i))
        if np.array_equal(old, s) and np.array_equal(update_deterministic(net, s, SYNCHRONOUS), s):
            return s, True
    return s, False


@dataclass
class OrderParameterTrace:
    """Overlaps m_mu(t) = (1/N) sum_i xi_i^mu S_i(t), recorded once per sweep.

    `running` is the time average m_mu(T) = (1/T) sum_{t<=T} m_mu(t). The
    steady-state estimate discards the first `transient` sweeps.
    """

    instantaneous: np.ndarray
    transient: int
    running: np.ndarray = field(init=False)
    steady_mean: np.ndarray = field(init=False)
    steady_stderr: np.ndarray = field(init=False)

    def __post_init__(self):
        m = np.atleast_2d(self.instantaneous)
        self.instantaneous = m
        t = np.arange(1, m.shape[0] + 1)[:, None]
        self.running = np.cumsum(m, axis=0) / t
        tail = m[self.transient :]
        self.steady_mean = tail.mean(axis=0)
        self.steady_stderr = np.array([batch_means_stderr(tail[:, k]) for k in range(m.shape[1])])


def acceptance_probability(b, beta: float):
    """P(S = +1) = 1/(1 + exp(-2 beta b)) written through tanh for stability."""
    if math.isinf(beta):
        return np.where(np.asarray(b) >= 0, 1.0, 0.0)
    return 0.5 * (1.0 + np.tanh(beta * np.asarray(b, dtype=float)))


def update_stochastic(
    net: HopfieldNet,
    state,
    beta: float,
    steps: int,
    stream: RandomStream,
    patterns: PatternSet | None = None,
    transient: int | None = None,
) -> tuple[np.ndarray, OrderParameterTrace | None]:
    """Run `steps` sweeps of random-site stochastic updates (one sweep = N updates).

    beta = math.inf reproduces the deterministic asynchronous rule exactly.
    When `patterns` is given, the overlaps with every stored pattern are
    recorded after each sweep. The default transient is max(100, N) sweeps,
    clamped to half the run when the run is shorter than that.
    """
    if beta < 0:
        raise ValueError("beta must be non-negative")
    s = np.array(state, dtype=np.int64)
    n = net.N
    w = net.weights
    b = net.local_fields(s)
    deterministic = math.isinf(beta)
    record = []
    for _ in range(int(steps)):
        sites = stream.integers(0, n, n)
        draws = stream.uniform(size=n)
        for i, r in zip(sites.tolist(), draws.tolist()):
            bi = b[i]
            if deterministic:
                new = 1 if bi >= 0 else -1
            else:
                new = 1 if r < 0.5 * (1.0 + math.tanh(beta * bi)) else -1
            if new != s[i]:
                b += w[:, i] * (2 * new)
                s[i] = new
        if patterns is not None:
            record.append(patterns.bits @ s / n)
    if patterns is None:
        return s, None
    if transient is None:
        transient = max(100, n)
    if transient >= len(record):
        transient = len(record) // 2
    return s, OrderParameterTrace(np.array(record), transient)


def energy(net: HopfieldNet, state) -> float:
    """H = -1/2 sum_ij w_ij S_i S_j + sum_i theta_i S_i."""
    s = np.asarray(state, dtype=float)
    return float(-0.5 * s @ net.weights @ s + net.thresholds @ s)


def cross_talk(patterns: PatternSet, i: int, nu: int) -> float:
    """C_i^nu = -xi_i^nu (1/N) sum_{j != i} sum_{mu != nu} xi_i^mu xi_j^mu xi_j^nu.

    With this sign convention bit i of pattern nu flips after one asynchronous
    step exactly when C_i^nu > 1.
    """
    x = patterns.bits
    others = np.delete(x, nu, axis=0)
    if others.shape[0] == 0:
        return 0.0
    overlap = others @ x[nu] - others[:, i] * x[nu, i]
    return float(-x[nu, i] * np.dot(others[:, i], overlap) / patterns.N)


def cross_talk_all(patterns: PatternSet) -> np.ndarray:
    """All cross-talk terms C_i^nu as a p x N array (same convention as cross_talk)."""
    x = patterns.bits.astype(float)
    p = patterns.p
    q = x @ x.T
    np.fill_diagonal(q, 0.0)
    # sum_{mu != nu} xi_i^mu (Q_{mu nu} - xi_i^mu xi_i^nu) = (Q x)_{nu i} - (p-1) xi_i^nu
    inner = q @ x - (p - 1) * x
    return -x * inner / patterns.N


@dataclass
class MonteCarloEstimate:
    value: float
    stderr: float
    trials: int


def one_step_error_mc(
    N: int, p: int, trials: int, stream: RandomStream, method: str = "binomial"
) -> MonteCarloEstimate:
    """Monte-Carlo estimate of Prob(C_i^nu > 1) for random patterns.

    method="binomial": for a fixed (i, nu) the (N-1)(p-1) products that make up
    the cross-talk sum are independent, equiprobable +/-1 numbers, so C is
    sampled exactly as -(2K - M)/N with K ~ Binomial(M, 1/2). One draw per trial.

    method="patterns": draws whole random pattern sets and counts every (i, nu)
    pair in each set. The standard error then comes from the spread between
    sets, which accounts for the correlation inside a set.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if p == 1:
        return MonteCarloEstimate(0.0, 0.0, trials)
    if method == "binomial":
        m = (N - 1) * (p - 1)
        k = stream.binomial(m, 0.5, size=trials)
        # C > 1  <=>  -(2K - M) > N
        hits = int(np.count_nonzero(m - 2 * k > N))
        frac = hits / trials
        return MonteCarloEstimate(frac, binomial_stderr(frac, trials), trials)
    if method == "patterns":
        per_set = p * N
        sets = max(1, math.ceil(trials / per_set))
        fractions = []
        for _ in range(sets):
            c = cross_talk_all(PatternSet.random(p, N, stream))
            fractions.append(np.count_nonzero(c > 1) / per_set)
        frac = float(np.mean(fractions))
        if sets > 1:
            err = float(np.std(fractions, ddof=1) / math.sqrt(sets))
        else:
            err = binomial_stderr(frac, per_set)
        return MonteCarloEstimate(frac, err, sets * per_set)
    raise ValueError(f"unknown method {method!r}")


def p_error_formula(alpha: float) -> float:
    """One-step error probability 1/2 [1 - erf(1/sqrt(2 alpha))].

    Evaluated as erfc/2 so that tiny values at small alpha are not lost.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return 0.5 * erfc(1.0 / math.sqrt(2.0 * alpha))


def mixed_state(patterns: PatternSet, indices: Sequence[int], signs: Sequence[int] | None = None) -> np.ndarray:
    """Componentwise sign of sum_k signs[k] * xi^(indices[k]); indices are 0-based."""
    indices = list(indices)
    if len(indices) % 2 == 0:
        raise ValueError("mixed states need an odd number of component patterns")
    if signs is None:
        signs = [1] * len(indices)
    if len(signs) != len(indices):
        raise ValueError("one sign per component pattern")
    total = sum(int(s) * patterns.bits[k] for s, k in zip(signs, indices))
    return sgn(total)


def pattern_overlaps(patterns: PatternSet, state) -> np.ndarray:
    """s_mu = (1/N) sum_j xi_j^mu S_j for every stored pattern."""
    return patterns.bits @ np.asarray(state) / patterns.N


def diluted_weights(patterns: PatternSet, K: float, stream: RandomStream) -> np.ndarray:
    """Randomly diluted Hebb weights w_ij = (K_ij / K) sum_mu xi_i^mu xi_j^mu.

    Each K_ij is 1 with probability K/N, independently, so the matrix is not
    symmetric. A plain array is returned because HopfieldNet requires symmetry.
    """
    x = patterns.bits.astype(float)
    mask = stream.uniform(size=(patterns.N, patterns.N)) < K / patterns.N
    return mask * (x.T @ x) / K


def diluted_overlap(
    patterns: PatternSet, nu: int, K: float, realisations: int, stream: RandomStream
) -> MonteCarloEstimate:
    """Estimate m_nu after one synchronous step from S = xi^nu in a diluted net.

    The connectivity average is taken over `realisations` independent random
    masks: m_nu = (1/N) sum_i xi_i^nu <S_i>_c.
    """
    x = patterns.bits[nu]
    samples = []
    mean_s = np.zeros(patterns.N)
    for _ in range(realisations):
        w = diluted_weights(patterns, K, stream)
        s = sgn(w @ x)
        mean_s += s
        samples.append(float(x @ s) / patterns.N)
    mean_s /= realisations
    value = float(x @ mean_s) / patterns.N
    err = float(np.std(samples, ddof=1) / math.sqrt(realisations)) if realisations > 1 else math.nan
    return MonteCarloEstimate(value, err, realisations)
