"""Markov-chain Monte Carlo and simulated annealing.

A model supplies an energy, a symmetric random local move and a validity
predicate. Metropolis accepts a move with probability min(1, exp(-beta dH));
Glauber (heat-bath) accepts with 1/(1 + exp(beta dH)). Both leave the
Boltzmann distribution exp(-beta H)/Z invariant, which `transition_matrix`
and friends verify exactly on small enumerable models.

Three combinatorial problems are provided: the travelling salesman, k queens
and the double-digest restriction-map problem.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Hashable, Iterable, Protocol, Sequence

import numpy as np

from .numerics import RandomStream

METROPOLIS = "metropolis"
GLAUBER = "glauber"


class EnergyModel(Protocol):
    def energy(self, config) -> float: ...

    def propose(self, config, stream: RandomStream) -> tuple[object, float]: ...

    def is_valid(self, config) -> bool: ...


def metropolis_acceptance(dH: float, beta: float) -> float:
    if dH <= 0.0 or beta == 0.0:
        return 1.0
    if math.isinf(beta):
        return 0.0
    return math.exp(-beta * dH)


def glauber_acceptance(dH: float, beta: float) -> float:
    x = beta * dH if not (math.isinf(beta) and dH == 0.0) else 0.0
    if x > 700:
        return 0.0
    if x < -700:
        return 1.0
    return 1.0 / (1.0 + math.exp(x))


_ACCEPTANCE = {METROPOLIS: metropolis_acceptance, GLAUBER: glauber_acceptance}


def acceptance_function(kernel) -> Callable[[float, float], float]:
    if callable(kernel):
        return kernel
    try:
        return _ACCEPTANCE[kernel]
    except KeyError:
        raise ValueError(f"unknown kernel {kernel!r}") from None


def metropolis_step(model: EnergyModel, config, beta: float, stream: RandomStream):
    """One Metropolis proposal; returns (config, accepted)."""
    candidate, dH = model.propose(config, stream)
    if dH <= 0.0 or stream.uniform() < metropolis_acceptance(dH, beta):
        return candidate, True
    return config, False


def glauber_step(model: EnergyModel, config, beta: float, stream: RandomStream):
    """One heat-bath proposal; the candidate is taken with probability 1/(1+e^{beta dH})."""
    candidate, dH = model.propose(config, stream)
    if stream.uniform() < glauber_acceptance(dH, beta):
        return candidate
    return config


# --------------------------------------------------------------------------
# exact checks on enumerable models


class EnumerableModel(Protocol):
    def states(self) -> list[Hashable]: ...

    def energy(self, config) -> float: ...

    def moves(self, config) -> list[tuple[Hashable, float]]: ...


def boltzmann_weights(model: EnumerableModel, beta: float) -> dict:
    states = model.states()
    energies = np.array([model.energy(s) for s in states])
    w = np.exp(-beta * (energies - energies.min()))
    w /= w.sum()
    return dict(zip(states, w))


def transition_matrix(kernel, model: EnumerableModel, beta: float) -> tuple[list, np.ndarray]:
    """Exact transition probabilities p_{l->k} = p^s(l->k) * acceptance(dH)."""
    acc = acceptance_function(kernel)
    states = model.states()
    index = {s: i for i, s in enumerate(states)}
    P = np.zeros((len(states), len(states)))
    for s in states:
        i = index[s]
        h = model.energy(s)
        for target, ps in model.moves(s):
            j = index[target]
            if j == i:
                continue
            P[i, j] += ps * acc(model.energy(target) - h, beta)
        P[i, i] = 1.0 - P[i].sum()
    return states, P


def detailed_balance_check(kernel, model: EnumerableModel, beta: float, state_pair) -> float:
    """|P(l) p_{l->k} - P(k) p_{k->l}| for one pair of states, from exact rates."""
    states, P = transition_matrix(kernel, model, beta)
    pi = boltzmann_weights(model, beta)
    index = {s: i for i, s in enumerate(states)}
    l, k = state_pair
    return abs(pi[l] * P[index[l], index[k]] - pi[k] * P[index[k], index[l]])


def max_detailed_balance_residual(kernel, model: EnumerableModel, beta: float) -> float:
    states, P = transition_matrix(kernel, model, beta)
    pi = boltzmann_weights(model, beta)
    v = np.array([pi[s] for s in states])
    flux = v[:, None] * P
    return float(np.max(np.abs(flux - flux.T)))


def stationarity_residual(kernel, model: EnumerableModel, beta: float) -> float:
    """max |pi P - pi| for the Boltzmann distribution pi."""
    states, P = transition_matrix(kernel, model, beta)
    pi = boltzmann_weights(model, beta)
    v = np.array([pi[s] for s in states])
    return float(np.max(np.abs(v @ P - v)))


@dataclass
class TwoLevelModel:
    """States 0 and 1 with energies H0, H1; the move always suggests the other state."""

    H0: float = 0.0
    H1: float = 1.0

    def states(self):
        return [0, 1]

    def energy(self, config) -> float:
        return self.H1 if config else self.H0

    def moves(self, config):
        return [(1 - config, 1.0)]

    def propose(self, config, stream):
        other = 1 - config
        return other, self.energy(other) - self.energy(config)

    def is_valid(self, config) -> bool:
        return config in (0, 1)


@dataclass
class SpinFlipModel:
    """Spin configurations with H = -1/2 S.W.S + theta.S; moves flip one uniformly chosen spin."""

    weights: np.ndarray
    thresholds: np.ndarray | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        n = self.weights.shape[0]
        self.thresholds = np.zeros(n) if self.thresholds is None else np.asarray(self.thresholds, float)

    @property
    def N(self) -> int:
        return self.weights.shape[0]

    def states(self):
        return list(itertools.product((-1, 1), repeat=self.N))

    def energy(self, config) -> float:
        s = np.asarray(config, dtype=float)
        return float(-0.5 * s @ self.weights @ s + self.thresholds @ s)

    def _flip(self, config, i):
        c = list(config)
        c[i] = -c[i]
        return tuple(c)

    def moves(self, config):
        return [(self._flip(config, i), 1.0 / self.N) for i in range(self.N)]

    def propose(self, config, stream):
        i = int(stream.integers(0, self.N))
        cand = self._flip(config, i)
        return cand, self.energy(cand) - self.energy(config)

    def is_valid(self, config) -> bool:
        return len(config) == self.N and all(v in (-1, 1) for v in config)


@dataclass
class RingModel:
    """n states on a ring with arbitrary energies; moves go to either neighbour."""

    energies: Sequence[float]

    def states(self):
        return list(range(len(self.energies)))

    def energy(self, config) -> float:
        return float(self.energies[config])

    def moves(self, config):
        n = len(self.energies)
        return [((config + 1) % n, 0.5), ((config - 1) % n, 0.5)]

    def propose(self, config, stream):
        n = len(self.energies)
        cand = (config + (1 if stream.uniform() < 0.5 else -1)) % n
        return cand, self.energy(cand) - self.energy(config)

    def is_valid(self, config) -> bool:
        return 0 <= config < len(self.energies)


# --------------------------------------------------------------------------
# simulated annealing


@dataclass
class Schedule:
    """Geometric schedule: beta_s = beta0 * multiplier**s for s = 0..stages-1."""

    beta0: float = 0.5
    multiplier: float = 1.1
    sweeps: int = 1000
    stages: int = 50

    def betas(self) -> list[float]:
        return [self.beta0 * self.multiplier**s for s in range(self.stages)]


@dataclass
class AnnealResult:
    best_config: object
    best_energy: float
    trace: list[float] = field(default_factory=list)
    proposals: int = 0


def anneal(
    model,
    initial,
    schedule: Schedule,
    stream: RandomStream,
    kernel: str = METROPOLIS,
    stop_energy: float | None = None,
) -> AnnealResult:
    """Run the chosen kernel stage by stage with increasing beta.

    A sweep is `model.sweep_size` proposals (default 1). The best configuration
    seen so far is tracked, and the per-stage mean energy is recorded. If
    `stop_energy` is given, the run ends as soon as that energy is reached.
    """
    if schedule.stages < 1:
        raise ValueError("schedule needs at least one stage")
    acc = acceptance_function(kernel)
    per_sweep = int(getattr(model, "sweep_size", 1))
    config = initial
    h = model.energy(config)
    best, best_h = config, h
    trace = []
    count = 0
    for beta in schedule.betas():
        total = 0.0
        steps = schedule.sweeps * per_sweep
        draws = stream.uniform(size=steps)
        for k in range(steps):
            cand, dH = model.propose(config, stream)
            count += 1
            if dH <= 0.0 or draws[k] < acc(dH, beta):
                config = cand
                h += dH
                if h < best_h - 1e-12:
                    best, best_h = config, h
                    if stop_energy is not None and best_h <= stop_energy + 1e-9:
                        trace.append((total + h) / (k + 1))
                        return AnnealResult(best, model.energy(best), trace, count)
            total += h
        trace.append(total / steps)
    return AnnealResult(best, model.energy(best), trace, count)


# --------------------------------------------------------------------------
# travelling salesman


@dataclass
class TourMatrix:
    """k x k 0/1 matrix: M[m, j] = 1 when city m is the j-th stop."""

    M: np.ndarray
    coords: np.ndarray

    def __post_init__(self):
        self.M = np.asarray(self.M, dtype=float)
        self.coords = np.asarray(self.coords, dtype=float)

    @property
    def k(self) -> int:
        return self.M.shape[0]

    def is_valid(self) -> bool:
        m = self.M
        return bool(
            np.all((m == 0) | (m == 1)) and np.all(m.sum(axis=0) == 1) and np.all(m.sum(axis=1) == 1)
        )

    @classmethod
    def from_order(cls, order: Sequence[int], coords) -> "TourMatrix":
        k = len(order)
        M = np.zeros((k, k))
        for j, city in enumerate(order):
            M[city, j] = 1.0
        return cls(M, coords)

    def order(self) -> list[int]:
        if not self.is_valid():
            raise ValueError("matrix is not a valid tour")
        return [int(np.argmax(self.M[:, j])) for j in range(self.k)]


def distance_matrix(coords) -> np.ndarray:
    c = np.asarray(coords, dtype=float)
    diff = c[:, None, :] - c[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def tsp_energy(tour: TourMatrix, A: float, B: float) -> float:
    """H = L + A/2 sum_m (1 - sum_j M_mj)^2 + B/2 sum_j (1 - sum_m M_mj)^2.

    L = 1/2 sum_{m,n,j} d_mn M_mj (M_{n,j-1} + M_{n,j+1}), columns cyclic.
    """
    M = tour.M
    d = distance_matrix(tour.coords)
    neighbours = np.roll(M, 1, axis=1) + np.roll(M, -1, axis=1)
    L = 0.5 * float(np.sum(d * (M @ neighbours.T)))
    rows = 1.0 - M.sum(axis=1)
    cols = 1.0 - M.sum(axis=0)
    return L + 0.5 * A * float(rows @ rows) + 0.5 * B * float(cols @ cols)


def tour_length(order: Sequence[int], dist) -> float:
    k = len(order)
    return float(sum(dist[order[j]][order[(j + 1) % k]] for j in range(k)))


class TSPModel:
    """Annealing over valid tours.

    A configuration is the visit order (city at each stop), which is the
    column-wise reading of a valid tour matrix. The move exchanges the stops of
    two distinct cities, i.e. swaps two rows of M; it is its own inverse, so the
    suggestion probabilities are symmetric. Penalty terms vanish on valid tours,
    so H equals the tour length along the chain.
    """

    def __init__(self, coords, A: float | None = None, B: float | None = None):
        self.coords = np.asarray(coords, dtype=float)
        self.dist = distance_matrix(self.coords)
        self._d = self.dist.tolist()
        scale = 2.0 * float(self.dist.max())
        self.A = scale if A is None else A
        self.B = scale if B is None else B
        self.k = len(self.coords)
        self.sweep_size = self.k

    def energy(self, config) -> float:
        return tour_length(config, self._d)

    def energy_matrix(self, config) -> float:
        return tsp_energy(TourMatrix.from_order(config, self.coords), self.A, self.B)

    def propose(self, config, stream):
        k = self.k
        i = int(stream.integers(0, k))
        j = int(stream.integers(0, k - 1))
        if j >= i:
            j += 1
        if i > j:
            i, j = j, i
        d = self._d
        o = config
        before = 0.0
        after = 0.0
        # edges touching positions i and j (deduplicated when adjacent)
        edges = {(i - 1) % k, i, (j - 1) % k, j}
        cand = list(o)
        cand[i], cand[j] = cand[j], cand[i]
        for e in edges:
            f = (e + 1) % k
            before += d[o[e]][o[f]]
            after += d[cand[e]][cand[f]]
        return tuple(cand), after - before

    def is_valid(self, config) -> bool:
        return sorted(config) == list(range(self.k))

    def random_config(self, stream: RandomStream):
        return tuple(int(v) for v in stream.permutation(self.k))


def canonical_tour(order: Sequence[int]) -> tuple[int, ...]:
    """Representative of the 2k rotations/reflections of a cyclic tour."""
    k = len(order)
    s = list(order).index(0)
    fwd = [order[(s + j) % k] for j in range(k)]
    bwd = [fwd[0]] + fwd[1:][::-1]
    return tuple(min(fwd, bwd))


def exhaustive_tsp(coords) -> tuple[tuple[int, ...], float, int]:
    """Shortest tour by enumerating all (k-1)!/2 distinct tours starting at city 0."""
    d = distance_matrix(coords).tolist()
    k = len(d)
    best, best_len, count = None, math.inf, 0
    for perm in itertools.permutations(range(1, k)):
        if perm[0] > perm[-1]:
            continue
        count += 1
        order = (0,) + perm
        length = tour_length(order, d)
        if length < best_len - 1e-12:
            best, best_len = order, length
    return best, best_len, count


SEVEN_CITIES = np.array(
    [[0.1, 0.15], [0.4, 0.2], [0.5, 0.7], [0.2, 0.1], [0.1, 0.8], [0.8, 0.9], [0.9, 0.3]]
)
CITY_NAMES = "ABCDEFG"
# stops of tours (a) and (b) of the seven-city example, as city indices
TOUR_A = (0, 3, 1, 6, 5, 2, 4)  # A D B G F C E
TOUR_B = (0, 3, 6, 5, 2, 4, 1)  # A D G F C E B


def read_tsp(path) -> np.ndarray:
    """TSP file: first line k, then k lines "x y"."""
    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    k = int(lines[0][0])
    coords = np.array([[float(v) for v in ln[:2]] for ln in lines[1 : 1 + k]])
    if coords.shape != (k, 2):
        raise ValueError(f"{path}: expected {k} coordinate lines")
    return coords


def write_tsp(path, coords) -> None:
    rows = [str(len(coords))] + [f"{x!r} {y!r}" for x, y in np.asarray(coords, float).tolist()]
    Path(path).write_text("\n".join(rows) + "\n")


# --------------------------------------------------------------------------
# k queens


def kqueens_valid(M, k: int | None = None) -> bool:
    """True iff the board holds k non-attacking queens."""
    M = np.asarray(M)
    if k is None:
        k = M.shape[0]
    if M.shape != (k, k) or not np.all((M == 0) | (M == 1)):
        return False
    queens = list(zip(*np.nonzero(M)))
    if len(queens) != k:
        return False
    for (i, j), (p, q) in itertools.combinations(queens, 2):
        if i == p or j == q or i - j == p - q or i + j == p + q:
            return False
    return True


def queens_board(columns: Sequence[int]) -> np.ndarray:
    k = len(columns)
    M = np.zeros((k, k), dtype=int)
    for i, j in enumerate(columns):
        M[i, j] = 1
    return M


# a standard solution of the eight-queens puzzle (column of the queen in each row)
EIGHT_QUEENS = (0, 4, 7, 5, 2, 6, 1, 3)


class KQueensModel:
    """One queen per row at column config[i]; the move swaps the columns of two rows.

    Rows and columns are then always satisfied, and H counts attacking pairs
    along diagonals, so H = 0 exactly for solutions.
    """

    def __init__(self, k: int):
        self.k = k
        self.sweep_size = k

    def energy(self, config) -> float:
        k = self.k
        h = 0
        for i in range(k):
            for p in range(i + 1, k):
                if abs(config[i] - config[p]) == p - i:
                    h += 1
        return float(h)

    def _row_conflicts(self, config, r, col):
        h = 0
        for i in range(self.k):
            if i != r and abs(config[i] - col) == abs(i - r):
                h += 1
        return h

    def propose(self, config, stream):
        k = self.k
        r = int(stream.integers(0, k))
        s = int(stream.integers(0, k - 1))
        if s >= r:
            s += 1
        before = self._row_conflicts(config, r, config[r]) + self._row_conflicts(config, s, config[s])
        if abs(config[r] - config[s]) == abs(r - s):
            before -= 1
        cand = list(config)
        cand[r], cand[s] = cand[s], cand[r]
        after = self._row_conflicts(cand, r, cand[r]) + self._row_conflicts(cand, s, cand[s])
        if abs(cand[r] - cand[s]) == abs(r - s):
            after -= 1
        return tuple(cand), float(after - before)

    def is_valid(self, config) -> bool:
        return kqueens_valid(queens_board(config), self.k)

    def random_config(self, stream: RandomStream):
        return tuple(int(v) for v in stream.permutation(self.k))


# --------------------------------------------------------------------------
# double digest


@dataclass
class DigestInstance:
    a: tuple[int, ...]
    b: tuple[int, ...]
    c: tuple[int, ...]
    L: int

    def __post_init__(self):
        self.a = tuple(int(v) for v in self.a)
        self.b = tuple(int(v) for v in self.b)
        self.c = tuple(sorted((int(v) for v in self.c), reverse=True))
        for name in ("a", "b", "c"):
            if sum(getattr(self, name)) != self.L:
                raise ValueError(f"fragments {name} do not sum to L={self.L}")


TABLE_DIGESTS = {
    10000: DigestInstance(
        (5976, 1543, 1319, 1120, 42), (4513, 2823, 2057, 607), (4513, 1543, 1319, 1120, 607, 514, 342, 42), 10000
    ),
    20000: DigestInstance(
        (8479, 4868, 3696, 2646, 169, 142),
        (11968, 5026, 1081, 1050, 691, 184),
        (8479, 4167, 2646, 1081, 881, 859, 701, 691, 184, 169, 142),
        20000,
    ),
    40000: DigestInstance(
        (9979, 9348, 8022, 4020, 2693, 1892, 1714, 1371, 510, 451),
        (9492, 8453, 7749, 7365, 2292, 2180, 1023, 959, 278, 124, 85),
        (7042, 5608, 5464, 4371, 3884, 3121, 1901, 1768, 1590, 959, 899, 707, 702, 510, 451, 412, 278, 124, 124, 85),
        40000,
    ),
}


def double_digest_fragments(sigma: Sequence[int], mu: Sequence[int]) -> list[int]:
    """Fragment lengths (descending) when both cut sets of the orderings are applied."""
    cuts = set(itertools.accumulate(sigma[:-1])) | set(itertools.accumulate(mu[:-1]))
    L = sum(sigma)
    points = [0] + sorted(cuts) + [L]
    return sorted((q - p for p, q in zip(points, points[1:])), reverse=True)


def digest_energy(instance: DigestInstance, sigma: Sequence[int], mu: Sequence[int]) -> float:
    """H = sum_j (c_j - c_hat_j)^2 / c_j over fragments sorted in descending order.

    If the orderings produce fewer fragments than c (coinciding cuts), the
    missing ones count as length zero. Surplus fragments are charged
    c_hat^2 / min(c).
    """
    chat = double_digest_fragments(sigma, mu)
    c = instance.c
    h = 0.0
    for j, cj in enumerate(c):
        diff = cj - (chat[j] if j < len(chat) else 0)
        h += diff * diff / cj
    cmin = min(c)
    for extra in chat[len(c) :]:
        h += extra * extra / cmin
    return h


class DigestModel:
    """Configurations are pairs (sigma, mu) of orderings of the a and b fragments.

    The move picks sigma or mu with probability 1/2, a block length uniformly in
    2..max_block and a uniform start, then reverses that block. Reversing the
    same block undoes the move, so suggestions are symmetric.
    """

    def __init__(self, instance: DigestInstance, max_block: int = 3):
        self.instance = instance
        self.max_block = max_block
        self.sweep_size = len(instance.a) + len(instance.b)

    def energy(self, config) -> float:
        return digest_energy(self.instance, config[0], config[1])

    def _reverse(self, seq, stream):
        n = len(seq)
        if n < 2:
            return tuple(seq)
        length = int(stream.integers(2, min(self.max_block, n) + 1))
        start = int(stream.integers(0, n - length + 1))
        s = list(seq)
        s[start : start + length] = s[start : start + length][::-1]
        return tuple(s)

    def propose(self, config, stream):
        sigma, mu = config
        if stream.uniform() < 0.5:
            cand = (self._reverse(sigma, stream), mu)
        else:
            cand = (sigma, self._reverse(mu, stream))
        return cand, self.energy(cand) - self.energy(config)

    def is_valid(self, config) -> bool:
        sigma, mu = config
        return sorted(sigma) == sorted(self.instance.a) and sorted(mu) == sorted(self.instance.b)

    def random_config(self, stream: RandomStream):
        a = self.instance.a
        b = self.instance.b
        return (
            tuple(a[i] for i in stream.permutation(len(a))),
            tuple(b[i] for i in stream.permutation(len(b))),
        )


def mirror(config):
    sigma, mu = config
    return (tuple(reversed(sigma)), tuple(reversed(mu)))


def canonical_digest(config):
    """Identify a solution with its mirror image (both orderings reversed)."""
    return min(tuple(config), mirror(config))


def exhaustive_digest_solutions(instance: DigestInstance) -> set:
    """All (sigma, mu) with H = 0, by enumerating every pair of orderings."""
    sols = set()
    sigmas = set(itertools.permutations(instance.a))
    mus = set(itertools.permutations(instance.b))
    target = list(instance.c)
    for s in sigmas:
        for m in mus:
            if double_digest_fragments(s, m) == target:
                sols.add((s, m))
    return sols


def read_digest(path) -> DigestInstance:
    """Digest file: lines "a: ...", "b: ...", "c: ..." and "L: value"."""
    fields = {}
    for ln in Path(path).read_text().splitlines():
        if ":" not in ln:
            continue
        key, _, rest = ln.partition(":")
        fields[key.strip()] = [int(v) for v in rest.replace(",", " ").split()]
    return DigestInstance(tuple(fields["a"]), tuple(fields["b"]), tuple(fields["c"]), fields["L"][0])


def write_digest(path, inst: DigestInstance) -> None:
    rows = [
        "a: " + " ".join(map(str, inst.a)),
        "b: " + " ".join(map(str, inst.b)),
        "c: " + " ".join(map(str, inst.c)),
        f"L: {inst.L}",
    ]
    Path(path).write_text("\n".join(rows) + "\n")
