"""Stochastic binary output units and associative reward-penalty learning.

An output unit with local field b = sum_j W_j V_j takes the value +1 with
probability 1/(1 + exp(-2 beta b)), so that <O> = tanh(beta b). Without
targets, the reward-penalty rule treats a rewarded output as correct and the
negation of a penalised output as correct.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import RandomStream


@dataclass(eq=False)
class StochasticOutputLayer:
    weights: np.ndarray  # (M, N)
    beta: float = 1.0
    eta_plus: float = 0.1
    eta_minus: float = 0.01
    derivative_factor: bool = False

    def __post_init__(self):
        self.weights = np.atleast_2d(np.array(self.weights, dtype=float))
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not self.eta_plus >= self.eta_minus > 0:
            raise ValueError("rates must satisfy eta_plus >= eta_minus > 0")

    def fields(self, V) -> np.ndarray:
        return self.weights @ np.asarray(V, dtype=float).reshape(-1)

    def mean_output(self, V) -> np.ndarray:
        return np.tanh(self.beta * self.fields(V))


def firing_probability(b, beta: float):
    """P(O = +1) = 1 / (1 + exp(-2 beta b))."""
    x = -2.0 * beta * np.asarray(b, dtype=float)
    return 0.5 * (1.0 - np.tanh(x / 2.0))


def stochastic_output(layer: StochasticOutputLayer, V, stream: RandomStream) -> np.ndarray:
    b = layer.fields(V)
    if math.isinf(layer.beta):
        return np.where(b >= 0, 1.0, -1.0)
    return np.where(stream.uniform(size=b.shape) < firing_probability(b, layer.beta), 1.0, -1.0)


def supervised_increment(layer: StochasticOutputLayer, V, target, eta: float) -> np.ndarray:
    """delta W_mn = eta delta_m V_n with delta_m = t_m - <O_m>, times beta(1 - <O_m>^2) if enabled."""
    V = np.asarray(V, dtype=float).reshape(-1)
    mean = layer.mean_output(V)
    delta = np.asarray(target, dtype=float).reshape(-1) - mean
    if layer.derivative_factor:
        delta = delta * layer.beta * (1.0 - mean**2)
    return eta * np.outer(delta, V)


def arp_update(layer: StochasticOutputLayer, V, O, r: int) -> np.ndarray:
    """Weight increments of the associative reward-penalty rule.

    reward (r = +1): eta_plus (O - <O>) V; penalty (r = -1): eta_minus (-O - <O>) V.
    """
    if r not in (1, -1):
        raise ValueError("reinforcement signal must be +1 or -1")
    O = np.asarray(O, dtype=float).reshape(-1)
    if r == 1:
        return supervised_increment(layer, V, O, layer.eta_plus)
    return supervised_increment(layer, V, -O, layer.eta_minus)


def mean_energy(layer: StochasticOutputLayer, patterns, targets) -> float:
    """<H> = sum_mu sum_i (1 - t_i <O_i>) for +-1 targets."""
    total = 0.0
    for V, t in zip(np.atleast_2d(patterns), np.atleast_2d(targets)):
        total += float(np.sum(1.0 - np.asarray(t, float) * layer.mean_output(V)))
    return total


@dataclass
class EnergyChange:
    analytic: float
    finite_difference: float


def mean_energy_decrease_check(layer: StochasticOutputLayer, pattern, target, eta: float,
                               h: float = 1e-4) -> EnergyChange:
    """First-order change of <H> under the supervised rule with the derivative factor.

    analytic: -eta beta^2 sum_mn [1 - tanh^2(beta b_m)]^2 [1 - t_m tanh(beta b_m)] V_n^2.
    finite_difference: the directional derivative of <H> along the increment,
    by central differences with step h.
    """
    V = np.asarray(pattern, dtype=float).reshape(-1)
    t = np.asarray(target, dtype=float).reshape(-1)
    th = layer.mean_output(V)
    analytic = -eta * layer.beta**2 * float(np.sum(((1 - th**2) ** 2 * (1 - t * th))[:, None] * V[None, :] ** 2))
    saved = layer.derivative_factor
    layer.derivative_factor = True
    dW = supervised_increment(layer, V, t, eta)
    layer.derivative_factor = saved
    W = layer.weights.copy()
    layer.weights = W + h * dW
    up = mean_energy(layer, V, t)
    layer.weights = W - h * dW
    down = mean_energy(layer, V, t)
    layer.weights = W
    return EnergyChange(analytic, (up - down) / (2.0 * h))


@dataclass
class ArpRun:
    layer: StochasticOutputLayer
    rewards: list = field(default_factory=list)
    weight_trace: list = field(default_factory=list)


def train_arp(layer: StochasticOutputLayer, patterns, targets, steps: int, stream: RandomStream,
              reward=None, record: bool = False) -> ArpRun:
    """Reward-penalty training on random patterns.

    The environment's `reward(O, t)` defaults to +1 when the output matches
    the target exactly and -1 otherwise.
    """
    X = np.atleast_2d(np.asarray(patterns, dtype=float))
    T = np.asarray(targets, dtype=float).reshape(len(X), -1)
    judge = reward or (lambda O, t: 1 if np.array_equal(O, t) else -1)
    run = ArpRun(layer)
    for _ in range(steps):
        mu = int(stream.integers(0, len(X)))
        O = stochastic_output(layer, X[mu], stream)
        r = judge(O, T[mu])
        layer.weights = layer.weights + arp_update(layer, X[mu], O, r)
        run.rewards.append(r)
        if record:
            run.weight_trace.append(layer.weights.copy())
    return run


def train_supervised(layer: StochasticOutputLayer, patterns, targets, steps: int, stream: RandomStream,
                     record: bool = False) -> ArpRun:
    """Supervised stochastic learning drawing the same random numbers as `train_arp`.

    Each step draws the pattern and a stochastic output (to keep the stream in
    step) and applies eta_plus (t - <O>) V.
    """
    X = np.atleast_2d(np.asarray(patterns, dtype=float))
    T = np.asarray(targets, dtype=float).reshape(len(X), -1)
    run = ArpRun(layer)
    for _ in range(steps):
        mu = int(stream.integers(0, len(X)))
        stochastic_output(layer, X[mu], stream)
        layer.weights = layer.weights + supervised_increment(layer, X[mu], T[mu], layer.eta_plus)
        if record:
            run.weight_trace.append(layer.weights.copy())
    return run


def deterministic_error(layer: StochasticOutputLayer, patterns, targets) -> float:
    """Classification error of the most likely output sgn(b) (sgn(0) = +1)."""
    X = np.atleast_2d(np.asarray(patterns, dtype=float))
    T = np.asarray(targets, dtype=float).reshape(len(X), -1)
    O = np.where(X @ layer.weights.T >= 0, 1.0, -1.0)
    return float(np.mean(np.any(O != T, axis=1)))


def toy_task(stream: RandomStream, p: int = 20, N: int = 3):
    """Linearly separable +-1 task: the last input is a constant 1 acting as a bias."""
    w_true = stream.normal(size=N)
    X = np.hstack([stream.normal(size=(p, N - 1)), np.ones((p, 1))])
    T = np.where(X @ w_true >= 0, 1.0, -1.0)
    return X, T[:, None]
