import math

import numpy as np
import pytest

from neurocomp import reinforce as rl
from neurocomp.numerics import RandomStream, binomial_stderr


def _layer(W, **kw):
    return rl.StochasticOutputLayer(np.array(W, float), **kw)


def test_firing_probability_and_mean():
    assert rl.firing_probability(0.0, 3.0) == 0.5
    b, beta = 0.7, 1.3
    p = rl.firing_probability(b, beta)
    assert p == pytest.approx(1 / (1 + math.exp(-2 * beta * b)), abs=1e-15)
    assert 2 * p - 1 == pytest.approx(math.tanh(beta * b), abs=1e-15)
    assert rl.firing_probability(-1e4, 1.0) == 0.0
    layer = _layer([[0.4, -0.2]], beta=beta)
    assert layer.mean_output([1.0, 1.0])[0] == pytest.approx(math.tanh(beta * 0.2))


def test_sampled_outputs_match_the_mean():
    layer = _layer([[0.3, 0.2]], beta=1.0)
    V = np.array([1.0, -1.0])
    s = RandomStream(0)
    n = 50_000
    ups = sum(rl.stochastic_output(layer, V, s)[0] > 0 for _ in range(n))
    p = rl.firing_probability(0.1, 1.0)
    assert abs(ups / n - p) < 3 * binomial_stderr(p, n)


def test_deterministic_limit():
    layer = _layer([[1.0, -1.0], [0.5, 0.5]], beta=math.inf)
    s = RandomStream(1)
    assert np.array_equal(rl.stochastic_output(layer, [0.0, 2.0], s), [-1.0, 1.0])
    assert np.array_equal(rl.stochastic_output(layer, [0.0, 0.0], s), [1.0, 1.0])


def test_layer_validation():
    with pytest.raises(ValueError):
        _layer([[1.0]], beta=0.0)
    with pytest.raises(ValueError):
        _layer([[1.0]], eta_plus=0.01, eta_minus=0.1)


def test_reward_and_penalty_increments():
    layer = _layer([[0.5, -0.25]], beta=2.0, eta_plus=0.2, eta_minus=0.02)
    V = np.array([1.0, 2.0])
    mean = math.tanh(2.0 * 0.0)
    assert mean == 0.0
    rewarded = rl.arp_update(layer, V, [1.0], 1)
    penalised = rl.arp_update(layer, V, [1.0], -1)
    assert rewarded == pytest.approx(0.2 * (1.0 - mean) * V[None])
    assert penalised == pytest.approx(0.02 * (-1.0 - mean) * V[None])
    with pytest.raises(ValueError):
        rl.arp_update(layer, V, [1.0], 0)
    with pytest.raises(ValueError):
        rl.arp_update(layer, V, [1.0], 0.5)


def test_reward_rule_reduces_to_supervised_when_output_is_correct():
    layer = _layer([[0.3, -0.1, 0.2]], beta=1.5)
    V, t = np.array([1.0, -1.0, 1.0]), np.array([1.0])
    assert np.array_equal(rl.arp_update(layer, V, t, 1), rl.supervised_increment(layer, V, t, layer.eta_plus))
    # a penalised wrong output pushes towards the same target
    assert np.array_equal(rl.arp_update(layer, V, -t, -1), rl.supervised_increment(layer, V, t, layer.eta_minus))


def test_derivative_factor():
    layer = _layer([[0.4, 0.3]], beta=2.0, derivative_factor=True)
    V, t = np.array([1.0, 1.0]), np.array([-1.0])
    th = math.tanh(2.0 * 0.7)
    expected = 0.1 * (t[0] - th) * 2.0 * (1 - th**2) * V
    assert rl.supervised_increment(layer, V, t, 0.1)[0] == pytest.approx(expected)


def test_mean_energy_decrease():
    rng = RandomStream(2)
    for _ in range(20):
        layer = _layer(rng.normal(size=(3, 4)), beta=float(rng.uniform(size=1, low=0.3, high=2.0)[0]))
        V = rng.normal(size=4)
        t = np.where(rng.uniform(size=3) < 0.5, -1.0, 1.0)
        chg = rl.mean_energy_decrease_check(layer, V, t, 0.05)
        assert chg.analytic <= 0.0
        assert chg.finite_difference == pytest.approx(chg.analytic, rel=1e-6, abs=1e-12)
        assert layer.derivative_factor is False


def test_mean_energy_values():
    layer = _layer([[0.0, 0.0]])
    assert rl.mean_energy(layer, [[1.0, 1.0], [1.0, -1.0]], [[1.0], [-1.0]]) == 2.0
    strong = _layer([[50.0, 0.0]])
    assert rl.mean_energy(strong, [[1.0, 0.0]], [[1.0]]) == pytest.approx(0.0, abs=1e-12)


def test_toy_task_is_separable_with_bias():
    X, T = rl.toy_task(RandomStream(3), p=30, N=4)
    assert X.shape == (30, 4) and T.shape == (30, 1)
    assert np.all(X[:, -1] == 1.0) and set(np.unique(T)) <= {-1.0, 1.0}


def test_arp_learns_the_toy_task():
    errors = []
    for seed in range(5):
        s = RandomStream(10 + seed)
        X, T = rl.toy_task(s)
        layer = _layer(np.zeros((1, 3)), beta=1.0, eta_plus=0.1, eta_minus=0.01)
        before = rl.deterministic_error(layer, X, T)
        run = rl.train_arp(layer, X, T, 5000, s, record=True)
        errors.append(rl.deterministic_error(layer, X, T))
        assert len(run.rewards) == 5000 and len(run.weight_trace) == 5000
        assert np.mean(np.array(run.rewards[-1000:]) > 0) > np.mean(np.array(run.rewards[:500]) > 0)
        assert errors[-1] <= before
    assert np.mean(errors) < 0.1


def test_supervised_training_uses_the_same_draws():
    s1, s2 = RandomStream(20), RandomStream(20)
    X, T = rl.toy_task(RandomStream(21))
    a = rl.train_supervised(_layer(np.zeros((1, 3))), X, T, 300, s1)
    rl.train_arp(_layer(np.zeros((1, 3))), X, T, 300, s2)
    # both consumed one pattern index and one output draw per step
    assert s1.uniform() == s2.uniform()
    assert rl.deterministic_error(a.layer, X, T) < 0.2
