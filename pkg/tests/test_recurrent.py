import math

import numpy as np
import pytest

from neurocomp import recurrent as rc
from neurocomp.feedforward import IDENTITY, SIGMOID, TANH
from neurocomp.numerics import RandomStream, finite_diff_gradient

TIGHT = {"tol": 1e-14, "max_steps": 400_000}


def _contracting(n, n_in, seed, scale=0.3, **kw):
    rng = RandomStream(seed)
    return rc.RecurrentNet(rng.normal(size=(n, n)) * scale, rng.normal(size=(n, n_in)), rng.normal(size=n) * 0.2, **kw)


def test_relaxation_trivial_cases():
    net = rc.RecurrentNet(np.zeros((3, 3)), np.zeros((3, 2)), np.zeros(3))
    assert np.allclose(rc.relax_states(net, [1.0, -1.0]), 0.5, atol=1e-8)
    one = rc.RecurrentNet([[0.5]], [[0.0]], [0.0], activation=TANH)
    assert rc.relax_states(one, [0.0], V0=[0.3], **TIGHT)[0] == pytest.approx(0.0, abs=1e-8)
    with pytest.raises(ValueError):
        rc.relax_states(net, [0.0, 0.0], dt=1.5)


def test_relaxation_matches_damped_iteration():
    net = _contracting(2, 2, 1)
    x = np.array([0.4, -0.9])
    V = rc.relax_states(net, x)
    assert rc.fixed_point_residual(net, V, x) < 10 * rc.DEFAULT_TOL
    oracle = np.zeros(2)
    for _ in range(5000):
        b = net.w_vv @ oracle + net.w_vx @ x - net.theta_v
        oracle = 0.5 * oracle + 0.5 / (1 + np.exp(-b))
    assert np.allclose(V, oracle, atol=1e-8)


def test_relaxation_reports_divergence():
    # V = tanh(3V) has an unstable fixed point at 0; a large negative self-coupling oscillates
    flip = rc.RecurrentNet([[-30.0]], [[0.0]], [0.0], activation=TANH)
    with pytest.raises(rc.RelaxationDiverged):
        rc.relax_states(flip, [0.0], dt=0.9, V0=[0.1], max_steps=2000)


def test_error_relaxation():
    net = _contracting(3, 2, 2, output_units=[0, 2])
    x = np.array([0.3, 0.7])
    V = rc.relax_states(net, x, **TIGHT)
    assert np.all(rc.relax_errors(net, V, x, np.zeros(3)) == 0.0)
    E = rc.output_errors(net, V, [0.1, 0.9])
    assert E[1] == 0.0
    D = rc.relax_errors(net, V, x, E, **TIGHT)
    b = net.w_vv @ V + net.w_vx @ x - net.theta_v
    gp = np.exp(-b) / (1 + np.exp(-b)) ** 2
    L = np.eye(3) - np.diag(gp) @ net.w_vv
    oracle = gp * (np.linalg.inv(L).T @ E)
    assert np.allclose(D, oracle, atol=1e-8)
    assert np.allclose(rc.solve_errors(net, V, x, E), oracle, atol=1e-12)


def test_error_relaxation_scalar_closed_form():
    w = 0.8
    net = rc.RecurrentNet([[w]], [[1.0]], [0.0], activation=TANH, output_units=[0])
    x = [0.5]
    V = rc.relax_states(net, x, **TIGHT)
    gp = 1 - math.tanh(w * V[0] + 0.5) ** 2
    E = rc.output_errors(net, V, [0.2])
    D = rc.relax_errors(net, V, x, E, **TIGHT)
    assert D[0] == pytest.approx(gp * E[0] / (1 - w * gp), abs=1e-10)


def test_recurrent_step_follows_the_gradient():
    net = _contracting(3, 2, 3, output_units=[1])
    x, y = np.array([0.5, -0.2]), [0.8]
    h = 1e-4

    def H(flat):
        trial = net.copy()
        trial.w_vv[...] = flat.reshape(3, 3)
        return rc.steady_energy(trial, x, y, **TIGHT)

    fd = finite_diff_gradient(H, net.w_vv.ravel().copy(), h).reshape(3, 3)
    eta = 0.1
    before = net.w_vv.copy()
    step = rc.recurrent_bp_step(net, x, y, eta, **TIGHT)
    assert np.allclose(net.w_vv - before, -eta * fd, atol=1e-5)
    assert np.allclose(net.w_vv - before, eta * np.outer(step.delta, step.V_star))


def test_zero_error_means_no_change():
    net = _contracting(2, 1, 4, output_units=[0])
    V = rc.relax_states(net, [1.0], **TIGHT)
    before = (net.w_vv.copy(), net.w_vx.copy(), net.theta_v.copy())
    rc.recurrent_bp_step(net, [1.0], [V[0]], 0.5, **TIGHT)
    assert np.allclose(net.w_vv, before[0], atol=1e-12) and np.allclose(net.w_vx, before[1], atol=1e-12)
    with pytest.raises(ValueError):
        rc.output_errors(rc.RecurrentNet(np.zeros((1, 1)), np.zeros((1, 1)), [0.0]), np.zeros(1), [0.0])


def test_two_pattern_association():
    patterns = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    targets = [[0.2], [0.8]]
    solved = 0
    for seed in range(10):
        net = _contracting(3, 2, 100 + seed, output_units=[0])
        for step in range(5000):
            mu = step % 2
            rc.recurrent_bp_step(net, patterns[mu], targets[mu], 0.5)
            if step % 250 == 249 and sum(rc.steady_energy(net, p, t) for p, t in zip(patterns, targets)) < 1e-3:
                solved += 1
                break
    assert solved >= 8


def _sequence_net(seed, n=3, n_in=2, m=2, **kw):
    return rc.RecurrentNet.random(n, n_in, m, RandomStream(seed), activation=TANH, **kw)


def _flat_fd(net, task, h=1e-5):
    out = []
    for name in ("w_vv", "w_vx", "theta_v", "w_ov", "theta_o"):
        arr = getattr(net, name)

        def f(p, arr=arr):
            saved = arr.copy()
            arr[...] = p
            val = rc.sequence_energy(net, task)
            arr[...] = saved
            return val

        out.append(finite_diff_gradient(f, arr.copy(), h).ravel())
    return np.concatenate(out)


def test_bptt_matches_finite_differences():
    rng = RandomStream(5)
    for seed in range(10):
        net = _sequence_net(seed)
        net.theta_v[...] = rng.normal(size=3) * 0.3
        task = rc.SequenceTask(rng.normal(size=(6, 2)), rng.normal(size=(6, 2)), V0=rng.normal(size=3) * 0.5)
        g = rc.bptt_gradients(net, task).flat()
        fd = _flat_fd(net, task)
        assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-6


def test_scalar_bptt_three_steps():
    net = rc.RecurrentNet([[0.9]], [[0.7]], [0.1], [[1.3]], [0.2], activation=TANH, output_activation=SIGMOID)
    task = rc.SequenceTask([0.5, -1.0, 2.0], [0.3, 0.6, 0.1])
    g = rc.bptt_gradients(net, task).flat()
    fd = _flat_fd(net, task)
    assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) < 1e-6


def test_single_step_is_ordinary_backprop():
    net = _sequence_net(6)
    x, y = np.array([0.4, -0.3]), np.array([0.5, -0.5])
    g = rc.bptt_gradients(net, rc.SequenceTask(x[None], y[None]))
    b = net.w_vx @ x - net.theta_v
    V = np.tanh(b)
    O = net.w_ov @ V - net.theta_o
    Delta = y - O
    delta = (1 - V**2) * (net.w_ov.T @ Delta)
    assert np.allclose(g.w_ov, -np.outer(Delta, V))
    assert np.allclose(g.w_vx, -np.outer(delta, x))
    assert np.allclose(g.w_vv, 0.0)


def test_uncoupled_steps_decouple():
    net = _sequence_net(7)
    net.w_vv[...] = 0.0
    rng = RandomStream(8)
    task = rc.SequenceTask(rng.normal(size=(4, 2)), rng.normal(size=(4, 2)))
    full = rc.bptt_gradients(net, task)
    parts = [rc.bptt_gradients(net, rc.SequenceTask(task.inputs[t : t + 1], task.targets[t : t + 1])) for t in range(4)]
    assert np.allclose(full.w_vx, sum(p.w_vx for p in parts))
    assert np.allclose(full.w_ov, sum(p.w_ov for p in parts))


def test_truncation_identities():
    net = _sequence_net(9)
    net.w_vv *= 0.5  # contracting regime, where longer memory adds smaller corrections
    rng = RandomStream(10)
    task = rc.SequenceTask(rng.normal(size=(10, 2)), rng.normal(size=(10, 2)))
    full = rc.bptt_gradients(net, task)
    for tau in (10, 15):
        assert np.allclose(rc.bptt_truncated(net, task, tau).flat(), full.flat(), atol=1e-14)
    one = rc.bptt_truncated(net, task, 1)
    u = rc.unfold(net, task)
    local = np.array([(1 - u.V[t] ** 2) * (net.w_ov.T @ (task.targets[t - 1] - u.O[t])) for t in range(1, 11)])
    assert np.allclose(one.deltas[1:], local)
    # in the contracting regime each extra step of memory brings the gradient closer to the full one
    gaps = [np.linalg.norm(rc.bptt_truncated(net, task, k).flat() - full.flat()) for k in range(1, 11)]
    assert all(a > b for a, b in zip(gaps, gaps[1:])) and gaps[-1] < 1e-14
    with pytest.raises(ValueError):
        rc.bptt_truncated(net, task, 0)


def test_vanishing_gradient_ratio():
    w = 0.6
    net = rc.RecurrentNet([[w]], [[0.0]], [0.0], [[1.0]], [0.0], activation=IDENTITY)
    T = 12
    task = rc.SequenceTask(np.zeros(T), np.zeros(T), V0=[1.0])
    u = rc.unfold(net, task)
    targets = u.O[1:].copy()
    targets[-1] += 1.0  # only the final step carries an error
    g = rc.bptt_gradients(net, rc.SequenceTask(np.zeros(T), targets, V0=[1.0]))
    ratios = np.abs(g.deltas[1:-1, 0] / g.deltas[2:, 0])
    assert np.allclose(ratios, w, rtol=0.05)

    tanh_net = rc.RecurrentNet([[0.5]], [[0.0]], [0.0], [[1.0]], [0.0], activation=TANH)
    zero = rc.SequenceTask(np.zeros(T), np.r_[np.zeros(T - 1), 1.0])
    g = rc.bptt_gradients(tanh_net, zero)
    # V stays at 0, so g' = 1 and the factor is exactly w
    assert np.allclose(np.abs(g.deltas[1:-1, 0] / g.deltas[2:, 0]), 0.5, rtol=0.05)


def test_sequence_file_roundtrip(tmp_path):
    rng = RandomStream(11)
    task = rc.SequenceTask(rng.normal(size=(5, 2)), rng.normal(size=(5, 1)))
    rc.write_sequence(tmp_path / "s.txt", task)
    back = rc.read_sequence(tmp_path / "s.txt")
    assert np.array_equal(back.inputs, task.inputs) and np.array_equal(back.targets, task.targets)
