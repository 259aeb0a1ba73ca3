"""Recurrent networks: learning at fixed points and learning sequences.

Recurrent backpropagation relaxes the continuous dynamics
    tau dV/dt = -V + g(W_vv V + W_vx x - theta_v)
to a stable fixed point V*, relaxes the dual linear dynamics of the errors to
Delta*, and updates W_vv by eta Delta* V*^T and W_vx by eta Delta* x^T. Some of
the relaxing units serve as outputs (`output_units`).

Backpropagation through time unfolds the discrete dynamics
    V_t = g(W_vv V_{t-1} + W_vx x_t - theta_v),  O_t = g_o(W_ov V_t - theta_o)
over t = 1..T with H = 1/2 sum_t |y_t - O_t|^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .feedforward import IDENTITY, SIGMOID, TANH, activation
from .numerics import RandomStream

DEFAULT_TOL = 1e-9
DEFAULT_MAX_STEPS = 100_000


class RelaxationDiverged(RuntimeError):
    """The relaxation did not settle within the step budget (unstable or no fixed point)."""

    def __init__(self, steps: int, change: float):
        self.steps = steps
        self.change = change
        super().__init__(f"relaxation did not converge in {steps} steps (last change {change:.3e})")


@dataclass(eq=False)
class RecurrentNet:
    w_vv: np.ndarray
    w_vx: np.ndarray
    theta_v: np.ndarray
    w_ov: np.ndarray | None = None
    theta_o: np.ndarray | None = None
    tau: float = 1.0
    activation: str = SIGMOID
    output_activation: str = IDENTITY
    output_units: Sequence[int] = field(default_factory=list)

    def __post_init__(self):
        self.w_vv = np.atleast_2d(np.array(self.w_vv, dtype=float))
        n = self.w_vv.shape[0]
        if self.w_vv.shape != (n, n):
            raise ValueError("w_vv must be square")
        self.w_vx = np.array(self.w_vx, dtype=float).reshape(n, -1)
        self.theta_v = np.array(self.theta_v, dtype=float).reshape(n)
        if self.w_ov is not None:
            self.w_ov = np.array(self.w_ov, dtype=float).reshape(-1, n)
            m = self.w_ov.shape[0]
            self.theta_o = np.zeros(m) if self.theta_o is None else np.array(self.theta_o, float).reshape(m)
        self.output_units = [int(i) for i in self.output_units]
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    @property
    def n_hidden(self) -> int:
        return self.w_vv.shape[0]

    @property
    def n_in(self) -> int:
        return self.w_vx.shape[1]

    def copy(self) -> "RecurrentNet":
        return RecurrentNet(
            self.w_vv.copy(), self.w_vx.copy(), self.theta_v.copy(),
            None if self.w_ov is None else self.w_ov.copy(),
            None if self.theta_o is None else self.theta_o.copy(),
            self.tau, self.activation, self.output_activation, list(self.output_units),
        )

    @classmethod
    def random(cls, n_hidden: int, n_in: int, n_out: int, stream: RandomStream, std: float = 0.5,
               **kw) -> "RecurrentNet":
        return cls(
            stream.normal(size=(n_hidden, n_hidden)) * std,
            stream.normal(size=(n_hidden, n_in)) * std,
            np.zeros(n_hidden),
            stream.normal(size=(n_out, n_hidden)) * std,
            np.zeros(n_out),
            **kw,
        )


# --------------------------------------------------------------------------
# recurrent backpropagation


def _sigmoid_value(b):
    return 0.5 * (1.0 + np.tanh(0.5 * b))


_ACTIVATION_VALUE = {TANH: np.tanh, SIGMOID: _sigmoid_value}


def local_fields(net: RecurrentNet, V, x) -> np.ndarray:
    return net.w_vv @ V + net.w_vx @ np.asarray(x, dtype=float).reshape(-1) - net.theta_v


def fixed_point_residual(net: RecurrentNet, V, x) -> float:
    return float(np.max(np.abs(V - activation(net.activation, local_fields(net, V, x))[0])))


def relax_states(net: RecurrentNet, x, dt: float | None = None, max_steps: int = DEFAULT_MAX_STEPS,
                 tol: float = DEFAULT_TOL, V0=None) -> np.ndarray:
    """Forward-Euler relaxation of tau dV/dt = -V + g(b) until the step changes V by less than tol."""
    dt = net.tau / 10.0 if dt is None else dt
    if not 0 < dt < net.tau:
        raise ValueError("the Euler step must satisfy 0 < dt < tau")
    V = np.zeros(net.n_hidden) if V0 is None else np.array(V0, dtype=float)
    rate = dt / net.tau
    change = np.inf
    drive = net.w_vx @ np.asarray(x, dtype=float).reshape(-1) - net.theta_v
    g = _ACTIVATION_VALUE.get(net.activation) or (lambda b: activation(net.activation, b)[0])
    W = net.w_vv
    for _ in range(int(max_steps)):
        step = rate * (g(W @ V + drive) - V)
        V = V + step
        change = float(np.max(np.abs(step)))
        if not np.isfinite(change):
            break
        if change < tol:
            return V
    raise RelaxationDiverged(int(max_steps), change)


def relax_errors(net: RecurrentNet, V_star, x, E_star, dt: float | None = None,
                 max_steps: int = DEFAULT_MAX_STEPS, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Relax tau dDelta_j/dt = -Delta_j + sum_i Delta_i w_ij g'(b_j) + g'(b_j) E_j.

    `E_star` has one entry per relaxing unit (zero for non-output units).
    """
    dt = net.tau / 10.0 if dt is None else dt
    if not 0 < dt < net.tau:
        raise ValueError("the Euler step must satisfy 0 < dt < tau")
    gp = activation(net.activation, local_fields(net, V_star, x))[1]
    E = np.asarray(E_star, dtype=float).reshape(net.n_hidden)
    D = np.zeros(net.n_hidden)
    rate = dt / net.tau
    drive = gp * E
    change = np.inf
    for _ in range(int(max_steps)):
        step = rate * (-D + gp * (net.w_vv.T @ D) + drive)
        D = D + step
        change = float(np.max(np.abs(step)))
        if not np.isfinite(change):
            break
        if change < tol:
            return D
    raise RelaxationDiverged(int(max_steps), change)


def solve_errors(net: RecurrentNet, V_star, x, E_star) -> np.ndarray:
    """Delta* = g'(b*) (L^-1)^T E* with L = I - diag(g'(b*)) W_vv, by a direct linear solve."""
    gp = activation(net.activation, local_fields(net, V_star, x))[1]
    L = np.eye(net.n_hidden) - gp[:, None] * net.w_vv
    return gp * np.linalg.solve(L.T, np.asarray(E_star, dtype=float).reshape(net.n_hidden))


def output_errors(net: RecurrentNet, V_star, targets) -> np.ndarray:
    """E*_k = y_k - V*_k on output units and 0 elsewhere."""
    if not net.output_units:
        raise ValueError("recurrent backpropagation needs output_units")
    E = np.zeros(net.n_hidden)
    E[net.output_units] = np.asarray(targets, dtype=float).reshape(-1) - V_star[net.output_units]
    return E


def steady_energy(net: RecurrentNet, x, targets, **relax) -> float:
    V = relax_states(net, x, **relax)
    E = output_errors(net, V, targets)
    return 0.5 * float(E @ E)


@dataclass
class RecurrentStep:
    energy: float  # H* before the update
    delta: np.ndarray
    V_star: np.ndarray


def recurrent_bp_step(net: RecurrentNet, pattern, targets, eta: float, **relax) -> RecurrentStep:
    """One step of recurrent backpropagation on one pattern; `net` is updated in place.

    Thresholds change by -eta Delta*, the threshold counterpart of the rules.
    RelaxationDiverged propagates and leaves the weights untouched.
    """
    x = np.asarray(pattern, dtype=float).reshape(-1)
    V = relax_states(net, x, **relax)
    E = output_errors(net, V, targets)
    D = relax_errors(net, V, x, E, **relax)
    net.w_vv += eta * np.outer(D, V)
    net.w_vx += eta * np.outer(D, x)
    net.theta_v -= eta * D
    return RecurrentStep(0.5 * float(E @ E), D, V)


# --------------------------------------------------------------------------
# backpropagation through time


@dataclass
class SequenceTask:
    inputs: np.ndarray  # (T, N_in)
    targets: np.ndarray  # (T, N_out)
    V0: np.ndarray | None = None

    def __post_init__(self):
        self.inputs = np.array(self.inputs, dtype=float)
        if self.inputs.ndim == 1:
            self.inputs = self.inputs[:, None]
        self.targets = np.array(self.targets, dtype=float)
        if self.targets.ndim == 1:
            self.targets = self.targets[:, None]
        if len(self.inputs) != len(self.targets) or len(self.inputs) < 1:
            raise ValueError("inputs and targets need the same length T >= 1")

    @property
    def T(self) -> int:
        return len(self.inputs)


@dataclass
class Unfolded:
    V: np.ndarray  # (T + 1, n): V_0 .. V_T
    b: np.ndarray  # (T + 1, n): b_1 .. b_T at rows 1..T
    O: np.ndarray  # (T + 1, m): rows 1..T
    B: np.ndarray


def unfold(net: RecurrentNet, task: SequenceTask) -> Unfolded:
    if net.w_ov is None:
        raise ValueError("sequence learning needs output weights w_ov")
    T, n, m = task.T, net.n_hidden, net.w_ov.shape[0]
    V = np.zeros((T + 1, n))
    if task.V0 is not None:
        V[0] = task.V0
    b = np.zeros((T + 1, n))
    O = np.zeros((T + 1, m))
    B = np.zeros((T + 1, m))
    for t in range(1, T + 1):
        b[t] = net.w_vv @ V[t - 1] + net.w_vx @ task.inputs[t - 1] - net.theta_v
        V[t] = activation(net.activation, b[t])[0]
        B[t] = net.w_ov @ V[t] - net.theta_o
        O[t] = activation(net.output_activation, B[t])[0]
    return Unfolded(V, b, O, B)


def sequence_energy(net: RecurrentNet, task: SequenceTask) -> float:
    u = unfold(net, task)
    E = task.targets - u.O[1:]
    return 0.5 * float(np.sum(E * E))


@dataclass
class BPTTGradients:
    """dH/dparameter; the gradient-descent increments are -eta times these."""

    w_vv: np.ndarray
    w_vx: np.ndarray
    theta_v: np.ndarray
    w_ov: np.ndarray
    theta_o: np.ndarray
    deltas: np.ndarray  # (T + 1, n): delta_1 .. delta_T at rows 1..T
    energy: float

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in (self.w_vv, self.w_vx, self.theta_v, self.w_ov, self.theta_o)])


def _bptt(net: RecurrentNet, task: SequenceTask, tau_trunc: int | None) -> BPTTGradients:
    u = unfold(net, task)
    T = task.T
    E = np.zeros_like(u.O)
    E[1:] = task.targets - u.O[1:]
    go = np.zeros_like(u.B)
    gv = np.zeros_like(u.b)
    for t in range(1, T + 1):
        go[t] = activation(net.output_activation, u.B[t])[1]
        gv[t] = activation(net.activation, u.b[t])[1]
    Delta = E * go  # output errors Delta_t = E_t g'(B_t)
    deltas = np.zeros_like(u.V)
    if tau_trunc is None or tau_trunc >= T:
        for t in range(T, 0, -1):
            back = net.w_ov.T @ Delta[t]
            if t < T:
                back = back + net.w_vv.T @ deltas[t + 1]
            deltas[t] = gv[t] * back
    else:
        # each output error travels back at most tau_trunc - 1 recurrent steps
        for s in range(1, T + 1):
            e = gv[s] * (net.w_ov.T @ Delta[s])
            t = s
            for _ in range(tau_trunc):
                deltas[t] += e
                t -= 1
                if t < 1:
                    break
                e = gv[t] * (net.w_vv.T @ e)
    g_vv = np.zeros_like(net.w_vv)
    g_vx = np.zeros_like(net.w_vx)
    g_ov = np.zeros_like(net.w_ov)
    for t in range(1, T + 1):
        g_vv -= np.outer(deltas[t], u.V[t - 1])
        g_vx -= np.outer(deltas[t], task.inputs[t - 1])
        g_ov -= np.outer(Delta[t], u.V[t])
    return BPTTGradients(
        g_vv, g_vx, deltas[1:].sum(axis=0), g_ov, Delta[1:].sum(axis=0), deltas,
        0.5 * float(np.sum(E * E)),
    )


def bptt_gradients(net: RecurrentNet, task: SequenceTask) -> BPTTGradients:
    """Full backpropagation through time.

    delta_T = g'(b_T) W_ov^T Delta_T and
    delta_t = g'(b_t) (W_ov^T Delta_t + W_vv^T delta_{t+1}); then
    dH/dW_vv = -sum_t delta_t V_{t-1}^T, dH/dW_vx = -sum_t delta_t x_t^T,
    dH/dW_ov = -sum_t Delta_t V_t^T, and thresholds take +sum of the errors.
    """
    return _bptt(net, task, None)


def bptt_truncated(net: RecurrentNet, task: SequenceTask, tau_trunc: int) -> BPTTGradients:
    """BPTT in which each output error is propagated back through at most tau_trunc - 1 steps."""
    if tau_trunc < 1:
        raise ValueError("truncation time must be at least 1")
    return _bptt(net, task, int(tau_trunc))


def apply_gradients(net: RecurrentNet, grads: BPTTGradients, eta: float) -> None:
    net.w_vv -= eta * grads.w_vv
    net.w_vx -= eta * grads.w_vx
    net.theta_v -= eta * grads.theta_v
    net.w_ov -= eta * grads.w_ov
    net.theta_o -= eta * grads.theta_o


def read_sequence(path) -> SequenceTask:
    """Header "T N_in N_out", then T lines of inputs followed by targets."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    T, n_in, n_out = (int(v) for v in lines[0].split()[:3])
    rows = np.array([[float(v) for v in ln.split()] for ln in lines[1 : 1 + T]])
    if rows.shape != (T, n_in + n_out):
        raise ValueError(f"{path}: expected {T} rows of {n_in + n_out} numbers")
    return SequenceTask(rows[:, :n_in], rows[:, n_in:])


def write_sequence(path, task: SequenceTask) -> None:
    out = [f"{task.T} {task.inputs.shape[1]} {task.targets.shape[1]}"]
    out += [" ".join(repr(float(v)) for v in np.concatenate([x, y])) for x, y in zip(task.inputs, task.targets)]
    Path(path).write_text("\n".join(out) + "\n")
