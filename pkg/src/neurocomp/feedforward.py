"""Layered feed-forward networks trained by backpropagation.

Conventions used throughout:

* the local field of a unit is b = sum_j w_j x_j - theta, so thresholds enter
  with a minus sign and their gradients carry the opposite sign of the
  weights' input factor;
* arrays are batched along axis 0: a dense layer sees (batch, n_in), a
  convolution layer (batch, channels, height, width);
* `backprop` returns dH/dparameter summed over the batch, and the energy H is
  a sum over patterns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .numerics import RandomStream, symmetric_eigen

SIGMOID = "sigmoid"
TANH = "tanh"
RELU = "relu"
IDENTITY = "identity"
SOFTMAX = "softmax"
SIGN = "sign"
HEAVISIDE = "heaviside"
ACTIVATIONS = (SIGMOID, TANH, RELU, IDENTITY, SOFTMAX, SIGN, HEAVISIDE)

QUADRATIC = "quadratic"
LOGLIKELIHOOD = "loglikelihood_softmax"
CROSS_ENTROPY = "cross_entropy_sigmoid"
LOSSES = (QUADRATIC, LOGLIKELIHOOD, CROSS_ENTROPY)

TRAIN = "train"
INFER = "infer"

PLUS_MINUS_ONE = "plus_minus_one"
ZERO_ONE = "zero_one"
ONE_HOT = "one_hot"
CONVENTIONS = (PLUS_MINUS_ONE, ZERO_ONE, ONE_HOT)


class ShapeError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


# --------------------------------------------------------------------------
# activations


def _sigmoid(b):
    b = np.asarray(b, dtype=float)
    out = np.empty_like(b)
    pos = b >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-b[pos]))
    e = np.exp(b[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def activation(kind: str, b):
    """Value g(b) and derivative g'(b) of an elementwise activation.

    ReLU'(0) is taken as 0. The step functions (sign, heaviside) have zero
    derivative and are only meant for hand-built networks; sign(0) = +1 and
    heaviside(0) = 1.
    """
    b = np.asarray(b, dtype=float)
    if kind == SIGMOID:
        s = _sigmoid(b)
        return s, s * (1.0 - s)
    if kind == TANH:
        t = np.tanh(b)
        return t, 1.0 - t * t
    if kind == RELU:
        return np.maximum(b, 0.0), (b > 0).astype(float)
    if kind == IDENTITY:
        return b.copy(), np.ones_like(b)
    if kind == SIGN:
        return np.where(b >= 0, 1.0, -1.0), np.zeros_like(b)
    if kind == HEAVISIDE:
        return np.where(b >= 0, 1.0, 0.0), np.zeros_like(b)
    if kind == SOFTMAX:
        raise ValueError("softmax is not elementwise; use softmax()")
    raise ValueError(f"unknown activation {kind!r}")


def softmax(fields, alpha_scale: float = 1.0, winner_take_all: bool = False):
    """O_i = exp(alpha b_i) / sum_l exp(alpha b_l) along the last axis.

    With `winner_take_all` (the alpha -> infinity limit) the one-hot vector of
    the arg-max is returned; ties go to the lowest index.
    """
    b = np.asarray(fields, dtype=float)
    if not np.all(np.isfinite(b)):
        raise ValueError("softmax fields must be finite")
    if winner_take_all or math.isinf(alpha_scale):
        out = np.zeros_like(b)
        idx = np.argmax(b, axis=-1)
        np.put_along_axis(out, np.expand_dims(idx, -1), 1.0, axis=-1)
        return out
    z = alpha_scale * b
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_jacobian(O) -> np.ndarray:
    """dO_i/db_l = O_i (delta_il - O_l) for a single output vector."""
    O = np.asarray(O, dtype=float)
    return np.diag(O) - np.outer(O, O)


def _apply(kind: str, b):
    if kind == SOFTMAX:
        return softmax(b.reshape(b.shape[0], -1)).reshape(b.shape), None
    return activation(kind, b)


def _activation_backward(kind: str, V, deriv, grad_V):
    if kind == SOFTMAX:
        g = grad_V.reshape(grad_V.shape[0], -1)
        o = V.reshape(V.shape[0], -1)
        return (o * (g - np.sum(g * o, axis=1, keepdims=True))).reshape(V.shape)
    return grad_V * deriv


# --------------------------------------------------------------------------
# layers


class Layer:
    kind = "layer"
    activation = IDENTITY

    def parameters(self) -> dict[str, np.ndarray]:
        return {}

    def output_shape(self, input_shape: tuple) -> tuple:
        raise NotImplementedError

    def forward(self, x, mode: str = INFER, stream: RandomStream | None = None):
        raise NotImplementedError

    def backward(self, cache, grad_out, field_grad: bool = False):
        raise NotImplementedError


@dataclass(eq=False)
class Dense(Layer):
    """Fully connected layer: V = g(W x - theta), x flattened per pattern.

    `keep` is the dropout keep probability p (None disables dropout). In
    train mode each unit is kept with probability p, one mask per forward call
    (i.e. per minibatch); in infer mode outputs are multiplied by p.
    `mask` marks weights that exist (pruned weights are held at zero).
    """

    weights: np.ndarray
    thresholds: np.ndarray
    activation: str = SIGMOID
    keep: float | None = None
    mask: np.ndarray | None = None
    kind: str = field(default="dense", init=False)

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=float)
        self.thresholds = np.array(self.thresholds, dtype=float).reshape(-1)
        if self.weights.ndim != 2 or self.thresholds.shape != (self.weights.shape[0],):
            raise ShapeError("dense layer needs an (out, in) weight matrix and out thresholds")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.keep is not None and not 0.0 < self.keep <= 1.0:
            raise ValueError("dropout keep probability must lie in (0, 1]")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            self.weights = np.where(self.mask, self.weights, 0.0)

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    def parameters(self):
        return {"weights": self.weights, "thresholds": self.thresholds}

    def output_shape(self, input_shape):
        if int(np.prod(input_shape)) != self.n_in:
            raise ShapeError(f"dense layer expects {self.n_in} inputs, got shape {input_shape}")
        return (self.n_out,)

    def forward(self, x, mode=INFER, stream=None):
        x2 = np.asarray(x, dtype=float).reshape(len(x), -1)
        if x2.shape[1] != self.n_in:
            raise ShapeError(f"dense layer expects {self.n_in} inputs, got {x2.shape[1]}")
        b = x2 @ self.weights.T - self.thresholds
        V, d = _apply(self.activation, b)
        drop = None
        if self.keep is not None and self.keep < 1.0:
            if mode == TRAIN:
                if stream is None:
                    raise ValueError("dropout in train mode needs a random stream")
                drop = (stream.uniform(size=self.n_out) < self.keep).astype(float)
                V = V * drop
            else:
                V = V * self.keep
        return V, b, (x, x2, b, V, d, drop)

    def backward(self, cache, grad_out, field_grad=False):
        x, x2, b, V, d, drop = cache
        if field_grad:
            gb = grad_out
        else:
            g = grad_out if drop is None else grad_out * drop
            Vraw = V if drop is None else np.where(drop > 0, V, 0.0)
            gb = _activation_backward(self.activation, Vraw, d, g)
        grads = {"weights": gb.T @ x2, "thresholds": -gb.sum(axis=0)}
        if self.mask is not None:
            grads["weights"] = np.where(self.mask, grads["weights"], 0.0)
        gx = (gb @ self.weights).reshape(np.shape(x))
        return gx, grads


def _windows(x, P, Q, stride):
    w = np.lib.stride_tricks.sliding_window_view(x, (P, Q), axis=(2, 3))
    return w[:, :, ::stride, ::stride]


def conv_output_size(n: int, k: int, stride: int, padding: int) -> int:
    span = n + 2 * padding - k
    if span < 0 or span % stride:
        raise ShapeError(f"input size {n} with kernel {k}, stride {stride}, padding {padding} gives no integer output")
    return span // stride + 1


@dataclass(eq=False)
class Conv2D(Layer):
    """Convolution layer with shared weights.

    kernel has shape (maps, channels, P, Q). Output map m at position (i, j)
    is g(sum_{c,p,q} w[m,c,p,q] x[c, p + s i, q + s j] - theta[m]) on the
    zero-padded input.
    """

    kernel: np.ndarray
    thresholds: np.ndarray
    stride: int = 1
    padding: int = 0
    activation: str = RELU
    kind: str = field(default="convolution", init=False)

    def __post_init__(self):
        self.kernel = np.array(self.kernel, dtype=float)
        if self.kernel.ndim == 2:
            self.kernel = self.kernel[None, None]
        if self.kernel.ndim != 4:
            raise ShapeError("kernel must have shape (maps, channels, P, Q)")
        self.thresholds = np.array(self.thresholds, dtype=float).reshape(-1)
        if self.thresholds.shape != (self.kernel.shape[0],):
            raise ShapeError("one threshold per feature map")
        if self.stride < 1 or self.padding < 0:
            raise ShapeError("stride must be positive and padding non-negative")
        if self.activation == SOFTMAX:
            raise ValueError("softmax is only allowed in a final dense layer")

    def parameters(self):
        return {"kernel": self.kernel, "thresholds": self.thresholds}

    def output_shape(self, input_shape):
        if len(input_shape) != 3 or input_shape[0] != self.kernel.shape[1]:
            raise ShapeError(f"convolution expects ({self.kernel.shape[1]}, H, W), got {input_shape}")
        _, H, W = input_shape
        P, Q = self.kernel.shape[2:]
        return (
            self.kernel.shape[0],
            conv_output_size(H, P, self.stride, self.padding),
            conv_output_size(W, Q, self.stride, self.padding),
        )

    def forward(self, x, mode=INFER, stream=None):
        x = np.asarray(x, dtype=float)
        if x.ndim == 3:
            x = x[:, None]
        self.output_shape(x.shape[1:])
        pad = self.padding
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
        P, Q = self.kernel.shape[2:]
        win = _windows(xp, P, Q, self.stride)
        b = np.einsum("bchwpq,mcpq->bmhw", win, self.kernel) - self.thresholds[None, :, None, None]
        V, d = activation(self.activation, b)
        return V, b, (x.shape, xp.shape, win, d)

    def backward(self, cache, grad_out, field_grad=False):
        xshape, xpshape, win, d = cache
        gb = grad_out if field_grad else grad_out * d
        grads = {
            "kernel": np.einsum("bmhw,bchwpq->mcpq", gb, win),
            "thresholds": -gb.sum(axis=(0, 2, 3)),
        }
        gxp = np.zeros(xpshape)
        s = self.stride
        Ho, Wo = gb.shape[2:]
        P, Q = self.kernel.shape[2:]
        for p in range(P):
            for q in range(Q):
                gxp[:, :, p : p + s * (Ho - 1) + 1 : s, q : q + s * (Wo - 1) + 1 : s] += np.einsum(
                    "bmhw,mc->bchw", gb, self.kernel[:, :, p, q]
                )
        pad = self.padding
        gx = gxp[:, :, pad : pad + xshape[2], pad : pad + xshape[3]] if pad else gxp
        return gx, grads


@dataclass(eq=False)
class MaxPool(Layer):
    """Block maxima over size x size windows; ties go to the first position in row-major order."""

    size: int = 2
    stride: int | None = None
    kind: str = field(default="maxpool", init=False)

    def __post_init__(self):
        if self.stride is None:
            self.stride = self.size

    def output_shape(self, input_shape):
        c, H, W = input_shape
        return (c, conv_output_size(H, self.size, self.stride, 0), conv_output_size(W, self.size, self.stride, 0))

    def forward(self, x, mode=INFER, stream=None):
        x = np.asarray(x, dtype=float)
        if x.ndim == 3:
            x = x[:, None]
        self.output_shape(x.shape[1:])
        win = _windows(x, self.size, self.size, self.stride)
        flat = win.reshape(*win.shape[:4], -1)
        arg = np.argmax(flat, axis=-1)
        V = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
        return V, V, (x.shape, arg)

    def backward(self, cache, grad_out, field_grad=False):
        xshape, arg = cache
        gx = np.zeros(xshape)
        B, C, Ho, Wo = arg.shape
        p, q = np.divmod(arg, self.size)
        rows = np.arange(Ho)[None, None, :, None] * self.stride + p
        cols = np.arange(Wo)[None, None, None, :] * self.stride + q
        bi = np.arange(B)[:, None, None, None]
        ci = np.arange(C)[None, :, None, None]
        np.add.at(gx, (np.broadcast_to(bi, arg.shape), np.broadcast_to(ci, arg.shape), rows, cols), grad_out)
        return gx, {}


@dataclass(eq=False)
class BatchNorm(Layer):
    """Per-unit normalisation of (batch, units) activations.

    Train mode uses batch mean and (biased) batch variance and updates the
    running statistics as running = decay * running + (1 - decay) * batch.
    Infer mode uses the running statistics. Output g(gamma * xhat + beta_hat).
    """

    gamma: np.ndarray
    beta_hat: np.ndarray
    eps: float = 1e-5
    decay: float = 0.9
    running_mean: np.ndarray | None = None
    running_var: np.ndarray | None = None
    activation: str = IDENTITY
    update_running: bool = True
    kind: str = field(default="batchnorm", init=False)

    def __post_init__(self):
        self.gamma = np.array(self.gamma, dtype=float).reshape(-1)
        self.beta_hat = np.array(self.beta_hat, dtype=float).reshape(-1)
        n = self.gamma.size
        if self.beta_hat.shape != (n,):
            raise ShapeError("gamma and beta_hat must have the same length")
        self.running_mean = np.zeros(n) if self.running_mean is None else np.array(self.running_mean, float)
        self.running_var = np.ones(n) if self.running_var is None else np.array(self.running_var, float)
        if self.activation == SOFTMAX:
            raise ValueError("softmax is only allowed in a final dense layer")

    @classmethod
    def identity(cls, units: int, **kw) -> "BatchNorm":
        return cls(np.ones(units), np.zeros(units), **kw)

    def parameters(self):
        return {"gamma": self.gamma, "beta_hat": self.beta_hat}

    def output_shape(self, input_shape):
        if int(np.prod(input_shape)) != self.gamma.size:
            raise ShapeError("batchnorm width mismatch")
        return (self.gamma.size,)

    def forward(self, x, mode=INFER, stream=None):
        x = np.asarray(x, dtype=float).reshape(len(x), -1)
        if x.shape[1] != self.gamma.size:
            raise ShapeError("batchnorm width mismatch")
        if mode == TRAIN:
            if x.shape[0] < 2:
                raise ValueError("batch normalisation needs at least two patterns in train mode")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            if self.update_running:
                self.running_mean = self.decay * self.running_mean + (1.0 - self.decay) * mean
                self.running_var = self.decay * self.running_var + (1.0 - self.decay) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv
        b = self.gamma * xhat + self.beta_hat
        V, d = activation(self.activation, b)
        return V, b, (xhat, inv, d, mode)

    def backward(self, cache, grad_out, field_grad=False):
        xhat, inv, d, mode = cache
        gb = grad_out if field_grad else grad_out * d
        grads = {"gamma": np.sum(gb * xhat, axis=0), "beta_hat": gb.sum(axis=0)}
        gxhat = gb * self.gamma
        if mode == TRAIN:
            m = xhat.shape[0]
            gx = inv / m * (m * gxhat - gxhat.sum(axis=0) - xhat * np.sum(gxhat * xhat, axis=0))
        else:
            gx = gxhat * inv
        return gx, grads


def batchnorm_forward(layer: BatchNorm, batch, mode: str = TRAIN):
    return layer.forward(batch, mode)[0]


def conv_forward(layer: Layer, grid):
    """Feature maps of a convolution or pooling layer for one grid or a batch."""
    g = np.asarray(grid, dtype=float)
    single = g.ndim == 2
    if single:
        g = g[None, None]
    elif g.ndim == 3 and isinstance(layer, Conv2D) and layer.kernel.shape[1] == g.shape[0]:
        g = g[None]
    out = layer.forward(g)[0]
    return out[0, 0] if single and out.shape[1] == 1 else (out[0] if single else out)


# --------------------------------------------------------------------------
# networks


@dataclass(eq=False)
class LayeredNet:
    layers: list
    input_shape: tuple

    def __post_init__(self):
        self.input_shape = tuple(np.atleast_1d(self.input_shape).tolist())
        shape = self.input_shape
        for k, layer in enumerate(self.layers):
            if getattr(layer, "activation", None) == SOFTMAX and k != len(self.layers) - 1:
                raise ValueError("softmax units are only allowed in the output layer")
            shape = layer.output_shape(shape)
        self.output_shape = shape

    def copy(self) -> "LayeredNet":
        import copy

        return copy.deepcopy(self)

    def parameters(self) -> list[tuple[int, str, np.ndarray]]:
        return [(k, name, arr) for k, layer in enumerate(self.layers) for name, arr in layer.parameters().items()]

    def neuron_count(self) -> int:
        return int(sum(np.prod(layer.output_shape(s)) for layer, s in zip(self.layers, self._shapes())))

    def _shapes(self):
        shape = self.input_shape
        out = []
        for layer in self.layers:
            out.append(shape)
            shape = layer.output_shape(shape)
        return out


@dataclass
class ForwardPass:
    outputs: list  # V^(0) = input, V^(1), ..., V^(L)
    fields: list  # b^(1), ..., b^(L)
    caches: list

    @property
    def output(self):
        return self.outputs[-1]


def forward(net: LayeredNet, inputs, mode: str = INFER, stream: RandomStream | None = None) -> ForwardPass:
    """Propagate a batch (or a single pattern) through all layers."""
    x = np.asarray(inputs, dtype=float)
    if x.shape == net.input_shape:
        x = x[None]
    if tuple(x.shape[1:]) != net.input_shape:
        raise ShapeError(f"input shape {x.shape[1:]} does not match {net.input_shape}")
    outputs, fields, caches = [x], [], []
    for layer in net.layers:
        x, b, cache = layer.forward(x, mode, stream)
        outputs.append(x)
        fields.append(b)
        caches.append(cache)
    return ForwardPass(outputs, fields, caches)


def predict(net: LayeredNet, inputs) -> np.ndarray:
    return forward(net, inputs, INFER).output


def _check_pairing(net: LayeredNet, loss: str):
    if loss not in LOSSES:
        raise ValueError(f"unknown loss {loss!r}")
    last = net.layers[-1].activation
    if loss == LOGLIKELIHOOD and last != SOFTMAX:
        raise ValueError("the log-likelihood loss requires softmax outputs")
    if loss == CROSS_ENTROPY and last != SIGMOID:
        raise ValueError("the cross-entropy loss requires sigmoid outputs")


def _softplus(z):
    return np.logaddexp(0.0, z)


def loss_value(loss: str, output, target, field=None) -> float:
    """Energy summed over the batch.

    quadratic: 1/2 sum (t - O)^2; log-likelihood: -sum t log O;
    cross-entropy: -sum [t log O + (1 - t) log(1 - O)]. When the output
    fields are supplied the logarithms are evaluated from them stably.
    """
    O = np.asarray(output, dtype=float)
    t = np.asarray(target, dtype=float).reshape(O.shape)
    if loss == QUADRATIC:
        return 0.5 * float(np.sum((t - O) ** 2))
    if loss == LOGLIKELIHOOD:
        if field is not None:
            b = np.asarray(field, float).reshape(O.shape)
            z = b - b.max(axis=-1, keepdims=True)
            logO = z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))
        else:
            logO = np.log(O)
        return -float(np.sum(t * logO))
    if loss == CROSS_ENTROPY:
        if field is not None:
            b = np.asarray(field, float).reshape(O.shape)
            return float(np.sum(t * _softplus(-b) + (1.0 - t) * _softplus(b)))
        return -float(np.sum(t * np.log(O) + (1.0 - t) * np.log1p(-O)))
    raise ValueError(f"unknown loss {loss!r}")


def energy(net: LayeredNet, inputs, targets, loss: str, mode: str = INFER, stream=None) -> float:
    fp = forward(net, inputs, mode, stream)
    return loss_value(loss, fp.output, targets, fp.fields[-1])


@dataclass
class Gradients:
    """dH/dparameter per layer, keyed like Layer.parameters()."""

    layers: list
    energy: float
    output_errors: np.ndarray  # Delta = -dH/db at the output layer

    def flat(self) -> np.ndarray:
        return np.concatenate([g.ravel() for d in self.layers for g in d.values()]) if self.layers else np.zeros(0)

    def __getitem__(self, k):
        return self.layers[k]


def backprop(net: LayeredNet, inputs, targets, loss: str = QUADRATIC, mode: str = INFER, stream=None,
             fp: ForwardPass | None = None) -> Gradients:
    """Backpropagate the output error and return all weight and threshold gradients.

    For softmax + log-likelihood and sigmoid + cross-entropy the output error
    is exactly Delta = t - O, with no activation-derivative factor.
    """
    _check_pairing(net, loss)
    if fp is None:
        fp = forward(net, inputs, mode, stream)
    O = fp.output
    t = np.asarray(targets, dtype=float).reshape(O.shape)
    grads = [None] * len(net.layers)
    last = net.layers[-1]
    if loss in (LOGLIKELIHOOD, CROSS_ENTROPY):
        delta = t - O
        if isinstance(last, Dense) and last.keep is not None and last.keep < 1.0:
            raise ValueError("dropout on the output layer is not supported with this loss")
        g, grads[-1] = last.backward(fp.caches[-1], -delta, field_grad=True)
    else:
        if last.activation == SOFTMAX:
            delta = _activation_backward(SOFTMAX, O, None, t - O)
        else:
            delta = (t - O) * activation(last.activation, fp.fields[-1])[1]
        g, grads[-1] = last.backward(fp.caches[-1], -(t - O))
    for k in range(len(net.layers) - 2, -1, -1):
        g, grads[k] = net.layers[k].backward(fp.caches[k], g)
    H = loss_value(loss, O, t, fp.fields[-1])
    return Gradients(grads, H, delta)


def gradient_check(net: LayeredNet, inputs, targets, loss: str, mode: str = INFER, h: float = 1e-5) -> float:
    """Largest relative deviation between backprop and central differences.

    The relative error of each parameter block is |g - g_fd| / max(|g|, |g_fd|, floor)
    taken over the whole block as norms. The floor is 1e-3 of the norm of the
    full gradient (at least 1e-8), so blocks whose gradient vanishes by
    symmetry, such as thresholds feeding a batch-normalisation layer, are
    judged against the size of the whole gradient rather than against noise.
    """
    from .numerics import finite_diff_gradient

    state = _snapshot_running(net)
    analytic = backprop(net, inputs, targets, loss, mode)
    _restore_running(net, state)
    worst = 0.0
    floor = max(1e-8, 1e-3 * float(np.linalg.norm(analytic.flat())))
    for k, name, arr in net.parameters():
        def f(p, arr=arr):
            saved = arr.copy()
            arr[...] = p
            st = _snapshot_running(net)
            val = energy(net, inputs, targets, loss, mode)
            _restore_running(net, st)
            arr[...] = saved
            return val

        numeric = finite_diff_gradient(f, arr.copy(), h)
        a = analytic[k][name]
        scale = max(np.linalg.norm(a), np.linalg.norm(numeric), floor)
        worst = max(worst, float(np.linalg.norm(a - numeric) / scale))
    return worst


def _snapshot_running(net):
    return [(l.running_mean.copy(), l.running_var.copy()) if isinstance(l, BatchNorm) else None for l in net.layers]


def _restore_running(net, state):
    for l, s in zip(net.layers, state):
        if s is not None:
            l.running_mean[...] = s[0]
            l.running_var[...] = s[1]


# --------------------------------------------------------------------------
# construction helpers


def dense_net(sizes: Sequence[int], activations: Sequence[str] | str, stream: RandomStream,
              std: float | None = None) -> LayeredNet:
    """Dense net with Gaussian weights (variance 1/N_in unless `std` given) and zero thresholds."""
    if isinstance(activations, str):
        activations = [activations] * (len(sizes) - 1)
    layers = []
    for n_in, n_out, act in zip(sizes[:-1], sizes[1:], activations):
        s = math.sqrt(1.0 / n_in) if std is None else std
        layers.append(Dense(stream.normal(size=(n_out, n_in)) * s, np.zeros(n_out), act))
    return LayeredNet(layers, (sizes[0],))


def initialise(net: LayeredNet, stream: RandomStream, std: float | None = None) -> None:
    """Gaussian weights with mean 0 and variance 1/N_in (or std^2); thresholds 0."""
    for layer in net.layers:
        if isinstance(layer, Dense):
            s = math.sqrt(1.0 / layer.n_in) if std is None else std
            layer.weights[...] = stream.normal(size=layer.weights.shape) * s
            if layer.mask is not None:
                layer.weights[~layer.mask] = 0.0
            layer.thresholds[...] = 0.0
        elif isinstance(layer, Conv2D):
            fan_in = int(np.prod(layer.kernel.shape[1:]))
            s = math.sqrt(1.0 / fan_in) if std is None else std
            layer.kernel[...] = stream.normal(size=layer.kernel.shape) * s
            layer.thresholds[...] = 0.0


def xor_reference_net() -> LayeredNet:
    """Two 0/1 hidden units with unit weights and thresholds 1/2, 3/2; O = sgn(V1 - V2 - 1/2)."""
    hidden = Dense([[1.0, 1.0], [1.0, 1.0]], [0.5, 1.5], HEAVISIDE)
    out = Dense([[1.0, -1.0]], [0.5], SIGN)
    return LayeredNet([hidden, out], (2,))


# --------------------------------------------------------------------------
# data


@dataclass
class LabeledSet:
    inputs: np.ndarray
    targets: np.ndarray
    convention: str = PLUS_MINUS_ONE

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        if self.targets.ndim == 1:
            self.targets = self.targets[:, None]
        if len(self.inputs) != len(self.targets):
            raise ShapeError("inputs and targets must have the same number of patterns")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown target convention {self.convention!r}")

    def __len__(self):
        return len(self.inputs)


def read_labeled(path) -> LabeledSet:
    """Header "p N M convention", then p lines with N inputs followed by M targets."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    head = lines[0].split()
    p, N, M = (int(v) for v in head[:3])
    conv = head[3]
    rows = np.array([[float(v) for v in ln.split()] for ln in lines[1 : 1 + p]])
    if rows.shape != (p, N + M):
        raise ShapeError(f"{path}: expected {p} rows of {N + M} numbers")
    return LabeledSet(rows[:, :N], rows[:, N:], conv)


def write_labeled(path, data: LabeledSet) -> None:
    X = data.inputs.reshape(len(data), -1)
    T = data.targets.reshape(len(data), -1)
    out = [f"{len(data)} {X.shape[1]} {T.shape[1]} {data.convention}"]
    out += [" ".join(repr(float(v)) for v in np.concatenate([x, t])) for x, t in zip(X, T)]
    Path(path).write_text("\n".join(out) + "\n")


@dataclass
class Standardiser:
    mean: np.ndarray
    scale: np.ndarray

    def apply(self, data) -> np.ndarray:
        return (np.asarray(data, dtype=float) - self.mean) / self.scale


class ZeroVarianceError(ValueError):
    def __init__(self, components):
        self.components = list(components)
        super().__init__(f"components with zero variance cannot be scaled: {self.components}")


def preprocess(data) -> tuple[np.ndarray, Standardiser]:
    """Shift each component to mean 0 and scale it to variance 1 (population variance).

    Raises ZeroVarianceError naming the constant components. The returned
    record applies the training statistics to other data sets.
    """
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    bad = np.nonzero(std == 0.0)[0]
    if bad.size:
        raise ZeroVarianceError(bad.tolist())
    rec = Standardiser(mean, std)
    return rec.apply(X), rec


def covariance(data) -> np.ndarray:
    """C = <(x - <x>)(x - <x>)^T> averaged over the p patterns."""
    X = np.asarray(data, dtype=float)
    Z = X - X.mean(axis=0)
    return Z.T @ Z / len(X)


@dataclass
class PCAResult:
    values: np.ndarray
    vectors: np.ndarray  # columns, descending eigenvalue
    mean: np.ndarray
    projection: np.ndarray  # (p, keep) coordinates of the centred data

    def reconstruct(self) -> np.ndarray:
        return self.mean + self.projection @ self.vectors.T


def pca(data, keep: int) -> PCAResult:
    X = np.asarray(data, dtype=float)
    if not 1 <= keep <= X.shape[1]:
        raise ValueError("keep must lie between 1 and the data dimension")
    C = covariance(X)
    values, vectors = symmetric_eigen(C)
    mean = X.mean(axis=0)
    V = vectors[:, :keep]
    return PCAResult(values, V, mean, (X - mean) @ V)


def classification_error(outputs, targets, convention: str) -> float:
    """Fraction of misclassified outputs.

    zero_one: mean |t - theta_H(O - 1/2)|; plus_minus_one: mean |t - sgn(O)| / 2;
    one_hot: fraction of patterns whose arg-max output differs from the target's.
    """
    O = np.asarray(outputs, dtype=float)
    t = np.asarray(targets, dtype=float).reshape(O.shape)
    if convention == ZERO_ONE:
        return float(np.mean(np.abs(t - np.where(O - 0.5 >= 0, 1.0, 0.0))))
    if convention == PLUS_MINUS_ONE:
        return float(np.mean(np.abs(t - np.where(O >= 0, 1.0, -1.0))) / 2.0)
    if convention == ONE_HOT:
        O2 = O.reshape(len(O), -1)
        t2 = t.reshape(len(t), -1)
        return float(np.mean(np.argmax(O2, axis=1) != np.argmax(t2, axis=1)))
    raise ValueError(f"unknown convention {convention!r}")


# --------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    eta: float = 0.01
    momentum: float = 0.0
    nesterov: bool = False
    batch_size: int = 1
    l1: float = 0.0
    l2: float = 0.0
    max_norm: float | None = None
    dropout_keep: float | None = None
    epochs: int = 100
    shuffle: bool = True
    patience: int | None = 5
    loss: str = QUADRATIC

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum constant must satisfy 0 <= alpha < 1")
        if self.eta < 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("invalid learning rate, batch size or epoch count")
        if self.dropout_keep is not None and not 0.0 < self.dropout_keep <= 1.0:
            raise ValueError("dropout keep probability must lie in (0, 1]")


@dataclass
class EpochRecord:
    epoch: int
    H_train: float
    H_valid: float
    C_train: float
    C_valid: float


@dataclass
class TrainingLog:
    records: list = field(default_factory=list)
    stopped_early: bool = False

    def to_csv(self, path) -> None:
        rows = ["epoch,H_train,H_valid,C_train,C_valid"]
        rows += [f"{r.epoch},{r.H_train!r},{r.H_valid!r},{r.C_train!r},{r.C_valid!r}" for r in self.records]
        Path(path).write_text("\n".join(rows) + "\n")


def _weight_arrays(net: LayeredNet):
    for layer in net.layers:
        if isinstance(layer, Dense):
            yield layer, "weights"
        elif isinstance(layer, Conv2D):
            yield layer, "kernel"


def regularised_step(w: np.ndarray, grad: np.ndarray, eta: float, l2: float = 0.0, l1: float = 0.0) -> np.ndarray:
    """w - eta dH0/dw - eta*l2*w - eta*l1*sgn(w), with sgn(0) = 0."""
    return w - eta * grad - eta * l2 * w - eta * l1 * np.sign(w)


def evaluate(net: LayeredNet, data: LabeledSet, loss: str) -> tuple[float, float]:
    fp = forward(net, data.inputs, INFER)
    return loss_value(loss, fp.output, data.targets, fp.fields[-1]), classification_error(
        fp.output, data.targets, data.convention
    )


def train(net: LayeredNet, data: LabeledSet, validation: LabeledSet | None, cfg: TrainConfig,
          stream: RandomStream) -> TrainingLog:
    """Minibatch gradient descent with optional momentum, Nesterov, L1/L2, max-norm and dropout.

    The momentum update is v <- alpha v - eta (dH/dw + regulariser), w <- w + v;
    with `nesterov` the gradient is taken at w + alpha v. After each update
    weights are clipped to |w| <= max_norm and pruned weights reset to 0.
    Each epoch logs energies and classification errors in infer mode.
    """
    _check_pairing(net, cfg.loss)
    p = len(data)
    if cfg.batch_size > p:
        raise ValueError("minibatch larger than the training set")
    if cfg.dropout_keep is not None:
        for layer in net.layers[:-1]:
            if isinstance(layer, Dense):
                layer.keep = cfg.dropout_keep
    params = net.parameters()
    velocity = [np.zeros_like(a) for _, _, a in params]
    is_weight = [(name in ("weights", "kernel")) for _, name, _ in params]
    log = TrainingLog()
    best_valid = math.inf
    strikes = 0
    for epoch in range(1, cfg.epochs + 1):
        order = stream.permutation(p) if cfg.shuffle else np.arange(p)
        for start in range(0, p - cfg.batch_size + 1, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if cfg.eta == 0.0:
                continue
            if cfg.nesterov and cfg.momentum > 0:
                for (_, _, a), v in zip(params, velocity):
                    a += cfg.momentum * v
            g = backprop(net, data.inputs[idx], data.targets[idx], cfg.loss, TRAIN, stream)
            if cfg.nesterov and cfg.momentum > 0:
                for (_, _, a), v in zip(params, velocity):
                    a -= cfg.momentum * v
            for (k, name, a), v, w in zip(params, velocity, is_weight):
                grad = g[k][name]
                if w:
                    grad = grad + cfg.l2 * a + cfg.l1 * np.sign(a)
                v *= cfg.momentum
                v -= cfg.eta * grad
                a += v
        for layer, name in _weight_arrays(net):
            arr = getattr(layer, name)
            if cfg.max_norm is not None:
                np.clip(arr, -cfg.max_norm, cfg.max_norm, out=arr)
            if getattr(layer, "mask", None) is not None:
                arr[~layer.mask] = 0.0
        H_t, C_t = evaluate(net, data, cfg.loss)
        if validation is not None:
            H_v, C_v = evaluate(net, validation, cfg.loss)
        else:
            H_v, C_v = math.nan, math.nan
        if not (math.isfinite(H_t) and (validation is None or math.isfinite(H_v))):
            raise TrainingDiverged(f"energy became non-finite at epoch {epoch} (H_train={H_t})")
        log.records.append(EpochRecord(epoch, H_t, H_v, C_t, C_v))
        if validation is not None and cfg.patience is not None:
            if H_v < best_valid:
                best_valid = H_v
                strikes = 0
            else:
                strikes += 1
                if strikes >= cfg.patience:
                    log.stopped_early = True
                    break
    return log


# --------------------------------------------------------------------------
# optimal brain surgeon pruning


@dataclass
class PruneStep:
    layer: int
    index: tuple
    saliency: float
    energy_after: float


@dataclass
class PruneResult:
    net: LayeredNet
    steps: list
    skipped: list


def diagonal_hessian(net: LayeredNet, data: LabeledSet, loss: str, h: float = 1e-4) -> list[np.ndarray]:
    """Diagonal second derivatives of H with respect to dense weights, by differencing backprop gradients."""
    out = []
    for k, layer in enumerate(net.layers):
        if not isinstance(layer, Dense):
            out.append(None)
            continue
        M = np.zeros_like(layer.weights)
        for idx in np.ndindex(*layer.weights.shape):
            keep = layer.weights[idx]
            layer.weights[idx] = keep + h
            up = backprop(net, data.inputs, data.targets, loss)[k]["weights"][idx]
            layer.weights[idx] = keep - h
            down = backprop(net, data.inputs, data.targets, loss)[k]["weights"][idx]
            layer.weights[idx] = keep
            M[idx] = (up - down) / (2.0 * h)
        out.append(M)
    return out


def obs_saliencies(net: LayeredNet, hessian: list) -> list[np.ndarray]:
    """L_q = w_q^2 / (2 (M^-1)_qq) = w_q^2 M_qq / 2 for a diagonal Hessian; NaN where M_qq <= 0."""
    out = []
    for layer, M in zip(net.layers, hessian):
        if M is None:
            out.append(None)
            continue
        with np.errstate(invalid="ignore"):
            L = np.where(M > 0, 0.5 * layer.weights**2 * M, np.nan)
        if layer.mask is not None:
            L = np.where(layer.mask, L, np.nan)
        out.append(L)
    return out


def obs_prune(net: LayeredNet, data: LabeledSet, prune_fraction: float, cfg: TrainConfig | None = None,
              stream: RandomStream | None = None, hessian: str = "diagonal",
              max_loss_ratio: float | None = None, retrain_epochs: int = 200,
              grad_tol: float = 1e-4) -> PruneResult:
    """Remove dense weights one at a time by the smallest saliency, retraining in between.

    With the diagonal Hessian the optimal surgery changes only w_q, which is
    set to zero and frozen. `hessian="identity"` gives magnitude pruning.
    Weights whose Hessian entry is not positive are skipped and reported.
    Stops after removing `prune_fraction` of the weights, or when the
    saliency exceeds `max_loss_ratio` times the current minimum energy.
    """
    net = net.copy()
    cfg = cfg or TrainConfig(eta=0.05, epochs=retrain_epochs, batch_size=len(data), shuffle=False, patience=None)
    cfg = replace(cfg, epochs=1, patience=None)
    stream = stream or RandomStream(0)
    dense = [k for k, l in enumerate(net.layers) if isinstance(l, Dense)]
    for k in dense:
        if net.layers[k].mask is None:
            net.layers[k].mask = np.ones_like(net.layers[k].weights, dtype=bool)
    total = sum(net.layers[k].weights.size for k in dense)
    target = int(math.floor(prune_fraction * total + 1e-9))
    steps, skipped = [], []
    while len(steps) < target:
        if hessian == "identity":
            M = [np.ones_like(l.weights) if isinstance(l, Dense) else None for l in net.layers]
        else:
            M = diagonal_hessian(net, data, cfg.loss)
        L = obs_saliencies(net, M)
        for k in dense:
            bad = np.argwhere((M[k] <= 0) & net.layers[k].mask)
            skipped.extend((k, tuple(int(i) for i in b)) for b in bad)
        best = None
        for k in dense:
            if np.all(np.isnan(L[k])):
                continue
            idx = np.unravel_index(np.nanargmin(L[k]), L[k].shape)
            if best is None or L[k][idx] < best[2]:
                best = (k, idx, float(L[k][idx]))
        if best is None:
            break
        H_min = energy(net, data.inputs, data.targets, cfg.loss)
        if max_loss_ratio is not None and best[2] > max_loss_ratio * H_min:
            break
        k, idx, sal = best
        net.layers[k].weights[idx] = 0.0
        net.layers[k].mask[idx] = False
        for _ in range(retrain_epochs):
            train(net, data, None, cfg, stream)
            g = backprop(net, data.inputs, data.targets, cfg.loss)
            if np.linalg.norm(g.flat()) < grad_tol:
                break
        steps.append(PruneStep(k, tuple(int(i) for i in idx), sal, energy(net, data.inputs, data.targets, cfg.loss)))
    return PruneResult(net, steps, skipped)


# --------------------------------------------------------------------------
# XOR ensemble experiment (vectorised over independent realisations)

# The ensemble runs on +-1 inputs; with 0/1 inputs a zero-threshold ReLU unit
# sees a vanishing field on the (0, 0) pattern and learning stalls far more often.
XOR_INPUTS = np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]])
XOR_TARGETS = np.array([0.0, 1.0, 1.0, 0.0])


@dataclass
class XorProtocol:
    """Settings of the XOR ensemble: ReLU hidden layer, sigmoid output, cross-entropy loss,
    one randomly chosen pattern per step."""

    hidden: int = 2
    steps: int = 10_000
    realisations: int = 1000
    eta: float = 0.1
    init_std: float = 0.1
    max_norm: float = 2.0
    seed: int = 0


def _xor_init(R, n, std, stream):
    return {
        "w": stream.normal(size=(R, n, 2)) * std,
        "theta": np.zeros((R, n)),
        "W": stream.normal(size=(R, n)) * std,
        "Theta": np.zeros(R),
    }


def _xor_forward(p, x, alive):
    b = np.einsum("rnk,rk->rn", p["w"], x) - p["theta"]
    V = np.maximum(b, 0.0) * alive
    B = np.sum(p["W"] * V, axis=1) - p["Theta"]
    return b, V, B


def _xor_outputs(p, alive):
    outs = []
    for x in XOR_INPUTS:
        _, _, B = _xor_forward(p, np.broadcast_to(x, (p["w"].shape[0], 2)), alive)
        outs.append(_sigmoid(B))
    return np.stack(outs, axis=1)  # (R, 4)


def _xor_train(p, alive, steps, eta, max_norm, stream):
    R = p["w"].shape[0]
    for _ in range(steps):
        mu = stream.integers(0, 4, size=R)
        x = XOR_INPUTS[mu]
        t = XOR_TARGETS[mu]
        b, V, B = _xor_forward(p, x, alive)
        O = _sigmoid(B)
        delta = t - O  # cross-entropy output error
        hid = delta[:, None] * p["W"] * (b > 0) * alive
        p["W"] += eta * delta[:, None] * V
        p["Theta"] -= eta * delta
        p["w"] += eta * hid[:, :, None] * x[:, None, :]
        p["theta"] -= eta * hid
        np.clip(p["w"], -max_norm, max_norm, out=p["w"])
        np.clip(p["W"], -max_norm, max_norm, out=p["W"])
    return p


def xor_success(outputs) -> np.ndarray:
    """A realisation succeeds when all four patterns fall on the correct side of 1/2."""
    return np.all((outputs > 0.5) == (XOR_TARGETS > 0.5), axis=1)


def xor_training_success(proto: XorProtocol, stream: RandomStream | None = None) -> float:
    stream = stream or RandomStream(proto.seed)
    p = _xor_init(proto.realisations, proto.hidden, proto.init_std, stream)
    alive = np.ones((proto.realisations, proto.hidden))
    _xor_train(p, alive, proto.steps, proto.eta, proto.max_norm, stream)
    return float(np.mean(xor_success(_xor_outputs(p, alive))))


def _xor_neuron_saliency(p, alive):
    """OBS saliency of removing hidden neuron j, i.e. setting W_j to zero.

    For the sigmoid + cross-entropy output the exact diagonal Hessian entry is
    M_jj = sum_mu O(1 - O) V_j^2, so L_j = W_j^2 M_jj / 2.
    """
    R = p["w"].shape[0]
    M = np.zeros_like(p["W"])
    for x in XOR_INPUTS:
        _, V, B = _xor_forward(p, np.broadcast_to(x, (R, 2)), alive)
        O = _sigmoid(B)
        M += (O * (1 - O))[:, None] * V * V
    L = 0.5 * p["W"] ** 2 * M
    return np.where(alive > 0, L, np.inf)


def xor_pruned_success(proto: XorProtocol, start_hidden: int = 10, stream: RandomStream | None = None) -> float:
    """Prune a wide net down to `proto.hidden` neurons during training, rewind, retrain.

    The wide net trains for `proto.steps` steps; at evenly spaced points one
    hidden neuron with the smallest saliency is removed. The surviving neurons
    are then reset to their initial weights and thresholds and the pruned net
    is trained again for `proto.steps` steps, after which success is measured.
    """
    stream = stream or RandomStream(proto.seed)
    R = proto.realisations
    p = _xor_init(R, start_hidden, proto.init_std, stream)
    init = {k: v.copy() for k, v in p.items()}
    alive = np.ones((R, start_hidden))
    removals = start_hidden - proto.hidden
    chunk = proto.steps // (removals + 1)
    for _ in range(removals):
        _xor_train(p, alive, chunk, proto.eta, proto.max_norm, stream)
        j = np.argmin(_xor_neuron_saliency(p, alive), axis=1)
        alive[np.arange(R), j] = 0.0
    _xor_train(p, alive, proto.steps - chunk * removals, proto.eta, proto.max_norm, stream)
    p = {k: v.copy() for k, v in init.items()}
    _xor_train(p, alive, proto.steps, proto.eta, proto.max_norm, stream)
    return float(np.mean(xor_success(_xor_outputs(p, alive))))


# --------------------------------------------------------------------------
# constructive Boolean networks


def boolean_inputs(N: int) -> np.ndarray:
    """All 2^N inputs in {-1,+1}^N; row j has +1 where binary digit k of j is 1 (digit 1 most significant)."""
    j = np.arange(2**N)[:, None]
    digits = (j >> (N - 1 - np.arange(N))[None, :]) & 1
    return np.where(digits == 1, 1.0, -1.0)


def boolean_net(table, delta: float | None = None, gamma: float = 1.0) -> LayeredNet:
    """One hidden tanh layer of 2^N units realising an arbitrary Boolean function.

    Hidden unit j has weights +delta where binary digit k of j is 1 and -delta
    otherwise, threshold N(delta - 1), so exactly the unit j matching the input
    gets a positive field. Output weights are +gamma or -gamma by the table
    entry, threshold -sum_j W_j, and sign output.

    A unit one bit away from the input has field N - 2 delta, so the winner is
    unique only for delta > N/2 (delta > 1 suffices for N = 2). The losing
    tanh units must moreover sit close to -1 for the output sum to come out
    right. The default delta = max(2, N) puts every loser's field at or below
    -N for N >= 2, which is ample.
    """
    t = np.asarray(table, dtype=float).reshape(-1)
    N = int(round(math.log2(t.size)))
    if 2**N != t.size or not np.all(np.isin(t, (-1.0, 1.0))):
        raise ValueError("table must list 2^N values in {-1, +1}")
    if delta is None:
        delta = max(2.0, float(N))
    if not delta > 1:
        raise ValueError("delta must exceed 1 for a unique winning unit")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    w = delta * boolean_inputs(N)
    hidden = Dense(w, np.full(2**N, N * (delta - 1.0)), TANH)
    W = gamma * t
    out = Dense(W[None, :], [-W.sum()], SIGN)
    return LayeredNet([hidden, out], (N,))


def _xor_block_weights():
    # on +-1 inputs: V1 = sgn(a + b + 1) (or), V2 = sgn(a + b - 1) (and), O = sgn(V1 - V2 - 1)
    return np.array([[1.0, 1.0], [1.0, 1.0]]), np.array([-1.0, 1.0]), np.array([1.0, -1.0]), 1.0


def parity_net(N: int) -> LayeredNet:
    """Parity of N = 2^k inputs in {-1,+1} (output +1 for an odd number of +1 inputs).

    XOR blocks of three sign units are arranged as a binary tree, two layers
    per level, for 3(N - 1) neurons in total.
    """
    if N < 2 or N & (N - 1):
        raise ValueError("parity_net needs N = 2^k inputs with k >= 1")
    w, th, W, Th = _xor_block_weights()
    layers = []
    width = N
    while width > 1:
        half = width // 2
        hid_w = np.zeros((width, width))
        hid_t = np.zeros(width)
        out_w = np.zeros((half, width))
        out_t = np.zeros(half)
        for blk in range(half):
            a, b = 2 * blk, 2 * blk + 1
            hid_w[2 * blk : 2 * blk + 2, [a, b]] = w
            hid_t[2 * blk : 2 * blk + 2] = th
            out_w[blk, 2 * blk : 2 * blk + 2] = W
            out_t[blk] = Th
        layers.append(Dense(hid_w, hid_t, SIGN))
        layers.append(Dense(out_w, out_t, SIGN))
        width = half
    return LayeredNet(layers, (N,))
