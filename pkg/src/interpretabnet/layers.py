"""Activation, gating, projection and normalisation building blocks."""
import math

import numpy as np

from . import numeric as nx
from . import simplex
from .errors import ConfigError, ShapeError
from .numeric import Parameter, Tensor

WLU_INIT = (0.6, 0.2, 0.2)
PRELU_INIT = 0.25
GBN_MOMENTUM = 0.9
GBN_EPS = 1e-5


class Module:
    """Minimal container that discovers parameters and buffers by attribute."""

    training = True
    buffer_names = ()

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for name in self.buffer_names:
            yield prefix + name, getattr(self, name)
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield from value.named_buffers(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_buffers(f"{prefix}{name}.{i}.")

    def modules(self):
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)


def glorot_uniform(rng, fan_out, fan_in):
    s = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=(fan_out, fan_in))


class Linear(Module):
    """Fully connected layer; ``W`` is (out x in), ``b`` is (out x 1)."""

    def __init__(self, n_in, n_out, rng, bias=True):
        self.W = Parameter(glorot_uniform(rng, n_out, n_in), "W")
        self.b = Parameter(np.zeros((n_out, 1)), "b") if bias else None

    def __call__(self, x):
        return nx.linear(x, self.W, self.b)


class GhostBatchNorm(Module):
    """Batch normalisation over ghost chunks of ``virtual_batch_size`` rows.

    ``virtual_batch_size=None`` normalises the whole batch at once. Running
    statistics follow ``running = momentum * running + (1 - momentum) * chunk``
    and are the only statistics used in eval mode.
    """

    buffer_names = ("running_mean", "running_var")

    def __init__(self, n_features, virtual_batch_size=None, momentum=GBN_MOMENTUM, eps=GBN_EPS):
        if not (0.0 < momentum <= 1.0):
            raise ConfigError(f"GBN momentum must lie in (0, 1], got {momentum}")
        self.virtual_batch_size = virtual_batch_size
        self.momentum = momentum
        self.eps = eps
        self.scale = Parameter(np.ones((1, n_features)), "scale")
        self.shift = Parameter(np.zeros((1, n_features)), "shift")
        self.running_mean = np.zeros((1, n_features))
        self.running_var = np.ones((1, n_features))

    def __call__(self, x):
        if self.training:
            xhat, stats = nx.standardize_chunks(x, self.virtual_batch_size, self.eps)
            m = self.momentum
            for mu, var, _ in stats:
                self.running_mean = m * self.running_mean + (1.0 - m) * mu
                self.running_var = m * self.running_var + (1.0 - m) * var
        else:
            inv = 1.0 / np.sqrt(self.running_var + self.eps)
            xhat = (x - self.running_mean) * inv
        return xhat * self.scale + self.shift


def gbn_forward(x, state, mode="train"):
    """Apply a :class:`GhostBatchNorm` in ``"train"`` or ``"infer"`` mode."""
    if mode not in ("train", "infer"):
        raise ConfigError(f"mode must be 'train' or 'infer', got {mode!r}")
    previous = state.training
    state.training = mode == "train"
    try:
        return state(nx.as_tensor(x))
    finally:
        state.training = previous


class WLU(Module):
    """Multi-branch weighted linear unit.

    ``alpha * ELU(x) + beta * PReLU(x) + gamma_w * SiLU(x)``; the three
    branch weights and the PReLU slope are learnable, the ELU alpha is fixed.
    """

    def __init__(self, weights=WLU_INIT, prelu_slope=PRELU_INIT, elu_alpha=1.0):
        a, b, g = weights
        self.alpha = Parameter([[a]], "alpha")
        self.beta = Parameter([[b]], "beta")
        self.gamma_w = Parameter([[g]], "gamma_w")
        self.prelu_slope = Parameter([[prelu_slope]], "prelu_slope")
        self.elu_alpha = elu_alpha

    def __call__(self, x):
        return (self.alpha * nx.elu(x, self.elu_alpha)
                + self.beta * nx.prelu(x, self.prelu_slope)
                + self.gamma_w * nx.silu(x))


class Activation(Module):
    """Single-branch activation used for ablations (ReLU, ELU, PReLU, SiLU)."""

    def __init__(self, kind, prelu_slope=PRELU_INIT, elu_alpha=1.0):
        kind = kind.lower()
        if kind not in ("relu", "elu", "prelu", "silu"):
            raise ConfigError(f"unknown activation kind {kind!r}")
        self.kind = kind
        self.elu_alpha = elu_alpha
        self.prelu_slope = Parameter([[prelu_slope]], "prelu_slope") if kind == "prelu" else None

    def __call__(self, x):
        if self.kind == "relu":
            return nx.relu(x)
        if self.kind == "elu":
            return nx.elu(x, self.elu_alpha)
        if self.kind == "prelu":
            return nx.prelu(x, self.prelu_slope)
        return nx.silu(x)


def scalar_activation(kind, x, params=None):
    """Elementwise ReLU / ELU / PReLU / SiLU.

    ``params`` supplies the PReLU slope and ELU alpha (a :class:`WLU` works);
    defaults are slope 0.25 and alpha 1.0.
    """
    x = nx.as_tensor(x)
    kind = kind.lower()
    slope = params.prelu_slope if params is not None else Tensor([[PRELU_INIT]])
    elu_alpha = params.elu_alpha if params is not None else 1.0
    if kind == "relu":
        return nx.relu(x)
    if kind == "elu":
        return nx.elu(x, elu_alpha)
    if kind == "prelu":
        return nx.prelu(x, slope)
    if kind == "silu":
        return nx.silu(x)
    raise ConfigError(f"unknown activation kind {kind!r}")


def wlu(x, params):
    return params(nx.as_tensor(x))


def glu(x):
    """First half of the columns gated by the sigmoid of the second half."""
    x = nx.as_tensor(x)
    if x.cols % 2:
        raise ShapeError(f"GLU needs an even number of columns, got {x.cols}")
    m = x.cols // 2
    return x[:m] * nx.sigmoid(x[m:])


def softmax(z):
    return nx.softmax_rows(z) if isinstance(z, Tensor) else simplex.softmax(z)


def sparsemax(z):
    return nx.sparsemax_rows(z) if isinstance(z, Tensor) else simplex.sparsemax(z)


def entmax(z, alpha=1.5):
    return nx.entmax_rows(z, alpha) if isinstance(z, Tensor) else simplex.entmax(z, alpha)


class GLUBlock(Module):
    """FC -> GBN -> GLU with output width ``n_out``.

    The FC has no bias: the normalisation that follows would cancel it.
    """

    def __init__(self, n_in, n_out, rng, virtual_batch_size=None, momentum=GBN_MOMENTUM):
        self.fc = Linear(n_in, 2 * n_out, rng, bias=False)
        self.bn = GhostBatchNorm(2 * n_out, virtual_batch_size, momentum)

    def __call__(self, x):
        return glu(self.bn(self.fc(x)))
