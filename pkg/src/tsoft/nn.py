"""Small fully connected networks with hand-written backprop and plain SGD.

Parameters live in a :class:`~tsoft.params.ParamSet` with subsets
``layer{k}.weight`` (row-major ``out x in``) and ``layer{k}.bias``, so target
update rules apply to a network directly.  The last layer is linear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import CongruenceError, DomainError, ParameterError
from .params import ParamSet, check_congruent

ACTIVATIONS = ("tanh", "swish")


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _activate(kind, z):
    if kind == "tanh":
        return np.tanh(z)
    return z * _sigmoid(z)


def _activate_grad(kind, z, h):
    # h is the activation output for z
    if kind == "tanh":
        return 1.0 - h * h
    s = _sigmoid(z)
    return s * (1.0 + z * (1.0 - s))


def param_layout(layer_sizes: Sequence[int]):
    names, lengths = [], []
    for k, (n_in, n_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
        names += [f"layer{k}.weight", f"layer{k}.bias"]
        lengths += [n_in * n_out, n_out]
    return names, lengths


class Mlp:
    """Fully connected network ``layer_sizes[0] -> ... -> layer_sizes[-1]``.

    The weight/bias arrays used in the forward pass are views into
    ``params.flat``; always update parameters in place.
    """

    def __init__(self, layer_sizes, activation="tanh", params: Optional[ParamSet] = None):
        sizes = tuple(int(n) for n in layer_sizes)
        if len(sizes) < 2 or any(n < 1 for n in sizes):
            raise ParameterError("need at least two positive layer sizes")
        if activation not in ACTIVATIONS:
            raise ParameterError(f"activation must be one of {ACTIVATIONS}")
        names, lengths = param_layout(sizes)
        if params is None:
            params = ParamSet(names, lengths)
        elif list(params.names) != names or list(params.lengths) != lengths:
            raise CongruenceError("params do not match the layer sizes")
        self.layer_sizes = sizes
        self.activation = activation
        self.params = params
        self.layers = [
            (params.view(2 * k, (n_out, n_in)), params.view(2 * k + 1, (n_out,)))
            for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:]))
        ]

    def __repr__(self):
        return f"Mlp({list(self.layer_sizes)}, {self.activation!r})"

    def bind(self, params: ParamSet) -> "Mlp":
        """Same architecture evaluated with another (congruent) parameter set."""
        check_congruent(self.params, params)
        return Mlp(self.layer_sizes, self.activation, params)

    def copy(self) -> "Mlp":
        return Mlp(self.layer_sizes, self.activation, self.params.copy())

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.layer_sizes[0],):
            raise CongruenceError(
                f"input of shape {x.shape}, expected ({self.layer_sizes[0]},)")
        return x

    def forward(self, x) -> np.ndarray:
        h = self._check_input(x)
        last = len(self.layers) - 1
        for k, (W, b) in enumerate(self.layers):
            h = W @ h + b
            if k < last:
                h = _activate(self.activation, h)
        return h

    def forward_cached(self, x):
        """Forward pass that also returns what :meth:`backward` needs."""
        h = self._check_input(x)
        hs, zs = [h], []
        last = len(self.layers) - 1
        for k, (W, b) in enumerate(self.layers):
            z = W @ h + b
            zs.append(z)
            h = _activate(self.activation, z) if k < last else z
            hs.append(h)
        return h, (hs, zs)

    def backward(self, cache, upstream, out: Optional[ParamSet] = None) -> ParamSet:
        """Gradient of ``upstream . output`` w.r.t. the parameters."""
        hs, zs = cache
        g = np.asarray(upstream, dtype=np.float64)
        if g.shape != (self.layer_sizes[-1],):
            raise CongruenceError(
                f"upstream gradient of shape {g.shape}, expected ({self.layer_sizes[-1]},)")
        grads = self.params.zeros_like() if out is None else out
        flat, offs = grads.flat, grads.offsets
        for k in range(len(self.layers) - 1, -1, -1):
            W, b = self.layers[k]
            n = W.size
            o = offs[2 * k]
            flat[o:o + n] = np.outer(g, hs[k]).ravel()
            o = offs[2 * k + 1]
            flat[o:o + g.size] = g
            if k > 0:
                g = (W.T @ g) * _activate_grad(self.activation, zs[k - 1], hs[k])
        return grads


def mlp_init(layer_sizes, activation="tanh", seed=0, out_scale=1.0) -> Mlp:
    """Weights ~ N(0, 1/fan_in), biases zero; fully determined by ``seed``.

    ``out_scale`` multiplies the last layer's weights (small values give a
    near-zero initial output).
    """
    if layer_sizes is None or len(layer_sizes) < 2:
        raise ParameterError("need at least two layer sizes")
    net = Mlp(layer_sizes, activation)
    rng = np.random.default_rng(seed)
    last = len(net.layers) - 1
    for k, (W, _) in enumerate(net.layers):
        fan_in = W.shape[1]
        W[...] = rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=W.shape)
        if k == last:
            W *= out_scale
    return net


def mlp_forward(net: Mlp, x) -> np.ndarray:
    return net.forward(x)


def mlp_grad(net: Mlp, x, upstream_grad, out: Optional[ParamSet] = None) -> ParamSet:
    _, cache = net.forward_cached(x)
    return net.backward(cache, upstream_grad, out)


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float = 5e-4
    clip_norm: Optional[float] = None

    def __post_init__(self):
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise ParameterError("learning_rate must be finite and > 0")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ParameterError("clip_norm must be > 0 or None")


def clip_by_norm(g: np.ndarray, clip_norm: Optional[float]) -> np.ndarray:
    if clip_norm is None:
        return g
    norm = math.sqrt(float(np.dot(g, g)))
    if norm > clip_norm:
        return g * (clip_norm / norm)
    return g


def sgd_step(net: Mlp, grads: ParamSet, cfg: SgdConfig) -> Mlp:
    """``theta <- theta - lr * clip(g)`` in place; returns ``net``."""
    check_congruent(net.params, grads)
    g = clip_by_norm(grads.flat, cfg.clip_norm)
    if not np.all(np.isfinite(g)):
        raise DomainError("non-finite gradient")
    net.params.flat -= cfg.learning_rate * g
    return net
