"""Dense-network building blocks with hand-written backward passes.

Every layer works on 2D float64 batches ``(batch, width)``. ``forward``
caches what ``backward`` needs; ``backward`` takes the gradient w.r.t. the
output, accumulates parameter gradients into ``self.grads`` and returns the
gradient w.r.t. the input.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import expit


def _relu(z):
    return np.maximum(z, 0.0)


ACTIVATIONS = {
    # name: (f(z), df/dz given (z, f(z)))
    "identity": (lambda z: z, lambda z, a: np.ones_like(z)),
    "relu": (_relu, lambda z, a: (z > 0).astype(z.dtype)),
    "sigmoid": (expit, lambda z, a: a * (1.0 - a)),
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
}


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def parameters(self):
        """Yield ``(name, value, grad)`` in declaration order."""
        for name, value in self.params.items():
            yield name, value, self.grads[name]

    def zero_grad(self):
        for g in self.grads.values():
            g[...] = 0.0

    def forward(self, x):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError


class Dense(Layer):
    """``y = act(x W^T + b)`` with ``W`` of shape ``(n_out, n_in)``."""

    def __init__(self, n_in: int, n_out: int, activation: str = "relu",
                 rng: np.random.Generator | None = None, init: str = "he"):
        super().__init__()
        if n_in < 1 or n_out < 1:
            raise ValueError("layer widths must be >= 1")
        self.n_in, self.n_out, self.activation = n_in, n_out, activation
        self.act, self.dact = ACTIVATIONS[activation]
        rng = rng if rng is not None else np.random.default_rng(0)
        if init == "zeros":
            W = np.zeros((n_out, n_in))
        else:
            gain = 2.0 if activation == "relu" else 1.0
            W = rng.normal(0.0, math.sqrt(gain / n_in), size=(n_out, n_in))
        self.params = {"W": W, "b": np.zeros(n_out)}
        self.grads = {"W": np.zeros_like(W), "b": np.zeros(n_out)}

    def forward(self, x):
        if x.shape[-1] != self.n_in:
            raise ValueError(f"expected input width {self.n_in}, got {x.shape[-1]}")
        z = x @ self.params["W"].T + self.params["b"]
        a = self.act(z)
        self._cache = (x, z, a)
        return a

    def backward(self, grad):
        x, z, a = self._cache
        if grad.shape != a.shape:
            raise ValueError(f"gradient shape {grad.shape} != output shape {a.shape}")
        gz = grad if self.activation == "identity" else grad * self.dact(z, a)
        self.grads["W"] += gz.T @ x
        self.grads["b"] += gz.sum(axis=0)
        return gz @ self.params["W"]


class Sequential(Layer):
    def __init__(self, layers):
        super().__init__()
        self.layers = list(layers)

    def parameters(self):
        for i, layer in enumerate(self.layers):
            for name, value, grad in layer.parameters():
                yield f"{i}.{name}", value, grad

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad


class ReZero(Layer):
    """Residual block ``y = x + alpha * F(x)`` with ``alpha`` starting at 0."""

    def __init__(self, body: Layer, alpha: float = 0.0):
        super().__init__()
        self.body = body
        self.params = {"alpha": np.array([alpha], dtype=float)}
        self.grads = {"alpha": np.zeros(1)}

    def parameters(self):
        yield "alpha", self.params["alpha"], self.grads["alpha"]
        for name, value, grad in self.body.parameters():
            yield f"body.{name}", value, grad

    def zero_grad(self):
        super().zero_grad()
        self.body.zero_grad()

    def forward(self, x):
        f = self.body.forward(x)
        if f.shape != x.shape:
            raise ValueError(f"residual branch maps {x.shape} to {f.shape}")
        self._f = f
        return x + self.params["alpha"][0] * f

    def backward(self, grad):
        self.grads["alpha"] += np.sum(grad * self._f)
        return grad + self.body.backward(self.params["alpha"][0] * grad)


def split_sizes(widths, rho: float) -> list[int]:
    """Number of outputs each non-final layer routes straight to the block output."""
    if not 0 < rho < 1:
        raise ValueError(f"split fraction must be in (0, 1), got {rho}")
    sizes = []
    for w in widths[:-1]:
        r = math.ceil(rho * w)
        if r >= w:
            raise ValueError(f"layer of width {w} routes all {r} outputs; nothing left to forward")
        sizes.append(r)
    return sizes


def deep_split_widths(out_width: int, n_layers: int, rho: float) -> list[int]:
    """Layer widths whose routed slices plus final layer sum to ``out_width``."""
    if n_layers == 1:
        return [out_width]
    # equal non-final widths w routing r = ceil(rho * w) each, last layer ~ w
    r = max(1, round(out_width / (n_layers - 1 + 1 / rho)))
    w = math.floor(r / rho)
    last = out_width - (n_layers - 1) * r
    if last < 1 or w <= r:
        raise ValueError(f"cannot build a {n_layers}-layer split block of width {out_width}")
    return [w] * (n_layers - 1) + [last]


class DeepSplit(Layer):
    """Stack of dense layers where each non-final layer sends its first
    ``ceil(rho * w_i)`` outputs directly to the block output and the rest to
    the next layer. Output is the routed slices in layer order followed by the
    last layer's output.
    """

    def __init__(self, n_in: int, widths, rho: float = 0.25, activation: str = "relu",
                 rng: np.random.Generator | None = None):
        super().__init__()
        widths = list(widths)
        self.routes = split_sizes(widths, rho)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.layers = []
        width_in = n_in
        for i, w in enumerate(widths):
            self.layers.append(Dense(width_in, w, activation, rng))
            if i < len(self.routes):
                width_in = w - self.routes[i]
        self.out_width = sum(self.routes) + widths[-1]

    def parameters(self):
        for i, layer in enumerate(self.layers):
            for name, value, grad in layer.parameters():
                yield f"{i}.{name}", value, grad

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def forward(self, x):
        outs = []
        for layer, r in zip(self.layers, self.routes):
            a = layer.forward(x)
            outs.append(a[:, :r])
            x = a[:, r:]
        outs.append(self.layers[-1].forward(x))
        return np.concatenate(outs, axis=1)

    def backward(self, grad):
        offsets = np.cumsum([0] + self.routes)
        g = self.layers[-1].backward(grad[:, offsets[-1]:])
        for i in range(len(self.routes) - 1, -1, -1):
            g_out = np.concatenate([grad[:, offsets[i]:offsets[i + 1]], g], axis=1)
            g = self.layers[i].backward(g_out)
        return g


def soft_quant(x, bits: int, beta: float):
    """Sigmoid-sum staircase approximating a ``bits``-bit mid-rise quantizer
    on [0, 1]. Returns ``(value, d value / dx)``.

    ``value = (0.5 + sum_k sigmoid(beta * (2**bits * x - k))) / 2**bits`` for
    breakpoints ``k = 1 .. 2**bits``.
    """
    if not 1 <= bits <= 16:
        raise ValueError(f"bits must be in [1, 16], got {bits}")
    if not beta > 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    x = np.asarray(x, dtype=float)
    n = 2 ** bits
    value = np.full(x.shape, 0.5)
    deriv = np.zeros(x.shape)
    u = n * x
    for k in range(1, n + 1):
        s = expit(beta * (u - k))
        value += s
        deriv += s * (1.0 - s)
    return value / n, deriv * beta


class SoftQuant(Layer):
    """Training-time quantize/dequantize surrogate; identity when disabled."""

    def __init__(self, bits: int, beta: float = 30.0, enabled: bool = True):
        super().__init__()
        self.bits, self.beta, self.enabled = bits, beta, enabled

    def forward(self, x):
        if not self.enabled:
            return x
        y, self._d = soft_quant(x, self.bits, self.beta)
        return y

    def backward(self, grad):
        return grad if not self.enabled else grad * self._d
