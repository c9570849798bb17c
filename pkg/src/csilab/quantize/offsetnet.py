"""Decoder-side residual network that cancels part of the quantization error.

``apply(x) = x + MLP(x - mean(x))`` where the mean is taken over each feature
vector. The MLP has three dense layers and its last layer starts at zero, so a
fresh network is exactly the identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn.layers import Dense, Sequential
from ..nn.train import Optimizer


@dataclass(frozen=True)
class OffsetConfig:
    hidden: tuple | None = None  # default (2 * width, 2 * width)
    epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0


class OffsetNet:
    def __init__(self, width: int, hidden=None, seed: int = 0, activation: str = "relu"):
        if width < 1:
            raise ValueError("width must be >= 1")
        hidden = tuple(hidden) if hidden else (2 * width, 2 * width)
        if len(hidden) != 2:
            raise ValueError("OffsetNet has exactly two hidden layers")
        rng = np.random.default_rng(seed)
        self.width = width
        self.mlp = Sequential([
            Dense(width, hidden[0], activation, rng),
            Dense(hidden[0], hidden[1], activation, rng),
            Dense(hidden[1], width, "identity", rng, init="zeros"),
        ])

    def parameters(self):
        return self.mlp.parameters()

    def zero_grad(self):
        self.mlp.zero_grad()

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.width:
            raise ValueError(f"expected {self.width} features, got {x.shape[-1]}")
        centred = x - x.mean(axis=-1, keepdims=True)
        return x + self.mlp.forward(centred)

    def backward(self, grad):
        g = self.mlp.backward(grad)
        return grad + g - g.mean(axis=-1, keepdims=True)

    __call__ = forward


def offsetnet_apply(net: OffsetNet, features):
    return net.forward(features)


def offsetnet_train(dequantized, target, config: OffsetConfig = OffsetConfig()) -> tuple[OffsetNet, list]:
    """Fit an OffsetNet so that ``apply(dequantized)`` approaches ``target``.

    Loss is the mean squared feature error. Returns the network and the
    per-epoch training losses.
    """
    dq = np.asarray(dequantized, dtype=float)
    tgt = np.asarray(target, dtype=float)
    if dq.shape != tgt.shape or dq.ndim != 2:
        raise ValueError("dequantized and target must be matching (n, width) arrays")
    net = OffsetNet(dq.shape[1], config.hidden, config.seed)
    opt = Optimizer(net.parameters(), "adam", config.lr)
    rng = np.random.default_rng(config.seed)
    losses = []
    n = len(dq)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, config.batch_size):
            idx = order[s:s + config.batch_size]
            net.zero_grad()
            diff = net.forward(dq[idx]) - tgt[idx]
            total += float(np.sum(diff * diff))
            net.backward(2.0 * diff / diff.size)
            opt.step()
        losses.append(total / dq.size)
    return net, losses
