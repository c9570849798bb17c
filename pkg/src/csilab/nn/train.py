"""Backpropagation training and finite-difference gradient checks."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .layers import DeepSplit, Dense, ReZero, Sequential, SoftQuant
from .model import Network, NetworkSpec

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-3
    optimizer: str = "adam"  # sgd | momentum | adam
    beta_start: float = 30.0
    beta_end: float = 500.0
    ramp_epochs: int | None = None  # default: first half of training
    seed: int = 0
    lr_decay: float = 1.0  # multiplicative step decay applied each epoch

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or not self.lr > 0:
            raise ValueError("epochs, batch_size and lr must be positive")
        if self.optimizer not in ("sgd", "momentum", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not 0 < self.beta_start <= self.beta_end:
            raise ValueError("need 0 < beta_start <= beta_end")

    def beta_at(self, epoch: int) -> float:
        ramp = self.ramp_epochs if self.ramp_epochs is not None else self.epochs // 2
        if ramp <= 0 or epoch >= ramp:
            return self.beta_end
        return self.beta_start + (self.beta_end - self.beta_start) * epoch / ramp

    def to_dict(self) -> dict:
        return asdict(self)


class Optimizer:
    def __init__(self, params, kind="adam", lr=1e-3, momentum=0.9, b1=0.9, b2=0.999, eps=1e-8):
        self.params = list(params)
        self.kind, self.lr = kind, lr
        self.momentum, self.b1, self.b2, self.eps = momentum, b1, b2, eps
        self.t = 0
        self.m = [np.zeros_like(v) for _, v, _ in self.params]
        self.v = [np.zeros_like(v) for _, v, _ in self.params]

    def step(self):
        self.t += 1
        for i, (_, value, grad) in enumerate(self.params):
            if self.kind == "sgd":
                value -= self.lr * grad
            elif self.kind == "momentum":
                self.m[i] = self.momentum * self.m[i] + grad
                value -= self.lr * self.m[i]
            else:
                self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * grad
                self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * grad * grad
                mhat = self.m[i] / (1 - self.b1 ** self.t)
                vhat = self.v[i] / (1 - self.b2 ** self.t)
                value -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def mse_loss(y, target):
    """Mean over samples of the summed squared error; returns (loss, dL/dy)."""
    diff = y - target
    n = y.shape[0]
    return float(np.sum(diff * diff) / n), 2.0 * diff / n


@dataclass
class TrainResult:
    losses: list = field(default_factory=list)
    betas: list = field(default_factory=list)


def train(net: Network, x: np.ndarray, loss_fn, config: TrainConfig,
          quantize: bool = True, refresh=None, on_epoch=None) -> TrainResult:
    """Minimize ``loss_fn`` by minibatch backpropagation.

    ``loss_fn(y, idx)`` returns ``(mean loss, dL/dy)`` for the network output
    ``y`` of training rows ``idx``. ``refresh(epoch, rng)``, if given, may
    return a new input array for the epoch (data augmentation). The soft
    quantizer's ``beta`` follows ``config.beta_at``. Deterministic given
    ``config.seed``.
    """
    if len(x) == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(config.seed)
    opt = Optimizer(net.parameters(), config.optimizer, config.lr)
    result = TrainResult()
    n = len(x)
    for epoch in range(config.epochs):
        if refresh is not None:
            new_x = refresh(epoch, rng)
            if new_x is not None:
                x = new_x
        beta = config.beta_at(epoch)
        net.quant.beta = beta
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            net.zero_grad()
            y = net.forward(x[idx], quantize=quantize)
            loss, grad = loss_fn(y, idx)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} at epoch {epoch}, batch starting {start}")
            net.backward(grad)
            opt.step()
            total += loss * len(idx)
        result.losses.append(total / n)
        result.betas.append(beta)
        opt.lr *= config.lr_decay
        if on_epoch is not None:
            on_epoch(epoch, total / n)
        log.debug("epoch %d loss %.6g beta %.1f", epoch, total / n, beta)
    return result


# ---------------------------------------------------------------------------
# gradient checking

@dataclass(frozen=True)
class GradReport:
    max_rel_error: dict  # parameter group -> max relative error
    input_rel_error: float
    step: float

    @property
    def worst(self) -> float:
        return max(list(self.max_rel_error.values()) + [self.input_rel_error])


def _rel_err(a, b, floor):
    # max-norm relative error of a whole group; per-entry ratios would be
    # dominated by finite-difference rounding on near-zero entries
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), floor))


def numeric_grad(f, value: np.ndarray, step: float = 1e-6, entries=None) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``value`` (perturbed in place)."""
    g = np.zeros_like(value)
    flat, gflat = value.reshape(-1), g.reshape(-1)
    for i in (range(flat.size) if entries is None else entries):
        old = flat[i]
        flat[i] = old + step
        fp = f()
        flat[i] = old - step
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * step)
    return g


def check_gradients(model, x, loss_fn, step: float = 1e-6, floor: float = 1e-12,
                    max_entries: int | None = None, seed: int = 0) -> GradReport:
    """Compare backprop gradients of ``loss_fn(model.forward(x))`` with central
    differences. ``model`` needs ``forward``, ``backward``, ``zero_grad`` and
    ``parameters``. The error of a group is ``max|a - b| / max(|a|, |b|, floor)``.
    """
    rng = np.random.default_rng(seed)

    def f():
        return loss_fn(model.forward(x))[0]

    model.zero_grad()
    _, g = loss_fn(model.forward(x))
    gx = model.backward(g)
    errors = {}
    for name, value, grad in model.parameters():
        analytic = grad.copy()
        entries = None
        if max_entries is not None and value.size > max_entries:
            entries = rng.choice(value.size, max_entries, replace=False)
        num = numeric_grad(f, value, step, entries)
        sel = slice(None) if entries is None else entries
        errors[name] = _rel_err(analytic.reshape(-1)[sel], num.reshape(-1)[sel], floor)
    x = x.copy()
    numx = numeric_grad(lambda: loss_fn(model.forward(x))[0], x, step)
    return GradReport(errors, _rel_err(gx, numx, floor), step)


class _Chain(Sequential):
    """A Sequential exposing the Network-like interface used by the checker."""


def grad_check(spec: str = "full", seed: int = 0, step: float = 1e-6) -> GradReport:
    """Gradient check on a tiny random network.

    ``spec='linear'`` uses identity-activation dense layers only;
    ``spec='full'`` stacks dense, ReZero, Deep Split, a logistic tail and the
    soft quantizer.
    """
    rng = np.random.default_rng(seed)
    if spec == "linear":
        model = _Chain([Dense(6, 5, "identity", rng), Dense(5, 4, "identity", rng)])
        x = rng.normal(size=(3, 6))
    elif spec == "full":
        split = DeepSplit(6, [8, 8], 0.25, "tanh", rng)
        rz = ReZero(Dense(split.out_width, split.out_width, "tanh", rng), alpha=0.3)
        model = _Chain([split, rz, Dense(split.out_width, 4, "sigmoid", rng),
                        SoftQuant(3, beta=30.0), Dense(4, 5, "identity", rng)])
        x = rng.normal(size=(3, 6))
    else:
        raise ValueError(f"unknown gradcheck spec {spec!r}")
    target = rng.normal(size=(3, model.layers[-1].n_out))
    return check_gradients(model, x, lambda y: mse_loss(y, target), step)


def network_grad_check(spec: NetworkSpec, loss_fn, x, seed=0, step=1e-6, max_entries=20,
                       quantize=True, beta=30.0) -> GradReport:
    """Gradient check of a full :class:`Network` against ``loss_fn(y)``."""
    net = Network(spec, seed)
    net.quant.beta = beta
    # perturb ReZero alphas away from 0 so both residual branches are exercised
    for name, value, _ in net.parameters():
        if name.endswith("alpha"):
            value[...] = 0.5

    class _View:
        def forward(self, inp):
            return net.forward(inp, quantize=quantize)

        def backward(self, g):
            return net.backward(g)

        def zero_grad(self):
            net.zero_grad()

        def parameters(self):
            return net.parameters()

    return check_gradients(_View(), x, loss_fn, step, max_entries=max_entries, seed=seed)


def finetune_decoder(net: Network, features: np.ndarray, loss_fn, epochs: int = 60,
                     lr: float = 3e-4, batch_size: int = 64, seed: int = 0) -> list:
    """Train only the decoder on fixed (dequantized) features.

    The encoder is frozen, so the quantizer fitted on its outputs stays valid.
    ``loss_fn(y, idx)`` has the same contract as in :func:`train`.
    """
    opt = Optimizer(net.decoder.parameters(), "adam", lr)
    rng = np.random.default_rng(seed)
    n = len(features)
    losses = []
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            net.decoder.zero_grad()
            y = net.decode(features[idx])
            loss, grad = loss_fn(y, idx)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"decoder fine-tuning loss became {loss}")
            net.decoder.backward(net._flat(grad, net.spec.slot_out))
            opt.step()
            total += loss * len(idx)
        losses.append(total / n)
    return losses
