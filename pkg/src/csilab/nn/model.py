"""Encoder/decoder network for CSI compression."""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .layers import DeepSplit, Dense, ReZero, Sequential, SoftQuant, deep_split_widths

PAPER_ENCODER_WIDTHS = (1024, 1280, 512)
PAPER_DECODER_WIDTHS = (1408, 1152, 1152, 1024)


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture of the encoder/decoder pair.

    ``mode='joint'`` feeds all path slots as one vector and produces
    ``feature_len`` features. ``mode='per_path'`` runs one shared network on
    every path slot and produces ``feature_len`` features per slot.

    With ``block='dense'`` each entry of the width tuples is one hidden dense
    layer; with ``block='deep_split'`` each entry is the output width of a
    split block of ``split_layers`` dense layers. Both the encoder and decoder
    end with an extra dense layer (features, resp. output width); the encoder
    then applies a logistic so features live in (0, 1).
    """

    n_slots: int = 24
    slot_in: int = 32
    slot_out: int = 32
    feature_len: int = 128
    mode: str = "joint"
    encoder_widths: tuple = (512, 256)
    decoder_widths: tuple = (256, 512)
    block: str = "dense"
    split_layers: int = 4
    split_fraction: float = 0.25
    activation: str = "relu"
    rezero: bool = False
    quant_bits: int = 0  # 0 disables the soft quantizer during training

    def __post_init__(self):
        if self.mode not in ("joint", "per_path"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.block not in ("dense", "deep_split"):
            raise ValueError(f"unknown block type {self.block!r}")
        if min((self.n_slots, self.slot_in, self.slot_out, self.feature_len)
               + tuple(self.encoder_widths) + tuple(self.decoder_widths)) < 1:
            raise ValueError("all widths must be >= 1")
        if not 0 < self.split_fraction < 1:
            raise ValueError("split_fraction must be in (0, 1)")
        object.__setattr__(self, "encoder_widths", tuple(self.encoder_widths))
        object.__setattr__(self, "decoder_widths", tuple(self.decoder_widths))

    @property
    def total_features(self) -> int:
        return self.feature_len * (self.n_slots if self.mode == "per_path" else 1)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["encoder_widths"] = list(self.encoder_widths)
        d["decoder_widths"] = list(self.decoder_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(**d)

    @classmethod
    def paper_profile(cls, **kw) -> "NetworkSpec":
        """Per-path Deep Split widths of the large FCN design."""
        base = dict(mode="per_path", n_slots=24, slot_in=32, slot_out=32,
                    encoder_widths=PAPER_ENCODER_WIDTHS, decoder_widths=PAPER_DECODER_WIDTHS,
                    block="deep_split", split_layers=4, split_fraction=0.25)
        base.update(kw)
        return cls(**base)


def _stack(n_in, widths, spec, rng):
    layers = []
    for w in widths:
        if spec.block == "deep_split":
            blk = DeepSplit(n_in, deep_split_widths(w, spec.split_layers, spec.split_fraction),
                            spec.split_fraction, spec.activation, rng)
            n_in = blk.out_width
        else:
            blk = Dense(n_in, w, spec.activation, rng)
            n_in = w
        layers.append(blk)
        if spec.rezero:
            layers.append(ReZero(Dense(n_in, n_in, spec.activation, rng)))
    return layers, n_in


class Network:
    """Encoder, training-time soft quantizer and decoder."""

    def __init__(self, spec: NetworkSpec, seed: int = 0):
        self.spec = spec
        rng = np.random.default_rng(seed)
        if spec.mode == "joint":
            enc_in, dec_out = spec.n_slots * spec.slot_in, spec.n_slots * spec.slot_out
        else:
            enc_in, dec_out = spec.slot_in, spec.slot_out
        layers, w = _stack(enc_in, spec.encoder_widths, spec, rng)
        layers.append(Dense(w, spec.feature_len, "sigmoid", rng, init="xavier"))
        self.encoder = Sequential(layers)
        self.quant = SoftQuant(max(spec.quant_bits, 1), 30.0, enabled=spec.quant_bits > 0)
        layers, w = _stack(spec.feature_len, spec.decoder_widths, spec, rng)
        layers.append(Dense(w, dec_out, "identity", rng, init="xavier"))
        self.decoder = Sequential(layers)

    # parameter bookkeeping ------------------------------------------------
    def parameters(self):
        for prefix, part in (("encoder", self.encoder), ("decoder", self.decoder)):
            for name, value, grad in part.parameters():
                yield f"{prefix}.{name}", value, grad

    def zero_grad(self):
        self.encoder.zero_grad()
        self.decoder.zero_grad()

    def n_params(self) -> int:
        return sum(v.size for _, v, _ in self.parameters())

    # reshaping between (batch, slots, width) and the layers' 2D view --------
    def _flat(self, x, width):
        n = x.shape[0]
        if self.spec.mode == "joint":
            return x.reshape(n, -1)
        return x.reshape(n * self.spec.n_slots, width)

    def encode(self, x: np.ndarray) -> np.ndarray:
        """``(batch, n_slots, slot_in)`` inputs to ``(batch, total_features)``."""
        x = np.asarray(x, dtype=float)
        if x.shape[1:] != (self.spec.n_slots, self.spec.slot_in):
            raise ValueError(f"input shape {x.shape[1:]} != {(self.spec.n_slots, self.spec.slot_in)}")
        f = self.encoder.forward(self._flat(x, self.spec.slot_in))
        return f.reshape(x.shape[0], -1)

    def decode(self, features: np.ndarray) -> np.ndarray:
        """``(batch, total_features)`` to ``(batch, n_slots, slot_out)``."""
        features = np.asarray(features, dtype=float)
        if features.shape[1] != self.spec.total_features:
            raise ValueError(f"expected {self.spec.total_features} features, got {features.shape[1]}")
        n = features.shape[0]
        f = features.reshape(-1, self.spec.feature_len)
        return self.decoder.forward(f).reshape(n, self.spec.n_slots, self.spec.slot_out)

    def forward(self, x: np.ndarray, quantize: bool = True) -> np.ndarray:
        """Training forward pass through encoder, soft quantizer and decoder."""
        f = self.encode(x)
        self.quant.enabled = quantize and self.spec.quant_bits > 0
        q = self.quant.forward(f)
        return self.decode(q)

    def backward(self, grad_y: np.ndarray) -> np.ndarray:
        n = grad_y.shape[0]
        g = self.decoder.backward(self._flat(grad_y, self.spec.slot_out))
        g = self.quant.backward(g.reshape(n, -1))
        g = self.encoder.backward(g.reshape(-1, self.spec.feature_len))
        return g.reshape(n, self.spec.n_slots, self.spec.slot_in)

    def rezero_alphas(self) -> list[float]:
        return [float(v[0]) for name, v, _ in self.parameters() if name.endswith("alpha")]

    # checkpoint file --------------------------------------------------------
    def save(self, path, extra: dict | None = None) -> None:
        write_checkpoint(path, self, extra)

    @classmethod
    def load(cls, path) -> tuple["Network", dict]:
        return read_checkpoint(path)


class CheckpointError(ValueError):
    pass


_CK_MAGIC = b"CSIM"
_CK_VERSION = 1


def write_checkpoint(path, net: Network, extra: dict | None = None) -> None:
    """``CSIM`` | version u32 | json length u32 | json | float64 blobs | u64 length.

    The JSON holds the network spec plus any ``extra`` metadata; blobs are the
    parameters in declaration order; the trailer is the byte length of
    everything before it.
    """
    meta = json.dumps({"spec": net.spec.to_dict(), "extra": extra or {}}, sort_keys=True).encode()
    parts = [_CK_MAGIC, struct.pack("<II", _CK_VERSION, len(meta)), meta]
    parts += [np.ascontiguousarray(v, dtype="<f8").tobytes() for _, v, _ in net.parameters()]
    body = b"".join(parts)
    Path(path).write_bytes(body + struct.pack("<Q", len(body)))


def read_checkpoint(path) -> tuple[Network, dict]:
    buf = Path(path).read_bytes()
    if buf[:4] != _CK_MAGIC:
        raise CheckpointError("bad magic")
    if len(buf) < 20:
        raise CheckpointError("truncated checkpoint")
    (length,) = struct.unpack_from("<Q", buf, len(buf) - 8)
    if length != len(buf) - 8:
        raise CheckpointError(f"length check failed: trailer says {length}, file has {len(buf) - 8}")
    version, n_meta = struct.unpack_from("<II", buf, 4)
    if version != _CK_VERSION:
        raise CheckpointError(f"unsupported version {version}")
    meta = json.loads(buf[12:12 + n_meta])
    net = Network(NetworkSpec.from_dict(meta["spec"]))
    pos = 12 + n_meta
    for _, value, _ in net.parameters():
        nbytes = value.size * 8
        if pos + nbytes > len(buf) - 8:
            raise CheckpointError("parameter blobs truncated")
        value[...] = np.frombuffer(buf, "<f8", value.size, pos).reshape(value.shape)
        pos += nbytes
    if pos != len(buf) - 8:
        raise CheckpointError("trailing bytes after parameter blobs")
    return net, meta["extra"]
