"""A set of scalar quantizers applied to groups of features, plus the
``CSIQ`` artifact file shared by the encoder and decoder sides."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..bitstream import FrameCorruptionError
from .scalar import (QuantizerSpec, companded_spec, dequantize_with_spec, lloyd_max_fit,
                     quantize_with_spec, uniform_spec)
from .vq import Codebook

KIND_CODES = {"uniform": 0, "mulaw": 1, "alaw": 2, "adaptive": 3, "vector": 4}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}


def zero_bit_spec(samples, kind: str = "adaptive") -> QuantizerSpec:
    """One-level quantizer: every value decodes to the sample mean."""
    samples = np.asarray(samples, dtype=float).ravel()
    lo, hi = float(samples.min()), float(samples.max())
    if hi <= lo:
        hi = lo + 1e-12 * max(1.0, abs(lo))
    return QuantizerSpec(kind, [lo, hi], [float(np.clip(samples.mean(), lo, hi))], 0)


@dataclass(eq=False)
class ScalarBank:
    """``specs[groups[k]]`` quantizes feature ``k``. Zero-bit groups send nothing."""

    specs: list
    groups: np.ndarray

    def __post_init__(self):
        self.groups = np.asarray(self.groups, dtype=np.int64)
        if len(self.specs) == 0:
            raise ValueError("bank needs at least one quantizer")
        if self.groups.size and (self.groups.min() < 0 or self.groups.max() >= len(self.specs)):
            raise ValueError("group index out of range")

    @property
    def kind(self) -> str:
        return self.specs[0].kind

    @property
    def n_features(self) -> int:
        return len(self.groups)

    @property
    def bits(self) -> np.ndarray:
        return np.array([s.bits for s in self.specs], dtype=np.int64)

    @property
    def widths(self) -> np.ndarray:
        """Bit width of every feature (0 for features that are not sent)."""
        return self.bits[self.groups]

    @property
    def payload_bits(self) -> int:
        return int(self.widths.sum())

    def quantize(self, features) -> np.ndarray:
        f = np.asarray(features, dtype=float)
        if f.shape[-1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {f.shape[-1]}")
        out = np.zeros(f.shape, dtype=np.int64)
        for g, spec in enumerate(self.specs):
            cols = self.groups == g
            if spec.bits and cols.any():
                out[..., cols] = quantize_with_spec(f[..., cols], spec)
        return out

    def dequantize(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64)
        if idx.shape[-1] != self.n_features:
            raise FrameCorruptionError(f"expected {self.n_features} indices, got {idx.shape[-1]}")
        out = np.zeros(idx.shape, dtype=float)
        for g, spec in enumerate(self.specs):
            cols = self.groups == g
            if cols.any():
                out[..., cols] = dequantize_with_spec(idx[..., cols], spec)
        return out

    def sent(self, indices) -> np.ndarray:
        """The indices that go on the wire (zero-width features dropped)."""
        return np.asarray(indices)[..., self.widths > 0]

    def received(self, payload_indices) -> np.ndarray:
        """Inverse of :meth:`sent`; dropped features get index 0."""
        payload_indices = np.asarray(payload_indices, dtype=np.int64)
        out = np.zeros(payload_indices.shape[:-1] + (self.n_features,), dtype=np.int64)
        out[..., self.widths > 0] = payload_indices
        return out


def fit_bank(features, kind: str, bits, groups=None) -> ScalarBank:
    """Build a bank for ``features`` of shape ``(n, F)``.

    ``bits`` is a scalar or one entry per group; ``groups`` maps each feature
    to its group (default: one shared group). Uniform and companded kinds are
    fixed grids on [0, 1]; ``adaptive`` runs Lloyd-Max on each group's
    training values.
    """
    f = np.asarray(features, dtype=float)
    f = f.reshape(-1, f.shape[-1])
    groups = np.zeros(f.shape[1], dtype=np.int64) if groups is None else np.asarray(groups)
    n_groups = int(groups.max()) + 1
    bits = np.broadcast_to(np.asarray(bits, dtype=np.int64), (n_groups,))
    specs = []
    for g in range(n_groups):
        b = int(bits[g])
        vals = f[:, groups == g]
        if b == 0:
            specs.append(zero_bit_spec(vals, kind))
        elif kind == "uniform":
            specs.append(uniform_spec(b))
        elif kind in ("mulaw", "alaw"):
            specs.append(companded_spec(b, "mu" if kind == "mulaw" else "a"))
        elif kind == "adaptive":
            specs.append(lloyd_max_fit(vals, b).spec)
        else:
            raise ValueError(f"unknown scalar quantizer kind {kind!r}")
    return ScalarBank(specs, groups)


# ---------------------------------------------------------------------------
# CSIQ artifact file

class QuantizerFormatError(ValueError):
    pass


_MAGIC = b"CSIQ"
_VERSION = 1


def _f64(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def write_quantizer(path, q) -> None:
    """Write a :class:`ScalarBank`, a single :class:`QuantizerSpec` or a
    :class:`Codebook`.

    Layout after ``CSIQ | version u32 | kind u8 | B u8 | per-path flag u8``:

    * codebook: ``v u32``, ``b u32``, codewords ``2**b * v`` f64;
    * single spec (flag 0): edges ``2**B + 1`` f64, levels ``2**B`` f64;
    * bank (flag 1): ``n_specs u32``, ``n_features u32``, bits u8 per spec,
      group u32 per feature, then each spec's edges and levels as f64.
    """
    if isinstance(q, Codebook):
        head = struct.pack("<4sIBBB", _MAGIC, _VERSION, KIND_CODES["vector"], q.bits, 0)
        body = struct.pack("<II", q.sub_dim, q.bits) + _f64(q.codewords)
    elif isinstance(q, QuantizerSpec):
        head = struct.pack("<4sIBBB", _MAGIC, _VERSION, KIND_CODES[q.kind], q.bits, 0)
        body = _f64(q.edges) + _f64(q.levels)
    elif isinstance(q, ScalarBank):
        head = struct.pack("<4sIBBB", _MAGIC, _VERSION, KIND_CODES[q.kind], int(q.bits.max()), 1)
        body = struct.pack("<II", len(q.specs), q.n_features)
        body += np.asarray(q.bits, dtype="u1").tobytes() + np.asarray(q.groups, dtype="<u4").tobytes()
        body += b"".join(_f64(s.edges) + _f64(s.levels) for s in q.specs)
    else:
        raise TypeError(f"cannot serialize {type(q).__name__}")
    Path(path).write_bytes(head + body)


class _Reader:
    def __init__(self, buf):
        self.buf, self.pos = buf, 0

    def take(self, fmt):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.buf):
            raise QuantizerFormatError("truncated quantizer file")
        out = struct.unpack_from(fmt, self.buf, self.pos)
        self.pos += size
        return out

    def array(self, dtype, count):
        size = np.dtype(dtype).itemsize * count
        if self.pos + size > len(self.buf):
            raise QuantizerFormatError("truncated quantizer file")
        out = np.frombuffer(self.buf, dtype, count, self.pos).copy()
        self.pos += size
        return out


def read_quantizer(path):
    r = _Reader(Path(path).read_bytes())
    magic, version, kind, bits, flag = r.take("<4sIBBB")
    if magic != _MAGIC:
        raise QuantizerFormatError("bad magic")
    if version != _VERSION:
        raise QuantizerFormatError(f"unsupported version {version}")
    if kind not in KIND_NAMES:
        raise QuantizerFormatError(f"unknown quantizer kind {kind}")
    name = KIND_NAMES[kind]
    try:
        if name == "vector":
            v, b = r.take("<II")
            out = Codebook(v, r.array("<f8", (2 ** b) * v).reshape(2 ** b, v))
        elif flag == 0:
            out = QuantizerSpec(name, r.array("<f8", 2 ** bits + 1), r.array("<f8", 2 ** bits), bits)
        else:
            n_specs, n_feat = r.take("<II")
            spec_bits = r.array("u1", n_specs)
            groups = r.array("<u4", n_feat).astype(np.int64)
            specs = [QuantizerSpec(name, r.array("<f8", 2 ** int(b) + 1), r.array("<f8", 2 ** int(b)), int(b))
                     for b in spec_bits]
            out = ScalarBank(specs, groups)
    except QuantizerFormatError:
        raise
    except ValueError as exc:
        raise QuantizerFormatError(f"invalid quantizer content: {exc}") from exc
    if r.pos != len(r.buf):
        raise QuantizerFormatError("trailing bytes after quantizer data")
    return out
