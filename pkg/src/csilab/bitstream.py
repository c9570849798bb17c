"""Feedback frame wire format and bit accounting.

Frame layout (all multi-byte fields little-endian)::

    0xC5 0x1F | version u8 | scheme u8 | mask ceil(N_d/8) bytes | payload_bit_len u16 | payload

The mask is a bitmap of retained paths, path 0 in the most significant bit of
the first byte. The payload is the concatenation of the quantization indices,
each written MSB-first at its own bit width, zero-padded to a whole byte.

Only the mask and the payload are charged as feedback bits. The header is
static protocol knowledge shared by both ends.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"\xc5\x1f"
VERSION = 1
SCHEMES = {0: "uniform", 1: "companded", 2: "adaptive", 3: "vector", 4: "path_level", 5: "raw"}
SCHEME_IDS = {name: sid for sid, name in SCHEMES.items()}
MAX_WIDTH = 16
# raw sample: 24 paths x 16 antenna pairs x (re, im) x float32
RAW_SAMPLE_BITS = 24 * 16 * 2 * 32


class FrameError(ValueError):
    """Base class for malformed frames."""


class FrameCorruptionError(FrameError):
    """Frame content is inconsistent (bad padding, index out of range, ...)."""


class BadMagicError(FrameError):
    pass


class UnknownSchemeError(FrameError):
    pass


class LengthMismatchError(FrameError):
    pass


class ShortBufferError(FrameError):
    pass


class IndexOverflowError(FrameError):
    pass


def _widths(indices, widths):
    indices = np.asarray(indices, dtype=np.int64).ravel()
    widths = np.broadcast_to(np.asarray(widths, dtype=np.int64), indices.shape)
    if widths.size and (widths.min() < 1 or widths.max() > MAX_WIDTH):
        raise ValueError(f"widths must be in [1, {MAX_WIDTH}]")
    return indices, widths


def pack_indices(indices, widths) -> bytes:
    """Concatenate each index as a ``width``-bit big-endian field, MSB first.

    ``widths`` is a scalar or one width per index. The last byte is
    zero-padded.
    """
    indices, widths = _widths(indices, widths)
    if np.any(indices < 0) or np.any(indices >> widths):
        bad = int(np.flatnonzero((indices < 0) | (indices >> widths))[0])
        raise IndexOverflowError(
            f"index {int(indices[bad])} at position {bad} does not fit in {int(widths[bad])} bits")
    if indices.size == 0:
        return b""
    # bit matrix: row k holds index k in MAX_WIDTH bits, keep its low `width` bits
    shifts = np.arange(MAX_WIDTH - 1, -1, -1)
    bits = (indices[:, None] >> shifts) & 1
    keep = shifts[None, :] < widths[:, None]
    return np.packbits(bits[keep].astype(np.uint8)).tobytes()


def unpack_indices(data: bytes, widths, count: int | None = None) -> np.ndarray:
    """Inverse of :func:`pack_indices`.

    With a scalar width, ``count`` gives the number of symbols. Padding bits
    after the last symbol must be zero and the buffer must not carry whole
    extra bytes.
    """
    widths = np.asarray(widths, dtype=np.int64)
    if widths.ndim == 0:
        if count is None:
            raise ValueError("count is required with a scalar width")
        widths = np.full(count, int(widths))
    if widths.size and (widths.min() < 1 or widths.max() > MAX_WIDTH):
        raise ValueError(f"widths must be in [1, {MAX_WIDTH}]")
    total = int(widths.sum())
    need = (total + 7) // 8
    if len(data) < need:
        raise ShortBufferError(f"need {need} bytes for {total} bits, got {len(data)}")
    if len(data) > need:
        raise LengthMismatchError(f"{len(data) - need} unexpected trailing bytes")
    bits = np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8))
    if bits[total:].any():
        raise FrameCorruptionError("nonzero padding bits")
    out = np.zeros(len(widths), dtype=np.int64)
    if total == 0:
        return out
    # the symbol each bit belongs to and its weight inside the symbol
    owner = np.repeat(np.arange(len(widths)), widths)
    ends = np.cumsum(widths)
    pos = ends[owner] - 1 - np.arange(total)
    np.add.at(out, owner, bits[:total].astype(np.int64) << pos)
    return out


def mask_bytes(mask) -> bytes:
    mask = np.asarray(mask, dtype=bool)
    return np.packbits(mask.astype(np.uint8)).tobytes()


@dataclass(frozen=True, eq=False)
class Frame:
    scheme: int
    mask: np.ndarray  # bool, one entry per path
    payload: bytes
    payload_bit_len: int
    version: int = VERSION

    @property
    def n_paths(self) -> int:
        return len(self.mask)

    @property
    def feedback_bits(self) -> int:
        return feedback_bit_count(self)

    def indices(self, widths, count: int | None = None) -> np.ndarray:
        return unpack_indices(self.payload, widths, count)

    def __eq__(self, other):
        return (isinstance(other, Frame) and self.scheme == other.scheme
                and self.version == other.version and self.payload == other.payload
                and self.payload_bit_len == other.payload_bit_len
                and np.array_equal(self.mask, other.mask))


def encode_frame(scheme, mask, indices, widths) -> bytes:
    """Serialize one feedback frame. ``scheme`` is an id or a name."""
    sid = SCHEME_IDS[scheme] if isinstance(scheme, str) else int(scheme)
    if sid not in SCHEMES:
        raise UnknownSchemeError(f"unknown scheme {scheme!r}")
    mask = np.asarray(mask, dtype=bool).ravel()
    if mask.size == 0:
        raise ValueError("mask must cover at least one path")
    indices, widths = _widths(indices, widths)
    nbits = int(widths.sum())
    if nbits > 0xFFFF:
        raise LengthMismatchError(f"payload of {nbits} bits exceeds the u16 length field")
    payload = pack_indices(indices, widths)
    return MAGIC + bytes([VERSION, sid]) + mask_bytes(mask) + struct.pack("<H", nbits) + payload


def decode_frame(data: bytes, n_paths: int = 24) -> Frame:
    """Parse and validate a frame. ``n_paths`` fixes the mask length (shared
    configuration, not carried in the frame)."""
    data = bytes(data)
    n_mask = (n_paths + 7) // 8
    head = 4 + n_mask + 2
    if len(data) < 2 or data[:2] != MAGIC:
        raise BadMagicError(f"bad magic {data[:2].hex() or '(empty)'}")
    if len(data) < head:
        raise ShortBufferError(f"frame of {len(data)} bytes is shorter than its {head}-byte header")
    version, sid = data[2], data[3]
    if version != VERSION:
        raise FrameError(f"unsupported frame version {version}")
    if sid not in SCHEMES:
        raise UnknownSchemeError(f"unknown scheme id {sid}")
    mbits = np.unpackbits(np.frombuffer(data[4:4 + n_mask], dtype=np.uint8))
    if mbits[n_paths:].any():
        raise FrameCorruptionError("nonzero padding bits in path mask")
    (nbits,) = struct.unpack_from("<H", data, 4 + n_mask)
    payload = data[head:]
    if len(payload) < (nbits + 7) // 8:
        raise ShortBufferError(f"payload declares {nbits} bits but has {len(payload)} bytes")
    if len(payload) != (nbits + 7) // 8:
        raise LengthMismatchError(f"payload declares {nbits} bits but has {len(payload)} bytes")
    if nbits % 8 and payload[-1] & ((1 << (8 - nbits % 8)) - 1):
        raise FrameCorruptionError("nonzero padding bits in payload")
    return Frame(sid, mbits[:n_paths].astype(bool), payload, nbits, version)


def feedback_bit_count(frame: Frame) -> int:
    """Mask bits plus payload bits; header bytes are not charged."""
    return frame.n_paths + frame.payload_bit_len


def raw_sample_bits(n_paths: int = 24, n_tx: int = 4, n_rx: int = 4, float_bits: int = 32) -> int:
    """Size of an uncompressed sample stored as (re, im) floats."""
    return n_paths * n_tx * n_rx * 2 * float_bits
