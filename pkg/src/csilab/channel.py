"""Cluster-based multipath MIMO channel synthesis, dataset files and NMSE.

A channel sample is a complex array ``H[d, i, j]`` over cluster (path) ``d``,
transmit antenna ``i`` and receive antenna ``j``. Each cluster is the sum of
``n_subpaths`` rank-1 rays built from half-wavelength uniform-linear-array
steering vectors::

    H_d = sum_l sqrt(P_d / L_d) * exp(j psi_l) * conj(a_tx(theta_l)) a_rx(phi_l)^T

with cluster powers ``P_d ~ exp(-d / power_decay) * 10**(-Z_d / 10)``,
``Z_d ~ N(0, shadow_sigma)`` and ``sum_d P_d = 1``. Only small-scale fading is
modelled; there is no line-of-sight ray, path loss or mobility.
"""

from __future__ import annotations

import dataclasses
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "ChannelConfig",
    "Dataset",
    "DatasetFormatError",
    "DegenerateSampleError",
    "NormStats",
    "desk_config",
    "nmse",
    "nmse_per_sample",
    "read_dataset",
    "sample_seed",
    "synth_dataset",
    "synth_sample",
    "write_dataset",
]

MASK64 = (1 << 64) - 1
# test-split counters start here so they never collide with train counters
TEST_COUNTER_BASE = 1 << 40


class DegenerateSampleError(ValueError):
    """Raised when a channel sample has zero energy."""


class DatasetFormatError(ValueError):
    """Malformed dataset file. ``field`` names the offending header field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class ChannelConfig:
    n_paths: int = 24
    n_tx: int = 4
    n_rx: int = 4
    n_subpaths: int = 20
    n_rb: int = 48
    carrier_freq: float = 3.5e9
    subcarrier_spacing: float = 15e3
    n_train: int = 3000
    n_test: int = 400
    n_cells: int = 57
    n_slots: int = 200
    slot_interval: int = 100
    power_decay: float = 1.0
    shadow_sigma: float = 3.0
    angle_spread: float = np.deg2rad(3.0)
    master_seed: int = 0

    def __post_init__(self):
        for name in ("n_paths", "n_tx", "n_rx", "n_subpaths", "n_rb", "n_train",
                     "n_test", "n_cells", "n_slots", "slot_interval"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.power_decay > 0:
            raise ValueError("power_decay must be > 0")
        if self.shadow_sigma < 0 or self.angle_spread < 0:
            raise ValueError("shadow_sigma and angle_spread must be >= 0")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_paths, self.n_tx, self.n_rx)

    @property
    def n_coeffs(self) -> int:
        return self.n_paths * self.n_tx * self.n_rx

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def desk_config(**overrides) -> ChannelConfig:
    """Desk-scale profile: 2000 train / 400 test samples, seed 1234."""
    kw = dict(n_train=2000, n_test=400, master_seed=1234)
    kw.update(overrides)
    return ChannelConfig(**kw)


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def sample_seed(master_seed: int, counter: int) -> int:
    """Per-sample seed: ``splitmix64(splitmix64(master_seed) ^ counter)``.

    Counter-based, so any sample can be regenerated independently of the
    others. Train samples use counters ``0..n_train-1``, test samples use
    ``TEST_COUNTER_BASE + k``.
    """
    return _splitmix64(_splitmix64(master_seed & MASK64) ^ (counter & MASK64))


def _steering(n: int, angles: np.ndarray) -> np.ndarray:
    # (len(angles), n), a(theta)_k = exp(j pi k sin theta)
    return np.exp(1j * np.pi * np.outer(np.sin(angles), np.arange(n)))


def cluster_powers(config: ChannelConfig, rng: np.random.Generator) -> np.ndarray:
    d = np.arange(config.n_paths)
    shadow = rng.normal(0.0, config.shadow_sigma, size=config.n_paths)
    p = np.exp(-d / config.power_decay) * 10.0 ** (-shadow / 10.0)
    return p / p.sum()


def synth_sample(config: ChannelConfig, sample_seed: int) -> np.ndarray:
    """Draw one channel tensor of shape ``(n_paths, n_tx, n_rx)``."""
    rng = np.random.default_rng(sample_seed)
    nd, nt, nr, nl = config.n_paths, config.n_tx, config.n_rx, config.n_subpaths
    p = cluster_powers(config, rng)
    aod = rng.uniform(-np.pi / 2, np.pi / 2, size=nd)
    aoa = rng.uniform(-np.pi / 2, np.pi / 2, size=nd)
    aod_rays = aod[:, None] + config.angle_spread * rng.standard_normal((nd, nl))
    aoa_rays = aoa[:, None] + config.angle_spread * rng.standard_normal((nd, nl))
    phase = rng.uniform(0.0, 2 * np.pi, size=(nd, nl))

    a_tx = np.conj(_steering(nt, aod_rays.ravel())).reshape(nd, nl, nt)
    a_rx = _steering(nr, aoa_rays.ravel()).reshape(nd, nl, nr)
    gain = np.sqrt(p / nl)[:, None] * np.exp(1j * phase)
    return np.einsum("dl,dli,dlj->dij", gain, a_tx, a_rx)


@dataclass(frozen=True)
class NormStats:
    """Global affine map of real/imag parts into [-1, 1]."""

    offset: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be > 0")

    @classmethod
    def fit(cls, samples: np.ndarray) -> "NormStats":
        parts = np.concatenate([samples.real.ravel(), samples.imag.ravel()]).astype(np.float64)
        offset = float(parts.mean())
        scale = float(np.abs(parts - offset).max())
        return cls(offset, scale if scale > 0 else 1.0)

    def normalize(self, x: np.ndarray) -> np.ndarray:
        """Map real arrays (or complex, part-wise) into the unit range."""
        if np.iscomplexobj(x):
            return (x.real - self.offset) / self.scale + 1j * ((x.imag - self.offset) / self.scale)
        return (x - self.offset) / self.scale

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        if np.iscomplexobj(x):
            return (x.real * self.scale + self.offset) + 1j * (x.imag * self.scale + self.offset)
        return x * self.scale + self.offset


@dataclass(frozen=True, eq=False)
class Dataset:
    config: ChannelConfig
    samples: np.ndarray  # complex, (n, n_paths, n_tx, n_rx)
    split: str = "train"
    stats: NormStats = field(default_factory=NormStats)

    def __post_init__(self):
        if self.split not in ("train", "test"):
            raise ValueError(f"unknown split {self.split!r}")
        if self.samples.ndim != 4 or self.samples.shape[1:] != self.config.shape:
            raise ValueError(f"samples shape {self.samples.shape} does not match config {self.config.shape}")
        self.samples.setflags(write=False)

    def __len__(self):
        return len(self.samples)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.config.shape == other.config.shape and self.split == other.split
                and self.stats == other.stats
                and np.array_equal(self.samples, other.samples))


def synth_dataset(config: ChannelConfig, split: str = "train",
                  stats: NormStats | None = None) -> Dataset:
    """Generate the train or test split.

    ``stats`` is fitted on the train split. For a test split pass the train
    split's stats; when omitted the train split is regenerated to obtain them.
    """
    if split == "train":
        counters = range(config.n_train)
    elif split == "test":
        counters = range(TEST_COUNTER_BASE, TEST_COUNTER_BASE + config.n_test)
    else:
        raise ValueError(f"unknown split {split!r}")
    # stored at file precision so write/read round-trips bit-exactly
    samples = np.stack([synth_sample(config, sample_seed(config.master_seed, c))
                        for c in counters]).astype(np.complex64)
    if split == "train":
        stats = NormStats.fit(samples)
    elif stats is None:
        stats = synth_dataset(config, "train").stats
    return Dataset(config, samples, split, stats)


def nmse_per_sample(recovered: np.ndarray, original: np.ndarray) -> np.ndarray:
    """Per-sample ``||H' - H||^2 / ||H||^2`` over a leading batch axis."""
    recovered = np.asarray(recovered)
    original = np.asarray(original)
    if recovered.shape != original.shape:
        raise ValueError(f"shape mismatch {recovered.shape} vs {original.shape}")
    axes = tuple(range(1, original.ndim))
    den = np.sum(np.abs(original) ** 2, axis=axes)
    if np.any(den == 0):
        raise DegenerateSampleError("original sample has zero energy")
    return np.sum(np.abs(recovered - original) ** 2, axis=axes) / den


def nmse(recovered: np.ndarray, original: np.ndarray) -> float:
    """NMSE of a single pair; for a batch, the mean of per-sample ratios."""
    recovered = np.asarray(recovered)
    original = np.asarray(original)
    if original.ndim == 4:
        return float(nmse_per_sample(recovered, original).mean())
    return float(nmse_per_sample(recovered[None], original[None])[0])


_HEADER = struct.Struct("<4sIIIIIdd")
MAGIC = b"CSID"
VERSION = 1


def write_dataset(dataset: Dataset, path) -> None:
    n, nd, nt, nr = dataset.samples.shape
    header = _HEADER.pack(MAGIC, VERSION, n, nd, nt, nr, dataset.stats.offset, dataset.stats.scale)
    body = np.empty(dataset.samples.shape + (2,), dtype="<f4")
    body[..., 0] = dataset.samples.real
    body[..., 1] = dataset.samples.imag
    Path(path).write_bytes(header + body.tobytes())


def read_dataset(path, config: ChannelConfig | None = None, split: str = "train") -> Dataset:
    """Read a dataset file. Samples come back as complex64 exactly as stored."""
    buf = Path(path).read_bytes()
    if len(buf) < _HEADER.size:
        if len(buf) < 4 or buf[:4] != MAGIC:
            raise DatasetFormatError("magic", "bad magic")
        raise DatasetFormatError("header", f"truncated header ({len(buf)} bytes)")
    magic, version, n, nd, nt, nr, offset, scale = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise DatasetFormatError("magic", f"bad magic {magic!r}")
    if version != VERSION:
        raise DatasetFormatError("version", f"unsupported version {version}")
    for name, v in (("n_paths", nd), ("n_tx", nt), ("n_rx", nr)):
        if v < 1:
            raise DatasetFormatError(name, f"invalid value {v}")
    if not scale > 0:
        raise DatasetFormatError("scale", f"invalid value {scale}")
    expected = _HEADER.size + n * nd * nt * nr * 8
    if len(buf) != expected:
        raise DatasetFormatError("n_samples", f"body is {len(buf) - _HEADER.size} bytes, expected {expected - _HEADER.size}")
    body = np.frombuffer(buf, dtype="<f4", offset=_HEADER.size).reshape(n, nd, nt, nr, 2)
    samples = (body[..., 0] + 1j * body[..., 1]).astype(np.complex64)
    if config is None:
        config = ChannelConfig(n_paths=nd, n_tx=nt, n_rx=nr)
    elif config.shape != (nd, nt, nr):
        raise DatasetFormatError("n_paths", f"file shape {(nd, nt, nr)} does not match config {config.shape}")
    return Dataset(config, samples, split, NormStats(offset, scale))
