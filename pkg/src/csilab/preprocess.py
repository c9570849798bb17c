"""Channel preprocessing: path energy, path cutting, DFT domains, feature maps
and antenna-dimension augmentation.

Single-sample functions take a complex tensor ``(n_paths, n_tx, n_rx)``; most
also accept a leading batch axis. :class:`Preprocessor` chains the steps for
a whole batch and provides the exact inverse (and its adjoint, used to
backpropagate a channel-space loss into network outputs).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import DegenerateSampleError, NormStats

FEATURE_MODES = ("reim2", "ampphase2", "reimphaseenergy4")
DOMAINS = ("delay", "angular", "frequency")


@dataclass(frozen=True)
class TopK:
    k: int


@dataclass(frozen=True)
class CumEnergy:
    tau: float


@dataclass(frozen=True)
class PathMask:
    retained: np.ndarray  # bool, (n_paths,)

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.retained))

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.retained)

    def __eq__(self, other):
        return isinstance(other, PathMask) and np.array_equal(self.retained, other.retained)

    @classmethod
    def full(cls, n_paths: int) -> "PathMask":
        return cls(np.ones(n_paths, dtype=bool))


@dataclass(frozen=True)
class FeatureTensor:
    mode: str
    data: np.ndarray  # real, (..., paths, antenna pairs, channels)


def path_energy(H: np.ndarray, normalized: bool = True) -> np.ndarray:
    """Energy per path, ``sum_ij |h_ijd|^2``, optionally normalized to sum 1."""
    H = np.asarray(H)
    e = np.sum(H.real ** 2 + H.imag ** 2, axis=(-2, -1))
    if not normalized:
        return e
    total = e.sum(axis=-1, keepdims=True)
    if np.any(total == 0):
        raise DegenerateSampleError("all-zero channel sample")
    return e / total


def select_paths(energy: np.ndarray, rule) -> np.ndarray:
    """Boolean retained-path mask for one energy vector."""
    n = len(energy)
    # stable sort on -energy: equal energies keep the smaller index first
    order = np.argsort(-energy, kind="stable")
    if isinstance(rule, TopK):
        if not 1 <= rule.k <= n:
            raise ValueError(f"TopK needs 1 <= k <= {n}, got {rule.k}")
        k = rule.k
    elif isinstance(rule, CumEnergy):
        if not 0 < rule.tau <= 1:
            raise ValueError(f"CumEnergy needs 0 < tau <= 1, got {rule.tau}")
        cum = np.cumsum(energy[order]) / energy.sum()
        # guard against cum[-1] landing a hair below 1
        k = min(int(np.searchsorted(cum, rule.tau - 1e-12)) + 1, n)
    else:
        raise TypeError(f"unknown path rule {rule!r}")
    mask = np.zeros(n, dtype=bool)
    mask[order[:k]] = True
    return mask


def path_cut(H: np.ndarray, rule) -> tuple[np.ndarray, PathMask]:
    """Keep the strongest paths of one sample, in their original order."""
    mask = select_paths(path_energy(H), rule)
    return H[mask], PathMask(mask)


def path_restore(H_cut: np.ndarray, mask: PathMask) -> np.ndarray:
    if H_cut.shape[0] != mask.count:
        raise ValueError(f"{H_cut.shape[0]} paths given but mask retains {mask.count}")
    out = np.zeros((len(mask.retained),) + H_cut.shape[1:], dtype=H_cut.dtype)
    out[mask.retained] = H_cut
    return out


def dft_angular(H: np.ndarray, direction: str = "fwd") -> np.ndarray:
    """Unitary 2D DFT over the (tx, rx) antenna axes."""
    if direction == "fwd":
        return np.fft.fft2(H, axes=(-2, -1), norm="ortho")
    if direction == "inv":
        return np.fft.ifft2(H, axes=(-2, -1), norm="ortho")
    raise ValueError(f"direction must be 'fwd' or 'inv', got {direction!r}")


def dft_frequency(H: np.ndarray, direction: str = "fwd", n_bins: int = 48,
                  n_paths: int | None = None) -> np.ndarray:
    """Delay taps to frequency bins along the path axis (axis -3).

    ``fwd`` zero-pads the taps to ``n_bins`` and applies a unitary DFT.
    ``inv`` applies the inverse DFT and keeps the first ``n_paths`` taps.
    """
    if direction == "fwd":
        if H.shape[-3] > n_bins:
            raise ValueError(f"{H.shape[-3]} taps do not fit in {n_bins} bins")
        return np.fft.fft(H, n=n_bins, axis=-3, norm="ortho")
    if direction == "inv":
        if n_paths is None:
            raise ValueError("inverse frequency transform needs n_paths")
        taps = np.fft.ifft(H, axis=-3, norm="ortho")
        return taps[..., :n_paths, :, :]
    raise ValueError(f"direction must be 'fwd' or 'inv', got {direction!r}")


def _phase(z: np.ndarray) -> np.ndarray:
    # principal value in (-pi, pi]; angle(0) is already 0, angle(-1-0j) is -pi
    ph = np.angle(z)
    return np.where(ph == -np.pi, np.pi, ph)


def to_feature_maps(H: np.ndarray, mode: str = "reim2") -> FeatureTensor:
    """Stack real feature channels along a new last axis.

    Output shape is ``(..., paths, n_tx * n_rx, channels)``.
    """
    z = H.reshape(H.shape[:-2] + (-1,))
    if mode == "reim2":
        chans = (z.real, z.imag)
    elif mode == "ampphase2":
        chans = (np.abs(z), _phase(z))
    elif mode == "reimphaseenergy4":
        chans = (z.real, z.imag, _phase(z), z.real ** 2 + z.imag ** 2)
    else:
        raise ValueError(f"unknown feature mode {mode!r}")
    return FeatureTensor(mode, np.stack(chans, axis=-1))


def from_feature_maps(F: FeatureTensor, n_tx: int = 4, n_rx: int = 4) -> np.ndarray:
    d = F.data
    if F.mode in ("reim2", "reimphaseenergy4"):
        z = d[..., 0] + 1j * d[..., 1]
    elif F.mode == "ampphase2":
        z = d[..., 0] * np.exp(1j * d[..., 1])
    else:
        raise ValueError(f"unknown feature mode {F.mode!r}")
    return z.reshape(z.shape[:-1] + (n_tx, n_rx))


@dataclass(frozen=True)
class AugmentFlags:
    flip_tx: bool = False
    flip_rx: bool = False
    translate_tx: bool = False
    translate_rx: bool = False


def augment(sample: np.ndarray, rng_seed, flags: AugmentFlags, p: float = 0.5) -> np.ndarray:
    """Randomly reverse or cyclically shift the antenna axes of one sample.

    Each enabled flag fires independently with probability ``p``; a shift
    amount is drawn uniformly from ``1..n-1``.
    """
    if not 0 <= p <= 1:
        raise ValueError(f"p must be in [0, 1], got {p}")
    rng = np.random.default_rng(rng_seed)
    out = sample
    for axis, flip, shift in ((-2, flags.flip_tx, flags.translate_tx),
                              (-1, flags.flip_rx, flags.translate_rx)):
        if flip and rng.random() < p:
            out = np.flip(out, axis=axis)
        if shift and rng.random() < p:
            n = out.shape[axis]
            if n > 1:
                out = np.roll(out, int(rng.integers(1, n)), axis=axis)
    return np.ascontiguousarray(out)


@dataclass(frozen=True)
class PreprocessConfig:
    path_rule: str = "none"  # none | topk
    k: int = 24
    domain: str = "delay"
    feature_mode: str = "reim2"
    n_bins: int = 48
    augment: AugmentFlags = field(default_factory=AugmentFlags)
    augment_p: float = 0.5

    def __post_init__(self):
        if self.path_rule not in ("none", "topk"):
            raise ValueError(f"unknown path rule {self.path_rule!r}")
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.feature_mode not in FEATURE_MODES:
            raise ValueError(f"unknown feature mode {self.feature_mode!r}")
        if self.domain == "frequency" and self.path_rule != "none":
            raise ValueError("frequency domain mixes all taps; it cannot follow path cutting")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["augment"] = dict(self.augment.__dict__)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessConfig":
        d = dict(d)
        d["augment"] = AugmentFlags(**d.get("augment", {}))
        return cls(**d)


class Preprocessor:
    """Batch preprocessing chain and its inverse.

    Forward: path cut (delay domain) -> domain transform -> normalization ->
    feature maps, flattened per path. The inverse maps network outputs in the
    ``reim2`` layout back to full complex channels with discarded paths
    zero-filled.
    """

    def __init__(self, config: PreprocessConfig, n_paths: int = 24, n_tx: int = 4,
                 n_rx: int = 4, stats: NormStats | None = None):
        self.config = config
        self.n_paths, self.n_tx, self.n_rx = n_paths, n_tx, n_rx
        if config.path_rule == "topk" and not 1 <= config.k <= n_paths:
            raise ValueError(f"k={config.k} outside 1..{n_paths}")
        if config.domain == "frequency" and config.n_bins < n_paths:
            raise ValueError(f"n_bins={config.n_bins} < n_paths={n_paths}")
        self.stats = stats or NormStats()

    @property
    def n_slots(self) -> int:
        """Number of path (or frequency-bin) rows fed to the network."""
        if self.config.domain == "frequency":
            return self.config.n_bins
        return self.config.k if self.config.path_rule == "topk" else self.n_paths

    @property
    def n_channels(self) -> int:
        return 4 if self.config.feature_mode == "reimphaseenergy4" else 2

    @property
    def input_width(self) -> int:
        """Network input width per slot."""
        return self.n_tx * self.n_rx * self.n_channels

    @property
    def output_width(self) -> int:
        return self.n_tx * self.n_rx * 2

    def masks(self, H: np.ndarray) -> np.ndarray:
        if self.config.path_rule == "none":
            return np.ones(H.shape[:2], dtype=bool)
        e = path_energy(H, normalized=False)
        return np.stack([select_paths(row, TopK(self.config.k)) for row in e])

    def _cut_transform(self, H: np.ndarray, masks: np.ndarray) -> np.ndarray:
        n = len(H)
        Hc = H[masks].reshape(n, -1, self.n_tx, self.n_rx)
        if self.config.domain == "angular":
            Hc = dft_angular(Hc, "fwd")
        elif self.config.domain == "frequency":
            Hc = dft_frequency(Hc, "fwd", self.config.n_bins)
        return Hc

    def fit(self, H: np.ndarray) -> "Preprocessor":
        """Fit normalization on a training batch (after cut and transform)."""
        H = np.asarray(H, dtype=np.complex128)
        self.stats = NormStats.fit(self._cut_transform(H, self.masks(H)))
        return self

    def forward(self, H: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(net_input, target, masks)``.

        ``net_input`` is ``(n, n_slots, input_width)``; ``target`` is the
        normalized ``reim2`` representation the decoder should reproduce.
        """
        H = np.asarray(H, dtype=np.complex128)
        masks = self.masks(H)
        Z = self.stats.normalize(self._cut_transform(H, masks))
        n, s = Z.shape[:2]
        x = to_feature_maps(Z, self.config.feature_mode).data.reshape(n, s, -1)
        if self.config.feature_mode == "reim2":
            target = x
        else:
            target = to_feature_maps(Z, "reim2").data.reshape(n, s, -1)
        return x, target, masks

    def inverse(self, y: np.ndarray, masks: np.ndarray) -> np.ndarray:
        n, s = y.shape[:2]
        y = y.reshape(n, s, self.n_tx * self.n_rx, 2)
        Z = self.stats.denormalize(y[..., 0] + 1j * y[..., 1]).reshape(n, s, self.n_tx, self.n_rx)
        if self.config.domain == "angular":
            Z = dft_angular(Z, "inv")
        elif self.config.domain == "frequency":
            Z = dft_frequency(Z, "inv", n_paths=self.n_paths)
        out = np.zeros((n, self.n_paths, self.n_tx, self.n_rx), dtype=np.complex128)
        out[masks] = Z.reshape(-1, self.n_tx, self.n_rx)
        return out

    def inverse_adjoint(self, G: np.ndarray, masks: np.ndarray) -> np.ndarray:
        """Pull a channel-space gradient (``dL/dRe + 1j dL/dIm``) back to ``y``."""
        n = len(G)
        Z = G[masks].reshape(n, -1, self.n_tx, self.n_rx)
        if self.config.domain == "angular":
            Z = dft_angular(Z, "fwd")
        elif self.config.domain == "frequency":
            Z = dft_frequency(Z, "fwd", self.config.n_bins)
        Z = Z.reshape(n, Z.shape[1], -1) * self.stats.scale
        return np.stack([Z.real, Z.imag], axis=-1).reshape(n, Z.shape[1], -1)
