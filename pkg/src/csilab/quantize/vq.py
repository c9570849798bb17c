"""Vector quantization of feature sub-vectors with a k-means codebook."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..bitstream import FrameCorruptionError


@dataclass(eq=False)
class Codebook:
    sub_dim: int
    codewords: np.ndarray  # (2**bits, sub_dim)
    history: list = field(default_factory=list)

    @property
    def bits(self) -> int:
        return int(len(self.codewords)).bit_length() - 1

    def __post_init__(self):
        self.codewords = np.asarray(self.codewords, dtype=float)
        n = len(self.codewords)
        if n < 1 or n & (n - 1):
            raise ValueError(f"codeword count {n} is not a power of two")
        if self.codewords.shape[1] != self.sub_dim:
            raise ValueError("codeword length does not match sub_dim")


def _split(features, v):
    features = np.asarray(features, dtype=float)
    if features.shape[-1] % v:
        raise ValueError(f"feature length {features.shape[-1]} not divisible by sub_dim {v}")
    return features.reshape(-1, v)


def nearest(x, codewords):
    """Index of the nearest codeword per row (ties go to the lowest index)."""
    out = np.empty(len(x), dtype=np.int64)
    step = max(1, 2 ** 21 // codewords.size)
    for s in range(0, len(x), step):
        diff = x[s:s + step, None, :] - codewords[None, :, :]
        out[s:s + step] = np.argmin(np.einsum("ijk,ijk->ij", diff, diff), axis=1)
    return out


def _distortion(x, codewords, assign):
    r = x - codewords[assign]
    return float(np.einsum("ij,ij->", r, r) / len(x))


def vq_fit(features, sub_dim: int, bits: int, seed: int = 0, tol: float = 1e-9,
           max_iters: int = 200) -> Codebook:
    """k-means codebook over all length-``sub_dim`` sub-vectors of ``features``.

    Seeding: one random sub-vector, then repeatedly the sub-vector farthest
    from the current codewords. Lloyd iterations stop when the relative
    distortion improvement drops below ``tol``. An empty cluster is re-seeded
    with the sub-vector currently farthest from its codeword. Distortion is
    the mean squared error per sub-vector.
    """
    x = _split(features, sub_dim)
    k = 2 ** bits
    if len(x) < k:
        raise ValueError(f"need at least {k} sub-vectors, got {len(x)}")
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(len(x)))]
    dmin = ((x - x[chosen[0]]) ** 2).sum(1)
    for _ in range(1, k):
        i = int(np.argmax(dmin))
        chosen.append(i)
        dmin = np.minimum(dmin, ((x - x[i]) ** 2).sum(1))
    codewords = x[chosen].copy()

    history = []
    assign = nearest(x, codewords)
    history.append(_distortion(x, codewords, assign))
    for _ in range(max_iters):
        prev_codewords, prev_assign = codewords.copy(), assign
        counts = np.bincount(assign, minlength=k)
        sums = np.zeros_like(codewords)
        np.add.at(sums, assign, x)
        nz = counts > 0
        codewords[nz] = sums[nz] / counts[nz, None]
        for j in np.flatnonzero(~nz):
            err = ((x - codewords[assign]) ** 2).sum(1)
            far = int(np.argmax(err))
            codewords[j] = x[far]
            assign[far] = j
        assign = nearest(x, codewords)
        d = _distortion(x, codewords, assign)
        prev = history[-1]
        if d > prev:
            # rounding-level uptick at convergence; keep the better codebook
            codewords, assign = prev_codewords, prev_assign
            break
        history.append(d)
        if prev - d <= tol * prev:
            break
    return Codebook(sub_dim, codewords, history)


def vq_encode(features, codebook: Codebook):
    """Codeword index per sub-vector, shape ``(batch, n_sub)`` (or ``(n_sub,)``)."""
    features = np.asarray(features, dtype=float)
    idx = nearest(_split(features, codebook.sub_dim), codebook.codewords)
    return idx.reshape(features.shape[:-1] + (-1,))


def vq_decode(indices, codebook: Codebook):
    indices = np.asarray(indices)
    if indices.size and (indices.min() < 0 or indices.max() >= len(codebook.codewords)):
        raise FrameCorruptionError(f"codeword index outside 0..{len(codebook.codewords) - 1}")
    out = codebook.codewords[indices]
    return out.reshape(indices.shape[:-1] + (-1,)) if indices.ndim else out


def vq_bits(feature_len: int, codebook: Codebook) -> int:
    return feature_len // codebook.sub_dim * codebook.bits
