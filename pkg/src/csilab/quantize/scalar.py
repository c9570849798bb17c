"""Scalar quantizers: uniform mid-rise, companded (mu-law / A-law) and
adaptive (Lloyd-Max fitted on sample data).

Every scalar quantizer is a :class:`QuantizerSpec`: ``2**bits + 1`` interval
edges (the outer two give the nominal range, values beyond it fall in the end
intervals) and one reconstruction level per interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..bitstream import FrameCorruptionError

MU = 255.0
A = 87.6
KINDS = ("uniform", "mulaw", "alaw", "adaptive")


@dataclass(frozen=True, eq=False)
class QuantizerSpec:
    kind: str
    edges: np.ndarray
    levels: np.ndarray
    bits: int

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        levels = np.asarray(self.levels, dtype=float)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "levels", levels)
        if self.kind not in KINDS:
            raise ValueError(f"unknown quantizer kind {self.kind!r}")
        if len(levels) != 2 ** self.bits or len(edges) != len(levels) + 1:
            raise ValueError(f"{self.bits}-bit quantizer needs {2 ** self.bits} levels and "
                             f"{2 ** self.bits + 1} edges, got {len(levels)} and {len(edges)}")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("edges must be strictly increasing")
        if np.any(levels < edges[:-1]) or np.any(levels > edges[1:]):
            raise ValueError("each level must lie inside its interval")

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def thresholds(self) -> np.ndarray:
        """Interior decision boundaries."""
        return self.edges[1:-1]

    def __eq__(self, other):
        return (isinstance(other, QuantizerSpec) and self.kind == other.kind
                and self.bits == other.bits and np.array_equal(self.edges, other.edges)
                and np.array_equal(self.levels, other.levels))


def hard_quant(x, bits: int):
    """Mid-rise index on [0, 1]: ``floor(clamp(x, 0, 1 - eps) * 2**bits)``."""
    if not 1 <= bits <= 16:
        raise ValueError(f"bits must be in [1, 16], got {bits}")
    n = 2 ** bits
    idx = np.floor(np.asarray(x, dtype=float) * n)
    return np.clip(idx, 0, n - 1).astype(np.int64)


def hard_dequant(index, bits: int):
    if not 1 <= bits <= 16:
        raise ValueError(f"bits must be in [1, 16], got {bits}")
    return (np.asarray(index, dtype=float) + 0.5) / 2 ** bits


def uniform_spec(bits: int, lo: float = 0.0, hi: float = 1.0) -> QuantizerSpec:
    n = 2 ** bits
    edges = lo + (hi - lo) * np.arange(n + 1) / n
    return QuantizerSpec("uniform", edges, (edges[:-1] + edges[1:]) / 2, bits)


def compand(x, law: str = "mu", direction: str = "fwd"):
    """Telephony companding curves on [-1, 1] (mu = 255, A = 87.6).

    ``fwd`` compresses, ``inv`` expands.
    """
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1):
        raise ValueError("companding input must satisfy |x| <= 1")
    s, ax = np.sign(x), np.abs(x)
    if law == "mu":
        if direction == "fwd":
            return s * np.log1p(MU * ax) / np.log1p(MU)
        if direction == "inv":
            return s * np.expm1(ax * np.log1p(MU)) / MU
    elif law == "a":
        k = 1 + np.log(A)
        if direction == "fwd":
            small = ax < 1 / A
            y = np.where(small, A * ax / k, (1 + np.log(np.maximum(A * ax, 1.0))) / k)
            return s * y
        if direction == "inv":
            small = ax < 1 / k
            y = np.where(small, ax * k / A, np.exp(ax * k - 1) / A)
            return s * y
    else:
        raise ValueError(f"unknown law {law!r}")
    raise ValueError(f"direction must be 'fwd' or 'inv', got {direction!r}")


def companded_spec(bits: int, law: str = "mu") -> QuantizerSpec:
    """Uniform quantizer in the companded domain, mapped back to [0, 1].

    Features ``x`` in [0, 1] are centred as ``u = 2x - 1``; resolution is
    finest around ``x = 0.5``.
    """
    n = 2 ** bits
    grid = -1 + 2 * np.arange(n + 1) / n
    edges = (compand(grid, law, "inv") + 1) / 2
    mids = (compand((grid[:-1] + grid[1:]) / 2, law, "inv") + 1) / 2
    edges[0], edges[-1] = 0.0, 1.0
    return QuantizerSpec("mulaw" if law == "mu" else "alaw", edges, mids, bits)


def quantize_with_spec(x, spec: QuantizerSpec):
    """Interval index of each value (binary search over the thresholds)."""
    return np.searchsorted(spec.thresholds, np.asarray(x, dtype=float), side="right")


def dequantize_with_spec(indices, spec: QuantizerSpec):
    indices = np.asarray(indices)
    if indices.size and (indices.min() < 0 or indices.max() >= spec.n_levels):
        raise FrameCorruptionError(f"quantization index outside 0..{spec.n_levels - 1}")
    return spec.levels[indices]


@dataclass
class LloydMaxResult:
    spec: QuantizerSpec
    # distortion after every half-step: [init, levels->boundaries, boundaries->levels, ...]
    history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    repairs: int = 0


class _SortedSamples:
    """Sorted samples with prefix sums for fast interval means."""

    def __init__(self, samples):
        self.x = np.sort(np.asarray(samples, dtype=float).ravel())
        self.c1 = np.concatenate([[0.0], np.cumsum(self.x)])

    def split(self, thresholds):
        # sample index where each interval starts; ties at a threshold go right
        return np.concatenate([[0], np.searchsorted(self.x, thresholds, side="left"), [len(self.x)]])

    def distortion(self, thresholds, levels) -> float:
        cnt = np.diff(self.split(thresholds))
        r = self.x - np.repeat(levels, cnt)
        return float(np.dot(r, r) / len(self.x))

    def centroids(self, thresholds, levels):
        b = self.split(thresholds)
        cnt = np.diff(b)
        s1 = np.diff(self.c1[b])
        out = levels.copy()
        nz = cnt > 0
        out[nz] = s1[nz] / cnt[nz]
        return out, cnt


def _exact_distortion(samples, thresholds, levels) -> float:
    idx = np.searchsorted(thresholds, samples, side="right")
    return float(np.mean((samples - levels[idx]) ** 2))


def lloyd_max_fit(samples, bits: int, max_iters: int = 100, tol: float = 1e-6) -> LloydMaxResult:
    """Alternating optimization of decision boundaries and reconstruction levels.

    Starts from the uniform quantizer over the empirical range. Each iteration
    freezes the levels and moves every boundary to the midpoint of its two
    neighbouring levels, then freezes the boundaries and moves every level to
    the mean of the samples in its interval. Stops when the relative
    distortion improvement of an iteration drops below ``tol`` or after
    ``max_iters``. A level whose interval is empty is moved to the midpoint of
    the most populated interval.
    """
    data = np.asarray(samples, dtype=float).ravel()
    n_levels = 2 ** bits
    if len(np.unique(data)) < n_levels:
        raise ValueError(f"need at least {n_levels} distinct samples for a {bits}-bit quantizer")
    ss = _SortedSamples(data)
    lo, hi = ss.x[0], ss.x[-1]
    edges = lo + (hi - lo) * np.arange(n_levels + 1) / n_levels
    levels = (edges[:-1] + edges[1:]) / 2
    thresholds = edges[1:-1].copy()
    result = LloydMaxResult(None)
    d = ss.distortion(thresholds, levels)
    result.history.append(d)
    prev = d
    for it in range(1, max_iters + 1):
        thresholds = (levels[:-1] + levels[1:]) / 2
        result.history.append(ss.distortion(thresholds, levels))
        levels, cnt = ss.centroids(thresholds, levels)
        while np.any(cnt == 0):
            empty = int(np.flatnonzero(cnt == 0)[0])
            busiest = int(np.argmax(cnt))
            ext = np.concatenate([[lo], thresholds, [hi]])
            levels[empty] = (ext[busiest] + ext[busiest + 1]) / 2
            levels = np.sort(levels)
            thresholds = (levels[:-1] + levels[1:]) / 2
            levels, cnt = ss.centroids(thresholds, levels)
            result.repairs += 1
            if result.repairs > 10 * n_levels:
                break
        d = ss.distortion(thresholds, levels)
        result.history.append(d)
        result.iterations = it
        if prev - d <= tol * max(prev, np.finfo(float).tiny):
            result.converged = True
            break
        prev = d
    edges = np.concatenate([[min(lo, levels[0])], thresholds, [max(hi, levels[-1])]])
    if edges[0] == edges[1]:
        edges[0] -= 1e-12 * max(1.0, abs(edges[0]))
    if edges[-1] == edges[-2]:
        edges[-1] += 1e-12 * max(1.0, abs(edges[-1]))
    result.spec = QuantizerSpec("adaptive", edges, levels, bits)
    return result


def spec_distortion(samples, spec: QuantizerSpec) -> float:
    samples = np.asarray(samples, dtype=float).ravel()
    return _exact_distortion(samples, spec.thresholds, spec.levels)
