"""Greedy bit allocation across paths from measured distortion tables."""

from __future__ import annotations

import numpy as np

from .scalar import lloyd_max_fit


def allocate_path_bits(tables, budget: int) -> np.ndarray:
    """Spend ``budget`` bits one at a time on the path whose distortion drops most.

    ``tables[p][b]`` is the distortion of path ``p`` quantized with ``b`` bits,
    for ``b = 0 .. B_max``. Ties go to the lowest path index. Stops early only
    when every path is already at ``B_max``. Optimal whenever each path's
    marginal gains are nonincreasing in ``b``.
    """
    if budget < 0:
        raise ValueError(f"budget must be >= 0, got {budget}")
    tables = np.asarray(tables, dtype=float)
    if tables.ndim != 2 or tables.shape[1] < 1:
        raise ValueError("tables must have shape (paths, B_max + 1)")
    n, b_max = tables.shape[0], tables.shape[1] - 1
    bits = np.zeros(n, dtype=np.int64)
    rows = np.arange(n)
    for _ in range(budget):
        room = bits < b_max
        if not room.any():
            break
        nxt = np.minimum(bits + 1, b_max)
        gain = np.where(room, tables[rows, bits] - tables[rows, nxt], -np.inf)
        bits[int(np.argmax(gain))] += 1
    return bits


def distortion_table(samples, b_max: int) -> np.ndarray:
    """Measured Lloyd-Max distortion of ``samples`` at ``0 .. b_max`` bits.

    Zero bits means every value is replaced by the sample mean. Entries are
    forced nonincreasing (a finer quantizer can always mimic a coarser one).
    """
    samples = np.asarray(samples, dtype=float).ravel()
    table = [float(np.var(samples))]
    n_distinct = len(np.unique(samples))
    for b in range(1, b_max + 1):
        if n_distinct < 2 ** b:
            table.append(0.0)
            continue
        fit = lloyd_max_fit(samples, b)
        table.append(fit.history[-1])
    return np.minimum.accumulate(np.array(table))
