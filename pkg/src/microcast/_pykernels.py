"""Pure numpy implementations of the hot kernels.

These mirror ``_kernels.pyx`` operation for operation so that both backends
produce bit-identical floats; keep the two in lockstep when editing.
"""

from __future__ import annotations

import numpy as np


def haar_atrous(x: np.ndarray, levels: int) -> tuple[np.ndarray, np.ndarray]:
    """Causal Haar a-trous bands for each row of a 2-D float64 array.

    Returns ``(details, approx)`` with shapes ``(levels, rows, n)`` and
    ``(rows, n)``.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    rows, n = x.shape
    details = np.empty((levels, rows, n), dtype=np.float64)
    prev = x.copy()
    for j in range(levels):
        s = 1 << j
        lagged = np.empty_like(prev)
        k = min(s, n)
        lagged[:, :k] = prev[:, :1]
        lagged[:, k:] = prev[:, : n - k]
        cur = (prev + lagged) / 2.0
        details[j] = prev - cur
        prev = cur
    return details, prev


def bin_mean(
    times: np.ndarray, values: np.ndarray, start: int, step: int, ncells: int
) -> tuple[np.ndarray, np.ndarray]:
    times = np.asarray(times, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    idx = (times - start) // step
    keep = (times >= start) & (idx < ncells)
    idx = idx[keep]
    sums = np.bincount(idx, weights=values[keep], minlength=ncells)[:ncells]
    counts = np.bincount(idx, minlength=ncells)[:ncells].astype(np.int64)
    means = np.zeros(ncells, dtype=np.float64)
    np.divide(sums, counts, out=means, where=counts > 0)
    return means, counts


def fill_runs(
    values: np.ndarray, valid: np.ndarray, max_gap: int
) -> tuple[np.ndarray, np.ndarray]:
    out = np.array(values, dtype=np.float64, copy=True)
    ok = np.array(valid, dtype=bool, copy=True)
    n = out.shape[0]
    if max_gap <= 0 or n == 0:
        return out, ok
    bad = ~ok
    # run boundaries of invalid cells
    edges = np.diff(np.concatenate(([0], bad.view(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    for i0, i1 in zip(starts, stops):
        if i0 == 0 or i1 == n or i1 - i0 > max_gap:
            continue
        left, right = i0 - 1, i1
        vl, vr = out[left], out[right]
        k = np.arange(i0, i1)
        out[i0:i1] = vl + (vr - vl) * ((k - left) / (right - left))
        ok[i0:i1] = True
    return out, ok
