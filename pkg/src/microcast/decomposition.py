"""Causal multi-scale decomposition (Haar a-trous, undecimated).

Level ``j`` averages the previous approximation with itself lagged by
``2**(j-1)`` samples::

    a_0(t) = x(t)
    a_j(t) = (a_{j-1}(t) + a_{j-1}(t - 2**(j-1))) / 2
    d_j(t) = a_{j-1}(t) - a_j(t)

Lags before the first sample read the first sample. Only past samples are
touched, so band values at ``t`` never depend on ``x`` after ``t``; the
details telescope, giving ``x = a_L + sum_j d_j`` exactly up to rounding.
The first ``2**L - 1`` samples see the boundary replication (``warmup``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from microcast import _core
from microcast.errors import CorruptStackError, InvalidArgumentError


def warmup_length(levels: int) -> int:
    return (1 << levels) - 1


@dataclass(frozen=True, eq=False)
class ScaleStack:
    levels: int
    details: tuple[np.ndarray, ...]
    approx: np.ndarray
    warmup: int
    source_len: int

    def bands(self) -> np.ndarray:
        """All bands stacked as ``(levels + 1, n)``: d_1 .. d_L, a_L."""
        return np.vstack([*self.details, self.approx])


def decompose_causal(x, levels: int) -> ScaleStack:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidArgumentError("decompose_causal expects a 1-D array")
    if levels < 1:
        raise InvalidArgumentError("levels must be >= 1")
    if x.shape[0] < (1 << levels):
        raise InvalidArgumentError(f"series of length {x.shape[0]} is shorter than 2**{levels}")
    details, approx = _core.haar_atrous(x[None, :], levels)
    return ScaleStack(
        levels=levels,
        details=tuple(details[j, 0] for j in range(levels)),
        approx=approx[0],
        warmup=warmup_length(levels),
        source_len=x.shape[0],
    )


def decompose_batch(blocks: np.ndarray, levels: int) -> np.ndarray:
    """Decompose every row of ``blocks`` (..., n) independently.

    Returns an array of shape ``(..., levels + 1, n)`` with bands ordered
    d_1 .. d_L, a_L.
    """
    blocks = np.asarray(blocks, dtype=np.float64)
    if levels < 1:
        raise InvalidArgumentError("levels must be >= 1")
    lead, n = blocks.shape[:-1], blocks.shape[-1]
    flat = blocks.reshape(-1, n)
    details, approx = _core.haar_atrous(flat, levels)
    bands = np.concatenate([details, approx[None]], axis=0)  # (L+1, rows, n)
    return np.moveaxis(bands, 0, 1).reshape(*lead, levels + 1, n)


def reconstruct(stack: ScaleStack) -> np.ndarray:
    if len(stack.details) != stack.levels:
        raise CorruptStackError(f"expected {stack.levels} detail bands, found {len(stack.details)}")
    n = stack.source_len
    for j, d in enumerate(stack.details, start=1):
        if np.shape(d) != (n,):
            raise CorruptStackError(f"detail band d_{j} has shape {np.shape(d)}, expected ({n},)")
    if np.shape(stack.approx) != (n,):
        raise CorruptStackError(f"approximation band has shape {np.shape(stack.approx)}, expected ({n},)")
    out = np.array(stack.approx, dtype=np.float64, copy=True)
    for d in stack.details:
        out += d
    return out
