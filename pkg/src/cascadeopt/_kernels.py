"""Cascade-walk kernels with a numba path and a pure-numpy path.

Set ``CASCADEOPT_NO_NUMBA=1`` to force the numpy implementation. Both paths
return integer counts only, so their outputs are bit-identical.

``margins``   (M-1, n) float64 score margins of stages 1..M-1
``losses``    (M, n)   int64 0-1 losses of stages 1..M
``thetas``    (P, M-1) float64 threshold vectors
returns
``reach``     (P, M) int64, images that evaluate each stage
``loss_sum``  (P,)   int64, misclassified images at their exit stage
"""

from __future__ import annotations

import os

import numpy as np

_CHUNK = 1 << 22  # max P*(M-1)*n booleans materialized by the numpy path


def walk_counts_numpy(margins, losses, thetas):
    M, n = losses.shape
    P = thetas.shape[0]
    reach = np.zeros((P, M), dtype=np.int64)
    loss_sum = np.zeros(P, dtype=np.int64)
    if M == 1:
        reach[:, 0] = n
        loss_sum[:] = losses[0].sum()
        return reach, loss_sum
    step = max(1, _CHUNK // max(1, (M - 1) * n))
    for start in range(0, P, step):
        th = thetas[start : start + step]
        cont = margins[None, :, :] < th[:, :, None]
        alive = np.cumprod(cont, axis=1, dtype=np.int8)
        reach[start : start + step, 0] = n
        reach[start : start + step, 1:] = alive.sum(axis=2)
        exit_stage = alive.sum(axis=1, dtype=np.int64)  # (p, n)
        picked = losses[exit_stage, np.arange(n)]
        loss_sum[start : start + step] = picked.sum(axis=1)
    return reach, loss_sum


def _walk_counts_loops(margins, losses, thetas):
    M = losses.shape[0]
    n = losses.shape[1]
    P = thetas.shape[0]
    reach = np.zeros((P, M), dtype=np.int64)
    loss_sum = np.zeros(P, dtype=np.int64)
    for p in range(P):
        for x in range(n):
            stage = M - 1
            for i in range(M - 1):
                if margins[i, x] >= thetas[p, i]:
                    stage = i
                    break
            for i in range(stage + 1):
                reach[p, i] += 1
            loss_sum[p] += losses[stage, x]
    return reach, loss_sum


def _load_numba():
    if os.environ.get("CASCADEOPT_NO_NUMBA", "").strip() not in ("", "0"):
        return None
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is optional
        return None
    return numba.njit(cache=True, nogil=True)(_walk_counts_loops)


walk_counts_numba = _load_numba()
USING_NUMBA = walk_counts_numba is not None


def walk_counts(margins: np.ndarray, losses: np.ndarray, thetas: np.ndarray):
    margins = np.ascontiguousarray(margins, dtype=np.float64)
    losses = np.ascontiguousarray(losses, dtype=np.int64)
    thetas = np.ascontiguousarray(thetas, dtype=np.float64)
    if margins.shape[0] == 0:
        margins = np.zeros((0, losses.shape[1]))
    if USING_NUMBA:
        return walk_counts_numba(margins, losses, thetas)
    return walk_counts_numpy(margins, losses, thetas)
