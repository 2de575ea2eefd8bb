"""Numba-jitted implementations of the numeric inner loops.

Same contracts as ``_numpy``; the jitted bodies are explicit loops, which is
what numba compiles well. Kernel weight construction stays in numpy (it is a
handful of elements).
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ._numpy import gaussian_weights


@njit(cache=True)
def _smooth(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    n = values.shape[0]
    z = (weights.shape[0] - 1) // 2
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        acc = 0.0
        for j in range(-z, z + 1):
            k = i + j
            if k < 0:
                k = 0
            elif k >= n:
                k = n - 1
            acc += values[k] * weights[j + z]
        out[i] = acc
    return out


@njit(cache=True)
def _window_entropies(
    scores: np.ndarray,
    starts: np.ndarray,
    lengths: np.ndarray,
    n_bins: int,
    per_bin: bool,
) -> np.ndarray:
    out = np.empty(starts.shape[0], dtype=np.float64)
    counts = np.empty(n_bins, dtype=np.int64)
    for w in range(starts.shape[0]):
        start = starts[w]
        length = lengths[w]
        lo = scores[start]
        hi = scores[start]
        for i in range(start + 1, start + length):
            v = scores[i]
            if v < lo:
                lo = v
            elif v > hi:
                hi = v
        if hi == lo:
            out[w] = 0.0
            continue
        interval = (hi - lo) / n_bins
        counts[:] = 0
        for i in range(start, start + length):
            idx = int((scores[i] - lo) / interval)
            if idx >= n_bins:
                idx = n_bins - 1
            counts[idx] += 1
        h = 0.0
        if per_bin:
            for b in range(n_bins):
                if counts[b] > 0:
                    p = counts[b] / length
                    h -= p * np.log2(p)
        else:
            for i in range(start, start + length):
                idx = int((scores[i] - lo) / interval)
                if idx >= n_bins:
                    idx = n_bins - 1
                p = counts[idx] / length
                h -= p * np.log2(p)
        out[w] = h
    return out


@njit(cache=True)
def _rank_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    n = scores.shape[0]
    order = np.argsort(scores)
    ranks = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    n_pos = 0
    rank_sum_pos = 0.0
    for i in range(n):
        if labels[i] == 1:
            n_pos += 1
            rank_sum_pos += ranks[i]
    n_neg = n - n_pos
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def gaussian_smooth(values: np.ndarray, sigma: float) -> np.ndarray:
    values = np.ascontiguousarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("values must be a non-empty 1-D array")
    return _smooth(values, gaussian_weights(sigma))


def window_entropies(
    scores: np.ndarray,
    starts: np.ndarray,
    lengths: np.ndarray,
    n_bins: int,
    per_bin: bool = False,
) -> np.ndarray:
    return _window_entropies(
        np.ascontiguousarray(scores, dtype=np.float64),
        np.ascontiguousarray(starts, dtype=np.int64),
        np.ascontiguousarray(lengths, dtype=np.int64),
        n_bins,
        per_bin,
    )


def rank_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    return _rank_auc(
        np.ascontiguousarray(scores, dtype=np.float64),
        np.ascontiguousarray(labels, dtype=np.int64),
    )
