"""Pure-numpy implementations of the numeric inner loops.

These are the fallback path used when numba is unavailable or disabled via
``SLOWFAST_DISABLE_NUMBA``; the jitted twins in ``_numba`` must produce the
same values to float precision.
"""

from __future__ import annotations

import numpy as np


def gaussian_weights(sigma: float) -> np.ndarray:
    """Discrete Gaussian kernel over offsets -Z..Z with Z = ceil(3*sigma).

    Weights are renormalized to sum to exactly 1 so constant sequences are
    fixed points of the smoothing.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    z = int(np.ceil(3.0 * sigma))
    offsets = np.arange(-z, z + 1, dtype=np.float64)
    w = np.exp(-(offsets**2) / (2.0 * sigma * sigma)) / np.sqrt(2.0 * np.pi * sigma * sigma)
    return w / w.sum()


def gaussian_smooth(values: np.ndarray, sigma: float) -> np.ndarray:
    """Smooth a 1-D sequence with a renormalized Gaussian, replicate-padded."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("values must be a non-empty 1-D array")
    w = gaussian_weights(sigma)
    z = (w.size - 1) // 2
    padded = np.pad(values, z, mode="edge")
    # Kernel is symmetric, so convolution orientation does not matter.
    return np.convolve(padded, w, mode="valid")


def window_entropies(
    scores: np.ndarray,
    starts: np.ndarray,
    lengths: np.ndarray,
    n_bins: int,
    per_bin: bool = False,
) -> np.ndarray:
    """Histogram entropy (bits) for each window of ``scores``.

    The histogram spans [min, max] of the window with ``n_bins`` equal bins,
    the last bin closed. By default each sample contributes its own bin's
    frequency to the sum (the per-sample form); ``per_bin`` switches to the
    per-bin Shannon sum. A constant window has entropy 0.
    """
    scores = np.asarray(scores, dtype=np.float64)
    out = np.empty(len(starts), dtype=np.float64)
    for w, (start, length) in enumerate(zip(starts, lengths)):
        x = scores[start : start + length]
        lo = x.min()
        hi = x.max()
        if hi == lo:
            out[w] = 0.0
            continue
        interval = (hi - lo) / n_bins
        idx = np.minimum((x - lo) / interval, n_bins - 1).astype(np.int64)
        counts = np.bincount(idx, minlength=n_bins)
        p = counts / length
        if per_bin:
            nz = p[p > 0]
            out[w] = -np.sum(nz * np.log2(nz))
        else:
            ps = p[idx]
            out[w] = -np.sum(ps * np.log2(ps))
    return out


def rank_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """ROC AUC as the tie-corrected Mann-Whitney statistic.

    Equivalent to (#{pos above neg} + 0.5 * #ties) / (P * N), computed via
    average ranks. Caller guarantees both classes are present.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = scores.size
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    # Average 1-based ranks within tie groups.
    group_start = np.r_[True, s[1:] != s[:-1]]
    group_id = np.cumsum(group_start) - 1
    counts = np.bincount(group_id)
    first_rank = np.cumsum(counts) - counts + 1
    avg_rank = first_rank + (counts - 1) / 2.0
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = avg_rank[group_id]
    n_pos = int(labels.sum())
    n_neg = n - n_pos
    rank_sum_pos = float(ranks[labels == 1].sum())
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)
