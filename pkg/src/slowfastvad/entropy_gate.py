"""Entropy-based selection of ambiguous score windows.

The fast score stream is cut into non-overlapping windows; each window gets a
histogram-based entropy, the entropies are Gaussian-smoothed across
neighboring windows, and windows are selected either because the smoothed
entropy exceeds a threshold or on a fixed sampling period.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .ingest import ScoreSeries


@dataclass(frozen=True)
class GateConfig:
    """Knobs for windowing, entropy estimation, and selection.

    ``theta`` is either an absolute entropy threshold or a percentile spec
    like ``"p75"`` evaluated per video over the smoothed entropies.
    ``period = 0`` disables periodic sampling entirely (window 0 would
    otherwise always be picked, since 0 is a multiple of every period).
    """

    n: int = 8
    bins: int = 10
    sigma: float = 1.0
    theta: float | str = "p75"
    period: int = 10

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError(f"window size n must be >= 2, got {self.n}")
        if self.bins < 1:
            raise ValueError(f"bin count must be >= 1, got {self.bins}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.period < 0:
            raise ValueError(f"sampling period must be >= 0, got {self.period}")
        resolve_theta(self.theta, np.zeros(1))  # reject malformed specs early


@dataclass(frozen=True)
class SubsequenceEntropy:
    """Raw and smoothed entropy for one window."""

    q: int
    start_frame: int
    length: int
    h: float
    h_smoothed: float


@dataclass(frozen=True)
class SegmentSelection:
    """A window chosen for slow analysis, with its trigger."""

    video_id: str
    start_frame: int
    length: int
    reason: str  # "entropy" | "periodic"
    entropy_value: float


def window_bounds(n_frames: int, n: int) -> list[tuple[int, int]]:
    """Consecutive (start, length) windows of size ``n``.

    A trailing remainder of >= 2 frames becomes a shorter final window; a
    single leftover frame is merged into the previous window instead, so no
    window ever holds just one sample.
    """
    if n_frames < 2:
        raise ValueError(f"series must have at least 2 frames, got {n_frames}")
    full, rem = divmod(n_frames, n)
    bounds = [(q * n, n) for q in range(full)]
    if rem == 1 and full > 0:
        start, _ = bounds[-1]
        bounds[-1] = (start, n + 1)
    elif rem >= 2:
        bounds.append((full * n, rem))
    return bounds


def partition(series: ScoreSeries, n: int) -> list[np.ndarray]:
    """Split a series into non-overlapping score windows."""
    return [series.scores[s : s + l] for s, l in window_bounds(len(series), n)]


def histogram_pdf(window: np.ndarray, n_bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Frequency histogram of a window and each sample's bin frequency.

    The histogram spans [min, max] in ``n_bins`` equal half-open bins, the
    last one closed. A constant window puts every sample in one conceptual
    bin with probability 1.
    """
    x = np.asarray(window, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty subsequence")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("scores must lie in [0, 1]")
    if n_bins < 1:
        raise ValueError(f"bin count must be >= 1, got {n_bins}")
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        return np.ones(1), np.ones(x.size)
    interval = (hi - lo) / n_bins
    idx = np.minimum((x - lo) / interval, n_bins - 1).astype(np.int64)
    freqs = np.bincount(idx, minlength=n_bins) / x.size
    return freqs, freqs[idx]


def differential_entropy(window: np.ndarray, n_bins: int, per_bin: bool = False) -> float:
    """Entropy of a window in bits.

    The default sums one term per sample, each weighted by its bin's
    frequency; ``per_bin`` switches to the conventional Shannon sum over
    bins. Bounded by log2(window length), 0 for constant windows.
    """
    freqs, per_sample = histogram_pdf(window, n_bins)
    if per_bin:
        nz = freqs[freqs > 0]
        return float(-np.sum(nz * np.log2(nz)))
    return float(-np.sum(per_sample * np.log2(per_sample)))


def smooth_entropy(entropies: Sequence[float], sigma: float) -> np.ndarray:
    """Gaussian-smooth a window-entropy sequence (replicate padding)."""
    h = np.asarray(entropies, dtype=np.float64)
    if h.size == 0:
        raise ValueError("entropy sequence is empty")
    return kernels.gaussian_smooth(h, sigma)


def resolve_theta(theta: float | str, smoothed: np.ndarray) -> float:
    """Turn a threshold spec into an absolute value.

    Accepts a float, ``"inf"``, or a percentile spec ``"pNN"`` evaluated
    over the smoothed entropies of the current video.
    """
    if isinstance(theta, str):
        spec = theta.strip().lower()
        if spec in ("inf", "+inf"):
            return float("inf")
        if spec.startswith("p"):
            try:
                pct = float(spec[1:])
            except ValueError:
                raise ValueError(f"bad theta spec {theta!r}") from None
            if not 0 <= pct <= 100:
                raise ValueError(f"theta percentile out of range: {theta!r}")
            return float(np.percentile(smoothed, pct))
        try:
            return float(spec)
        except ValueError:
            raise ValueError(f"bad theta spec {theta!r}") from None
    return float(theta)


def window_entropies(
    series: ScoreSeries, cfg: GateConfig, per_bin: bool = False
) -> list[SubsequenceEntropy]:
    """Raw and smoothed entropy for every window of a series."""
    bounds = window_bounds(len(series), cfg.n)
    starts = np.array([s for s, _ in bounds], dtype=np.int64)
    lengths = np.array([l for _, l in bounds], dtype=np.int64)
    h = kernels.window_entropies(series.scores, starts, lengths, cfg.bins, per_bin)
    h_smooth = kernels.gaussian_smooth(h, cfg.sigma)
    return [
        SubsequenceEntropy(q, int(starts[q]), int(lengths[q]), float(h[q]), float(h_smooth[q]))
        for q in range(len(bounds))
    ]


def select_segments(
    series: ScoreSeries, cfg: GateConfig, per_bin: bool = False
) -> list[SegmentSelection]:
    """Select windows for slow analysis.

    A window is selected with reason ``entropy`` when its smoothed entropy
    exceeds theta, and with reason ``periodic`` when its index is a multiple
    of the period and it was not already taken by the entropy trigger.
    """
    entries = window_entropies(series, cfg, per_bin)
    theta = resolve_theta(cfg.theta, np.array([e.h_smoothed for e in entries]))
    selections = []
    for e in entries:
        if e.h_smoothed > theta:
            reason = "entropy"
        elif cfg.period > 0 and e.q % cfg.period == 0:
            reason = "periodic"
        else:
            continue
        selections.append(
            SegmentSelection(series.video_id, e.start_frame, e.length, reason, e.h_smoothed)
        )
    return selections


def write_selections_csv(
    selections: Sequence[SegmentSelection], path: str | Path
) -> None:
    """Export selections as ``video_id,start_frame,length,reason,entropy``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["video_id", "start_frame", "length", "reason", "entropy"])
        for s in selections:
            writer.writerow(
                [s.video_id, s.start_frame, s.length, s.reason, repr(s.entropy_value)]
            )
