"""Splice slow verdicts onto the fast timeline, fuse, and smooth.

Frames covered by a verdict get ``alpha * slow + (1 - alpha) * fast``; all
other frames pass the fast score through unchanged. The final curve is
Gaussian-smoothed with the same kernel contract used for window entropies.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .ingest import ScoreSeries
from .slow_detector import SlowVerdict


@dataclass(frozen=True)
class FusionConfig:
    """Fusion weight and final smoothing width (in frames).

    The weight balancing the two detectors is dataset-dependent; see
    ``DATASET_ALPHAS`` for published defaults.
    """

    alpha: float = 0.8
    smooth_sigma: float = 2.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.smooth_sigma <= 0:
            raise ValueError(f"smooth_sigma must be positive, got {self.smooth_sigma}")


DATASET_ALPHAS = {"ped2": 0.8, "avenue": 0.5, "shanghaitech": 0.7}


@dataclass(frozen=True)
class Explanation:
    """Reasoning attached to one covered frame range."""

    start: int
    length: int
    reason_text: str
    trigger: str


@dataclass(frozen=True)
class FusedSeries:
    """Final per-frame curve with coverage mask and explanations."""

    video_id: str
    fused: np.ndarray
    coverage: np.ndarray
    explanations: tuple[Explanation, ...] = field(default=())

    def __post_init__(self) -> None:
        fused = np.asarray(self.fused, dtype=np.float64)
        coverage = np.asarray(self.coverage, dtype=bool)
        fused.setflags(write=False)
        coverage.setflags(write=False)
        object.__setattr__(self, "fused", fused)
        object.__setattr__(self, "coverage", coverage)
        if fused.shape != coverage.shape:
            raise ValueError("fused and coverage lengths differ")
        if np.any(fused < 0.0) or np.any(fused > 1.0):
            raise ValueError("fused scores must lie in [0, 1]")


def splice(
    series: ScoreSeries, verdicts: Sequence[SlowVerdict]
) -> tuple[np.ndarray, np.ndarray]:
    """Broadcast each verdict's score over its frames.

    Returns (slow_track, coverage): uncovered frames hold NaN in the track
    and False in the mask. Verdict segments must fit the series and must not
    overlap.
    """
    n = len(series)
    track = np.full(n, np.nan)
    coverage = np.zeros(n, dtype=bool)
    for v in verdicts:
        seg = v.segment
        if seg.start_frame < 0 or seg.start_frame + seg.length > n:
            raise ValueError(
                f"verdict segment [{seg.start_frame}, {seg.start_frame + seg.length}) "
                f"outside video {series.video_id!r} of {n} frames"
            )
        window = slice(seg.start_frame, seg.start_frame + seg.length)
        if coverage[window].any():
            raise ValueError(f"overlapping verdict at frame {seg.start_frame}")
        track[window] = v.score
        coverage[window] = True
    return track, coverage


def fuse(
    series: ScoreSeries,
    slow_track: np.ndarray,
    coverage: np.ndarray,
    alpha: float,
) -> np.ndarray:
    """Weighted average on covered frames, fast passthrough elsewhere."""
    out = np.array(series.scores, dtype=np.float64)
    out[coverage] = alpha * slow_track[coverage] + (1.0 - alpha) * out[coverage]
    return out


def smooth_fused(prefused: np.ndarray, sigma: float) -> np.ndarray:
    """Final Gaussian smoothing over the frame axis, clamped to [0, 1]."""
    return np.clip(kernels.gaussian_smooth(prefused, sigma), 0.0, 1.0)


def assemble(
    series: ScoreSeries,
    verdicts: Sequence[SlowVerdict],
    cfg: FusionConfig,
    apply_smoothing: bool = True,
) -> FusedSeries:
    """Full per-video fusion: splice, weight, smooth, and attach reasoning."""
    track, coverage = splice(series, verdicts)
    prefused = fuse(series, track, coverage, cfg.alpha)
    fused = smooth_fused(prefused, cfg.smooth_sigma) if apply_smoothing else prefused
    ordered = sorted(verdicts, key=lambda v: v.segment.start_frame)
    explanations = tuple(
        Explanation(v.segment.start_frame, v.segment.length, v.reasoning, v.segment.reason)
        for v in ordered
    )
    return FusedSeries(series.video_id, fused, coverage, explanations)


def write_fused_csv(
    path: str | Path,
    series: ScoreSeries,
    fused: FusedSeries,
    slow_track: np.ndarray,
) -> None:
    """Per-frame CSV: ``frame_index,fast,slow_or_empty,fused,covered``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame_index", "fast", "slow_or_empty", "fused", "covered"])
        for i in range(len(series)):
            slow = "" if np.isnan(slow_track[i]) else repr(float(slow_track[i]))
            writer.writerow(
                [
                    i,
                    repr(float(series.scores[i])),
                    slow,
                    repr(float(fused.fused[i])),
                    int(fused.coverage[i]),
                ]
            )


def read_fused_csv(path: str | Path) -> np.ndarray:
    """Read back the fused column of a curve written by write_fused_csv."""
    values = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "fused" not in reader.fieldnames:
            raise ValueError(f"{path}: not a fused-curve CSV")
        for row in reader:
            values.append(float(row["fused"]))
    if not values:
        raise ValueError(f"{path}: empty fused-curve CSV")
    return np.array(values)


def explanations_json(fused: FusedSeries) -> dict:
    """Interpretability export: covered ranges with their reasoning."""
    return {
        "video_id": fused.video_id,
        "ranges": [
            {"start": e.start, "len": e.length, "reason_text": e.reason_text, "trigger": e.trigger}
            for e in fused.explanations
        ],
    }


def write_explanations_json(fused_list: Sequence[FusedSeries], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([explanations_json(f) for f in fused_list], fh, indent=1)
        fh.write("\n")
