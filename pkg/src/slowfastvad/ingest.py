"""Loading and validation of fast-detector score streams and frame labels.

Scores arrive either as CSV (``video_id,scene_id,frame_index,score``) or as
JSONL with one record per video; labels use the same shapes with a ``label``
column. Loaded structures are immutable and safe to share across threads.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


class IngestError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class ScoreSeries:
    """Per-frame anomaly confidences in [0, 1] for one video."""

    video_id: str
    scene_id: str
    scores: np.ndarray

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=np.float64)
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        if scores.size == 0:
            raise IngestError(f"video {self.video_id!r}: empty score series")
        if np.any(scores < 0.0) or np.any(scores > 1.0):
            raise IngestError(f"video {self.video_id!r}: score outside [0, 1]")

    def __len__(self) -> int:
        return int(self.scores.size)


@dataclass(frozen=True)
class GroundTruth:
    """Per-frame 0/1 anomaly labels for one video (1 = anomalous)."""

    video_id: str
    labels: np.ndarray

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels, dtype=np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        if not np.isin(labels, (0, 1)).all():
            raise IngestError(f"video {self.video_id!r}: label not in {{0, 1}}")

    def __len__(self) -> int:
        return int(self.labels.size)


@dataclass(frozen=True)
class FrameRef:
    """Reference to one frame image, for submission to the vision model."""

    video_id: str
    frame_index: int
    uri: str | None = None


def _normalize(values: list[float]) -> list[float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0.0] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def _rows_to_series(
    per_video: dict[str, tuple[str, dict[int, float]]], normalize: bool
) -> list[ScoreSeries]:
    series = []
    for video_id in sorted(per_video):
        scene_id, frames = per_video[video_id]
        indices = sorted(frames)
        if indices != list(range(len(indices))):
            missing = next(i for i, idx in enumerate(indices) if i != idx)
            raise IngestError(
                f"video {video_id!r}: non-contiguous frame indices (expected {missing})"
            )
        values = [frames[i] for i in indices]
        if normalize:
            values = _normalize(values)
        series.append(ScoreSeries(video_id, scene_id, np.array(values)))
    return series


def load_scores(path: str | Path, normalize: bool = False) -> list[ScoreSeries]:
    """Load fast-detector scores from CSV or JSONL, sorted by video_id.

    ``normalize`` applies per-series min-max scaling, for raw reconstruction
    errors that are not already in [0, 1]; a constant series maps to all 0.
    """
    path = Path(path)
    if not path.exists():
        raise IngestError(f"scores file not found: {path}")
    if path.suffix.lower() == ".jsonl":
        return _load_scores_jsonl(path, normalize)
    return _load_scores_csv(path, normalize)


def _load_scores_csv(path: Path, normalize: bool) -> list[ScoreSeries]:
    per_video: dict[str, tuple[str, dict[int, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        required = {"video_id", "scene_id", "frame_index", "score"}
        if not required.issubset(reader.fieldnames):
            raise IngestError(
                f"{path}: expected columns {sorted(required)}, got {reader.fieldnames}"
            )
        for row_no, row in enumerate(reader, start=2):
            try:
                video_id = row["video_id"]
                scene_id = row["scene_id"]
                frame_index = int(row["frame_index"])
                score = float(row["score"])
            except (KeyError, TypeError, ValueError) as exc:
                raise IngestError(f"{path}: malformed row {row_no}: {exc}") from exc
            if not normalize and not (0.0 <= score <= 1.0):
                raise IngestError(f"{path}: score out of range at row {row_no}: {score}")
            scene, frames = per_video.setdefault(video_id, (scene_id, {}))
            if scene != scene_id:
                raise IngestError(
                    f"{path}: row {row_no}: video {video_id!r} has conflicting scene ids"
                )
            if frame_index in frames:
                raise IngestError(
                    f"{path}: duplicate frame ({video_id!r}, {frame_index}) at row {row_no}"
                )
            frames[frame_index] = score
    return _rows_to_series(per_video, normalize)


def _load_scores_jsonl(path: Path, normalize: bool) -> list[ScoreSeries]:
    per_video: dict[str, tuple[str, dict[int, float]]] = {}
    with open(path, encoding="utf-8") as fh:
        for row_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                video_id = record["video_id"]
                scene_id = record["scene_id"]
                values = [float(v) for v in record["scores"]]
            except (KeyError, TypeError, ValueError) as exc:
                raise IngestError(f"{path}: malformed record at line {row_no}: {exc}") from exc
            if video_id in per_video:
                raise IngestError(f"{path}: duplicate video {video_id!r} at line {row_no}")
            if not normalize:
                for i, v in enumerate(values):
                    if not (0.0 <= v <= 1.0):
                        raise IngestError(
                            f"{path}: score out of range at line {row_no}, frame {i}: {v}"
                        )
            per_video[video_id] = (scene_id, dict(enumerate(values)))
    return _rows_to_series(per_video, normalize)


def save_scores(series: Sequence[ScoreSeries], path: str | Path) -> None:
    """Write series back to CSV losslessly (scores round-trip bit-exact)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["video_id", "scene_id", "frame_index", "score"])
        for s in series:
            for i, v in enumerate(s.scores):
                writer.writerow([s.video_id, s.scene_id, i, repr(float(v))])


def load_labels(path: str | Path) -> list[GroundTruth]:
    """Load frame labels from CSV (``video_id,frame_index,label``) or JSONL."""
    path = Path(path)
    if not path.exists():
        raise IngestError(f"labels file not found: {path}")
    if path.suffix.lower() == ".jsonl":
        return _load_labels_jsonl(path)
    return _load_labels_csv(path)


def _parse_label(raw: object, where: str) -> int:
    try:
        label = int(raw)  # type: ignore[arg-type]
    except (TypeError, ValueError) as exc:
        raise IngestError(f"{where}: malformed label {raw!r}") from exc
    if label not in (0, 1):
        raise IngestError(f"{where}: label not in {{0, 1}}: {label}")
    return label


def _load_labels_csv(path: Path) -> list[GroundTruth]:
    per_video: dict[str, dict[int, int]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        required = {"video_id", "frame_index", "label"}
        if not required.issubset(reader.fieldnames):
            raise IngestError(
                f"{path}: expected columns {sorted(required)}, got {reader.fieldnames}"
            )
        for row_no, row in enumerate(reader, start=2):
            where = f"{path}: row {row_no}"
            try:
                video_id = row["video_id"]
                frame_index = int(row["frame_index"])
            except (KeyError, TypeError, ValueError) as exc:
                raise IngestError(f"{where}: malformed row: {exc}") from exc
            label = _parse_label(row["label"], where)
            frames = per_video.setdefault(video_id, {})
            if frame_index in frames:
                raise IngestError(f"{where}: duplicate frame ({video_id!r}, {frame_index})")
            frames[frame_index] = label
    truths = []
    for video_id in sorted(per_video):
        frames = per_video[video_id]
        indices = sorted(frames)
        if indices != list(range(len(indices))):
            raise IngestError(f"video {video_id!r}: non-contiguous label frame indices")
        truths.append(GroundTruth(video_id, np.array([frames[i] for i in indices])))
    return truths


def _load_labels_jsonl(path: Path) -> list[GroundTruth]:
    truths = {}
    with open(path, encoding="utf-8") as fh:
        for row_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}: line {row_no}"
            try:
                record = json.loads(line)
                video_id = record["video_id"]
                raw_labels = record["labels"]
            except (KeyError, TypeError, ValueError) as exc:
                raise IngestError(f"{where}: malformed record: {exc}") from exc
            if video_id in truths:
                raise IngestError(f"{where}: duplicate video {video_id!r}")
            labels = [_parse_label(v, where) for v in raw_labels]
            truths[video_id] = GroundTruth(video_id, np.array(labels))
    return [truths[v] for v in sorted(truths)]


def validate_alignment(series: Sequence[ScoreSeries], truth: Sequence[GroundTruth]) -> None:
    """Check every GroundTruth matches a ScoreSeries of the same length."""
    by_id = {s.video_id: s for s in series}
    for t in truth:
        s = by_id.get(t.video_id)
        if s is None:
            raise IngestError(f"labels reference unknown video {t.video_id!r}")
        if len(t) != len(s):
            raise IngestError(
                f"video {t.video_id!r}: {len(t)} labels vs {len(s)} scores"
            )


def make_frame_refs(
    series: ScoreSeries, start: int, length: int, frames_root: str | None = None
) -> list[FrameRef]:
    """FrameRefs for a segment; URIs are ``<root>/<video>/<index>.jpg``."""
    if start < 0 or start + length > len(series):
        raise IngestError(
            f"segment [{start}, {start + length}) outside video {series.video_id!r} "
            f"of {len(series)} frames"
        )
    refs = []
    for i in range(start, start + length):
        uri = None
        if frames_root is not None:
            uri = f"{frames_root.rstrip('/')}/{series.video_id}/{i:06d}.jpg"
        refs.append(FrameRef(series.video_id, i, uri))
    return refs
