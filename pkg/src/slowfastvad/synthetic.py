"""Synthetic desk-scale benchmark: scripted videos plus an oracle slow mock.

The generator produces test videos whose fast scores track the ground truth
with Gaussian noise, except on a deliberately corrupted fraction of windows
where the fast detector flips between extremes (unstable and mostly wrong).
The oracle chat client answers assessments from the true labels, confidently
when retrieved knowledge is present in the prompt and conservatively when it
is not, which is what makes the component ladder climb.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clients import MockChatClient
from .ingest import FrameRef, GroundTruth, ScoreSeries
from .slow_detector import NO_KNOWLEDGE_MARKER


@dataclass(frozen=True)
class SyntheticBenchmark:
    train_series: tuple[ScoreSeries, ...]
    test_series: tuple[ScoreSeries, ...]
    truth: tuple[GroundTruth, ...]

    def labels_of(self, video_id: str) -> np.ndarray:
        for t in self.truth:
            if t.video_id == video_id:
                return t.labels
        raise KeyError(video_id)


NORMAL_LEVEL = 0.2
ANOMALY_LEVEL = 0.8
SCORE_FLOOR = 0.02
SCORE_CEIL = 0.98


def _anomaly_labels(n_frames: int, rng: np.random.Generator) -> np.ndarray:
    labels = np.zeros(n_frames, dtype=np.int64)
    for _ in range(int(rng.integers(1, 4))):
        length = int(rng.integers(24, 65))
        start = int(rng.integers(0, max(1, n_frames - length)))
        labels[start : start + length] = 1
    return labels


def _fast_scores(
    labels: np.ndarray,
    rng: np.random.Generator,
    window_n: int,
    noise_sigma: float,
    corrupt_fraction: float,
) -> np.ndarray:
    n = labels.size
    scores = NORMAL_LEVEL + (ANOMALY_LEVEL - NORMAL_LEVEL) * labels
    scores = scores + rng.normal(0.0, noise_sigma, size=n)
    n_windows = n // window_n
    n_corrupt = int(round(corrupt_fraction * n_windows))
    corrupt = rng.choice(n_windows, size=n_corrupt, replace=False)
    for w in corrupt:
        lo = w * window_n
        # The fast detector flips between extremes here: wrong on the half
        # that lands opposite the true label, and high-entropy throughout.
        flip = np.where(np.arange(window_n) % 2 == 0, SCORE_CEIL - 0.08, SCORE_FLOOR + 0.08)
        scores[lo : lo + window_n] = flip + rng.normal(0.0, 0.01, size=window_n)
    return np.clip(scores, SCORE_FLOOR, SCORE_CEIL)


def make_benchmark(
    seed: int = 0,
    n_videos: int = 20,
    n_frames: int = 400,
    n_train_videos: int = 4,
    n_scenes: int = 2,
    window_n: int = 8,
    noise_sigma: float = 0.06,
    corrupt_fraction: float = 0.10,
) -> SyntheticBenchmark:
    """Build the scripted corpus; everything flows from one seed."""
    rng = np.random.default_rng(seed)
    train = []
    for i in range(n_train_videos):
        scene = f"scene{i % n_scenes}"
        scores = np.clip(
            NORMAL_LEVEL + rng.normal(0.0, noise_sigma, size=n_frames),
            SCORE_FLOOR,
            SCORE_CEIL,
        )
        train.append(ScoreSeries(f"train{i:02d}", scene, scores))
    test = []
    truth = []
    for i in range(n_videos):
        scene = f"scene{i % n_scenes}"
        video_id = f"test{i:02d}"
        labels = _anomaly_labels(n_frames, rng)
        scores = _fast_scores(labels, rng, window_n, noise_sigma, corrupt_fraction)
        test.append(ScoreSeries(video_id, scene, scores))
        truth.append(GroundTruth(video_id, labels))
    return SyntheticBenchmark(tuple(train), tuple(test), tuple(truth))


_MARKER_RE = re.compile(r"\[segment video=(\S+) frames (\d+)-(\d+)\]")


class OracleChatClient(MockChatClient):
    """Scripted slow detector that knows the ground truth.

    Descriptions embed a segment marker; assessments parse it back out of
    the prompt and score from the true anomalous fraction of the segment.
    With retrieved knowledge in the prompt the verdict is confident; without
    it the assessor refuses to commit and returns a neutral 0.5, mirroring a
    model that lacks scene-specific grounding.
    """

    def __init__(self, truth: Sequence[GroundTruth]) -> None:
        self._labels = {t.video_id: t.labels for t in truth}

    def _describe(self, prompt: str, images: Sequence[FrameRef]) -> str:
        if not images:
            return super()._describe(prompt, images)
        first, last = images[0], images[-1]
        marker = f"[segment video={first.video_id} frames {first.frame_index}-{last.frame_index}]"
        return f"{marker} pedestrians moving through a fixed outdoor scene."

    def _assess(self, prompt: str) -> str:
        match = _MARKER_RE.search(prompt)
        if not match:
            return super()._assess(prompt)
        video_id, first, last = match.group(1), int(match.group(2)), int(match.group(3))
        labels = self._labels.get(video_id)
        if labels is None:
            return super()._assess(prompt)
        frac = float(np.mean(labels[first : last + 1]))
        if NO_KNOWLEDGE_MARKER in prompt:
            return (
                "SCORE: 0.5000\n"
                "REASONING: no scene knowledge was retrieved, so the segment "
                "cannot be judged either way."
            )
        score = 0.02 + 0.96 * frac
        return (
            f"SCORE: {score:.4f}\n"
            f"REASONING: {frac:.0%} of the segment deviates from the retrieved "
            f"normal patterns for this scene."
        )
