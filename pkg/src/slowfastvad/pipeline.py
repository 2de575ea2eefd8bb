"""Detection orchestration: gate windows, drive the slow path, fuse curves.

Segments are described and assessed concurrently up to a bounded in-flight
limit; results are collected back in (video, start_frame) order, so the
outputs never depend on scheduling.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .clients import ChatClient, ClientError, EmbeddingClient
from .config import PipelineConfig
from .entropy_gate import SegmentSelection, select_segments, window_bounds
from .fusion import FusedSeries, assemble, splice
from .ingest import ScoreSeries, make_frame_refs
from .knowledge_base import KnowledgeBase, KnowledgeBaseError
from .prompts import PromptTemplates
from .slow_detector import (
    MAX_DESCRIBE_FRAMES,
    ParseError,
    SlowVerdict,
    assess,
    describe_segment,
    subsample_frames,
)

log = logging.getLogger(__name__)


@dataclass
class DetectionResult:
    """Everything a detection pass produces, per video and aggregated."""

    selections: dict[str, list[SegmentSelection]] = field(default_factory=dict)
    verdicts: dict[str, list[SlowVerdict]] = field(default_factory=dict)
    fused: list[FusedSeries] = field(default_factory=list)
    slow_tracks: dict[str, np.ndarray] = field(default_factory=dict)
    n_windows: int = 0
    n_selected: int = 0

    @property
    def intervention_rate(self) -> float:
        return self.n_selected / self.n_windows if self.n_windows else 0.0


def _assess_selection(
    series: ScoreSeries,
    selection: SegmentSelection,
    kb: KnowledgeBase | None,
    chat: ChatClient,
    embedder: EmbeddingClient,
    templates: PromptTemplates,
    cfg: PipelineConfig,
) -> SlowVerdict:
    frames = make_frame_refs(series, selection.start_frame, selection.length, cfg.frames_root)
    frames = subsample_frames(frames, MAX_DESCRIBE_FRAMES)
    st = describe_segment(
        frames, chat, templates, selection, temperature=cfg.describe_temperature
    )
    return assess(
        st,
        kb,
        chat,
        embedder,
        templates,
        k=cfg.top_k,
        temperature=cfg.assess_temperature,
        scene=series.scene_id,
        use_rag=cfg.rag,
    )


def detect_dataset(
    series_list: Sequence[ScoreSeries],
    kb: KnowledgeBase | None,
    chat: ChatClient,
    embedder: EmbeddingClient,
    templates: PromptTemplates,
    cfg: PipelineConfig,
    apply_smoothing: bool = True,
) -> DetectionResult:
    """Run gating, slow assessment, and fusion over a whole test set.

    A selection whose describe/assess fails is logged and left uncovered, so
    its frames fall back to the fast score. Requires a non-empty knowledge
    base when RAG is enabled.
    """
    if cfg.rag and (kb is None or not kb.entries):
        raise KnowledgeBaseError("detection with RAG enabled needs a knowledge base (--kb)")
    result = DetectionResult()
    ordered = sorted(series_list, key=lambda s: s.video_id)
    jobs: list[tuple[ScoreSeries, SegmentSelection]] = []
    for series in ordered:
        selections = select_segments(series, cfg.gate)
        result.selections[series.video_id] = selections
        result.n_windows += len(window_bounds(len(series), cfg.gate.n))
        result.n_selected += len(selections)
        jobs.extend((series, sel) for sel in selections)
    with ThreadPoolExecutor(max_workers=cfg.max_inflight) as pool:
        futures = [
            pool.submit(_assess_selection, series, sel, kb, chat, embedder, templates, cfg)
            for series, sel in jobs
        ]
        for (series, sel), future in zip(jobs, futures):
            try:
                verdict = future.result()
            except (ClientError, ParseError, KnowledgeBaseError) as exc:
                log.warning(
                    "segment %s@%d dropped, frames stay on the fast score: %s",
                    series.video_id,
                    sel.start_frame,
                    exc,
                )
                continue
            result.verdicts.setdefault(series.video_id, []).append(verdict)
    for series in ordered:
        verdicts = sorted(
            result.verdicts.get(series.video_id, []), key=lambda v: v.segment.start_frame
        )
        result.verdicts[series.video_id] = verdicts
        track, _cov = splice(series, verdicts)
        result.slow_tracks[series.video_id] = track
        result.fused.append(assemble(series, verdicts, cfg.fusion, apply_smoothing))
    return result
