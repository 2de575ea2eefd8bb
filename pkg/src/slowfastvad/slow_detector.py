"""The slow path: describe segments, mine patterns, and score with retrieval.

Every model interaction goes through the pluggable chat/embedding clients, so
the whole module is deterministic under the mocks. Verdict text is parsed
with a strict SCORE/REASONING grammar plus a first-in-range-float fallback.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clients import ChatClient, ClientError, EmbeddingClient
from .entropy_gate import SegmentSelection
from .ingest import FrameRef, ScoreSeries, make_frame_refs
from .knowledge_base import (
    ABNORMAL,
    NORMAL,
    Aggregator,
    KnowledgeBase,
    KnowledgeBaseError,
    Pattern,
    RetrievedKnowledge,
    insert_with_aggregation,
    medoid_aggregator,
    retrieve_topk,
)
from .prompts import PromptTemplates, render

log = logging.getLogger(__name__)

DESCRIBE_TEMPERATURE = 0.01
TRAIN_TEMPERATURE = 1.1
ASSESS_TEMPERATURE = 0.7
MAX_DESCRIBE_FRAMES = 8

NO_KNOWLEDGE_MARKER = "(no retrieved knowledge)"


class ParseError(ValueError):
    """Model output did not match any accepted shape."""


@dataclass(frozen=True)
class SpatioTemporalDescription:
    """Model description of one segment (temporal/foreground/background)."""

    text: str
    segment: SegmentSelection


@dataclass(frozen=True)
class SlowVerdict:
    """Scored, explained slow-detector output for one segment."""

    segment: SegmentSelection
    score: float
    reasoning: str
    knowledge_used: RetrievedKnowledge
    raw_response: str

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"verdict score outside [0, 1]: {self.score}")


def subsample_frames(frames: Sequence[FrameRef], limit: int) -> list[FrameRef]:
    """Evenly thin a frame list to ``limit`` entries, keeping both endpoints."""
    if len(frames) <= limit:
        return list(frames)
    idx = np.round(np.linspace(0, len(frames) - 1, limit)).astype(int)
    return [frames[i] for i in idx]


def describe_segment(
    frames: Sequence[FrameRef],
    chat: ChatClient,
    templates: PromptTemplates,
    segment: SegmentSelection,
    temperature: float = DESCRIBE_TEMPERATURE,
    max_frames: int = MAX_DESCRIBE_FRAMES,
) -> SpatioTemporalDescription:
    """Ask the vision model for a spatiotemporal description of a segment."""
    if not 1 <= len(frames) <= max_frames:
        raise ValueError(f"expected 1..{max_frames} frames, got {len(frames)}")
    prompt = render(templates.describe_cot, frame_count=len(frames))
    text = chat.complete(prompt, images=list(frames), temperature=temperature)
    if not text.strip():
        raise ClientError("describe returned an empty response")
    return SpatioTemporalDescription(text=text, segment=segment)


_ITEM_RE = re.compile(r"^\s*(?:[-*]|\d+[.)])\s*(.+?)\s*$")


def parse_pattern_lines(text: str) -> list[str]:
    """Extract list items: lines starting with ``-``/``*`` or a number."""
    items = []
    for line in text.splitlines():
        match = _ITEM_RE.match(line)
        if match and match.group(1):
            items.append(match.group(1))
    if not items:
        raise ParseError(f"no pattern items in model output: {text[:120]!r}")
    return items


def extract_patterns(
    descriptions: Sequence[SpatioTemporalDescription],
    chat: ChatClient,
    templates: PromptTemplates,
    temperature: float = TRAIN_TEMPERATURE,
) -> list[str]:
    """Distill normal behavior patterns from segment descriptions."""
    if not descriptions:
        raise ValueError("need at least one description")
    block = "\n".join(f"- {d.text}" for d in descriptions)
    prompt = render(templates.extract_normal_cot, descriptions=block)
    return parse_pattern_lines(chat.complete(prompt, temperature=temperature))


def predict_abnormal(
    normals: Sequence[str],
    chat: ChatClient,
    templates: PromptTemplates,
    temperature: float = TRAIN_TEMPERATURE,
) -> list[str]:
    """Infer likely abnormal patterns from the scene's normal ones."""
    if not normals:
        raise ValueError("need at least one normal pattern")
    block = "\n".join(f"- {t}" for t in normals)
    prompt = render(templates.predict_abnormal_cot, normals=block)
    return parse_pattern_lines(chat.complete(prompt, temperature=temperature))


def llm_aggregator(
    chat: ChatClient, templates: PromptTemplates, temperature: float = TRAIN_TEMPERATURE
) -> Aggregator:
    """Aggregator that asks the chat model to merge near-duplicate patterns."""

    def aggregate(texts: Sequence[str]) -> str:
        block = "\n".join(f"- {t}" for t in texts)
        prompt = render(templates.merge_patterns_cot, patterns=block)
        reply = chat.complete(prompt, temperature=temperature)
        items = parse_pattern_lines(reply)
        return items[0]

    return aggregate


_SCORE_LINE_RE = re.compile(r"^\s*\**\s*SCORE\s*\**\s*:\s*(-?\d+(?:\.\d+)?)\s*$", re.IGNORECASE)
_REASONING_RE = re.compile(r"REASONING\s*:\s*", re.IGNORECASE)
_FLOAT_TOKEN_RE = re.compile(r"(?<![\w.])(\d+(?:\.\d+)?)(?![\w.])")


def parse_verdict(text: str) -> tuple[float, str]:
    """Parse model output into (score in [0, 1], reasoning text).

    Primary grammar: a ``SCORE:`` line (value clamped into [0, 1] with a
    warning if needed) and the remainder after an optional ``REASONING:``
    marker. Fallback: the first standalone number in [0, 1] anywhere, with
    the full text as reasoning.
    """
    lines = text.splitlines()
    for i, line in enumerate(lines):
        match = _SCORE_LINE_RE.match(line)
        if not match:
            continue
        score = float(match.group(1))
        if not 0.0 <= score <= 1.0:
            clamped = min(max(score, 0.0), 1.0)
            log.warning("verdict score %s outside [0, 1]; clamped to %s", score, clamped)
            score = clamped
        rest = "\n".join(lines[:i] + lines[i + 1 :])
        marker = _REASONING_RE.search(rest)
        reasoning = rest[marker.end() :].strip() if marker else rest.strip()
        return score, reasoning
    for match in _FLOAT_TOKEN_RE.finditer(text):
        value = float(match.group(1))
        if 0.0 <= value <= 1.0:
            log.warning("no SCORE line in verdict; fell back to token %s", match.group(1))
            return value, text.strip()
    raise ParseError(f"no in-range score in model output: {text[:120]!r}")


def render_knowledge(retrieved: RetrievedKnowledge) -> str:
    """Format retrieved patterns for the assessment prompt."""
    if not retrieved.items:
        return NO_KNOWLEDGE_MARKER
    return "\n".join(
        f"{i}. {p.text} (label: {label})"
        for i, (p, label, _sim) in enumerate(retrieved.items, start=1)
    )


def assess(
    st: SpatioTemporalDescription,
    kb: KnowledgeBase | None,
    chat: ChatClient,
    embedder: EmbeddingClient,
    templates: PromptTemplates,
    k: int = 6,
    temperature: float = ASSESS_TEMPERATURE,
    scene: str | None = None,
    use_rag: bool = True,
) -> SlowVerdict:
    """Score one described segment, optionally augmented with retrieval.

    With RAG on, the description is embedded and the top-k patterns are
    retrieved (scene-restricted first, falling back to all scenes when the
    scene has no entries) and rendered into the prompt.
    """
    retrieved = RetrievedKnowledge(items=())
    if use_rag:
        if kb is None or not kb.entries:
            raise KnowledgeBaseError("assessment with RAG needs a non-empty knowledge base")
        query = embedder.embed(st.text)
        retrieved = retrieve_topk(query, kb, k, scene=scene)
        if not retrieved.items and scene is not None:
            retrieved = retrieve_topk(query, kb, k, scene=None)
    prompt = render(
        templates.assess_cot,
        description=st.text,
        knowledge=render_knowledge(retrieved),
    )
    reply = chat.complete(prompt, temperature=temperature)
    score, reasoning = parse_verdict(reply)
    return SlowVerdict(
        segment=st.segment,
        score=score,
        reasoning=reasoning,
        knowledge_used=retrieved,
        raw_response=reply,
    )


def sample_training_segments(
    n_frames: int, window_n: int, interval: int, rng: np.random.Generator
) -> list[int]:
    """One random window start per block of ``window_n * interval`` frames.

    A trailing partial block still contributes a sample when it can hold a
    full window, so even a short video yields one segment.
    """
    block = window_n * interval
    starts = []
    for block_start in range(0, n_frames, block):
        block_len = min(block, n_frames - block_start)
        if block_len < window_n:
            continue
        offset = int(rng.integers(0, block_len - window_n + 1))
        starts.append(block_start + offset)
    return starts


def build_kb(
    train_series: Sequence[ScoreSeries],
    chat: ChatClient,
    embedder: EmbeddingClient,
    templates: PromptTemplates,
    kb: KnowledgeBase,
    window_n: int = 8,
    sample_interval: int = 20,
    seed: int = 0,
    tau: float = 0.85,
    aggregator: Aggregator | None = None,
    frames_root: str | None = None,
    describe_temperature: float = DESCRIBE_TEMPERATURE,
    train_temperature: float = TRAIN_TEMPERATURE,
) -> KnowledgeBase:
    """Populate the knowledge base from normal training videos.

    Per video: sparse-sample one window per block, describe each sampled
    window, extract normal patterns from the descriptions, predict abnormal
    ones, then insert everything through the aggregating merge, scene by
    scene. A failing video is skipped with a log entry; a build in which
    every video failed raises.
    """
    rng = np.random.default_rng(seed)
    if aggregator is None:
        aggregator = medoid_aggregator(embedder)
    failures = 0
    for series in train_series:
        starts = sample_training_segments(len(series), window_n, sample_interval, rng)
        if not starts:
            log.warning("video %s shorter than one window; skipped", series.video_id)
            continue
        try:
            descriptions = []
            for start in starts:
                segment = SegmentSelection(series.video_id, start, window_n, "periodic", 0.0)
                frames = make_frame_refs(series, start, window_n, frames_root)
                descriptions.append(
                    describe_segment(
                        frames, chat, templates, segment, temperature=describe_temperature
                    )
                )
            normals = extract_patterns(descriptions, chat, templates, train_temperature)
            abnormals = predict_abnormal(normals, chat, templates, train_temperature)
        except (ClientError, ParseError) as exc:
            failures += 1
            log.warning("video %s skipped during KB build: %s", series.video_id, exc)
            continue
        for label, texts in ((NORMAL, normals), (ABNORMAL, abnormals)):
            for text in texts:
                pattern = Pattern(
                    id="",
                    scene_id=series.scene_id,
                    label=label,
                    text=text,
                    embedding=embedder.embed(text),
                )
                insert_with_aggregation(pattern, kb, tau, aggregator, embedder)
    if train_series and failures == len(train_series):
        raise ClientError("knowledge base build failed for every training video")
    return kb
