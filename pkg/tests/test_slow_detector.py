from __future__ import annotations

import numpy as np
import pytest

from slowfastvad.clients import ClientError, HashEmbeddingClient, MockChatClient
from slowfastvad.entropy_gate import SegmentSelection
from slowfastvad.ingest import FrameRef, ScoreSeries
from slowfastvad.knowledge_base import NORMAL, KnowledgeBase, KnowledgeBaseError
from slowfastvad.prompts import PromptTemplates, TemplateError, render
from slowfastvad.slow_detector import (
    ParseError,
    SpatioTemporalDescription,
    assess,
    build_kb,
    describe_segment,
    extract_patterns,
    parse_pattern_lines,
    parse_verdict,
    predict_abnormal,
    sample_training_segments,
    subsample_frames,
)

TEMPLATES = PromptTemplates.default()
SEG = SegmentSelection("v1", 0, 8, "entropy", 1.0)


class CannedChat:
    """Chat stub returning queued or fixed responses, counting calls."""

    def __init__(self, response="ok", by_task=None):
        self.response = response
        self.by_task = by_task or {}
        self.calls = []

    def complete(self, prompt, images=None, temperature=0.0):
        self.calls.append({"prompt": prompt, "images": images, "temperature": temperature})
        for marker, response in self.by_task.items():
            if marker in prompt:
                return response
        return self.response


def frames(n=4, video="v1"):
    return [FrameRef(video, i, None) for i in range(n)]


# --- templates ---------------------------------------------------------------


def test_templates_validate_placeholders():
    with pytest.raises(TemplateError):
        PromptTemplates(
            describe_cot="no placeholder here",
            extract_normal_cot="{{descriptions}}",
            predict_abnormal_cot="{{normals}}",
            assess_cot="{{description}} {{knowledge}}",
            merge_patterns_cot="{{patterns}}",
        )


def test_render_rejects_unresolved():
    with pytest.raises(TemplateError):
        render("{{one}} {{two}}", one=1)
    assert render("{{one}} x", one=1) == "1 x"


# --- describe ---------------------------------------------------------------


def test_describe_passes_mock_response_through():
    chat = CannedChat(response="two people walking")
    st = describe_segment(frames(), chat, TEMPLATES, SEG)
    assert st.text == "two people walking"
    assert chat.calls[0]["temperature"] == 0.01
    assert len(chat.calls[0]["images"]) == 4


def test_describe_rejects_zero_or_too_many_frames():
    chat = CannedChat()
    with pytest.raises(ValueError):
        describe_segment([], chat, TEMPLATES, SEG)
    with pytest.raises(ValueError):
        describe_segment(frames(9), chat, TEMPLATES, SEG)


def test_subsample_keeps_endpoints_and_spacing():
    refs = frames(9)
    out = subsample_frames(refs, 8)
    assert len(out) == 8
    assert out[0].frame_index == 0 and out[-1].frame_index == 8
    assert [r.frame_index for r in subsample_frames(refs, 12)] == list(range(9))


# --- pattern extraction ------------------------------------------------------


def test_extract_patterns_parses_dash_list():
    chat = CannedChat(
        response="- a person walking slowly on the road\n- a small group engaged in conversation"
    )
    st = SpatioTemporalDescription("people on a walkway", SEG)
    out = extract_patterns([st], chat, TEMPLATES)
    assert out == [
        "a person walking slowly on the road",
        "a small group engaged in conversation",
    ]
    assert chat.calls[0]["temperature"] == 1.1


def test_extract_patterns_empty_reply_is_parse_error():
    chat = CannedChat(response="")
    st = SpatioTemporalDescription("something", SEG)
    with pytest.raises(ParseError):
        extract_patterns([st], chat, TEMPLATES)


def test_parse_pattern_lines_numbered():
    text = "preamble to ignore\n1. first\n2) second\n3. third\n4. fourth\n5. fifth"
    assert parse_pattern_lines(text) == ["first", "second", "third", "fourth", "fifth"]


def test_predict_abnormal_roundtrip():
    chat = CannedChat(response="- riding a bicycle on the sidewalk")
    out = predict_abnormal(["a person walking slowly on the road"], chat, TEMPLATES)
    assert out == ["riding a bicycle on the sidewalk"]
    with pytest.raises(ValueError):
        predict_abnormal([], chat, TEMPLATES)


def test_predict_abnormal_three_lines():
    chat = CannedChat(response="- a\n- b\n- c")
    assert len(predict_abnormal(["x"], chat, TEMPLATES)) == 3


# --- verdict parsing ---------------------------------------------------------


def test_parse_verdict_primary_grammar():
    assert parse_verdict("SCORE: 0.00\nREASONING: normal walking") == (0.0, "normal walking")


def test_parse_verdict_clamps_out_of_range():
    score, _ = parse_verdict("SCORE: 1.7\nREASONING: overshoot")
    assert score == 1.0


def test_parse_verdict_fallback_first_in_range_float():
    score, reasoning = parse_verdict("I estimate 0.35 likelihood because of the bicycle")
    assert score == 0.35
    assert "bicycle" in reasoning


def test_parse_verdict_no_number_raises():
    with pytest.raises(ParseError):
        parse_verdict("no anomalies detected")


def test_parse_verdict_ignores_out_of_range_tokens():
    assert parse_verdict("7 people, anomaly chance 0.2")[0] == 0.2


def test_parse_verdict_reasoning_without_marker():
    score, reasoning = parse_verdict("SCORE: 0.5\nsomething happened")
    assert (score, reasoning) == (0.5, "something happened")


# --- assess -----------------------------------------------------------------


def make_kb(embedder, texts, scene="s1"):
    from slowfastvad.knowledge_base import Pattern

    kb = KnowledgeBase(embed_dim=embedder.dim)
    for t in texts:
        kb.add(
            Pattern(id="", scene_id=scene, label=NORMAL, text=t, embedding=embedder.embed(t))
        )
    return kb


def test_assess_renders_knowledge_and_parses(embedder):
    kb = make_kb(embedder, ["walking is normal", "standing is normal"])
    chat = CannedChat(response="SCORE: 0.95\nREASONING: a cyclist enters the pedestrian walkway")
    st = SpatioTemporalDescription("a cyclist enters the walkway", SEG)
    verdict = assess(st, kb, chat, embedder, TEMPLATES, k=2, scene="s1")
    assert verdict.score == 0.95
    assert verdict.reasoning == "a cyclist enters the pedestrian walkway"
    assert len(verdict.knowledge_used) == 2
    prompt = chat.calls[0]["prompt"]
    assert "walking is normal (label: normal)" in prompt
    assert chat.calls[0]["temperature"] == 0.7


def test_assess_falls_back_to_global_scene(embedder):
    kb = make_kb(embedder, ["walking is normal"], scene="other")
    chat = CannedChat(response="SCORE: 0.5\nREASONING: r")
    st = SpatioTemporalDescription("anything", SEG)
    verdict = assess(st, kb, chat, embedder, TEMPLATES, k=1, scene="missing")
    assert len(verdict.knowledge_used) == 1


def test_assess_without_rag_needs_no_kb(embedder):
    chat = CannedChat(response="SCORE: 0.4\nREASONING: r")
    st = SpatioTemporalDescription("anything", SEG)
    verdict = assess(st, None, chat, embedder, TEMPLATES, use_rag=False)
    assert verdict.score == 0.4
    assert "(no retrieved knowledge)" in chat.calls[0]["prompt"]


def test_assess_empty_kb_with_rag_raises(embedder):
    chat = CannedChat()
    st = SpatioTemporalDescription("anything", SEG)
    with pytest.raises(KnowledgeBaseError):
        assess(st, KnowledgeBase(embed_dim=embedder.dim), chat, embedder, TEMPLATES)


def test_assess_fallback_score_with_warning(embedder, caplog):
    kb = make_kb(embedder, ["walking is normal"])
    chat = CannedChat(response="roughly 0.2 anomalous, nothing to flag")
    st = SpatioTemporalDescription("quiet scene", SEG)
    with caplog.at_level("WARNING"):
        verdict = assess(st, kb, chat, embedder, TEMPLATES, k=1)
    assert verdict.score == 0.2
    assert any("fell back" in r.message for r in caplog.records)


def test_assess_unparseable_raises_parse_error(embedder):
    kb = make_kb(embedder, ["walking is normal"])
    chat = CannedChat(response="no anomalies detected")
    st = SpatioTemporalDescription("quiet scene", SEG)
    with pytest.raises(ParseError):
        assess(st, kb, chat, embedder, TEMPLATES, k=1)


# --- KB building -------------------------------------------------------------


def test_sample_training_segments_one_per_block():
    rng = np.random.default_rng(0)
    starts = sample_training_segments(160, 8, 20, rng)
    assert len(starts) == 1
    assert 0 <= starts[0] <= 152


def test_sample_training_segments_partial_block_and_short_video():
    rng = np.random.default_rng(0)
    assert len(sample_training_segments(200, 8, 20, rng)) == 2
    assert len(sample_training_segments(100, 8, 10**9, rng)) == 1  # shorter than one block
    assert sample_training_segments(5, 8, 20, rng) == []


def test_build_kb_deterministic_with_seed(embedder):
    series = [ScoreSeries(f"t{i}", f"s{i % 2}", np.full(330, 0.2)) for i in range(3)]
    results = []
    for _ in range(2):
        kb = KnowledgeBase(embed_dim=embedder.dim)
        build_kb(series, MockChatClient(), embedder, TEMPLATES, kb, seed=7, sample_interval=10)
        results.append([(e.id, e.scene_id, e.label, e.text) for e in kb.entries])
    assert results[0] == results[1]
    assert len(results[0]) > 0


def test_build_kb_partitions_by_scene(embedder):
    series = [ScoreSeries(f"t{i}", f"s{i % 2}", np.full(160, 0.2)) for i in range(4)]
    kb = KnowledgeBase(embed_dim=embedder.dim)
    build_kb(series, MockChatClient(), embedder, TEMPLATES, kb, seed=0)
    scenes = {e.scene_id for e in kb.entries}
    assert scenes == {"s0", "s1"}
    labels = {e.label for e in kb.entries}
    assert labels == {"normal", "abnormal"}


def test_build_kb_skips_failing_video(embedder, caplog):
    class FlakyChat(MockChatClient):
        def complete(self, prompt, images=None, temperature=0.0):
            if images and images[0].video_id == "bad":
                raise ClientError("boom")
            return super().complete(prompt, images, temperature)

    series = [
        ScoreSeries("bad", "s0", np.full(160, 0.2)),
        ScoreSeries("good", "s0", np.full(160, 0.2)),
    ]
    kb = KnowledgeBase(embed_dim=embedder.dim)
    with caplog.at_level("WARNING"):
        build_kb(series, FlakyChat(), embedder, TEMPLATES, kb, seed=0)
    assert len(kb.entries) > 0
    assert any("skipped" in r.message for r in caplog.records)


def test_build_kb_all_failures_raise(embedder):
    class DeadChat:
        def complete(self, prompt, images=None, temperature=0.0):
            raise ClientError("down")

    series = [ScoreSeries("t0", "s0", np.full(160, 0.2))]
    kb = KnowledgeBase(embed_dim=embedder.dim)
    with pytest.raises(ClientError, match="every training video"):
        build_kb(series, DeadChat(), embedder, TEMPLATES, kb, seed=0)


# --- mock client invariants ----------------------------------------------------


def test_mock_chat_is_deterministic():
    chat = MockChatClient()
    prompt = render(TEMPLATES.assess_cot, description="d", knowledge="k")
    assert chat.complete(prompt) == chat.complete(prompt)


def test_mock_embedder_unit_norm_and_determinism():
    emb = HashEmbeddingClient()
    a = emb.embed("a person walking")
    b = emb.embed("a person walking")
    assert np.array_equal(a, b)
    assert abs(np.linalg.norm(a) - 1.0) < 1e-12
    assert a.size == 256
    with pytest.raises(ClientError):
        emb.embed("!!!")
