"""Wire-protocol conformance against recorded fixtures; no network anywhere."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
import requests

from slowfastvad.clients import ClientError, HttpChatClient, HttpEmbeddingClient
from slowfastvad.ingest import FrameRef
from slowfastvad.slow_detector import parse_verdict

FIXTURES = Path(__file__).parent / "fixtures"


class FakeResponse:
    def __init__(self, doc, status_code=200):
        self._doc = doc
        self.status_code = status_code
        self.text = json.dumps(doc)

    def json(self):
        return self._doc


class RecordingPost:
    def __init__(self, responses):
        self.responses = list(responses)
        self.requests = []

    def __call__(self, url, json=None, headers=None, timeout=None):
        self.requests.append({"url": url, "json": json, "headers": headers})
        result = self.responses.pop(0)
        if isinstance(result, Exception):
            raise result
        return result


def load_fixture(name):
    return json.loads((FIXTURES / name).read_text(encoding="utf-8"))


def test_chat_request_matches_recorded_wire_schema():
    fixture = load_fixture("chat_completion.json")
    post = RecordingPost([FakeResponse(fixture["response"])])
    client = HttpChatClient("https://api.example.com/v1", "sk-test", "vision-chat-1", post=post)
    frames = [
        FrameRef("v1", 8, "file:///frames/v1/000008.jpg"),
        FrameRef("v1", 9, "file:///frames/v1/000009.jpg"),
    ]
    reply = client.complete(
        "TASK: ASSESS\ndescribe and judge the segment", images=frames, temperature=0.01
    )
    sent = post.requests[0]
    assert sent["url"] == "https://api.example.com/v1/chat/completions"
    assert sent["headers"]["Authorization"] == "Bearer sk-test"
    assert sent["json"] == fixture["request"]
    # The recorded response body parses straight into a verdict.
    assert reply == "SCORE: 0.95\nREASONING: a cyclist enters the pedestrian walkway"
    score, reasoning = parse_verdict(reply)
    assert score == 0.95
    assert reasoning == "a cyclist enters the pedestrian walkway"


def test_chat_text_only_content_is_plain_string():
    fixture = load_fixture("chat_completion.json")
    post = RecordingPost([FakeResponse(fixture["response"])])
    client = HttpChatClient("https://api.example.com/v1", "sk-test", "m", post=post)
    client.complete("plain prompt", temperature=0.7)
    body = post.requests[0]["json"]
    assert body["messages"] == [{"role": "user", "content": "plain prompt"}]
    assert body["temperature"] == 0.7


def test_chat_base64_image_mode(tmp_path):
    img = tmp_path / "frame.jpg"
    img.write_bytes(b"\xff\xd8fakejpeg")
    fixture = load_fixture("chat_completion.json")
    post = RecordingPost([FakeResponse(fixture["response"])])
    client = HttpChatClient("https://x", "k", "m", image_mode="base64", post=post)
    client.complete("p", images=[FrameRef("v", 0, str(img))])
    part = post.requests[0]["json"]["messages"][0]["content"][1]
    assert part["image_url"]["url"].startswith("data:image/jpeg;base64,")


def test_chat_missing_uri_is_client_error():
    client = HttpChatClient("https://x", "k", "m", post=RecordingPost([]))
    with pytest.raises(ClientError, match="no uri"):
        client.complete("p", images=[FrameRef("v", 0, None)])


def test_chat_retries_transport_errors_then_succeeds():
    fixture = load_fixture("chat_completion.json")
    post = RecordingPost(
        [
            requests.ConnectionError("refused"),
            FakeResponse({}, status_code=500),
            FakeResponse(fixture["response"]),
        ]
    )
    client = HttpChatClient("https://x", "k", "m", backoff=0.001, post=post)
    assert client.complete("p").startswith("SCORE:")
    assert len(post.requests) == 3


def test_chat_gives_up_after_three_attempts():
    post = RecordingPost([requests.ConnectionError("down")] * 3)
    client = HttpChatClient("https://x", "k", "m", backoff=0.001, post=post)
    with pytest.raises(ClientError, match="after 3 attempts"):
        client.complete("p")


def test_chat_client_4xx_fails_without_retry():
    post = RecordingPost([FakeResponse({"error": "bad"}, status_code=400)])
    client = HttpChatClient("https://x", "k", "m", backoff=0.001, post=post)
    with pytest.raises(ClientError, match="HTTP 400"):
        client.complete("p")
    assert len(post.requests) == 1


def test_chat_empty_content_is_error():
    doc = {"choices": [{"message": {"content": ""}}]}
    post = RecordingPost([FakeResponse(doc)])
    client = HttpChatClient("https://x", "k", "m", post=post)
    with pytest.raises(ClientError, match="empty"):
        client.complete("p")


def test_embedding_request_and_parse():
    fixture = load_fixture("embedding.json")
    post = RecordingPost([FakeResponse(fixture["response"])])
    client = HttpEmbeddingClient("https://api.example.com/v1", "sk-test", "text-embed-1", post=post)
    vec = client.embed("a cyclist enters the pedestrian walkway")
    sent = post.requests[0]
    assert sent["url"] == "https://api.example.com/v1/embeddings"
    assert sent["json"] == fixture["request"]
    assert sent["headers"]["Authorization"] == "Bearer sk-test"
    raw = np.array(fixture["response"]["data"][0]["embedding"])
    np.testing.assert_allclose(vec, raw / np.linalg.norm(raw), atol=1e-15)
    assert abs(np.linalg.norm(vec) - 1.0) < 1e-12
    assert client.dim == 8


def test_embedding_dim_change_is_error():
    fixture = load_fixture("embedding.json")
    post = RecordingPost([FakeResponse(fixture["response"])])
    client = HttpEmbeddingClient("https://x", "k", "m", dim=16, post=post)
    with pytest.raises(ClientError, match="dim"):
        client.embed("text")


def test_embedding_malformed_response():
    post = RecordingPost([FakeResponse({"data": []})])
    client = HttpEmbeddingClient("https://x", "k", "m", post=post)
    with pytest.raises(ClientError, match="malformed"):
        client.embed("text")


def test_from_env_requires_variables(monkeypatch):
    for var in ("SLOWFAST_API_KEY", "SLOWFAST_API_BASE", "SLOWFAST_CHAT_MODEL"):
        monkeypatch.delenv(var, raising=False)
    with pytest.raises(ClientError, match="SLOWFAST_API_BASE"):
        HttpChatClient.from_env()
    monkeypatch.setenv("SLOWFAST_API_BASE", "https://api.example.com/v1")
    monkeypatch.setenv("SLOWFAST_API_KEY", "sk-test")
    monkeypatch.setenv("SLOWFAST_CHAT_MODEL", "vision-chat-1")
    client = HttpChatClient.from_env()
    assert client.base_url == "https://api.example.com/v1"
    assert client.model == "vision-chat-1"
