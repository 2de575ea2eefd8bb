"""Chat and embedding clients: deterministic mocks and HTTP implementations.

The HTTP clients speak a chat-completion style wire protocol: chat requests
POST ``{model, temperature, messages:[{role, content}]}`` and read
``choices[0].message.content``; embedding requests POST ``{model, input}``
and read ``data[0].embedding``. Frame images attach as content parts, either
by URI or base64 data URL. Transport failures retry up to 3 times with
exponential backoff.
"""

from __future__ import annotations

import base64
import hashlib
import os
import re
import time
from typing import Callable, Protocol, Sequence

import numpy as np
import requests

from .ingest import FrameRef

ENV_API_KEY = "SLOWFAST_API_KEY"
ENV_API_BASE = "SLOWFAST_API_BASE"
ENV_CHAT_MODEL = "SLOWFAST_CHAT_MODEL"
ENV_EMBED_MODEL = "SLOWFAST_EMBED_MODEL"

MOCK_EMBED_DIM = 256


class ClientError(RuntimeError):
    """Transport failure after retries, or an unusable model response."""


class ChatClient(Protocol):
    def complete(
        self,
        prompt: str,
        images: Sequence[FrameRef] | None = None,
        temperature: float = 0.0,
    ) -> str: ...


class EmbeddingClient(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


_TOKEN_RE = re.compile(r"[a-z0-9]+")


class HashEmbeddingClient:
    """Deterministic mock embedder: hashed-token signs, summed, normalized.

    Each lowercased token hashes (sha256) to a 256-dimension vector of +-1
    components; token vectors are summed and L2-normalized, so texts sharing
    most tokens embed close together. No network, stable across processes.
    """

    dim = MOCK_EMBED_DIM

    def embed(self, text: str) -> np.ndarray:
        tokens = _TOKEN_RE.findall(text.lower())
        if not tokens:
            raise ClientError(f"cannot embed text with no tokens: {text!r}")
        acc = np.zeros(self.dim, dtype=np.float64)
        for token in tokens:
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            bits = np.unpackbits(np.frombuffer(digest, dtype=np.uint8))
            acc += bits.astype(np.float64) * 2.0 - 1.0
        norm = float(np.linalg.norm(acc))
        if norm == 0.0:
            # Opposing token vectors cancelled; fall back to a fixed axis.
            acc[0] = 1.0
            norm = 1.0
        return acc / norm


def _stable_hash(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


_MOCK_NORMALS = [
    "a person walking slowly along the walkway",
    "a small group engaged in conversation",
    "pedestrians moving steadily in both directions",
    "a person standing near the edge of the path",
    "people carrying bags while walking",
]

_MOCK_ABNORMALS = [
    "riding a bicycle on the sidewalk",
    "a vehicle driving across the pedestrian area",
    "a person running through the crowd",
    "someone throwing an object across the scene",
    "a person skateboarding between pedestrians",
]


class MockChatClient:
    """Deterministic stand-in for the chat model.

    Dispatches on the ``TASK:`` marker the shipped prompt templates carry and
    derives every reply from a hash of the request, so identical inputs give
    identical outputs with no network.
    """

    def complete(
        self,
        prompt: str,
        images: Sequence[FrameRef] | None = None,
        temperature: float = 0.0,
    ) -> str:
        task = _task_of(prompt)
        if task == "DESCRIBE":
            return self._describe(prompt, images or ())
        if task == "EXTRACT":
            return self._pick_lines(_MOCK_NORMALS, prompt, 3)
        if task == "PREDICT":
            return self._pick_lines(_MOCK_ABNORMALS, prompt, 2)
        if task == "MERGE":
            return self._merge(prompt)
        if task == "ASSESS":
            return self._assess(prompt)
        return f"mock response {_stable_hash(prompt) % 10000}"

    def _describe(self, prompt: str, images: Sequence[FrameRef]) -> str:
        if images:
            first, last = images[0], images[-1]
            where = f"video {first.video_id} frames {first.frame_index}-{last.frame_index}"
        else:
            where = "an unspecified segment"
        flavor = _MOCK_NORMALS[_stable_hash(where) % len(_MOCK_NORMALS)]
        return (
            f"Across {where} the activity unfolds gradually with no sudden interruption; "
            f"the foreground shows {flavor}; the background is a fixed outdoor walkway."
        )

    def _pick_lines(self, pool: list[str], prompt: str, count: int) -> str:
        start = _stable_hash(prompt) % len(pool)
        return "\n".join(f"- {pool[(start + i) % len(pool)]}" for i in range(count))

    def _merge(self, prompt: str) -> str:
        # Echo the first listed pattern as the cleaned merge.
        for line in prompt.splitlines():
            stripped = line.strip()
            if stripped.startswith("- "):
                return stripped[2:]
        return "a generic behavior pattern"

    def _assess(self, prompt: str) -> str:
        score = (_stable_hash(prompt) % 10000) / 10000.0
        return (
            f"SCORE: {score:.4f}\n"
            f"REASONING: the described behavior broadly matches the retrieved patterns."
        )


def _task_of(prompt: str) -> str:
    match = re.search(r"^TASK:\s*([A-Z_ ]+)$", prompt, flags=re.MULTILINE)
    if not match:
        return ""
    return match.group(1).split()[0]


PostFn = Callable[..., requests.Response]


def _post_with_retries(
    post: PostFn,
    url: str,
    payload: dict,
    headers: dict,
    max_retries: int,
    backoff: float,
    timeout: float,
) -> dict:
    last_error: Exception | None = None
    for attempt in range(max_retries):
        try:
            resp = post(url, json=payload, headers=headers, timeout=timeout)
            if resp.status_code in (429,) or resp.status_code >= 500:
                last_error = ClientError(f"HTTP {resp.status_code} from {url}")
            elif resp.status_code != 200:
                raise ClientError(f"HTTP {resp.status_code} from {url}: {resp.text[:200]}")
            else:
                return resp.json()
        except (requests.RequestException, ValueError) as exc:
            last_error = exc
        if attempt + 1 < max_retries:
            time.sleep(backoff * (2**attempt))
    raise ClientError(f"request to {url} failed after {max_retries} attempts: {last_error}")


def _image_part(ref: FrameRef, image_mode: str) -> dict:
    if ref.uri is None:
        raise ClientError(f"frame {ref.video_id}#{ref.frame_index} has no uri")
    if image_mode == "url":
        return {"type": "image_url", "image_url": {"url": ref.uri}}
    if image_mode == "base64":
        with open(ref.uri, "rb") as fh:
            data = base64.b64encode(fh.read()).decode("ascii")
        return {"type": "image_url", "image_url": {"url": f"data:image/jpeg;base64,{data}"}}
    raise ClientError(f"unknown image mode {image_mode!r}")


class HttpChatClient:
    """Chat client over the JSON wire protocol described above."""

    def __init__(
        self,
        base_url: str,
        api_key: str,
        model: str,
        image_mode: str = "url",
        max_retries: int = 3,
        backoff: float = 0.5,
        timeout: float = 120.0,
        post: PostFn | None = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.image_mode = image_mode
        self.max_retries = max_retries
        self.backoff = backoff
        self.timeout = timeout
        self._headers = {"Authorization": f"Bearer {api_key}"}
        self._post = post if post is not None else requests.Session().post

    @classmethod
    def from_env(cls, **kwargs) -> "HttpChatClient":
        base = os.environ.get(ENV_API_BASE)
        key = os.environ.get(ENV_API_KEY)
        model = os.environ.get(ENV_CHAT_MODEL)
        if not (base and key and model):
            raise ClientError(
                f"live chat client needs {ENV_API_BASE}, {ENV_API_KEY}, {ENV_CHAT_MODEL}"
            )
        return cls(base, key, model, **kwargs)

    def complete(
        self,
        prompt: str,
        images: Sequence[FrameRef] | None = None,
        temperature: float = 0.0,
    ) -> str:
        content: object = prompt
        if images:
            content = [{"type": "text", "text": prompt}] + [
                _image_part(ref, self.image_mode) for ref in images
            ]
        payload = {
            "model": self.model,
            "temperature": temperature,
            "messages": [{"role": "user", "content": content}],
        }
        doc = _post_with_retries(
            self._post,
            f"{self.base_url}/chat/completions",
            payload,
            self._headers,
            self.max_retries,
            self.backoff,
            self.timeout,
        )
        try:
            text = doc["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ClientError(f"malformed chat response: {exc}") from exc
        if not text:
            raise ClientError("chat model returned an empty response")
        return text


class HttpEmbeddingClient:
    """Embedding client over the JSON wire protocol described above."""

    def __init__(
        self,
        base_url: str,
        api_key: str,
        model: str,
        dim: int | None = None,
        max_retries: int = 3,
        backoff: float = 0.5,
        timeout: float = 60.0,
        post: PostFn | None = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.dim = dim if dim is not None else 0  # inferred on first call
        self.max_retries = max_retries
        self.backoff = backoff
        self.timeout = timeout
        self._headers = {"Authorization": f"Bearer {api_key}"}
        self._post = post if post is not None else requests.Session().post

    @classmethod
    def from_env(cls, **kwargs) -> "HttpEmbeddingClient":
        base = os.environ.get(ENV_API_BASE)
        key = os.environ.get(ENV_API_KEY)
        model = os.environ.get(ENV_EMBED_MODEL)
        if not (base and key and model):
            raise ClientError(
                f"live embedding client needs {ENV_API_BASE}, {ENV_API_KEY}, {ENV_EMBED_MODEL}"
            )
        return cls(base, key, model, **kwargs)

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ClientError("cannot embed empty text")
        payload = {"model": self.model, "input": text}
        doc = _post_with_retries(
            self._post,
            f"{self.base_url}/embeddings",
            payload,
            self._headers,
            self.max_retries,
            self.backoff,
            self.timeout,
        )
        try:
            vec = np.asarray(doc["data"][0]["embedding"], dtype=np.float64)
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ClientError(f"malformed embedding response: {exc}") from exc
        if vec.ndim != 1 or vec.size == 0:
            raise ClientError(f"malformed embedding vector of shape {vec.shape}")
        if self.dim == 0:
            self.dim = int(vec.size)
        elif vec.size != self.dim:
            raise ClientError(f"embedding dim changed: {vec.size} != {self.dim}")
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise ClientError("embedding model returned a zero vector")
        return vec / norm
