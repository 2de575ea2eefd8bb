"""Per-scene store of normal/abnormal behavior patterns with embeddings.

Near-duplicate patterns inserted into the same (scene, label) partition are
merged through a text aggregator and re-embedded, so a completed build leaves
every partition with all pairwise similarities below the merge threshold.
Retrieval is exact top-k cosine over the store.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

KB_SCHEMA_VERSION = 1

NORMAL = "normal"
ABNORMAL = "abnormal"

Aggregator = Callable[[Sequence[str]], str]


class KnowledgeBaseError(ValueError):
    """Invalid pattern data, store state, or persisted file."""


class Embedder(Protocol):
    def embed(self, text: str) -> np.ndarray: ...


@dataclass(frozen=True)
class Pattern:
    """One behavior rule with its label, scene scope, and embedding."""

    id: str
    scene_id: str
    label: str
    text: str
    embedding: np.ndarray
    merged_count: int = 1

    def __post_init__(self) -> None:
        if self.label not in (NORMAL, ABNORMAL):
            raise KnowledgeBaseError(f"bad label {self.label!r}")
        if not self.text:
            raise KnowledgeBaseError("pattern text must be non-empty")
        if self.merged_count < 1:
            raise KnowledgeBaseError("merged_count must be >= 1")
        emb = np.asarray(self.embedding, dtype=np.float64)
        emb.setflags(write=False)
        object.__setattr__(self, "embedding", emb)
        norm = float(np.linalg.norm(emb))
        if abs(norm - 1.0) > 1e-9:
            raise KnowledgeBaseError(f"embedding not unit-normalized (norm={norm!r})")


@dataclass
class KnowledgeBase:
    """Ordered pattern store; insertion order breaks retrieval ties."""

    embed_dim: int
    entries: list[Pattern] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    _next_id: int = 0

    def add(self, pattern: Pattern) -> Pattern:
        """Append a pattern, assigning an id if it has none."""
        if pattern.embedding.shape != (self.embed_dim,):
            raise KnowledgeBaseError(
                f"embedding dim {pattern.embedding.shape} != store dim {self.embed_dim}"
            )
        if not pattern.id:
            pattern = replace(pattern, id=f"p{self._next_id:06d}")
            self._next_id += 1
        self.entries.append(pattern)
        return pattern

    def partition(self, scene_id: str, label: str) -> list[Pattern]:
        return [e for e in self.entries if e.scene_id == scene_id and e.label == label]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class RetrievedKnowledge:
    """Top-k retrieval result: (pattern, label, similarity), best first."""

    items: tuple[tuple[Pattern, str, float], ...]

    def __post_init__(self) -> None:
        sims = [sim for _, _, sim in self.items]
        if any(a < b for a, b in zip(sims, sims[1:])):
            raise KnowledgeBaseError("similarities must be non-increasing")

    def __len__(self) -> int:
        return len(self.items)


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two non-zero vectors of equal dimension."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise KnowledgeBaseError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise KnowledgeBaseError("cosine similarity undefined for zero vector")
    return float(np.dot(a, b) / (na * nb))


def insert_with_aggregation(
    pattern: Pattern,
    kb: KnowledgeBase,
    tau: float,
    aggregator: Aggregator,
    embedder: Embedder,
) -> Pattern:
    """Insert a pattern, merging it with near-duplicates of its partition.

    Existing same-(scene, label) entries whose similarity to the candidate
    reaches ``tau`` are removed and folded into one aggregated pattern (their
    texts plus the candidate's, cleaned by ``aggregator`` and re-embedded).
    The merge repeats until the surviving candidate is below ``tau`` against
    everything left, so the partition's pairwise similarities stay < tau.
    Merged counts accumulate, conserving the raw insert count.
    """
    if not 0.0 < tau <= 1.0:
        raise KnowledgeBaseError(f"tau must be in (0, 1], got {tau}")
    candidate = pattern
    while True:
        part = kb.partition(candidate.scene_id, candidate.label)
        cluster = [e for e in part if cosine_sim(candidate.embedding, e.embedding) >= tau]
        if not cluster:
            return kb.add(candidate)
        texts = [e.text for e in cluster] + [candidate.text]
        merged_text = aggregator(texts)
        merged_emb = embedder.embed(merged_text)
        merged_count = candidate.merged_count + sum(e.merged_count for e in cluster)
        removed = {id(e) for e in cluster}
        kb.entries = [e for e in kb.entries if id(e) not in removed]
        candidate = Pattern(
            id="",
            scene_id=candidate.scene_id,
            label=candidate.label,
            text=merged_text,
            embedding=merged_emb,
            merged_count=merged_count,
        )


def build_scene_set(
    normals: Sequence[Pattern],
    abnormals: Sequence[Pattern],
    tau: float,
    aggregator: Aggregator,
    embedder: Embedder,
    kb: KnowledgeBase | None = None,
) -> KnowledgeBase:
    """Refine one scene's raw patterns into the store, normals first.

    Labels never merge across each other; the scene's final set is the union
    of both refined partitions.
    """
    patterns = list(normals) + list(abnormals)
    scenes = {p.scene_id for p in patterns}
    if len(scenes) > 1:
        raise KnowledgeBaseError(f"patterns span multiple scenes: {sorted(scenes)}")
    if kb is None:
        if not patterns:
            raise KnowledgeBaseError("cannot infer embedding dim from empty pattern set")
        kb = KnowledgeBase(embed_dim=patterns[0].embedding.size)
    for p in normals:
        insert_with_aggregation(p, kb, tau, aggregator, embedder)
    for p in abnormals:
        insert_with_aggregation(p, kb, tau, aggregator, embedder)
    return kb


def retrieve_topk(
    query: np.ndarray,
    kb: KnowledgeBase,
    k: int,
    scene: str | None = None,
) -> RetrievedKnowledge:
    """The k entries most cosine-similar to the query, best first.

    Restricted to one scene when given; ties break toward earlier insertion.
    Returns fewer than k items when the (filtered) store is smaller.
    """
    if k < 1:
        raise KnowledgeBaseError(f"k must be >= 1, got {k}")
    if not kb.entries:
        raise KnowledgeBaseError("knowledge base is empty")
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (kb.embed_dim,):
        raise KnowledgeBaseError(
            f"query dim {query.shape} != store dim {kb.embed_dim}"
        )
    qn = float(np.linalg.norm(query))
    if qn == 0.0:
        raise KnowledgeBaseError("cosine similarity undefined for zero vector")
    pool = kb.entries if scene is None else [e for e in kb.entries if e.scene_id == scene]
    if not pool:
        return RetrievedKnowledge(items=())
    unit_query = query / qn
    # Per-entry dot products keep equal embeddings bitwise-tied, so the
    # stable sort below really does break ties by insertion order.
    sims = np.array([np.dot(e.embedding, unit_query) for e in pool])
    order = np.argsort(-sims, kind="stable")[:k]
    return RetrievedKnowledge(
        items=tuple((pool[i], pool[i].label, float(sims[i])) for i in order)
    )


def medoid_aggregator(embedder: Embedder) -> Aggregator:
    """Deterministic aggregator: keep the text closest on average to the rest.

    Ties resolve to the earliest text, which is the oldest entry of the
    cluster under the insertion-ordered merge.
    """

    def aggregate(texts: Sequence[str]) -> str:
        if not texts:
            raise KnowledgeBaseError("nothing to aggregate")
        if len(texts) == 1:
            return texts[0]
        embs = [embedder.embed(t) for t in texts]
        best_i, best_mean = 0, -np.inf
        for i in range(len(texts)):
            mean = float(
                np.mean([cosine_sim(embs[i], embs[j]) for j in range(len(texts)) if j != i])
            )
            if mean > best_mean:
                best_i, best_mean = i, mean
        return texts[best_i]

    return aggregate


def persist(kb: KnowledgeBase, path: str | Path) -> None:
    """Write the store as a single JSON document (lossless embeddings)."""
    doc = {
        "version": KB_SCHEMA_VERSION,
        "embed_dim": kb.embed_dim,
        "provenance": kb.provenance,
        "entries": [
            {
                "id": e.id,
                "scene_id": e.scene_id,
                "label": e.label,
                "text": e.text,
                "embedding": [float(v) for v in e.embedding],
                "merged_count": e.merged_count,
            }
            for e in kb.entries
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load(path: str | Path, expect_dim: int | None = None) -> KnowledgeBase:
    """Load a persisted store, checking schema version and dimension."""
    path = Path(path)
    if not path.exists():
        raise KnowledgeBaseError(f"knowledge base file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        version = doc["version"]
        embed_dim = int(doc["embed_dim"])
        raw_entries = doc["entries"]
        provenance = doc.get("provenance", {})
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise KnowledgeBaseError(f"corrupt knowledge base file {path}: {exc}") from exc
    if version != KB_SCHEMA_VERSION:
        raise KnowledgeBaseError(
            f"{path}: schema version {version} != supported {KB_SCHEMA_VERSION}"
        )
    if expect_dim is not None and embed_dim != expect_dim:
        raise KnowledgeBaseError(
            f"{path}: embedding dim {embed_dim} != configured {expect_dim}"
        )
    kb = KnowledgeBase(embed_dim=embed_dim, provenance=provenance)
    for raw in raw_entries:
        try:
            pattern = Pattern(
                id=raw["id"],
                scene_id=raw["scene_id"],
                label=raw["label"],
                text=raw["text"],
                embedding=np.array(raw["embedding"], dtype=np.float64),
                merged_count=int(raw["merged_count"]),
            )
        except (KeyError, TypeError) as exc:
            raise KnowledgeBaseError(f"corrupt entry in {path}: {exc}") from exc
        if pattern.embedding.shape != (embed_dim,):
            raise KnowledgeBaseError(
                f"{path}: entry {pattern.id!r} has dim {pattern.embedding.size}, "
                f"file header says {embed_dim}"
            )
        kb.entries.append(pattern)
    suffixes = [
        int(e.id[1:]) for e in kb.entries if e.id.startswith("p") and e.id[1:].isdigit()
    ]
    kb._next_id = max(suffixes) + 1 if suffixes else len(kb.entries)
    return kb
