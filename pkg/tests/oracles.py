"""Independent brute-force oracles the tests check the package against.

Everything here is deliberately written the slow, literal way (explicit bin
edges, direct convolution sums, O(P*N) pair counting, list-based replay of
the merge rule) and shares no code with the package implementations.
"""

from __future__ import annotations

import math


def literal_window_entropy(window, n_bins: int) -> float:
    """Per-sample histogram entropy, evaluated term by term with bin edges."""
    m = len(window)
    lo = min(window)
    hi = max(window)
    if hi == lo:
        return 0.0
    width = (hi - lo) / n_bins
    edges = [lo + k * width for k in range(n_bins + 1)]

    def bin_of(x: float) -> int:
        for k in range(n_bins - 1):
            if edges[k] <= x < edges[k + 1]:
                return k
        return n_bins - 1  # last bin is closed

    counts = [0] * n_bins
    for x in window:
        counts[bin_of(x)] += 1
    h = 0.0
    for x in window:
        p = counts[bin_of(x)] / m
        h -= p * math.log2(p)
    return h


def per_bin_window_entropy(window, n_bins: int) -> float:
    """Conventional Shannon entropy over the same histogram."""
    m = len(window)
    lo = min(window)
    hi = max(window)
    if hi == lo:
        return 0.0
    width = (hi - lo) / n_bins
    counts = [0] * n_bins
    for x in window:
        k = n_bins - 1
        for b in range(n_bins - 1):
            if lo + b * width <= x < lo + (b + 1) * width:
                k = b
                break
        counts[k] += 1
    h = 0.0
    for c in counts:
        if c:
            h -= (c / m) * math.log2(c / m)
    return h


def direct_gaussian_smooth(values, sigma: float) -> list[float]:
    """Direct convolution sum with clamped indices and renormalized weights."""
    z = math.ceil(3.0 * sigma)
    raw = [
        math.exp(-(j * j) / (2.0 * sigma * sigma)) / math.sqrt(2.0 * math.pi * sigma * sigma)
        for j in range(-z, z + 1)
    ]
    total = sum(raw)
    weights = [w / total for w in raw]
    n = len(values)
    out = []
    for i in range(n):
        acc = 0.0
        for j in range(-z, z + 1):
            k = min(max(i + j, 0), n - 1)
            acc += values[k] * weights[j + z]
        out.append(acc)
    return out


def pairwise_auc(scores, labels) -> float:
    """O(P*N) Mann-Whitney count: wins plus half-credit for ties."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def cosine(a, b) -> float:
    num = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    return num / (na * nb)


def brute_force_topk(query, embeddings, k: int):
    """Full sort by (similarity desc, insertion order asc); prefix of k."""
    sims = [cosine(query, e) for e in embeddings]
    order = sorted(range(len(embeddings)), key=lambda i: (-sims[i], i))
    return [(i, sims[i]) for i in order[:k]]


class ReplayEntry:
    def __init__(self, text: str, embedding, merged_count: int) -> None:
        self.text = text
        self.embedding = embedding
        self.merged_count = merged_count


def _medoid(texts, embed_fn):
    if len(texts) == 1:
        return texts[0]
    embs = [embed_fn(t) for t in texts]
    best_i, best_mean = 0, -math.inf
    for i in range(len(texts)):
        sims = [cosine(embs[i], embs[j]) for j in range(len(texts)) if j != i]
        mean = sum(sims) / len(sims)
        if mean > best_mean:
            best_i, best_mean = i, mean
    return texts[best_i]


def sequential_merge_replay(texts, tau: float, embed_fn) -> list[ReplayEntry]:
    """Replay the insert-and-merge rule over one (scene, label) partition.

    Each incoming text is compared against the current entries; any entry at
    or above tau is absorbed (texts aggregated to the medoid, re-embedded)
    and the merged candidate is re-checked until it is dissimilar to all
    survivors, then appended.
    """
    entries: list[ReplayEntry] = []
    for text in texts:
        candidate = ReplayEntry(text, embed_fn(text), 1)
        while True:
            cluster = [
                e for e in entries if cosine(candidate.embedding, e.embedding) >= tau
            ]
            if not cluster:
                entries.append(candidate)
                break
            merged_texts = [e.text for e in cluster] + [candidate.text]
            merged_text = _medoid(merged_texts, embed_fn)
            merged_count = candidate.merged_count + sum(e.merged_count for e in cluster)
            entries = [e for e in entries if e not in cluster]
            candidate = ReplayEntry(merged_text, embed_fn(merged_text), merged_count)
    return entries
