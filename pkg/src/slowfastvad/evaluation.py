"""Frame-level micro/macro ROC-AUC and machine-readable reports.

AUC is the tie-corrected Mann-Whitney statistic: micro concatenates every
test frame into one sequence, macro averages per-video AUCs and skips (but
reports) videos whose labels are single-class.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .fusion import FusedSeries
from .ingest import GroundTruth


class SingleClassError(ValueError):
    """AUC is undefined when only one label class is present."""


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Frame-level ROC AUC with 0.5 credit for score ties."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError(f"shape mismatch: scores {scores.shape}, labels {labels.shape}")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise SingleClassError(f"labels contain a single class ({n_pos} positives)")
    return float(kernels.rank_auc(scores, labels))


def micro_auc(pairs: Sequence[tuple[FusedSeries, GroundTruth]]) -> float:
    """AUC over all test frames of every video merged into one sequence."""
    scores = np.concatenate([f.fused for f, _ in pairs])
    labels = np.concatenate([t.labels for _, t in pairs])
    return roc_auc(scores, labels)


def macro_auc(
    pairs: Sequence[tuple[FusedSeries, GroundTruth]]
) -> tuple[float, list[tuple[str, float | None]]]:
    """Unweighted mean of per-video AUCs; single-class videos are skipped.

    Returns (macro value, per-video list with None marking skipped videos).
    """
    per_video: list[tuple[str, float | None]] = []
    values = []
    for fused, truth in pairs:
        try:
            auc = roc_auc(fused.fused, truth.labels)
            values.append(auc)
            per_video.append((fused.video_id, auc))
        except SingleClassError:
            per_video.append((fused.video_id, None))
    if not values:
        raise SingleClassError("every video is single-class; macro AUC undefined")
    return float(np.mean(values)), per_video


@dataclass(frozen=True)
class EvalReport:
    micro_auc: float
    macro_auc: float
    per_video: tuple[tuple[str, float | None], ...]
    n_frames: int
    n_videos: int
    n_skipped: int
    config_echo: dict

    def to_dict(self) -> dict:
        return {
            "micro_auc": self.micro_auc,
            "macro_auc": self.macro_auc,
            "per_video": [
                {"video_id": v, "auc": auc, "skipped": auc is None}
                for v, auc in self.per_video
            ],
            "counts": {
                "frames": self.n_frames,
                "videos": self.n_videos,
                "skipped_videos": self.n_skipped,
            },
            "config": self.config_echo,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


def pair_with_truth(
    fused_list: Sequence[FusedSeries], truth: Sequence[GroundTruth]
) -> list[tuple[FusedSeries, GroundTruth]]:
    truth_by_id = {t.video_id: t for t in truth}
    pairs = []
    for fused in fused_list:
        t = truth_by_id.get(fused.video_id)
        if t is None:
            raise ValueError(f"no labels for video {fused.video_id!r}")
        if len(t.labels) != len(fused.fused):
            raise ValueError(
                f"video {fused.video_id!r}: {len(t.labels)} labels vs "
                f"{len(fused.fused)} fused frames"
            )
        pairs.append((fused, t))
    return pairs


def evaluate_dataset(
    fused_list: Sequence[FusedSeries],
    truth: Sequence[GroundTruth],
    config_echo: dict | None = None,
) -> EvalReport:
    """Micro and macro AUC over a full detection run."""
    if not fused_list:
        raise ValueError("no fused series to evaluate")
    pairs = pair_with_truth(fused_list, truth)
    micro = micro_auc(pairs)
    macro, per_video = macro_auc(pairs)
    return EvalReport(
        micro_auc=micro,
        macro_auc=macro,
        per_video=tuple(per_video),
        n_frames=int(sum(len(t.labels) for _, t in pairs)),
        n_videos=len(pairs),
        n_skipped=sum(1 for _, auc in per_video if auc is None),
        config_echo=config_echo or {},
    )


def write_curves(
    directory: str | Path,
    fused_list: Sequence[FusedSeries],
    truth: Sequence[GroundTruth],
) -> None:
    """Per-video ``frame_index,fused,label`` CSVs for external plotting."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    truth_by_id = {t.video_id: t for t in truth}
    for fused in fused_list:
        labels = truth_by_id[fused.video_id].labels
        with open(directory / f"{fused.video_id}.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frame_index", "fused", "label"])
            for i, (score, label) in enumerate(zip(fused.fused, labels)):
                writer.writerow([i, repr(float(score)), int(label)])


@dataclass(frozen=True)
class AblationRow:
    """One rung of the component ladder."""

    name: str
    entropy_gating: bool
    integration: bool
    rag: bool


ABLATION_LADDER = (
    AblationRow("baseline", entropy_gating=False, integration=False, rag=False),
    AblationRow("intervention", entropy_gating=True, integration=False, rag=False),
    AblationRow("intervention+integration", entropy_gating=True, integration=True, rag=False),
    AblationRow("full", entropy_gating=True, integration=True, rag=True),
)


def run_ablation(test_series, truth, kb, chat, embedder, templates, cfg):
    """Run the four-row component ladder, one report per row.

    Rows without entropy gating select windows periodically only; rows
    without integration replace the fast score on covered frames (weight 1)
    and skip the final smoothing; rows without RAG assess with an empty
    knowledge section. Returns [(row, EvalReport), ...] in ladder order.
    """
    from dataclasses import replace as dc_replace

    from .pipeline import detect_dataset

    reports = []
    for row in ABLATION_LADDER:
        gate = cfg.gate if row.entropy_gating else dc_replace(cfg.gate, theta="inf")
        fusion_cfg = (
            cfg.fusion if row.integration else dc_replace(cfg.fusion, alpha=1.0)
        )
        row_cfg = dc_replace(cfg, gate=gate, fusion=fusion_cfg, rag=row.rag)
        result = detect_dataset(
            test_series,
            kb,
            chat,
            embedder,
            templates,
            row_cfg,
            apply_smoothing=row.integration,
        )
        echo = row_cfg.echo()
        echo["ablation_row"] = row.name
        reports.append((row, evaluate_dataset(result.fused, truth, echo)))
    return reports
