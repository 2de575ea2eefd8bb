"""Command-line entry point wiring every stage of the pipeline.

Subcommands: ``build-kb``, ``detect``, ``evaluate``, ``ablate``, and ``run``
(detect + evaluate). Flag values override config-file values; the effective
configuration is echoed into every report. Exit codes: 0 success, 1 runtime
failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import evaluation, fusion, knowledge_base
from .clients import (
    ClientError,
    HashEmbeddingClient,
    HttpChatClient,
    HttpEmbeddingClient,
    MockChatClient,
)
from .config import ConfigError, PipelineConfig, apply_overrides, load_config
from .entropy_gate import write_selections_csv
from .ingest import IngestError, load_labels, load_scores, validate_alignment
from .pipeline import detect_dataset
from .prompts import PromptTemplates
from .slow_detector import build_kb

log = logging.getLogger(__name__)

CONFIG_KEYS_HELP = """\
config file keys (TOML):
  top level:  seed, rag
  [gate]      n, bins, sigma, theta, period
  [kb]        tau, top_k, path
  [fusion]    alpha, smooth_sigma
  [clients]   mock, chat_model, embed_model, api_base, image_mode, embed_dim,
              describe_temperature, train_temperature, assess_temperature,
              max_inflight
  [data]      scores, labels, frames_root, train_scores, out_dir,
              templates_dir, train_sample_interval
environment:  SLOWFAST_API_KEY, SLOWFAST_API_BASE, SLOWFAST_CHAT_MODEL,
              SLOWFAST_EMBED_MODEL, SLOWFAST_DISABLE_NUMBA
"""


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception) -> None:
        super().__init__(f"[{stage}] {cause}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slowfastvad",
        description=__doc__,
        epilog=CONFIG_KEYS_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--config", help="TOML config file; flags override it")
    parser.add_argument("--mock", action="store_true", default=None,
                        help="use the deterministic mock chat/embedding clients")
    parser.add_argument("--seed", type=int, help="seed for all randomness")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--scores", help="test fast-detector scores (CSV/JSONL)")
        p.add_argument("--labels", help="frame-level ground-truth labels (CSV/JSONL)")
        p.add_argument("--frames-root", help="prefix for frame image URIs")
        p.add_argument("--kb", dest="kb_path", help="knowledge base JSON path")
        p.add_argument("--tau", type=float, help="pattern merge threshold")
        p.add_argument("--topk", type=int, dest="top_k", help="retrieved patterns per query")
        p.add_argument("--window-n", type=int, dest="gate_n", help="window size in frames")
        p.add_argument("--bins", type=int, dest="gate_bins", help="histogram bin count")
        p.add_argument("--sigma", type=float, dest="gate_sigma",
                       help="entropy smoothing std-dev (windows)")
        p.add_argument("--theta", dest="gate_theta",
                       help="entropy threshold: absolute value, inf, or pNN percentile")
        p.add_argument("--period-t", type=int, dest="gate_period",
                       help="periodic sampling interval in windows (0 disables)")
        p.add_argument("--alpha", type=float, dest="fusion_alpha", help="slow-score weight")
        p.add_argument("--smooth-sigma", type=float, dest="fusion_smooth_sigma",
                       help="final smoothing std-dev (frames)")
        p.add_argument("--max-inflight", type=int, help="outstanding slow requests")
        p.add_argument("--no-rag", action="store_true", default=None,
                       help="assess without knowledge retrieval")
        p.add_argument("--out-dir", help="directory for fused curves and selections")
        p.add_argument("--report", help="write the JSON report here instead of stdout")
        p.add_argument("--curves", help="directory for per-video fused/label curves")
        p.add_argument("--templates-dir", help="directory of prompt template overrides")

    p_build = sub.add_parser("build-kb", help="build the pattern knowledge base")
    add_common(p_build)
    p_build.add_argument("--train-scores", help="training (normal) score streams")
    p_build.add_argument("--train-interval", type=int, dest="train_sample_interval",
                         help="sample one window per this many windows of training video")

    for name, blurb in (
        ("detect", "gate, assess, and fuse the test set"),
        ("evaluate", "micro/macro AUC of fused curves against labels"),
        ("ablate", "run the four-row component ladder"),
        ("run", "detect then evaluate in one pass"),
    ):
        p = sub.add_parser(name, help=blurb)
        add_common(p)
        if name == "ablate":
            p.add_argument("--train-scores", help="training (normal) score streams")
    return parser


def _effective_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    overrides = {
        key: getattr(args, key, None)
        for key in (
            "seed",
            "mock",
            "scores",
            "labels",
            "frames_root",
            "kb_path",
            "tau",
            "top_k",
            "gate_n",
            "gate_bins",
            "gate_sigma",
            "gate_theta",
            "gate_period",
            "fusion_alpha",
            "fusion_smooth_sigma",
            "max_inflight",
            "out_dir",
            "report",
            "curves",
            "templates_dir",
            "train_scores",
            "train_sample_interval",
        )
    }
    if getattr(args, "no_rag", None):
        overrides["rag"] = False
    return apply_overrides(cfg, **overrides)


def make_clients(cfg: PipelineConfig):
    if cfg.mock:
        return MockChatClient(), HashEmbeddingClient()
    chat_kwargs = {"image_mode": cfg.image_mode}
    if cfg.api_base and cfg.chat_model:
        import os

        key = os.environ.get("SLOWFAST_API_KEY", "")
        if not key:
            raise ClientError("SLOWFAST_API_KEY is not set")
        chat = HttpChatClient(cfg.api_base, key, cfg.chat_model, **chat_kwargs)
        if not cfg.embed_model:
            raise ClientError("embed_model is required for live runs")
        embedder = HttpEmbeddingClient(cfg.api_base, key, cfg.embed_model, dim=cfg.embed_dim)
        return chat, embedder
    return HttpChatClient.from_env(**chat_kwargs), HttpEmbeddingClient.from_env(dim=cfg.embed_dim)


def _templates(cfg: PipelineConfig) -> PromptTemplates:
    if cfg.templates_dir:
        return PromptTemplates.from_dir(cfg.templates_dir)
    return PromptTemplates.default()


def _emit_report(doc: dict | list, path: str | None) -> None:
    text = json.dumps(doc, indent=1) + "\n"
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_build_kb(cfg: PipelineConfig) -> None:
    if not cfg.train_scores:
        raise ConfigError("build-kb needs --train-scores")
    if not cfg.kb_path:
        raise ConfigError("build-kb needs --kb to know where to write")
    try:
        train = load_scores(cfg.train_scores)
    except IngestError as exc:
        raise StageError("ingest", exc) from exc
    chat, embedder = make_clients(cfg)
    templates = _templates(cfg)
    provenance = {
        "chat_model": "mock" if cfg.mock else cfg.chat_model,
        "embed_model": "mock" if cfg.mock else cfg.embed_model,
        "seed": cfg.seed,
    }
    if not cfg.mock:
        provenance["created"] = datetime.now(timezone.utc).isoformat()
    kb = knowledge_base.KnowledgeBase(embed_dim=embedder.dim or 0, provenance=provenance)
    try:
        build_kb(
            train,
            chat,
            embedder,
            templates,
            kb,
            window_n=cfg.gate.n,
            sample_interval=cfg.train_sample_interval,
            seed=cfg.seed,
            tau=cfg.tau,
            frames_root=cfg.frames_root,
            describe_temperature=cfg.describe_temperature,
            train_temperature=cfg.train_temperature,
        )
    except (ClientError, knowledge_base.KnowledgeBaseError) as exc:
        raise StageError("build-kb", exc) from exc
    if kb.embed_dim == 0 and kb.entries:
        kb.embed_dim = kb.entries[0].embedding.size
    Path(cfg.kb_path).parent.mkdir(parents=True, exist_ok=True)
    knowledge_base.persist(kb, cfg.kb_path)
    stats: dict[str, dict[str, int]] = {}
    for e in kb.entries:
        bucket = stats.setdefault(e.scene_id, {"normal": 0, "abnormal": 0, "merged": 0})
        bucket[e.label] += 1
        bucket["merged"] += e.merged_count - 1
    print(f"knowledge base written to {cfg.kb_path}: {len(kb)} patterns")
    for scene in sorted(stats):
        s = stats[scene]
        print(
            f"  {scene}: {s['normal']} normal, {s['abnormal']} abnormal "
            f"({s['merged']} raw patterns absorbed by merges)"
        )


def _load_test_data(cfg: PipelineConfig, need_labels: bool):
    if not cfg.scores:
        raise ConfigError("need --scores")
    try:
        series = load_scores(cfg.scores)
        if not series:
            raise IngestError(f"test set is empty: {cfg.scores}")
        truth = None
        if cfg.labels:
            truth = load_labels(cfg.labels)
            validate_alignment(series, truth)
        elif need_labels:
            raise ConfigError("need --labels")
    except IngestError as exc:
        raise StageError("ingest", exc) from exc
    return series, truth


def _run_detection(cfg: PipelineConfig):
    series, truth = _load_test_data(cfg, need_labels=False)
    kb = None
    if cfg.rag:
        if not cfg.kb_path:
            raise ConfigError("detection with RAG needs --kb (or --no-rag)")
        try:
            kb = knowledge_base.load(cfg.kb_path, expect_dim=cfg.embed_dim)
        except knowledge_base.KnowledgeBaseError as exc:
            raise StageError("knowledge-base", exc) from exc
    chat, embedder = make_clients(cfg)
    try:
        result = detect_dataset(series, kb, chat, embedder, _templates(cfg), cfg)
    except (ClientError, knowledge_base.KnowledgeBaseError) as exc:
        raise StageError("detect", exc) from exc
    return series, truth, result


def _write_detection_outputs(cfg: PipelineConfig, series, result) -> None:
    if not cfg.out_dir:
        return
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_id = {s.video_id: s for s in series}
    for fused in result.fused:
        fusion.write_fused_csv(
            out / f"fused_{fused.video_id}.csv",
            by_id[fused.video_id],
            fused,
            result.slow_tracks[fused.video_id],
        )
    fusion.write_explanations_json(result.fused, out / "explanations.json")
    all_selections = [sel for vid in sorted(result.selections) for sel in result.selections[vid]]
    write_selections_csv(all_selections, out / "selections.csv")


def cmd_detect(cfg: PipelineConfig) -> None:
    series, _truth, result = _run_detection(cfg)
    _write_detection_outputs(cfg, series, result)
    print(
        f"intervention rate: {result.intervention_rate:.4f} "
        f"({result.n_selected}/{result.n_windows} windows)"
    )


def cmd_evaluate(cfg: PipelineConfig) -> None:
    if not cfg.out_dir:
        raise ConfigError("evaluate reads fused curves from --out-dir")
    if not cfg.labels:
        raise ConfigError("evaluate needs --labels")
    try:
        truth = load_labels(cfg.labels)
    except IngestError as exc:
        raise StageError("ingest", exc) from exc
    fused_list = []
    for path in sorted(Path(cfg.out_dir).glob("fused_*.csv")):
        video_id = path.stem[len("fused_") :]
        values = fusion.read_fused_csv(path)
        fused_list.append(
            fusion.FusedSeries(video_id, values, np.zeros(values.size, dtype=bool))
        )
    if not fused_list:
        raise StageError("evaluate", ValueError(f"no fused_*.csv under {cfg.out_dir}"))
    try:
        report = evaluation.evaluate_dataset(fused_list, truth, cfg.echo())
    except (ValueError, evaluation.SingleClassError) as exc:
        raise StageError("evaluate", exc) from exc
    if cfg.curves:
        evaluation.write_curves(cfg.curves, fused_list, truth)
    _emit_report(report.to_dict(), cfg.report)


def cmd_run(cfg: PipelineConfig) -> None:
    series, truth, result = _run_detection(cfg)
    if truth is None:
        raise ConfigError("run needs --labels")
    _write_detection_outputs(cfg, series, result)
    try:
        report = evaluation.evaluate_dataset(result.fused, truth, cfg.echo())
    except (ValueError, evaluation.SingleClassError) as exc:
        raise StageError("evaluate", exc) from exc
    if cfg.curves:
        evaluation.write_curves(cfg.curves, result.fused, truth)
    _emit_report(report.to_dict(), cfg.report)


def cmd_ablate(cfg: PipelineConfig) -> None:
    series, truth = _load_test_data(cfg, need_labels=True)
    if not cfg.kb_path:
        raise ConfigError("ablate needs --kb for its full row")
    try:
        kb = knowledge_base.load(cfg.kb_path, expect_dim=cfg.embed_dim)
    except knowledge_base.KnowledgeBaseError as exc:
        raise StageError("knowledge-base", exc) from exc
    chat, embedder = make_clients(cfg)
    try:
        rows = evaluation.run_ablation(series, truth, kb, chat, embedder, _templates(cfg), cfg)
    except (ClientError, knowledge_base.KnowledgeBaseError, ValueError) as exc:
        raise StageError("ablate", exc) from exc
    _emit_report([{"row": row.name, **report.to_dict()} for row, report in rows], cfg.report)


_COMMANDS = {
    "build-kb": cmd_build_kb,
    "detect": cmd_detect,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "run": cmd_run,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _effective_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error {exc}", file=sys.stderr)
        return 1
    except (ClientError, IngestError, knowledge_base.KnowledgeBaseError) as exc:
        print(f"error [{args.command}] {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
