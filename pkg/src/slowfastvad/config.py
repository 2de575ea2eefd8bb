"""Pipeline configuration: one dataclass holding every knob.

Configs load from a TOML file (flat keys grouped into sections) and can be
overridden by CLI flags. Unknown keys are rejected so typos fail loudly, and
secrets (the API key) only ever come from the environment.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .entropy_gate import GateConfig
from .fusion import FusionConfig


class ConfigError(ValueError):
    """Unknown key, bad value, or unreadable config file."""


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    mock: bool = False
    rag: bool = True
    gate: GateConfig = GateConfig()
    tau: float = 0.85
    top_k: int = 6
    fusion: FusionConfig = FusionConfig()
    train_sample_interval: int = 20
    describe_temperature: float = 0.01
    train_temperature: float = 1.1
    assess_temperature: float = 0.7
    max_inflight: int = 4
    image_mode: str = "url"
    embed_dim: int | None = None
    chat_model: str | None = None
    embed_model: str | None = None
    api_base: str | None = None
    scores: str | None = None
    labels: str | None = None
    frames_root: str | None = None
    train_scores: str | None = None
    kb_path: str | None = None
    out_dir: str | None = None
    report: str | None = None
    curves: str | None = None
    templates_dir: str | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau must be in (0, 1], got {self.tau}")
        if self.top_k < 1:
            raise ConfigError(f"top_k must be >= 1, got {self.top_k}")
        if self.train_sample_interval < 1:
            raise ConfigError("train_sample_interval must be >= 1")
        if self.max_inflight < 1:
            raise ConfigError(f"max_inflight must be >= 1, got {self.max_inflight}")
        if self.image_mode not in ("url", "base64"):
            raise ConfigError(f"image_mode must be url or base64, got {self.image_mode!r}")

    def echo(self) -> dict:
        """Effective configuration for report embedding (no secrets)."""
        return {
            "seed": self.seed,
            "mock": self.mock,
            "rag": self.rag,
            "gate": {
                "n": self.gate.n,
                "bins": self.gate.bins,
                "sigma": self.gate.sigma,
                "theta": self.gate.theta,
                "period": self.gate.period,
            },
            "kb": {"tau": self.tau, "top_k": self.top_k, "path": self.kb_path},
            "fusion": {
                "alpha": self.fusion.alpha,
                "smooth_sigma": self.fusion.smooth_sigma,
            },
            "clients": {
                "chat_model": self.chat_model,
                "embed_model": self.embed_model,
                "api_base": self.api_base,
                "image_mode": self.image_mode,
                "embed_dim": self.embed_dim,
                "describe_temperature": self.describe_temperature,
                "train_temperature": self.train_temperature,
                "assess_temperature": self.assess_temperature,
                "max_inflight": self.max_inflight,
            },
            "data": {
                "scores": self.scores,
                "labels": self.labels,
                "frames_root": self.frames_root,
                "train_scores": self.train_scores,
                "out_dir": self.out_dir,
                "templates_dir": self.templates_dir,
            },
            "train_sample_interval": self.train_sample_interval,
        }


_TOP_KEYS = {"seed", "rag"}
_SECTION_KEYS = {
    "gate": {"n", "bins", "sigma", "theta", "period"},
    "kb": {"tau", "top_k", "path"},
    "fusion": {"alpha", "smooth_sigma"},
    "clients": {
        "mock",
        "chat_model",
        "embed_model",
        "api_base",
        "image_mode",
        "embed_dim",
        "describe_temperature",
        "train_temperature",
        "assess_temperature",
        "max_inflight",
    },
    "data": {
        "scores",
        "labels",
        "frames_root",
        "train_scores",
        "out_dir",
        "templates_dir",
        "train_sample_interval",
    },
}


def load_config(path: str | Path) -> PipelineConfig:
    """Parse a TOML config file into a PipelineConfig, rejecting unknown keys."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(doc, where=str(path))


def config_from_dict(doc: dict, where: str = "config") -> PipelineConfig:
    for key, value in doc.items():
        if key in _TOP_KEYS:
            continue
        if key in _SECTION_KEYS:
            if not isinstance(value, dict):
                raise ConfigError(f"{where}: section [{key}] must be a table")
            unknown = set(value) - _SECTION_KEYS[key]
            if unknown:
                raise ConfigError(f"{where}: unknown keys in [{key}]: {sorted(unknown)}")
        else:
            raise ConfigError(f"{where}: unknown key {key!r}")
    gate_raw = doc.get("gate", {})
    kb_raw = doc.get("kb", {})
    fusion_raw = doc.get("fusion", {})
    clients_raw = doc.get("clients", {})
    data_raw = doc.get("data", {})
    try:
        gate = GateConfig(
            n=int(gate_raw.get("n", 8)),
            bins=int(gate_raw.get("bins", 10)),
            sigma=float(gate_raw.get("sigma", 1.0)),
            theta=gate_raw.get("theta", "p75"),
            period=int(gate_raw.get("period", 10)),
        )
        fusion = FusionConfig(
            alpha=float(fusion_raw.get("alpha", 0.8)),
            smooth_sigma=float(fusion_raw.get("smooth_sigma", 2.0)),
        )
        embed_dim = clients_raw.get("embed_dim")
        return PipelineConfig(
            seed=int(doc.get("seed", 0)),
            rag=bool(doc.get("rag", True)),
            mock=bool(clients_raw.get("mock", False)),
            gate=gate,
            tau=float(kb_raw.get("tau", 0.85)),
            top_k=int(kb_raw.get("top_k", 6)),
            fusion=fusion,
            kb_path=kb_raw.get("path"),
            train_sample_interval=int(data_raw.get("train_sample_interval", 20)),
            describe_temperature=float(clients_raw.get("describe_temperature", 0.01)),
            train_temperature=float(clients_raw.get("train_temperature", 1.1)),
            assess_temperature=float(clients_raw.get("assess_temperature", 0.7)),
            max_inflight=int(clients_raw.get("max_inflight", 4)),
            image_mode=clients_raw.get("image_mode", "url"),
            embed_dim=int(embed_dim) if embed_dim is not None else None,
            chat_model=clients_raw.get("chat_model"),
            embed_model=clients_raw.get("embed_model"),
            api_base=clients_raw.get("api_base"),
            scores=data_raw.get("scores"),
            labels=data_raw.get("labels"),
            frames_root=data_raw.get("frames_root"),
            train_scores=data_raw.get("train_scores"),
            out_dir=data_raw.get("out_dir"),
            templates_dir=data_raw.get("templates_dir"),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: {exc}") from exc


def apply_overrides(cfg: PipelineConfig, **overrides) -> PipelineConfig:
    """Apply non-None flag values on top of a config.

    Gate and fusion fields are addressed as ``gate_n``, ``gate_bins``,
    ``gate_sigma``, ``gate_theta``, ``gate_period``, ``fusion_alpha``,
    ``fusion_smooth_sigma``.
    """
    gate_fields = {}
    fusion_fields = {}
    plain = {}
    for key, value in overrides.items():
        if value is None:
            continue
        if key.startswith("gate_"):
            gate_fields[key[len("gate_") :]] = value
        elif key.startswith("fusion_"):
            fusion_fields[key[len("fusion_") :]] = value
        else:
            plain[key] = value
    if gate_fields:
        if "theta" in gate_fields:
            gate_fields["theta"] = parse_theta_flag(gate_fields["theta"])
        plain["gate"] = replace(cfg.gate, **gate_fields)
    if fusion_fields:
        plain["fusion"] = replace(cfg.fusion, **fusion_fields)
    try:
        return replace(cfg, **plain)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def parse_theta_flag(raw: str | float) -> str | float:
    """CLI theta values: a float, ``inf``, or a percentile spec like p75."""
    if isinstance(raw, (int, float)):
        return float(raw)
    text = raw.strip().lower()
    if text.startswith("p") or text in ("inf", "+inf"):
        return text
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"bad --theta value {raw!r}") from None
