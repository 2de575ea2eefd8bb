"""Prompt templates with ``{{placeholder}}`` slots, shipped as editable files."""

from __future__ import annotations

import re
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

_PLACEHOLDER_RE = re.compile(r"\{\{(\w+)\}\}")

# Placeholders each template must provide for the operation that renders it.
REQUIRED_PLACEHOLDERS = {
    "describe_cot": {"frame_count"},
    "extract_normal_cot": {"descriptions"},
    "predict_abnormal_cot": {"normals"},
    "assess_cot": {"description", "knowledge"},
    "merge_patterns_cot": {"patterns"},
}

_FILE_OF = {
    "describe_cot": "describe.txt",
    "extract_normal_cot": "extract_normal.txt",
    "predict_abnormal_cot": "predict_abnormal.txt",
    "assess_cot": "assess.txt",
    "merge_patterns_cot": "merge_patterns.txt",
}


class TemplateError(ValueError):
    """Missing placeholder or unresolved slot at render time."""


@dataclass(frozen=True)
class PromptTemplates:
    describe_cot: str
    extract_normal_cot: str
    predict_abnormal_cot: str
    assess_cot: str
    merge_patterns_cot: str

    def __post_init__(self) -> None:
        for f in fields(self):
            text = getattr(self, f.name)
            present = set(_PLACEHOLDER_RE.findall(text))
            missing = REQUIRED_PLACEHOLDERS[f.name] - present
            if missing:
                raise TemplateError(
                    f"template {f.name} is missing placeholders {sorted(missing)}"
                )

    @classmethod
    def default(cls) -> "PromptTemplates":
        """Load the templates bundled with the package."""
        pkg = resources.files(__package__) / "templates"
        return cls(**{f: (pkg / name).read_text(encoding="utf-8") for f, name in _FILE_OF.items()})

    @classmethod
    def from_dir(cls, path: str | Path) -> "PromptTemplates":
        """Load templates from a directory, falling back to the bundled ones."""
        path = Path(path)
        values = {}
        for f, name in _FILE_OF.items():
            candidate = path / name
            if candidate.exists():
                values[f] = candidate.read_text(encoding="utf-8")
            else:
                values[f] = (resources.files(__package__) / "templates" / name).read_text(
                    encoding="utf-8"
                )
        return cls(**values)


def render(template: str, **values: object) -> str:
    """Substitute ``{{name}}`` slots; every slot must be filled."""
    out = template
    for name, value in values.items():
        out = out.replace("{{" + name + "}}", str(value))
    left = _PLACEHOLDER_RE.findall(out)
    if left:
        raise TemplateError(f"unresolved placeholders {sorted(set(left))}")
    return out
