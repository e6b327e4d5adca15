"""Prompt template loading and rendering.

Templates are editable plain-text files. Two placeholder kinds:

* scalar: ``{article}``, ``{paragraph with a missing sentence}``, ... replaced
  once;
* per-item: any contiguous run of lines containing an ``{... i}`` placeholder
  (for example ``Question i: {question i}``) is replicated for each item with
  ``i`` bound to 1, 2, ...

Lines in the ``[Output]`` block use ``<angle bracket>`` slots, which are
instructions to the model and are never rewritten here.
"""
from __future__ import annotations

import importlib.resources
import re
from pathlib import Path

_ITEM_PLACEHOLDER = re.compile(r"\{([^{}]+?) i\}")
_ITEM_INDEX = re.compile(r"(?<=\s)i(?=:)")
_SCALAR_PLACEHOLDER = re.compile(r"\{([^{}]+)\}")

TEMPLATE_NAMES = (
    "question_completion",
    "question_answering",
    "role_identification",
    "coherence_smoothing",
    "zero_shot_generation",
    "summary_judge",
)


class PromptTemplateError(ValueError):
    pass


def load_template(name: str, override_dir: str | Path | None = None) -> str:
    """Load a template by name, preferring an override directory when given."""
    if override_dir is not None:
        p = Path(override_dir) / f"{name}.txt"
        if p.exists():
            return p.read_text(encoding="utf-8")
    res = importlib.resources.files("gqkit").joinpath(f"prompts/{name}.txt")
    return res.read_text(encoding="utf-8")


def render(template: str, scalars: dict[str, str] | None = None,
           items: list[dict[str, str]] | None = None) -> str:
    """Render a template with scalar substitutions and item-block expansion."""
    scalars = scalars or {}
    required = {
        m.group(1)
        for m in _SCALAR_PLACEHOLDER.finditer(template)
        if not m.group(1).endswith(" i")
    }
    missing = required - set(scalars)
    if missing:
        raise PromptTemplateError(f"missing scalar placeholders: {sorted(missing)}")

    lines = template.splitlines()
    out: list[str] = []
    block: list[str] = []

    def flush_block():
        if not block:
            return
        if items is None:
            raise PromptTemplateError("template has item placeholders but no items given")
        for k, item in enumerate(items, start=1):
            for line in block:
                def sub(m: re.Match) -> str:
                    key = m.group(1)
                    if key not in item:
                        raise PromptTemplateError(f"missing item field {key!r}")
                    return item[key]
                rendered = _ITEM_PLACEHOLDER.sub(sub, line)
                rendered = _ITEM_INDEX.sub(str(k), rendered)
                out.append(rendered)
        block.clear()

    for line in lines:
        if _ITEM_PLACEHOLDER.search(line):
            block.append(line)
        else:
            flush_block()
            out.append(line)
    flush_block()

    text = "\n".join(out)
    for key, value in scalars.items():
        text = text.replace("{" + key + "}", value)
    return text
