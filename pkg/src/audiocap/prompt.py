"""Keyword-enhanced prompt construction.

Selected keywords are spliced into a fixed template ahead of the base
prompt: "Objects: rain, thunder. This is a sound of". With no keywords the
base prompt stands alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .keywords import KeywordMatch


@dataclass(frozen=True)
class PromptTemplate:
    keyword_header: str = "Objects"
    base_prompt: str = "This is a sound of"
    keyword_separator: str = ", "
    glue: str = ". "  # joins the keyword block to the base prompt

    def __post_init__(self):
        if not self.base_prompt:
            raise ValueError("base_prompt must be non-empty")


def build_prompt(template: PromptTemplate, matches: Sequence[KeywordMatch]) -> str:
    if not matches:
        return template.base_prompt
    block = template.keyword_separator.join(m.keyword for m in matches)
    return f"{template.keyword_header}: {block}{template.glue}{template.base_prompt}"
