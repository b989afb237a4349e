from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from string import Template

from ..dataset import QuestionRecord

DEFAULT_TEMPLATE = "rewrite_v1"

_NEWLINES = re.compile(r"\s*\n\s*")


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    text: str

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()


@lru_cache(maxsize=None)
def load_template(name: str = DEFAULT_TEMPLATE) -> PromptTemplate:
    text = resources.files(__package__).joinpath("templates", f"{name}.txt").read_text(encoding="utf-8")
    return PromptTemplate(name, text)


def _one_line(text: str) -> str:
    return _NEWLINES.sub(" ", text.strip())


def render_prompt(q: QuestionRecord, option_index: int, template: PromptTemplate | None = None) -> str:
    """Instantiate the rewriting prompt for one question/option pair.

    Embedded newlines in either text are folded to spaces so each sits on
    its own template line.
    """
    if not 0 <= option_index < len(q.options):
        raise IndexError(f"option_index {option_index} out of range for {len(q.options)} options")
    question = _one_line(q.question)
    option = _one_line(q.options[option_index])
    if not question:
        raise ValueError(f"{q.question_id}: question text is empty")
    if not option:
        raise ValueError(f"{q.question_id}: option {option_index} text is empty")
    template = template or load_template()
    return Template(template.text).substitute(question=question, option=option)
