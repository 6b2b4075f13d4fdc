"""Prompt bank for the two time-aware tasks and the prompt renderers.

The bank ships as ``assets/prompt_bank_v1.json``; its content hash is pinned
below so that an edited bank is rejected instead of silently changing the
training data.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from groundkit.errors import TemplateMismatch
from groundkit.spans import CATEGORIES, Category

BANK_VERSION = "v1"
BANK_SHA256 = "7409298d8a7048aae2b98bbb0e923d17ecf25126bc9a8f076d9dbc450f163fb6"

LETTERS = ("A", "B", "C", "D")

_COUNTS = {
    "grounding_instructions": 10,
    "questions": 10,
    "option_statements": 4,
    "captioning_instructions": 10,
    "temporal_statements": 4,
}


def bank_checksum(raw: dict) -> str:
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class PromptBank:
    version: str
    grounding_instructions: tuple[str, ...]
    questions: tuple[str, ...]
    option_statements: tuple[str, ...]
    captioning_instructions: tuple[str, ...]
    temporal_statements: tuple[str, ...]
    frame_preamble: str
    grounding_template: str
    captioning_template: str
    checksum: str

    def statement(self, category: Category) -> str:
        return self.option_statements[CATEGORIES.index(category)]

    def temporal_statement(self, category: Category) -> str:
        return self.temporal_statements[CATEGORIES.index(category)]

    def preamble(self, timestamps: Sequence[float]) -> str:
        return self.frame_preamble % (len(timestamps), ", ".join("%.1f" % t for t in timestamps))


def load_bank(path: Optional[Path] = None, verify: bool = True) -> PromptBank:
    if path is None:
        text = resources.files("groundkit").joinpath("assets/prompt_bank_v1.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    raw = json.loads(text)
    checksum = bank_checksum(raw)
    if verify:
        if checksum != BANK_SHA256:
            raise TemplateMismatch(f"prompt bank checksum {checksum} != pinned {BANK_SHA256}")
        for key, n in _COUNTS.items():
            if len(raw[key]) != n:
                raise TemplateMismatch(f"{key}: expected {n} strings, found {len(raw[key])}")
    return PromptBank(
        version=raw["version"],
        grounding_instructions=tuple(raw["grounding_instructions"]),
        questions=tuple(raw["questions"]),
        option_statements=tuple(raw["option_statements"]),
        captioning_instructions=tuple(raw["captioning_instructions"]),
        temporal_statements=tuple(raw["temporal_statements"]),
        frame_preamble=raw["frame_preamble"],
        grounding_template=raw["grounding_template"],
        captioning_template=raw["captioning_template"],
        checksum=checksum,
    )


_DEFAULT_BANK: Optional[PromptBank] = None


def default_bank() -> PromptBank:
    global _DEFAULT_BANK
    if _DEFAULT_BANK is None:
        _DEFAULT_BANK = load_bank()
    return _DEFAULT_BANK


def lettered(option_order: Sequence[Category]) -> list[tuple[str, Category]]:
    if sorted(c.value for c in option_order) != sorted(c.value for c in CATEGORIES):
        raise ValueError(f"option order must be a permutation of the four categories: {option_order}")
    return list(zip(LETTERS, option_order))


def shuffled_order(rng: random.Random) -> tuple[Category, ...]:
    order = list(CATEGORIES)
    rng.shuffle(order)
    return tuple(order)


def render_options(bank: PromptBank, option_order: Sequence[Category]) -> str:
    return " ".join(f"({letter}) {bank.statement(c)}" for letter, c in lettered(option_order))


def render_choice(bank: PromptBank, category: Category, option_order: Sequence[Category]) -> str:
    """The assistant's answer for a grounding question, e.g. ``(B) At the middle of the video.``"""
    for letter, c in lettered(option_order):
        if c is category:
            return f"({letter}) {bank.statement(c)}"
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class RenderedPrompt:
    task: str
    prompt: str
    answer: str
    loss_span: tuple[int, int]
    instruction_index: int
    question_index: Optional[int] = None


def _fill(template: str, answer: Optional[str], **slots: str) -> tuple[str, tuple[int, int]]:
    head, tail = template.split("<Answer>")
    # single pass so that slot values are never re-scanned for placeholders
    head = re.sub(r"<(%s)>" % "|".join(slots), lambda m: slots[m.group(1)], head)
    if answer is None:
        # prompt sent for inference stops right before the answer
        return head.rstrip(" "), (len(head.rstrip(" ")), len(head.rstrip(" ")))
    text = head + answer + tail
    return text, (len(head), len(text))


def grounding_prompt(
    bank: PromptBank,
    query: str,
    option_order: Sequence[Category],
    timestamps: Sequence[float],
    rng: random.Random,
    answer: Optional[Category] = None,
    instruction_index: Optional[int] = None,
    question_index: Optional[int] = None,
) -> RenderedPrompt:
    ins = rng.randrange(len(bank.grounding_instructions))
    qi = rng.randrange(len(bank.questions))
    if instruction_index is not None:
        ins = instruction_index
    if question_index is not None:
        qi = question_index
    answer_text = render_choice(bank, answer, option_order) if answer is not None else None
    text, span = _fill(
        bank.grounding_template,
        answer_text,
        Instruction=bank.grounding_instructions[ins],
        Preamble=bank.preamble(timestamps),
        Question=bank.questions[qi].replace("%s", query),
        Options=render_options(bank, option_order),
    )
    return RenderedPrompt("grounding", text, answer_text or "", span, ins, qi)


def captioning_prompt(
    bank: PromptBank,
    caption: str,
    category: Category,
    timestamps: Sequence[float],
    rng: random.Random,
    instruction_index: Optional[int] = None,
) -> RenderedPrompt:
    ins = rng.randrange(len(bank.captioning_instructions))
    if instruction_index is not None:
        ins = instruction_index
    text, span = _fill(
        bank.captioning_template,
        caption,
        Instruction=bank.captioning_instructions[ins],
        Preamble=bank.preamble(timestamps),
        Statement=bank.temporal_statement(category),
    )
    return RenderedPrompt("captioning", text, caption, span, ins)
