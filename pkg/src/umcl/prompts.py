"""Text prompt bank and prompt sampling for training and evaluation."""

from __future__ import annotations

import string

import numpy as np

from .errors import UnknownKind
from .types import Label, PromptKind, PromptText, Validity

REAL_PROMPTS = (
    "This is an example of a real face",
    "This is a bonafide face",
    "This is a real face",
    "This is how a real face looks like",
    "a photo of a real face",
    "This is not a forgery face",
)

FAKE_PROMPTS = (
    "This is an example of a forgery face",
    "This is an example of an attack face",
    "This is not a real face",
    "This is how a forgery face looks like",
    "a photo of a forgery face",
    "a printout shown to be a forgery face",
)

SIMPLE_WORDS = {Label.REAL: "real", Label.FAKE: "fake"}

_RANDOM_CHARS = string.ascii_lowercase + string.digits + " "


def prompt_bank(label: Label) -> tuple[str, ...]:
    return REAL_PROMPTS if label == Label.REAL else FAKE_PROMPTS


def _random_text(rng: np.random.Generator) -> str:
    length = int(rng.integers(8, 33))
    chars = rng.choice(list(_RANDOM_CHARS), size=length)
    return "".join(chars).strip() or "x" * 8


def make_prompt(label: Label, rng: np.random.Generator,
                eval_kind: PromptKind | str | None = None) -> PromptText:
    """Draw a prompt for a sample.

    Training mode (``eval_kind=None``): with probability 0.5 a bank prompt
    for the label, otherwise a random character string. Evaluation mode
    forces one of the four adversarial kinds.
    """

    if eval_kind is None:
        if rng.random() < 0.5:
            bank = prompt_bank(label)
            text = bank[int(rng.integers(len(bank)))]
            return PromptText(text=text, validity=Validity.VALID,
                              prompt_kind=PromptKind.DESCRIPTION, label=label)
        return PromptText(text=_random_text(rng), validity=Validity.INVALID,
                          prompt_kind=PromptKind.UNRELATED, label=label)

    if isinstance(eval_kind, str):
        try:
            eval_kind = PromptKind(eval_kind)
        except ValueError as exc:
            raise UnknownKind(f"unknown prompt kind {eval_kind!r}") from exc

    if eval_kind == PromptKind.DESCRIPTION:
        bank = prompt_bank(label)
        text = bank[int(rng.integers(len(bank)))]
        return PromptText(text=text, validity=Validity.VALID,
                          prompt_kind=eval_kind, label=label)
    if eval_kind == PromptKind.SIMPLE:
        return PromptText(text=SIMPLE_WORDS[label], validity=Validity.INVALID,
                          prompt_kind=eval_kind, label=label)
    if eval_kind == PromptKind.UNRELATED:
        return PromptText(text=_random_text(rng), validity=Validity.INVALID,
                          prompt_kind=eval_kind, label=label)
    if eval_kind == PromptKind.OPPOSITE:
        other = Label.FAKE if label == Label.REAL else Label.REAL
        bank = prompt_bank(other)
        text = bank[int(rng.integers(len(bank)))]
        return PromptText(text=text, validity=Validity.INVALID,
                          prompt_kind=eval_kind, label=label)
    raise UnknownKind(f"unknown prompt kind {eval_kind!r}")
