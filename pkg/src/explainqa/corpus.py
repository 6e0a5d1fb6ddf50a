"""Data model for multiple-choice examples and human explanations.

JSONL ingestion, span-annotated explanations, and the materialization of the
different training-input variants (question only, question + free text,
highlighted spans, explanation-in-place-of-question, and the restricted
variant whose explanations share no word with any answer choice).
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .textnorm import normalize_words

log = logging.getLogger(__name__)


class CorpusError(ValueError):
    """Base class for data-model violations."""


class ParseError(CorpusError):
    """A JSONL line could not be parsed or fails schema checks."""


class LabelResolutionError(CorpusError):
    """A gold answer string matches no choice exactly."""


class DuplicateKeyError(CorpusError):
    """Two records share an id."""


class SpanError(CorpusError):
    """A highlighted span is malformed or out of bounds."""


class MissingAnnotationError(CorpusError):
    """A variant that needs an explanation was given none."""


@dataclass(frozen=True)
class Example:
    """One multiple-choice question with ordered choices and optional gold index."""

    id: str
    question: str
    choices: tuple[str, ...]
    answer_index: int | None = None

    def __post_init__(self):
        if not self.question.strip():
            raise CorpusError(f"example {self.id!r}: empty question")
        if len(self.choices) < 2:
            raise CorpusError(f"example {self.id!r}: needs at least 2 choices")
        if len(set(self.choices)) != len(self.choices):
            raise CorpusError(f"example {self.id!r}: duplicate choices")
        if any(not c.strip() for c in self.choices):
            raise CorpusError(f"example {self.id!r}: empty choice")
        if self.answer_index is not None and not (
            0 <= self.answer_index < len(self.choices)
        ):
            raise CorpusError(f"example {self.id!r}: answer_index out of range")

    @property
    def answer(self) -> str | None:
        return None if self.answer_index is None else self.choices[self.answer_index]


@dataclass(frozen=True)
class Annotation:
    """A human explanation: free text plus highlighted question spans.

    Spans are half-open character ranges [start, end) into the question,
    non-overlapping and sorted by start. Bounds against the actual question
    length are checked at join time via `check_spans`.
    """

    example_id: str
    open_ended: str
    selected_spans: tuple[tuple[int, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        prev_end = -1
        for start, end in self.selected_spans:
            if not (0 <= start < end):
                raise SpanError(
                    f"annotation {self.example_id!r}: bad span [{start}, {end})"
                )
            if start < prev_end:
                raise SpanError(
                    f"annotation {self.example_id!r}: overlapping or unsorted spans"
                )
            prev_end = end

    def check_spans(self, example: Example) -> None:
        for start, end in self.selected_spans:
            if end > len(example.question):
                raise SpanError(
                    f"annotation {self.example_id!r}: span [{start}, {end}) exceeds "
                    f"question length {len(example.question)}"
                )

    def selected_text(self, example: Example) -> str:
        """Highlighted substrings in question order, joined by single spaces."""
        self.check_spans(example)
        return " ".join(example.question[s:e] for s, e in self.selected_spans)


class DatasetVariant(enum.Enum):
    BASELINE = "baseline"
    OPEN_ENDED = "open-ended"
    SELECTED = "selected"
    LIMITED_OPEN_ENDED = "limited-open-ended"
    OPEN_ENDED_WITHOUT_QUESTION = "open-ended-without-question"
    SELECTED_WITHOUT_QUESTION = "selected-without-question"


def load_examples(path: str | Path) -> list[Example]:
    """Load examples from JSONL; gold answer text is resolved to answer_index.

    Raises ParseError (with line number) on malformed lines,
    LabelResolutionError when the answer matches no choice exactly, and
    DuplicateKeyError on repeated ids.
    """
    examples: list[Example] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                ex_id = rec["id"]
                question = rec["question"]
                choices = tuple(rec["choices"])
                answer = rec.get("answer")
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"{path}:{lineno}: malformed record: {exc}") from exc
            if ex_id in seen:
                raise DuplicateKeyError(f"{path}:{lineno}: duplicate id {ex_id!r}")
            seen.add(ex_id)
            answer_index = None
            if answer is not None:
                try:
                    answer_index = choices.index(answer)
                except ValueError:
                    raise LabelResolutionError(
                        f"{path}:{lineno}: answer {answer!r} matches no choice "
                        f"of example {ex_id!r}"
                    ) from None
            try:
                examples.append(
                    Example(id=ex_id, question=question, choices=choices,
                            answer_index=answer_index)
                )
            except CorpusError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return examples


def write_examples(examples: list[Example], path: str | Path) -> None:
    """Serialize examples back to the JSONL schema accepted by load_examples."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for ex in examples:
            rec = {
                "id": ex.id,
                "question": ex.question,
                "choices": list(ex.choices),
                "answer": ex.answer,
            }
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def load_annotations(path: str | Path) -> dict[str, Annotation]:
    """Load annotations from JSONL, keyed by example id.

    Duplicate ids: last record wins with a logged warning (re-annotation
    workflows rewrite the same id).
    """
    annotations: dict[str, Annotation] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                ex_id = rec["id"]
                explanation = rec["explanation"]
                selected = tuple((int(s), int(e)) for s, e in rec.get("selected", []))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{path}:{lineno}: malformed record: {exc}") from exc
            if ex_id in annotations:
                log.warning("%s:%d: duplicate annotation for %r, keeping last",
                            path, lineno, ex_id)
            annotations[ex_id] = Annotation(
                example_id=ex_id, open_ended=explanation, selected_spans=selected
            )
    return annotations


def write_annotations(annotations: dict[str, Annotation], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for ann in annotations.values():
            f.write(annotation_record(ann) + "\n")


def annotation_record(ann: Annotation) -> str:
    """One JSONL line for an annotation."""
    rec = {
        "id": ann.example_id,
        "explanation": ann.open_ended,
        "selected": [list(span) for span in ann.selected_spans],
    }
    return json.dumps(rec, ensure_ascii=False)


def join_annotations(
    examples: list[Example], annotations: dict[str, Annotation]
) -> list[tuple[Example, Annotation]]:
    """Pair examples with their annotations, validating spans.

    Annotations whose id has no example are skipped with a warning.
    """
    by_id = {ex.id: ex for ex in examples}
    for ex_id in annotations:
        if ex_id not in by_id:
            log.warning("orphan annotation for unknown example %r, skipped", ex_id)
    pairs = []
    for ex in examples:
        ann = annotations.get(ex.id)
        if ann is not None:
            ann.check_spans(ex)
            pairs.append((ex, ann))
    return pairs


def is_limited(annotation: Annotation, example: Example) -> bool:
    """True iff the explanation shares no normalized word with any choice."""
    expl_tokens = set(normalize_words(annotation.open_ended))
    for choice in example.choices:
        if expl_tokens & set(normalize_words(choice)):
            return False
    return True


def materialize(
    example: Example,
    annotation: Annotation | None,
    variant: DatasetVariant,
) -> tuple[str, str | None] | None:
    """Render one example under a dataset variant.

    Returns (context_text, explanation_text), or None when the variant
    excludes this example (limited-open-ended with a disqualified
    explanation). The *-without-question variants put the explanation text
    in place of the question and carry no separate explanation.
    """
    if variant is DatasetVariant.BASELINE:
        return example.question, None
    if annotation is None:
        raise MissingAnnotationError(
            f"variant {variant.value} requires an annotation for {example.id!r}"
        )
    if variant is DatasetVariant.OPEN_ENDED:
        return example.question, annotation.open_ended
    if variant is DatasetVariant.SELECTED:
        return example.question, annotation.selected_text(example)
    if variant is DatasetVariant.LIMITED_OPEN_ENDED:
        if not is_limited(annotation, example):
            return None
        return example.question, annotation.open_ended
    if variant is DatasetVariant.OPEN_ENDED_WITHOUT_QUESTION:
        return annotation.open_ended, None
    if variant is DatasetVariant.SELECTED_WITHOUT_QUESTION:
        return annotation.selected_text(example), None
    raise ValueError(f"unknown variant {variant!r}")
