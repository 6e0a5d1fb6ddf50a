"""Annotation quality gates and dataset-side statistics.

The four collection-time rules:
  R1  at least one question span highlighted
  R2  explanation has at least 4 words
  R3  explanation is not a bare substring of the question or a choice
  R4  explanation is not the "<choice> is the only option that is
      correct/obvious" template

"Contains" throughout is contiguous normalized-token-subsequence
containment, so punctuation and case differences do not defeat a match.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import Annotation, Example
from .textnorm import contains_subsequence, normalize_words

RULE_IDS = ("R1", "R2", "R3", "R4")

_TEMPLATE_TAIL = ["is", "the", "only", "option", "that", "is"]
_TEMPLATE_LAST = {"correct", "obvious"}


@dataclass(frozen=True)
class RuleResult:
    rule_id: str
    passed: bool
    reason: str


@dataclass(frozen=True)
class ValidationReport:
    rules: tuple[RuleResult, ...]

    @property
    def overall(self) -> bool:
        return all(r.passed for r in self.rules)

    def failed_rules(self) -> list[str]:
        return [r.rule_id for r in self.rules if not r.passed]

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "rules": [
                {"rule_id": r.rule_id, "passed": r.passed, "reason": r.reason}
                for r in self.rules
            ],
        }


@dataclass(frozen=True)
class OverlapStats:
    """Containment statistics over a set of annotations, as percentages."""

    pct_contains_answer: float
    pct_contains_distractor: float
    pct_contains_either: float
    pct_bigram: float
    pct_trigram: float
    n: int

    def to_dict(self) -> dict:
        return {
            "pct_contains_answer": self.pct_contains_answer,
            "pct_contains_distractor": self.pct_contains_distractor,
            "pct_contains_either": self.pct_contains_either,
            "pct_bigram": self.pct_bigram,
            "pct_trigram": self.pct_trigram,
            "n": self.n,
        }


def validate_annotation(example: Example, annotation: Annotation) -> ValidationReport:
    """Apply the four collection gates; failures are reported, never raised."""
    expl_tokens = normalize_words(annotation.open_ended)

    r1_pass = len(annotation.selected_spans) > 0
    r1 = RuleResult(
        "R1", r1_pass,
        "question words highlighted" if r1_pass else "no question words highlighted",
    )

    r2_pass = len(expl_tokens) >= 4
    r2 = RuleResult(
        "R2", r2_pass,
        f"explanation has {len(expl_tokens)} words"
        + ("" if r2_pass else " (minimum 4)"),
    )

    r3_source = _substring_source(expl_tokens, example)
    r3 = RuleResult(
        "R3", r3_source is None,
        "explanation adds words beyond the question and choices"
        if r3_source is None
        else f"explanation is a substring of {r3_source}",
    )

    r4_hit = _is_template(expl_tokens, example)
    r4 = RuleResult(
        "R4", not r4_hit,
        "not a template explanation" if not r4_hit
        else "matches the '<choice> is the only option that is ...' template",
    )

    return ValidationReport(rules=(r1, r2, r3, r4))


def _substring_source(expl_tokens: list[str], example: Example) -> str | None:
    """Name the source the explanation is a bare substring of, if any."""
    if not expl_tokens:
        return "the question"  # empty text adds nothing
    q_tokens = normalize_words(example.question)
    if contains_subsequence(q_tokens, expl_tokens):
        return "the question"
    for choice in example.choices:
        if contains_subsequence(normalize_words(choice), expl_tokens):
            return f"choice {choice!r}"
    return None


def _is_template(expl_tokens: list[str], example: Example) -> bool:
    if len(expl_tokens) < len(_TEMPLATE_TAIL) + 2:
        return False
    if expl_tokens[-1] not in _TEMPLATE_LAST:
        return False
    if expl_tokens[-1 - len(_TEMPLATE_TAIL) : -1] != _TEMPLATE_TAIL:
        return False
    head = expl_tokens[: -1 - len(_TEMPLATE_TAIL)]
    return any(head == normalize_words(c) for c in example.choices)


def _ngrams(tokens: list[str], n: int) -> set[tuple[str, ...]]:
    return {tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)}


def overlap_stats(
    examples: list[Example], annotations: dict[str, Annotation]
) -> OverlapStats:
    """Answer/distractor/ngram containment percentages over all annotations.

    Every annotation id must have a matching example with a gold label.
    """
    by_id = {ex.id: ex for ex in examples}
    n = 0
    n_answer = n_distractor = n_either = n_bigram = n_trigram = 0
    for ex_id, ann in annotations.items():
        ex = by_id.get(ex_id)
        if ex is None:
            raise ValueError(f"annotation {ex_id!r} has no matching example")
        if ex.answer_index is None:
            raise ValueError(f"example {ex_id!r} has no gold label")
        expl = normalize_words(ann.open_ended)
        q_tokens = normalize_words(ex.question)
        has_answer = contains_subsequence(expl, normalize_words(ex.answer))
        has_distractor = any(
            contains_subsequence(expl, normalize_words(c))
            for i, c in enumerate(ex.choices)
            if i != ex.answer_index
        )
        n += 1
        n_answer += has_answer
        n_distractor += has_distractor
        n_either += has_answer or has_distractor
        n_bigram += bool(_ngrams(expl, 2) & _ngrams(q_tokens, 2))
        n_trigram += bool(_ngrams(expl, 3) & _ngrams(q_tokens, 3))
    if n == 0:
        raise ValueError("no annotations: percentages undefined")
    pct = lambda k: 100.0 * k / n
    return OverlapStats(
        pct_contains_answer=pct(n_answer),
        pct_contains_distractor=pct(n_distractor),
        pct_contains_either=pct(n_either),
        pct_bigram=pct(n_bigram),
        pct_trigram=pct(n_trigram),
        n=n,
    )


def length_analysis(
    examples: list[Example], predictions: dict[str, int]
) -> tuple[float | None, float | None]:
    """Mean question word count for incorrectly vs correctly predicted examples.

    Empty partitions yield None, never zero.
    """
    incorrect: list[int] = []
    correct: list[int] = []
    for ex in examples:
        if ex.answer_index is None:
            continue
        if ex.id not in predictions:
            raise ValueError(f"no prediction for labeled example {ex.id!r}")
        n_words = len(normalize_words(ex.question))
        if predictions[ex.id] == ex.answer_index:
            correct.append(n_words)
        else:
            incorrect.append(n_words)
    mean = lambda xs: sum(xs) / len(xs) if xs else None
    return mean(incorrect), mean(correct)


def containment_stats(
    explanations: dict[str, str],
    examples: list[Example],
    predictions: dict[str, int],
) -> tuple[float, float]:
    """(pct containing any choice, pct containing the predicted choice)."""
    by_id = {ex.id: ex for ex in examples}
    n = 0
    n_any = n_predicted = 0
    for ex_id, text in explanations.items():
        ex = by_id.get(ex_id)
        if ex is None:
            raise ValueError(f"explanation {ex_id!r} has no matching example")
        if ex_id not in predictions:
            raise ValueError(f"no prediction for {ex_id!r}")
        expl = normalize_words(text)
        contains = [
            contains_subsequence(expl, normalize_words(c)) for c in ex.choices
        ]
        n += 1
        n_any += any(contains)
        n_predicted += contains[predictions[ex_id]]
    if n == 0:
        raise ValueError("no explanations: percentages undefined")
    return 100.0 * n_any / n, 100.0 * n_predicted / n
