"""BLEU, perplexity, accuracy, and the run report.

BLEU is the canonical corpus-level metric: clipped modified n-gram
precision, geometric mean over orders 1..max_n, brevity penalty, and a score
of 0 whenever any order has zero precision. A flagged smoothed variant
(add-one for n >= 2) exists for per-sentence diagnostics only.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .model import LMConfig, Parameters, sequence_log_probs
from .quality import OverlapStats


def _ngram_counts(tokens: list[str] | list[int], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(
    candidates: list[list],
    references: list[list],
    max_n: int = 4,
    smoothed: bool = False,
) -> float:
    """Corpus BLEU in [0, 1] over parallel token lists."""
    if not candidates:
        raise ValueError("empty candidate list")
    if len(candidates) != len(references):
        raise ValueError("candidate/reference counts differ")
    if max_n < 1:
        raise ValueError("max_n must be >= 1")

    matched = [0] * max_n
    total = [0] * max_n
    cand_len = ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            c_counts = _ngram_counts(cand, n)
            r_counts = _ngram_counts(ref, n)
            matched[n - 1] += sum(
                min(count, r_counts[gram]) for gram, count in c_counts.items()
            )
            total[n - 1] += max(0, len(cand) - n + 1)

    log_precision = 0.0
    for n in range(1, max_n + 1):
        num, den = matched[n - 1], total[n - 1]
        if smoothed and n >= 2:
            num, den = num + 1, den + 1
        if num == 0 or den == 0:
            return 0.0
        log_precision += math.log(num / den) / max_n

    bp = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / max(1, cand_len))
    return bp * math.exp(log_precision)


def perplexity(
    params: Parameters, cfg: LMConfig,
    pairs: list[tuple[list[int], list[int]]],
) -> float:
    """exp of the token-weighted mean NLL over target tokens only."""
    if not pairs:
        raise ValueError("no pairs")
    n_tokens = sum(len(e) for _, e in pairs)
    if n_tokens == 0:
        raise ValueError("no target tokens")
    total_logp = sum(sequence_log_probs(params, cfg, pairs))
    return math.exp(-total_logp / n_tokens)


def accuracy(predictions: dict[str, int], gold: dict[str, int]) -> float:
    """Fraction of ids on which predictions agree with gold."""
    extra = set(predictions) - set(gold)
    if extra:
        raise ValueError(f"predictions for unknown ids: {sorted(extra)[:5]}")
    common = [i for i in predictions if i in gold]
    if not common:
        raise ValueError("no overlapping ids")
    return sum(predictions[i] == gold[i] for i in common) / len(common)


@dataclass
class MetricsReport:
    """All statistics of one pipeline run plus the spec that produced it."""

    spec: dict
    accuracy: float | None = None
    bleu: float | None = None
    perplexity: float | None = None
    overlap: OverlapStats | None = None
    containment: tuple[float, float] | None = None
    length_analysis: tuple[float | None, float | None] | None = None
    n: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out: dict = {"spec": dict(self.spec)}
        if self.accuracy is not None:
            out["accuracy"] = self.accuracy
        if self.bleu is not None:
            out["bleu"] = self.bleu
        if self.perplexity is not None:
            out["perplexity"] = self.perplexity
        if self.overlap is not None:
            out["overlap"] = self.overlap.to_dict()
        if self.containment is not None:
            out["containment"] = {
                "pct_any_choice": self.containment[0],
                "pct_predicted_choice": self.containment[1],
            }
        if self.length_analysis is not None:
            out["length_analysis"] = {
                "mean_words_incorrect": self.length_analysis[0],
                "mean_words_correct": self.length_analysis[1],
            }
        out["n"] = dict(self.n)
        return out


def _round_reals(obj):
    if isinstance(obj, float):
        return round(obj, 6)
    if isinstance(obj, dict):
        return {k: _round_reals(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_reals(v) for v in obj]
    return obj


def report_json(report: MetricsReport) -> str:
    """Canonical serialization: sorted keys, reals at 6 decimals."""
    return json.dumps(_round_reals(report.to_dict()), sort_keys=True, indent=2,
                      ensure_ascii=False) + "\n"


def write_report(report: MetricsReport, path: str | Path) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(report_json(report))
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc


def read_report(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as f:
        return json.load(f)
