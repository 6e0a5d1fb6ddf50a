"""Explain-then-predict framework: prompt construction, explanation-LM
fine-tuning, explanation generation, classifier training, pipeline variants,
out-of-domain transfer, and the misleading-explanation perturbation.

Two-phase flow: a conditional LM is fine-tuned to produce an explanation
from the question and answer choices, then a classifier consumes the
question, an optional explanation, and each choice, scoring them via the
leading [CLS] state.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import vocab as V
from .autograd import no_grad
from .corpus import (
    Annotation, DatasetVariant, Example, MissingAnnotationError, materialize,
)
from .metrics import MetricsReport, accuracy, bleu, perplexity
from .model import (
    LMConfig, Parameters, classifier_scores, desk_config, generate,
    init_classifier_params, init_lm_params, lm_batch_loss, pad_sequences,
)
from .optim import Adam, TrainSchedule
from .quality import containment_stats, length_analysis, overlap_stats
from .textnorm import normalize_words
from .vocab import Vocabulary, build_vocab

log = logging.getLogger(__name__)

MAX_GENERATION_LEN = 20


class ConditioningMode(enum.Enum):
    REASONING = "reasoning"
    RATIONALIZATION = "rationalization"


class ExplanationSource(enum.Enum):
    NONE = "none"
    HUMAN = "human"
    GENERATED_REASONING = "generated-reasoning"
    GENERATED_RATIONALIZATION = "generated-rationalization"


@dataclass(frozen=True)
class TrainOptions:
    """Knobs for one training phase."""

    epochs: int = 10
    batch_size: int = 32
    peak_lr: float = 3e-4
    warmup_proportion: float = 0.002
    weight_decay: float = 0.01
    seed: int = 0


@dataclass(frozen=True)
class PipelineSpec:
    """Full description of one experiment, embedded in its report."""

    variant: DatasetVariant = DatasetVariant.BASELINE
    explanation_source: ExplanationSource = ExplanationSource.NONE
    use_explanations_at_train: bool = False
    use_explanations_at_eval: bool = False
    seed: int = 0
    lm_train: TrainOptions = field(default_factory=TrainOptions)
    classifier_train: TrainOptions = field(default_factory=TrainOptions)
    classifier_max_len: int = 175
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    context_window: int = 128

    def __post_init__(self):
        if (self.use_explanations_at_eval
                and self.explanation_source is ExplanationSource.NONE):
            raise ValueError("explanations at eval need an explanation source")

    @property
    def is_oracle(self) -> bool:
        return (self.use_explanations_at_eval
                and self.explanation_source is ExplanationSource.HUMAN)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant.value,
            "explanation_source": self.explanation_source.value,
            "use_explanations_at_train": self.use_explanations_at_train,
            "use_explanations_at_eval": self.use_explanations_at_eval,
            "seed": self.seed,
            "lm_train": vars(self.lm_train).copy(),
            "classifier_train": vars(self.classifier_train).copy(),
            "classifier_max_len": self.classifier_max_len,
            "d_model": self.d_model,
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "d_ff": self.d_ff,
            "context_window": self.context_window,
        }


def parse_spec_file(path: str | Path) -> PipelineSpec:
    """Parse a flat `key = value` spec document."""
    flat: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            flat[key.strip()] = value.strip()
    return spec_from_flat(flat)


def spec_from_flat(flat: dict[str, str]) -> PipelineSpec:
    def get_bool(key, default):
        return flat.get(key, str(default)).lower() in ("true", "1", "yes")

    def train_opts(prefix, defaults: TrainOptions) -> TrainOptions:
        return TrainOptions(
            epochs=int(flat.get(f"{prefix}.epochs", defaults.epochs)),
            batch_size=int(flat.get(f"{prefix}.batch_size", defaults.batch_size)),
            peak_lr=float(flat.get(f"{prefix}.peak_lr", defaults.peak_lr)),
            warmup_proportion=float(
                flat.get(f"{prefix}.warmup_proportion", defaults.warmup_proportion)),
            weight_decay=float(
                flat.get(f"{prefix}.weight_decay", defaults.weight_decay)),
            seed=int(flat.get(f"{prefix}.seed", defaults.seed)),
        )

    base = PipelineSpec()
    return PipelineSpec(
        variant=DatasetVariant(flat.get("variant", base.variant.value)),
        explanation_source=ExplanationSource(
            flat.get("explanation_source", base.explanation_source.value)),
        use_explanations_at_train=get_bool("use_explanations_at_train", False),
        use_explanations_at_eval=get_bool("use_explanations_at_eval", False),
        seed=int(flat.get("seed", base.seed)),
        lm_train=train_opts("lm", base.lm_train),
        classifier_train=train_opts("classifier", base.classifier_train),
        classifier_max_len=int(
            flat.get("classifier_max_len", base.classifier_max_len)),
        d_model=int(flat.get("d_model", base.d_model)),
        n_layers=int(flat.get("n_layers", base.n_layers)),
        n_heads=int(flat.get("n_heads", base.n_heads)),
        d_ff=int(flat.get("d_ff", base.d_ff)),
        context_window=int(flat.get("context_window", base.context_window)),
    )


# ---- prompt construction ----


def _choice_list(choices: tuple[str, ...]) -> str:
    if len(choices) == 2:
        return f"{choices[0]} or {choices[1]}"
    return ", ".join(choices[:-1]) + f", or {choices[-1]}"


def build_context(
    example: Example, mode: ConditioningMode, label: int | None = None
) -> str:
    """Render the conditioning prompt for one example.

    Reasoning:        "{q} {c0}, {c1}, or {c2}? commonsense says"
    Rationalization:  "{q} {c0}, {c1}, or {c2}? {a} because"
    The choice list generalizes to any count >= 2; the question keeps its own
    terminal punctuation and segments are joined by single spaces.
    """
    head = f"{example.question} {_choice_list(example.choices)}?"
    if mode is ConditioningMode.REASONING:
        return f"{head} commonsense says"
    if label is None:
        raise ValueError("rationalization requires a label")
    return f"{head} {example.choices[label]} because"


# ---- LM training ----


@dataclass
class TrainedModel:
    """A frozen model checkpoint: parameters plus config and vocabulary."""

    params: Parameters
    cfg: LMConfig
    vocabulary: Vocabulary
    kind: str = "lm"


def _lm_pairs(
    pairs: list[tuple[Example, Annotation]],
    mode: ConditioningMode,
    vocabulary: Vocabulary,
    context_window: int,
) -> list[tuple[list[int], list[int]]]:
    """Encode (context, explanation + EOS) id pairs, truncating long contexts."""
    out = []
    for ex, ann in pairs:
        label = ex.answer_index if mode is ConditioningMode.RATIONALIZATION else None
        ctx = vocabulary.encode(build_context(ex, mode, label))
        expl = vocabulary.encode(ann.open_ended) + [V.EOS]
        budget = context_window - len(expl)
        if len(ctx) > budget:
            log.warning("truncating context head for %r", ex.id)
            ctx = ctx[len(ctx) - budget:]
        out.append((ctx, expl))
    return out


def train_lm_steps(
    params: Parameters,
    cfg: LMConfig,
    pairs: list[tuple[list[int], list[int]]],
    opts: TrainOptions,
    total_steps: int,
    *,
    stop_below_train_ppl: float | None = None,
    check_every: int = 50,
) -> Parameters:
    """Plain step-driven LM training loop over encoded pairs."""
    if not pairs:
        raise ValueError("empty training set")
    schedule = TrainSchedule(
        peak_lr=opts.peak_lr, total_steps=total_steps,
        warmup_proportion=opts.warmup_proportion,
        weight_decay=opts.weight_decay,
    )
    optimizer = Adam(params, schedule)
    rng = np.random.default_rng(opts.seed)
    order = np.arange(len(pairs))
    pos = len(pairs)  # force an initial shuffle
    for step in range(total_steps):
        if pos >= len(pairs):
            rng.shuffle(order)
            pos = 0
        batch = [pairs[i] for i in order[pos : pos + opts.batch_size]]
        pos += opts.batch_size
        params.zero_grads()
        loss = lm_batch_loss(params, cfg, batch)
        if not np.isfinite(loss.data):
            raise FloatingPointError(f"non-finite LM loss at step {step}")
        loss.backward()
        optimizer.step(params.grads())
        if stop_below_train_ppl is not None and (step + 1) % check_every == 0:
            ppl = perplexity(params, cfg, pairs)
            if ppl < stop_below_train_ppl:
                break
    return params


def finetune_lm(
    train: list[tuple[Example, Annotation]],
    dev: list[tuple[Example, Annotation]],
    mode: ConditioningMode,
    *,
    cfg: LMConfig | None = None,
    opts: TrainOptions = TrainOptions(),
) -> tuple[TrainedModel, list[dict]]:
    """Fine-tune the explanation LM, selecting the best epoch on dev.

    After each epoch, dev perplexity and corpus BLEU of greedy generations
    against the human explanations are recorded. The returned checkpoint
    minimizes dev perplexity; ties break toward higher BLEU, then the
    earlier epoch.
    """
    if not train:
        raise ValueError("empty training set")
    texts = [build_context(ex, mode, ex.answer_index) for ex, _ in train]
    texts += [ann.open_ended for _, ann in train]
    vocabulary = build_vocab(texts)
    if cfg is None:
        cfg = desk_config(len(vocabulary), seed=opts.seed)
    params = init_lm_params(cfg)

    train_pairs = _lm_pairs(train, mode, vocabulary, cfg.context_window)
    dev_pairs = _lm_pairs(dev, mode, vocabulary, cfg.context_window)
    steps_per_epoch = max(1, -(-len(train_pairs) // opts.batch_size))
    total_steps = steps_per_epoch * opts.epochs
    schedule = TrainSchedule(
        peak_lr=opts.peak_lr, total_steps=total_steps,
        warmup_proportion=opts.warmup_proportion,
        weight_decay=opts.weight_decay,
    )
    optimizer = Adam(params, schedule)
    rng = np.random.default_rng(opts.seed)

    history: list[dict] = []
    best: tuple | None = None
    best_params: Parameters | None = None
    model = TrainedModel(params, cfg, vocabulary)
    for epoch in range(1, opts.epochs + 1):
        order = rng.permutation(len(train_pairs))
        for start in range(0, len(train_pairs), opts.batch_size):
            batch = [train_pairs[i] for i in order[start : start + opts.batch_size]]
            params.zero_grads()
            loss = lm_batch_loss(params, cfg, batch)
            if not np.isfinite(loss.data):
                raise FloatingPointError(f"non-finite LM loss in epoch {epoch}")
            loss.backward()
            optimizer.step(params.grads())

        dev_ppl = perplexity(params, cfg, dev_pairs) if dev_pairs else float("inf")
        dev_bleu = _dev_bleu(model, dev, mode) if dev_pairs else 0.0
        history.append({"epoch": epoch, "dev_perplexity": dev_ppl,
                        "dev_bleu": dev_bleu})
        key = (dev_ppl, -dev_bleu, epoch)
        if best is None or key < best:
            best = key
            best_params = params.copy()

    chosen = best_params if best_params is not None else params
    return TrainedModel(chosen, cfg, vocabulary), history


def _dev_bleu(
    model: TrainedModel, dev: list[tuple[Example, Annotation]],
    mode: ConditioningMode,
) -> float:
    examples = [ex for ex, _ in dev]
    labels = {ex.id: ex.answer_index for ex, _ in dev}
    generated = generate_explanations(
        model, examples, mode,
        label_source=(labels if mode is ConditioningMode.RATIONALIZATION else None),
    )
    cands = [normalize_words(generated[ex.id]) for ex, _ in dev]
    refs = [normalize_words(ann.open_ended) for _, ann in dev]
    return bleu(cands, refs)


# ---- explanation generation ----


def generate_explanations(
    model: TrainedModel,
    examples: list[Example],
    mode: ConditioningMode,
    label_source: dict[str, int] | None = None,
) -> dict[str, str]:
    """Greedy explanation text for every example, keyed by id.

    Rationalization requires label_source (gold labels are never read at
    inference). Contexts too long to reserve the generation budget are
    truncated from the question head with a warning.
    """
    if mode is ConditioningMode.RATIONALIZATION and label_source is None:
        raise ValueError("rationalization requires a label source")
    out: dict[str, str] = {}
    for ex in examples:
        label = label_source[ex.id] if label_source is not None else None
        ctx = model.vocabulary.encode(build_context(ex, mode, label))
        budget = model.cfg.context_window - MAX_GENERATION_LEN
        if len(ctx) > budget:
            log.warning("truncating context head for %r", ex.id)
            ctx = ctx[len(ctx) - budget:]
        ids = generate(model.params, model.cfg, ctx, MAX_GENERATION_LEN)
        if ids and ids[-1] == V.EOS:
            ids = ids[:-1]
        out[ex.id] = model.vocabulary.decode(ids)
    return out


def transfer_explanations(
    model: TrainedModel, out_of_domain: list[Example]
) -> dict[str, str]:
    """Generate explanations on another domain without any fine-tuning."""
    return generate_explanations(model, out_of_domain, ConditioningMode.REASONING)


def write_explanations(
    explanations: dict[str, str], mode: ConditioningMode, path: str | Path
) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for ex_id, text in explanations.items():
            rec = {"id": ex_id, "explanation": text, "mode": mode.value}
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def load_explanations(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                rec = json.loads(line)
                out[rec["id"]] = rec["explanation"]
    return out


# ---- classifier ----


def build_classifier_input(
    vocabulary: Vocabulary,
    question: str,
    explanation: str | None,
    choice: str,
    max_len: int,
) -> tuple[list[int], list[int]]:
    """Token and segment ids for one (question, explanation?, choice) triple.

    Without explanation: [CLS] q [SEP] choice. With: [CLS] q [SEP] e [SEP]
    choice; the explanation shares segment 0 with the question, choice tokens
    are segment 1. Overlength input truncates the explanation tail first,
    then the question tail, never the choice.
    """
    q_ids = vocabulary.encode(question)
    e_ids = vocabulary.encode(explanation) if explanation is not None else None
    c_ids = vocabulary.encode(choice)
    if 2 + len(c_ids) > max_len:
        raise ValueError("choice alone exceeds max_len")

    def total(q, e):
        n = 1 + len(q) + 1 + len(c_ids)  # CLS q SEP choice
        if e:
            n += len(e) + 1  # explanation + its SEP
        return n

    if e_ids is not None:
        while e_ids and total(q_ids, e_ids) > max_len:
            e_ids = e_ids[:-1]
    while total(q_ids, e_ids or []) > max_len:
        q_ids = q_ids[:-1]

    ids = [V.CLS] + q_ids + [V.SEP]
    segs = [0] * len(ids)
    if e_ids:
        ids += e_ids + [V.SEP]
        segs += [0] * (len(e_ids) + 1)
    ids += c_ids
    segs += [1] * len(c_ids)
    return ids, segs


def _example_inputs(
    vocabulary: Vocabulary, context: str, explanation: str | None,
    example: Example, max_len: int,
) -> tuple[list[list[int]], list[list[int]]]:
    seqs, segs = [], []
    for choice in example.choices:
        ids, seg = build_classifier_input(
            vocabulary, context, explanation, choice, max_len)
        seqs.append(ids)
        segs.append(seg)
    return seqs, segs


def train_classifier(
    examples: list[Example],
    contexts: dict[str, str],
    explanations: dict[str, str] | None,
    vocabulary: Vocabulary,
    cfg: LMConfig,
    opts: TrainOptions,
    max_len: int,
) -> TrainedModel:
    """Cross-entropy training of the [CLS]-scored choice classifier.

    contexts maps each id to the classifier's question slot (the question
    itself, or the explanation for the *-without-question variants).
    """
    labeled = [ex for ex in examples if ex.answer_index is not None]
    if not labeled:
        raise ValueError("no labeled examples")
    params = init_classifier_params(cfg)
    n_batches = -(-len(labeled) // opts.batch_size)
    schedule = TrainSchedule(
        peak_lr=opts.peak_lr, total_steps=n_batches * opts.epochs,
        warmup_proportion=opts.warmup_proportion,
        weight_decay=opts.weight_decay,
    )
    optimizer = Adam(params, schedule)
    rng = np.random.default_rng(opts.seed)

    encoded = []
    for ex in labeled:
        expl = explanations.get(ex.id) if explanations is not None else None
        if explanations is not None and ex.id not in explanations:
            raise KeyError(f"missing explanation for example {ex.id!r}")
        seqs, segs = _example_inputs(
            vocabulary, contexts[ex.id], expl, ex, max_len)
        encoded.append((seqs, segs, ex.answer_index, len(ex.choices)))

    from .autograd import log_softmax  # local to avoid module cycle noise

    for _ in range(opts.epochs):
        order = rng.permutation(len(encoded))
        for start in range(0, len(encoded), opts.batch_size):
            chunk = [encoded[i] for i in order[start : start + opts.batch_size]]
            # uniform choice counts per sub-batch so scores form a matrix
            by_count: dict[int, list] = {}
            for item in chunk:
                by_count.setdefault(item[3], []).append(item)
            params.zero_grads()
            total_loss = None
            n_items = 0
            for count, items in sorted(by_count.items()):
                seqs = [s for it in items for s in it[0]]
                segs = [s for it in items for s in it[1]]
                labels = np.array([it[2] for it in items])
                ids, sg, pad = pad_sequences(seqs, segs)
                scores = classifier_scores(params, cfg, ids, sg, pad)
                logp = log_softmax(scores.reshape(len(items), count), axis=-1)
                picked = logp[np.arange(len(items)), labels]
                part = -picked.sum()
                total_loss = part if total_loss is None else total_loss + part
                n_items += len(items)
            loss = total_loss * (1.0 / n_items)
            if not np.isfinite(loss.data):
                raise FloatingPointError("non-finite classifier loss")
            loss.backward()
            optimizer.step(params.grads())
    return TrainedModel(params, cfg, vocabulary, kind="classifier")


def predict(
    model: TrainedModel,
    examples: list[Example],
    contexts: dict[str, str],
    explanations: dict[str, str] | None = None,
    max_len: int = 175,
    batch_size: int = 16,
    return_scores: bool = False,
):
    """Argmax choice per example (ties break to the lowest index).

    Pure given a frozen checkpoint; explanations must cover every example
    when provided.
    """
    predictions: dict[str, int] = {}
    scores_out: dict[str, list[float]] = {}
    by_count: dict[int, list[Example]] = {}
    for ex in examples:
        by_count.setdefault(len(ex.choices), []).append(ex)
    for count, group in sorted(by_count.items()):
        for start in range(0, len(group), batch_size):
            chunk = group[start : start + batch_size]
            seqs, segs = [], []
            for ex in chunk:
                if explanations is not None and ex.id not in explanations:
                    raise KeyError(f"missing explanation for example {ex.id!r}")
                expl = explanations.get(ex.id) if explanations is not None else None
                s, g = _example_inputs(
                    model.vocabulary, contexts[ex.id], expl, ex, max_len)
                seqs += s
                segs += g
            ids, sg, pad = pad_sequences(seqs, segs)
            with no_grad():
                scores = classifier_scores(
                    model.params, model.cfg, ids, sg, pad
                ).data.reshape(len(chunk), count)
            for ex, row in zip(chunk, scores):
                predictions[ex.id] = int(np.argmax(row))
                scores_out[ex.id] = [float(x) for x in row]
    if return_scores:
        return predictions, scores_out
    return predictions


def write_predictions(
    predictions: dict[str, int], scores: dict[str, list[float]],
    examples: list[Example], path: str | Path,
) -> None:
    by_id = {ex.id: ex for ex in examples}
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for ex_id, idx in predictions.items():
            rec = {
                "id": ex_id,
                "predicted": by_id[ex_id].choices[idx],
                "scores": scores.get(ex_id, []),
            }
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


# ---- pipeline ----


@dataclass
class Datasets:
    train_examples: list[Example]
    train_annotations: dict[str, Annotation]
    eval_examples: list[Example]
    eval_annotations: dict[str, Annotation]


def _materialized(
    spec: PipelineSpec, examples: list[Example],
    annotations: dict[str, Annotation],
) -> tuple[list[Example], dict[str, str], dict[str, str]]:
    """Apply the dataset variant: returns (kept examples, contexts, explanations)."""
    kept: list[Example] = []
    contexts: dict[str, str] = {}
    expl: dict[str, str] = {}
    for ex in examples:
        ann = annotations.get(ex.id)
        if spec.variant is not DatasetVariant.BASELINE and ann is None:
            raise MissingAnnotationError(
                f"variant {spec.variant.value} requires an annotation for {ex.id!r}")
        result = materialize(ex, ann, spec.variant)
        if result is None:
            continue
        context, explanation = result
        kept.append(ex)
        contexts[ex.id] = context
        if explanation is not None:
            expl[ex.id] = explanation
    return kept, contexts, expl


def run_pipeline(spec: PipelineSpec, data: Datasets) -> MetricsReport:
    """Execute the full two-phase flow and assemble one report."""
    train_ex, train_ctx, train_expl = _materialized(
        spec, data.train_examples, data.train_annotations)
    eval_ex, eval_ctx, eval_expl = _materialized(
        spec, data.eval_examples, data.eval_annotations)

    report = MetricsReport(spec=spec.to_dict())
    report.n["train"] = len(train_ex)
    report.n["eval"] = len(eval_ex)

    lm_bleu = lm_ppl = None
    source = spec.explanation_source
    if source in (ExplanationSource.GENERATED_REASONING,
                  ExplanationSource.GENERATED_RATIONALIZATION):
        mode = (ConditioningMode.REASONING
                if source is ExplanationSource.GENERATED_REASONING
                else ConditioningMode.RATIONALIZATION)
        train_pairs = [
            (ex, data.train_annotations[ex.id]) for ex in train_ex
            if ex.id in data.train_annotations
        ]
        eval_pairs = [
            (ex, data.eval_annotations[ex.id]) for ex in eval_ex
            if ex.id in data.eval_annotations
        ]
        lm_cfg = LMConfig(
            n_layers=spec.n_layers, n_heads=spec.n_heads, d_model=spec.d_model,
            d_ff=spec.d_ff, context_window=spec.context_window,
            vocab_size=1,  # placeholder; finetune_lm builds its own
            seed=spec.seed,
        )
        lm, history = finetune_lm(
            train_pairs, eval_pairs, mode, cfg=None, opts=spec.lm_train)
        if history:
            selected = min(
                history, key=lambda h: (h["dev_perplexity"], -h["dev_bleu"],
                                        h["epoch"]))
            lm_bleu = selected["dev_bleu"]
            lm_ppl = selected["dev_perplexity"]
        label_source = None
        if mode is ConditioningMode.RATIONALIZATION:
            # inference-time labels come from a baseline classifier
            base_spec = PipelineSpec(
                variant=DatasetVariant.BASELINE, seed=spec.seed,
                classifier_train=spec.classifier_train,
                classifier_max_len=spec.classifier_max_len,
                d_model=spec.d_model, n_layers=spec.n_layers,
                n_heads=spec.n_heads, d_ff=spec.d_ff,
                context_window=spec.context_window,
            )
            base_model, base_vocab = _fit_classifier(
                base_spec, train_ex, train_ctx, None)
            gold_train = {ex.id: ex.answer_index for ex in train_ex}
            label_source = dict(gold_train)
            label_source.update(predict(
                base_model, eval_ex, eval_ctx, None,
                max_len=spec.classifier_max_len))
        train_expl = generate_explanations(
            lm, train_ex, mode,
            label_source=(
                {ex.id: ex.answer_index for ex in train_ex}
                if mode is ConditioningMode.RATIONALIZATION else None))
        eval_expl = generate_explanations(
            lm, eval_ex, mode,
            label_source=(
                {k: v for k, v in (label_source or {}).items()}
                if mode is ConditioningMode.RATIONALIZATION else None))

    train_expl_used = train_expl if spec.use_explanations_at_train else None
    eval_expl_used = eval_expl if spec.use_explanations_at_eval else None
    if spec.variant in (DatasetVariant.OPEN_ENDED_WITHOUT_QUESTION,
                        DatasetVariant.SELECTED_WITHOUT_QUESTION):
        train_expl_used = eval_expl_used = None  # explanation is the context

    model, _ = _fit_classifier(spec, train_ex, train_ctx, train_expl_used)
    predictions = predict(
        model, eval_ex, eval_ctx, eval_expl_used,
        max_len=spec.classifier_max_len)
    gold = {ex.id: ex.answer_index for ex in eval_ex
            if ex.answer_index is not None}
    report.accuracy = accuracy(predictions, gold)
    report.bleu = lm_bleu
    report.perplexity = lm_ppl

    eval_anns = {ex.id: data.eval_annotations[ex.id] for ex in eval_ex
                 if ex.id in data.eval_annotations}
    if eval_anns and spec.variant is not DatasetVariant.BASELINE:
        labeled = [ex for ex in eval_ex
                   if ex.answer_index is not None and ex.id in eval_anns]
        report.overlap = overlap_stats(labeled, {
            ex.id: eval_anns[ex.id] for ex in labeled})
    if eval_expl and spec.variant is not DatasetVariant.BASELINE:
        usable = {k: v for k, v in eval_expl.items() if k in predictions}
        if usable:
            report.containment = containment_stats(usable, eval_ex, predictions)
    report.length_analysis = length_analysis(
        [ex for ex in eval_ex if ex.answer_index is not None], predictions)
    return report


def _fit_classifier(
    spec: PipelineSpec,
    train_ex: list[Example],
    contexts: dict[str, str],
    explanations: dict[str, str] | None,
) -> tuple[TrainedModel, Vocabulary]:
    texts = [contexts[ex.id] for ex in train_ex]
    texts += [c for ex in train_ex for c in ex.choices]
    if explanations:
        texts += list(explanations.values())
    vocabulary = build_vocab(texts)
    cfg = LMConfig(
        n_layers=spec.n_layers, n_heads=spec.n_heads, d_model=spec.d_model,
        d_ff=spec.d_ff, context_window=max(spec.context_window,
                                           spec.classifier_max_len),
        vocab_size=len(vocabulary), seed=spec.seed,
    )
    model = train_classifier(
        train_ex, contexts, explanations, vocabulary, cfg,
        spec.classifier_train, spec.classifier_max_len)
    return model, vocabulary


# ---- misleading perturbation ----


def perturb_misleading(
    dataset: list[tuple[Example, Annotation]],
    n: int,
    seed: int = 0,
) -> tuple[list[tuple[Example, Annotation]], list[str]]:
    """Replace n sampled explanations with distractor-supporting ones.

    Each sampled explanation becomes "{distractor} because {original with
    every occurrence of the gold-choice tokens replaced by the distractor
    tokens}". Examples themselves are never modified. Returns the perturbed
    dataset and the sampled id list.
    """
    if n > len(dataset):
        raise ValueError("n exceeds dataset size")
    rng = np.random.default_rng(seed)
    picked = set(rng.choice(len(dataset), size=n, replace=False).tolist()) if n else set()
    out: list[tuple[Example, Annotation]] = []
    sampled_ids: list[str] = []
    for i, (ex, ann) in enumerate(dataset):
        if i not in picked:
            out.append((ex, ann))
            continue
        if ex.answer_index is None:
            raise ValueError(f"example {ex.id!r} has no gold label")
        distractor_idx = [j for j in range(len(ex.choices))
                          if j != ex.answer_index]
        d = int(rng.choice(distractor_idx))
        gold_tokens = normalize_words(ex.choices[ex.answer_index])
        distractor_tokens = normalize_words(ex.choices[d])
        expl_tokens = _replace_subsequence(
            normalize_words(ann.open_ended), gold_tokens, distractor_tokens)
        text = f"{ex.choices[d]} because {' '.join(expl_tokens)}"
        out.append((ex, Annotation(
            example_id=ann.example_id, open_ended=text,
            selected_spans=ann.selected_spans)))
        sampled_ids.append(ex.id)
    return out, sampled_ids


def _replace_subsequence(
    tokens: list[str], old: list[str], new: list[str]
) -> list[str]:
    if not old:
        return tokens
    out: list[str] = []
    i = 0
    while i < len(tokens):
        if tokens[i : i + len(old)] == old:
            out.extend(new)
            i += len(old)
        else:
            out.append(tokens[i])
            i += 1
    return out
