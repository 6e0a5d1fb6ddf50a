"""Command-line entry point exposing every pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data/validation error. Commands
write machine-readable output to --out and a short summary to stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import cage, metrics, model, quality, service
from .corpus import (
    CorpusError, load_annotations, load_examples, write_annotations,
)
from .gradcheck import grad_check
from .metrics import _round_reals


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _data_dir_default(name: str) -> str | None:
    base = os.environ.get("EXPLAINQA_DATA_DIR")
    return str(Path(base) / name) if base else None


def _write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(_round_reals(obj), f, sort_keys=True, indent=2,
                  ensure_ascii=False)
        f.write("\n")


def build_parser() -> _Parser:
    parser = _Parser(prog="explainqa")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, **kwargs):
        p = sub.add_parser(name, **kwargs)
        return p

    p = add("validate", help="run the annotation quality gates")
    p.add_argument("--examples", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out")

    p = add("stats", help="overlap statistics over annotations")
    p.add_argument("--examples", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)

    p = add("train-lm", help="fine-tune the explanation language model")
    p.add_argument("--examples", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--dev-examples")
    p.add_argument("--dev-annotations")
    p.add_argument("--mode", choices=["reasoning", "rationalization"],
                   default="reasoning")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("generate", help="generate explanations from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--examples", required=True)
    p.add_argument("--mode", choices=["reasoning", "rationalization"],
                   default="reasoning")
    p.add_argument("--predictions",
                   help="predictions.jsonl label source for rationalization")
    p.add_argument("--out", required=True)

    p = add("train-clf", help="train the multiple-choice classifier")
    p.add_argument("--examples", required=True)
    p.add_argument("--explanations")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-len", type=int, default=175)
    p.add_argument("--out", required=True)

    p = add("eval", help="evaluate a classifier checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--examples", required=True)
    p.add_argument("--explanations")
    p.add_argument("--max-len", type=int, default=175)
    p.add_argument("--predictions-out")
    p.add_argument("--out", required=True)

    p = add("pipeline", help="run a full two-phase experiment from a spec file")
    p.add_argument("--spec", required=True)
    p.add_argument("--train-examples", required=True)
    p.add_argument("--train-annotations")
    p.add_argument("--eval-examples", required=True)
    p.add_argument("--eval-annotations")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = add("perturb", help="inject misleading explanations")
    p.add_argument("--examples", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("transfer", help="generate explanations on an out-of-domain file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--examples", required=True)
    p.add_argument("--out", required=True)

    p = add("serve", help="run the annotation-collection service")
    p.add_argument("--examples", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--lease-minutes", type=float, default=15.0)
    p.add_argument("--assets")

    p = add("grad-check", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--coords", type=int, default=32)
    p.add_argument("--out")

    return parser


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _run(args)
    except (CorpusError, ValueError, KeyError, OSError,
            FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _load_pairs(examples_path, annotations_path):
    examples = load_examples(examples_path)
    annotations = load_annotations(annotations_path)
    from .corpus import join_annotations
    return examples, annotations, join_annotations(examples, annotations)


def _run(args) -> int:
    if args.command == "validate":
        examples, annotations, pairs = _load_pairs(args.examples, args.annotations)
        failures = {}
        for ex, ann in pairs:
            report = quality.validate_annotation(ex, ann)
            if not report.overall:
                failures[ex.id] = report.failed_rules()
        if args.out:
            _write_json({"failures": failures, "checked": len(pairs)}, args.out)
        for ex_id, rules in failures.items():
            print(f"{ex_id}: fails {', '.join(rules)}")
        print(f"{len(pairs) - len(failures)}/{len(pairs)} annotations pass")
        return 2 if failures else 0

    if args.command == "stats":
        examples, annotations, _ = _load_pairs(args.examples, args.annotations)
        stats = quality.overlap_stats(examples, annotations)
        _write_json(stats.to_dict(), args.out)
        print(f"contains answer: {stats.pct_contains_answer:.1f}% "
              f"(n={stats.n})")
        return 0

    if args.command == "train-lm":
        _, _, train = _load_pairs(args.examples, args.annotations)
        dev = train
        if args.dev_examples and args.dev_annotations:
            _, _, dev = _load_pairs(args.dev_examples, args.dev_annotations)
        mode = cage.ConditioningMode(args.mode)
        opts = cage.TrainOptions(
            epochs=args.epochs, batch_size=args.batch_size,
            peak_lr=args.lr, seed=args.seed)
        lm, history = cage.finetune_lm(train, dev, mode, opts=opts)
        model.save_checkpoint(args.out, lm.params, lm.cfg, lm.vocabulary, "lm")
        for h in history:
            print(f"epoch {h['epoch']}: dev ppl {h['dev_perplexity']:.3f}, "
                  f"dev BLEU {h['dev_bleu']:.4f}")
        return 0

    if args.command in ("generate", "transfer"):
        params, cfg, vocabulary, kind = model.load_checkpoint(args.checkpoint)
        if kind != "lm":
            raise ValueError("checkpoint is not a language model")
        lm = cage.TrainedModel(params, cfg, vocabulary, kind)
        examples = load_examples(args.examples)
        if args.command == "transfer":
            explanations = cage.transfer_explanations(lm, examples)
            mode = cage.ConditioningMode.REASONING
        else:
            mode = cage.ConditioningMode(args.mode)
            label_source = None
            if mode is cage.ConditioningMode.RATIONALIZATION:
                if not args.predictions:
                    raise ValueError(
                        "rationalization requires --predictions as label source")
                label_source = _labels_from_predictions(
                    args.predictions, examples)
            explanations = cage.generate_explanations(
                lm, examples, mode, label_source)
        cage.write_explanations(explanations, mode, args.out)
        print(f"wrote {len(explanations)} explanations to {args.out}")
        return 0

    if args.command == "train-clf":
        examples = load_examples(args.examples)
        explanations = (cage.load_explanations(args.explanations)
                        if args.explanations else None)
        contexts = {ex.id: ex.question for ex in examples}
        spec = cage.PipelineSpec(seed=args.seed)
        trained, _ = cage._fit_classifier(
            cage.PipelineSpec(
                seed=args.seed,
                classifier_train=cage.TrainOptions(
                    epochs=args.epochs, batch_size=args.batch_size,
                    peak_lr=args.lr, seed=args.seed),
                classifier_max_len=args.max_len,
            ),
            examples, contexts, explanations)
        model.save_checkpoint(
            args.out, trained.params, trained.cfg, trained.vocabulary,
            "classifier")
        print(f"trained classifier on {len(examples)} examples")
        return 0

    if args.command == "eval":
        params, cfg, vocabulary, kind = model.load_checkpoint(args.checkpoint)
        if kind != "classifier":
            raise ValueError("checkpoint is not a classifier")
        clf = cage.TrainedModel(params, cfg, vocabulary, kind)
        examples = load_examples(args.examples)
        explanations = (cage.load_explanations(args.explanations)
                        if args.explanations else None)
        contexts = {ex.id: ex.question for ex in examples}
        predictions, scores = cage.predict(
            clf, examples, contexts, explanations, max_len=args.max_len,
            return_scores=True)
        gold = {ex.id: ex.answer_index for ex in examples
                if ex.answer_index is not None}
        acc = metrics.accuracy(predictions, gold) if gold else None
        if args.predictions_out:
            cage.write_predictions(
                predictions, scores, examples, args.predictions_out)
        _write_json({"accuracy": acc, "n": len(predictions)}, args.out)
        if acc is not None:
            print(f"accuracy: {acc:.4f} over {len(gold)} examples")
        return 0

    if args.command == "pipeline":
        spec = cage.parse_spec_file(args.spec)
        if args.seed is not None:
            spec = cage.PipelineSpec(**{
                **{k: getattr(spec, k) for k in (
                    "variant", "explanation_source",
                    "use_explanations_at_train", "use_explanations_at_eval",
                    "lm_train", "classifier_train", "classifier_max_len",
                    "d_model", "n_layers", "n_heads", "d_ff",
                    "context_window")},
                "seed": args.seed,
            })
        train_examples = load_examples(args.train_examples)
        eval_examples = load_examples(args.eval_examples)
        train_annotations = (load_annotations(args.train_annotations)
                             if args.train_annotations else {})
        eval_annotations = (load_annotations(args.eval_annotations)
                            if args.eval_annotations else {})
        data = cage.Datasets(train_examples, train_annotations,
                             eval_examples, eval_annotations)
        report = cage.run_pipeline(spec, data)
        metrics.write_report(report, args.out)
        print(f"accuracy: {report.accuracy:.4f}; report written to {args.out}")
        return 0

    if args.command == "perturb":
        _, _, pairs = _load_pairs(args.examples, args.annotations)
        perturbed, sampled = cage.perturb_misleading(pairs, args.n, args.seed)
        write_annotations({ann.example_id: ann for _, ann in perturbed},
                          args.out)
        print(f"perturbed {len(sampled)} of {len(perturbed)} annotations")
        return 0

    if args.command == "serve":
        examples = load_examples(args.examples)
        service.serve(examples, args.store, args.port,
                      lease_minutes=args.lease_minutes,
                      assets_dir=args.assets)
        return 0

    if args.command == "grad-check":
        results = _run_grad_checks(args.seed, args.coords)
        if args.out:
            _write_json(results, args.out)
        for name, err in results.items():
            print(f"{name}: max relative error {err:.3e}")
        return 0

    raise UsageError(f"unknown command {args.command!r}")


def _labels_from_predictions(path, examples) -> dict[str, int]:
    by_id = {ex.id: ex for ex in examples}
    labels: dict[str, int] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            ex = by_id.get(rec["id"])
            if ex is not None:
                labels[rec["id"]] = ex.choices.index(rec["predicted"])
    return labels


def _run_grad_checks(seed: int, coords: int) -> dict[str, float]:
    import numpy as np
    from .model import (
        tiny_config, init_lm_params, init_classifier_params, lm_loss,
        classifier_scores, pad_sequences,
    )
    from .autograd import log_softmax

    cfg = tiny_config(50, seed=seed)
    lm_params = init_lm_params(cfg)
    rng = np.random.default_rng(seed)
    ctx = rng.integers(6, 50, size=8).tolist()
    expl = rng.integers(6, 50, size=6).tolist()
    lm_err = grad_check(
        lm_params, lambda: lm_loss(lm_params, cfg, ctx, expl),
        coords_per_tensor=coords, seed=seed)

    clf_params = init_classifier_params(cfg)
    seqs = [[4] + rng.integers(6, 50, size=9).tolist() for _ in range(3)]
    segs = [[0] * 6 + [1] * 4 for _ in range(3)]
    ids, sg, pad = pad_sequences(seqs, segs)

    def clf_loss():
        scores = classifier_scores(clf_params, cfg, ids, sg, pad)
        return -log_softmax(scores.reshape(1, 3), axis=-1)[0, 0]

    clf_err = grad_check(clf_params, clf_loss,
                         coords_per_tensor=coords, seed=seed)
    return {"lm_max_rel_error": lm_err, "classifier_max_rel_error": clf_err}


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
