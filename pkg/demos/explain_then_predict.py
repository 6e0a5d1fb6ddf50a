"""End-to-end explain-then-predict run on a small synthetic task.

The questions are uninformative filler, so a classifier without explanations
is stuck near chance; the human explanations name the gold choice, so an
explanation-augmented classifier separates the task. This is the oracle
effect in miniature, followed by the misleading-explanation failure mode.
"""

import numpy as np

from explainqa import Annotation, Example, perturb_misleading
from explainqa.cage import PipelineSpec, TrainOptions, _fit_classifier, predict

rng = np.random.default_rng(0)
pool = [f"tok{i}" for i in range(30)]
filler = [f"f{i}" for i in range(20)]


def make_split(n, start):
    examples, annotations = [], {}
    for i in range(n):
        choices = tuple(rng.choice(pool, 3, replace=False))
        gold = int(rng.integers(3))
        ex = Example(
            id=f"x{start + i}",
            question=" ".join(rng.choice(filler, 8)) + "?",
            choices=choices, answer_index=gold)
        examples.append(ex)
        annotations[ex.id] = Annotation(
            example_id=ex.id,
            open_ended=f"the answer is {choices[gold]} indeed",
            selected_spans=((0, 2),))
    return examples, annotations


train_ex, train_ann = make_split(300, 0)
eval_ex, eval_ann = make_split(100, 10_000)
contexts_train = {ex.id: ex.question for ex in train_ex}
contexts_eval = {ex.id: ex.question for ex in eval_ex}
gold = {ex.id: ex.answer_index for ex in eval_ex}

spec = PipelineSpec(
    classifier_train=TrainOptions(epochs=15, batch_size=16, peak_lr=1e-3),
    classifier_max_len=40, d_model=64, n_layers=2, n_heads=4, d_ff=256,
    context_window=64)


def run(explanations_train, explanations_eval, label):
    model, _ = _fit_classifier(spec, train_ex, contexts_train,
                               explanations_train)
    preds = predict(model, eval_ex, contexts_eval, explanations_eval,
                    max_len=40)
    acc = np.mean([preds[i] == gold[i] for i in gold])
    print(f"{label:32} accuracy {acc:.3f}")
    return model, preds


print("training (a few minutes on one core)...")
run(None, None, "questions only")
expl_train = {i: a.open_ended for i, a in train_ann.items()}
expl_eval = {i: a.open_ended for i, a in eval_ann.items()}
model, _ = run(expl_train, expl_eval, "with human explanations")

dataset = [(ex, eval_ann[ex.id]) for ex in eval_ex]
perturbed, sampled = perturb_misleading(dataset, n=len(dataset) // 2, seed=3)
expl_bad = {ex.id: ann.open_ended for ex, ann in perturbed}
preds = predict(model, eval_ex, contexts_eval, expl_bad, max_len=40)
sub_acc = np.mean([preds[i] == gold[i] for i in sampled])
print(f"{'on misleading explanations':32} accuracy {sub_acc:.3f} "
      f"(the classifier follows the explanation off a cliff)")
