import numpy as np
import pytest

from explainqa.corpus import Annotation, Example

HAMBURGER_QUESTION = (
    "While eating a hamburger with friends, what are people trying to do?"
)
HAMBURGER_CHOICES = ("have fun", "tasty", "indigestion")
HAMBURGER_EXPLANATION = (
    "Usually a hamburger with friends indicates a good time."
)
_SPAN_START = HAMBURGER_QUESTION.index("hamburger")
HAMBURGER_SPAN = (_SPAN_START, _SPAN_START + len("hamburger with friends"))


@pytest.fixture
def hamburger_example():
    return Example(
        id="q1",
        question=HAMBURGER_QUESTION,
        choices=HAMBURGER_CHOICES,
        answer_index=0,
    )


@pytest.fixture
def hamburger_annotation():
    return Annotation(
        example_id="q1",
        open_ended=HAMBURGER_EXPLANATION,
        selected_spans=(HAMBURGER_SPAN,),
    )


def make_synthetic_task(n_train=500, n_eval=200, seed=1):
    """3-choice task where only the explanation identifies the gold choice.

    Questions are uninformative filler, so a no-explanation classifier can
    do no better than chance; gold-only explanations name the gold choice.
    """
    rng = np.random.default_rng(seed)
    pool = [f"tok{i}" for i in range(30)]
    filler = [f"f{i}" for i in range(20)]

    def make(n, start):
        examples, annotations = [], {}
        for i in range(n):
            choices = tuple(rng.choice(pool, 3, replace=False))
            gold = int(rng.integers(3))
            question = " ".join(rng.choice(filler, 8)) + "?"
            ex = Example(id=f"x{start + i}", question=question,
                         choices=choices, answer_index=gold)
            examples.append(ex)
            annotations[ex.id] = Annotation(
                example_id=ex.id,
                open_ended=f"the answer is {choices[gold]} indeed",
                selected_spans=((0, 2),),
            )
        return examples, annotations

    train_ex, train_ann = make(n_train, 0)
    eval_ex, eval_ann = make(n_eval, 100000)
    return train_ex, train_ann, eval_ex, eval_ann


def pytest_runtest_logreport(report):
    """One visible PASS/FAIL/SKIP line per acceptance criterion."""
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_"):
        return
    label = name[len("test_criterion_"):]
    if report.when == "call":
        outcome = ("SKIP" if report.skipped
                   else "PASS" if report.passed else "FAIL")
    elif report.when == "setup" and report.skipped:
        outcome = "SKIP"
    else:
        return
    print(f"\nacceptance {label}: {outcome}", flush=True)
