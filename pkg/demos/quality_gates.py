"""Walk through the annotation quality gates and corpus statistics.

Builds a handful of examples by hand, runs each gate, and prints the
containment statistics that characterize a collected explanation set.
"""

from explainqa import (
    Annotation, Example, overlap_stats, validate_annotation,
)

examples = [
    Example(
        id="q1",
        question="While eating a hamburger with friends, "
                 "what are people trying to do?",
        choices=("have fun", "tasty", "indigestion"),
        answer_index=0,
    ),
    Example(
        id="q2",
        question="Where might people sleep when travelling overnight?",
        choices=("hotel", "office", "stadium"),
        answer_index=0,
    ),
]

candidates = {
    "q1": [
        ("Usually a hamburger with friends indicates a good time.", ((6, 28),)),
        ("have fun", ((6, 28),)),                      # too short, bare choice
        ("eating a hamburger with friends", ((6, 28),)),  # question substring
        ("have fun is the only option that is correct", ((6, 28),)),  # template
    ],
    "q2": [
        ("travellers book a hotel room to rest", ((18, 23),)),
        ("people rest somewhere comfortable overnight", ()),  # no highlight
    ],
}

by_id = {ex.id: ex for ex in examples}
accepted = {}
for ex_id, attempts in candidates.items():
    print(f"\n{ex_id}: {by_id[ex_id].question}")
    for text, spans in attempts:
        ann = Annotation(example_id=ex_id, open_ended=text,
                         selected_spans=spans)
        report = validate_annotation(by_id[ex_id], ann)
        verdict = "accepted" if report.overall else (
            "rejected " + ",".join(report.failed_rules()))
        print(f"  [{verdict:18}] {text!r}")
        if report.overall and ex_id not in accepted:
            accepted[ex_id] = ann

stats = overlap_stats(examples, accepted)
print(f"\nover {stats.n} accepted explanations:")
print(f"  contain the answer:     {stats.pct_contains_answer:.0f}%")
print(f"  contain a distractor:   {stats.pct_contains_distractor:.0f}%")
print(f"  share a question bigram: {stats.pct_bigram:.0f}%")
