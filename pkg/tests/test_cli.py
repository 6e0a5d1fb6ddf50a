import json

import pytest

from explainqa.cli import dispatch
from explainqa.corpus import (
    Annotation, Example, write_annotations, write_examples,
)


def make_dataset(tmp_path, n=6, with_labels=True):
    markers = ("red", "blue", "green")
    examples, annotations = [], {}
    for i in range(n):
        gold = i % 3
        ex = Example(
            id=f"c{i}",
            question=f"The marker painted on wall {i} is {markers[gold]} ok?",
            choices=markers,
            answer_index=gold if with_labels else None,
        )
        examples.append(ex)
        annotations[ex.id] = Annotation(
            example_id=ex.id,
            open_ended=f"the wall was painted {markers[gold]} by someone",
            selected_spans=((0, 10),),
        )
    ex_path = tmp_path / "examples.jsonl"
    ann_path = tmp_path / "annotations.jsonl"
    write_examples(examples, ex_path)
    write_annotations(annotations, ann_path)
    return ex_path, ann_path


class TestUsage:
    def test_no_command_is_usage_error(self, capsys):
        assert dispatch([]) == 1
        assert "error" in capsys.readouterr().err

    def test_unknown_command_is_usage_error(self):
        assert dispatch(["frobnicate"]) == 1

    def test_missing_required_argument(self):
        assert dispatch(["stats"]) == 1

    def test_missing_file_is_data_error(self, tmp_path, capsys):
        code = dispatch([
            "stats", "--examples", str(tmp_path / "none.jsonl"),
            "--annotations", str(tmp_path / "none2.jsonl"),
            "--out", str(tmp_path / "out.json")])
        assert code == 2
        assert "error" in capsys.readouterr().err


class TestValidate:
    def test_all_pass(self, tmp_path, capsys):
        ex_path, ann_path = make_dataset(tmp_path)
        code = dispatch(["validate", "--examples", str(ex_path),
                         "--annotations", str(ann_path)])
        assert code == 0
        assert "6/6" in capsys.readouterr().out

    def test_failures_reported_and_exit_2(self, tmp_path, capsys):
        ex_path, ann_path = make_dataset(tmp_path)
        with open(ann_path, "a") as f:
            f.write(json.dumps({"id": "c0", "explanation": "red",
                                "selected": [[0, 10]]}) + "\n")
        out = tmp_path / "report.json"
        code = dispatch(["validate", "--examples", str(ex_path),
                         "--annotations", str(ann_path),
                         "--out", str(out)])
        assert code == 2
        data = json.loads(out.read_text())
        assert "c0" in data["failures"]
        assert "R2" in data["failures"]["c0"]


class TestStats:
    def test_writes_overlap_json(self, tmp_path):
        ex_path, ann_path = make_dataset(tmp_path)
        out = tmp_path / "stats.json"
        code = dispatch(["stats", "--examples", str(ex_path),
                         "--annotations", str(ann_path),
                         "--out", str(out)])
        assert code == 0
        data = json.loads(out.read_text())
        assert data["n"] == 6
        assert data["pct_contains_answer"] == 100.0


class TestPerturb:
    def test_writes_perturbed_annotations(self, tmp_path):
        ex_path, ann_path = make_dataset(tmp_path)
        out = tmp_path / "perturbed.jsonl"
        code = dispatch(["perturb", "--examples", str(ex_path),
                         "--annotations", str(ann_path),
                         "--n", "3", "--seed", "1", "--out", str(out)])
        assert code == 0
        lines = [json.loads(l) for l in out.read_text().splitlines()]
        assert len(lines) == 6
        changed = sum(" because " in rec["explanation"] for rec in lines)
        assert changed == 3

    def test_oversample_is_data_error(self, tmp_path):
        ex_path, ann_path = make_dataset(tmp_path)
        code = dispatch(["perturb", "--examples", str(ex_path),
                         "--annotations", str(ann_path),
                         "--n", "99", "--out", str(tmp_path / "o.jsonl")])
        assert code == 2


class TestGradCheck:
    def test_reports_small_errors(self, tmp_path, capsys):
        out = tmp_path / "gc.json"
        code = dispatch(["grad-check", "--coords", "4", "--out", str(out)])
        assert code == 0
        data = json.loads(out.read_text())
        assert data["lm_max_rel_error"] < 1e-4
        assert data["classifier_max_rel_error"] < 1e-4


class TestTrainEvalFlow:
    def test_classifier_train_then_eval(self, tmp_path):
        ex_path, _ = make_dataset(tmp_path, n=30)
        ckpt = tmp_path / "clf.npz"
        code = dispatch([
            "train-clf", "--examples", str(ex_path),
            "--epochs", "20", "--batch-size", "10", "--lr", "1e-3",
            "--max-len", "24", "--out", str(ckpt)])
        assert code == 0
        out = tmp_path / "eval.json"
        preds = tmp_path / "preds.jsonl"
        code = dispatch([
            "eval", "--checkpoint", str(ckpt), "--examples", str(ex_path),
            "--max-len", "24", "--predictions-out", str(preds),
            "--out", str(out)])
        assert code == 0
        data = json.loads(out.read_text())
        assert data["n"] == 30
        assert 0.0 <= data["accuracy"] <= 1.0
        rec = json.loads(preds.read_text().splitlines()[0])
        assert set(rec) == {"id", "predicted", "scores"}

    def test_eval_rejects_lm_checkpoint(self, tmp_path):
        from explainqa.model import (
            init_lm_params, save_checkpoint, tiny_config,
        )
        from explainqa.vocab import SPECIAL_TOKENS, Vocabulary

        ex_path, _ = make_dataset(tmp_path, n=3)
        cfg = tiny_config(len(SPECIAL_TOKENS))
        ckpt = tmp_path / "lm.npz"
        save_checkpoint(ckpt, init_lm_params(cfg), cfg,
                        Vocabulary(list(SPECIAL_TOKENS)), "lm")
        code = dispatch(["eval", "--checkpoint", str(ckpt),
                         "--examples", str(ex_path),
                         "--out", str(tmp_path / "o.json")])
        assert code == 2


class TestLmFlow:
    def test_train_generate_transfer(self, tmp_path, capsys):
        ex_path, ann_path = make_dataset(tmp_path, n=6)
        ckpt = tmp_path / "lm.npz"
        code = dispatch([
            "train-lm", "--examples", str(ex_path),
            "--annotations", str(ann_path),
            "--epochs", "2", "--batch-size", "3", "--lr", "1e-3",
            "--out", str(ckpt)])
        assert code == 0
        assert "dev ppl" in capsys.readouterr().out

        expl_out = tmp_path / "expl.jsonl"
        code = dispatch([
            "generate", "--checkpoint", str(ckpt),
            "--examples", str(ex_path), "--out", str(expl_out)])
        assert code == 0
        lines = [json.loads(l) for l in expl_out.read_text().splitlines()]
        assert len(lines) == 6
        assert all(rec["mode"] == "reasoning" for rec in lines)

        transfer_out = tmp_path / "transfer.jsonl"
        code = dispatch([
            "transfer", "--checkpoint", str(ckpt),
            "--examples", str(ex_path), "--out", str(transfer_out)])
        assert code == 0

    def test_rationalization_generate_needs_predictions(self, tmp_path):
        ex_path, ann_path = make_dataset(tmp_path, n=3)
        ckpt = tmp_path / "lm.npz"
        dispatch(["train-lm", "--examples", str(ex_path),
                  "--annotations", str(ann_path), "--epochs", "1",
                  "--out", str(ckpt)])
        code = dispatch([
            "generate", "--checkpoint", str(ckpt),
            "--examples", str(ex_path), "--mode", "rationalization",
            "--out", str(tmp_path / "e.jsonl")])
        assert code == 2


class TestPipeline:
    def test_baseline_spec_end_to_end(self, tmp_path):
        ex_path, ann_path = make_dataset(tmp_path, n=18)
        spec = tmp_path / "run.spec"
        spec.write_text(
            "variant = baseline\n"
            "classifier.epochs = 2\n"
            "classifier.batch_size = 6\n"
            "d_model = 16\nn_heads = 2\nd_ff = 32\nn_layers = 1\n"
            "classifier_max_len = 24\ncontext_window = 32\n")
        out = tmp_path / "report.json"
        code = dispatch([
            "pipeline", "--spec", str(spec),
            "--train-examples", str(ex_path),
            "--eval-examples", str(ex_path),
            "--out", str(out)])
        assert code == 0
        data = json.loads(out.read_text())
        assert data["spec"]["variant"] == "baseline"
        assert data["n"] == {"train": 18, "eval": 18}
        assert "accuracy" in data

    def test_seed_override_lands_in_report(self, tmp_path):
        ex_path, _ = make_dataset(tmp_path, n=6)
        spec = tmp_path / "run.spec"
        spec.write_text(
            "variant = baseline\nclassifier.epochs = 1\n"
            "d_model = 16\nn_heads = 2\nd_ff = 32\nn_layers = 1\n"
            "classifier_max_len = 24\ncontext_window = 32\n")
        out = tmp_path / "report.json"
        code = dispatch([
            "pipeline", "--spec", str(spec),
            "--train-examples", str(ex_path),
            "--eval-examples", str(ex_path),
            "--seed", "42", "--out", str(out)])
        assert code == 0
        assert json.loads(out.read_text())["spec"]["seed"] == 42
