import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from explainqa import vocab as V
from explainqa.metrics import (
    MetricsReport, accuracy, bleu, perplexity, read_report, report_json,
    write_report,
)
from explainqa.model import init_lm_params, tiny_config
from explainqa.quality import OverlapStats


def toks(s):
    return s.split()


class TestBleu:
    def test_identical_corpus_scores_one(self):
        c = [toks("the cat sat on the mat today ok")]
        assert bleu(c, c) == pytest.approx(1.0, abs=1e-12)

    def test_single_fourgram_miss(self):
        # 4/5, 3/4, 2/3, 1/2 unigram..4gram precisions: product^(1/4)
        c = [toks("a b c d e")]
        r = [toks("a b c d f")]
        expected = (4 / 5 * 3 / 4 * 2 / 3 * 1 / 2) ** 0.25
        assert bleu(c, r) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.2 ** 0.25, abs=1e-12)

    def test_zero_any_order_gives_zero(self):
        c = [toks("a b c")]  # no 4-grams at all
        r = [toks("a b c")]
        assert bleu(c, r) == 0.0
        assert bleu([toks("x y z w q")], [toks("a b c d e")]) == 0.0

    def test_clipping_limits_repeats(self):
        c = [toks("the the the the")]
        r = [toks("the cat")]
        # unigram precision clipped to 1/4; candidate longer, so no penalty
        assert bleu(c, r, max_n=1) == pytest.approx(0.25, abs=1e-12)

    def test_brevity_penalty_applied(self):
        c = [toks("a b")]
        r = [toks("a b c d")]
        got = bleu(c, r, max_n=1)
        assert got == pytest.approx(math.exp(1 - 4 / 2) * 1.0, abs=1e-12)

    def test_corpus_level_not_mean_of_sentences(self):
        c = [toks("a b c d e f g h"), toks("p q r s t")]
        r = [toks("a b c d e f g h"), toks("v w x y z")]
        corpus = bleu(c, r)
        per_sent = (bleu(c[:1], r[:1]) + bleu(c[1:], r[1:])) / 2
        assert corpus != pytest.approx(per_sent)

    def test_smoothed_nonzero_on_partial_match(self):
        c = [toks("a b c")]
        r = [toks("a x y")]
        assert bleu(c, r) == 0.0
        assert bleu(c, r, smoothed=True) > 0.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            bleu([toks("a")], [])

    @given(st.lists(
        st.lists(st.sampled_from("abcde"), min_size=4, max_size=8),
        min_size=1, max_size=5))
    @settings(max_examples=50, deadline=None)
    def test_self_bleu_is_one_and_bounded(self, sents):
        assert bleu(sents, sents) == pytest.approx(1.0, abs=1e-12)
        shuffled = [list(reversed(s)) for s in sents]
        score = bleu(shuffled, sents)
        assert 0.0 <= score <= 1.0 + 1e-12


class TestPerplexity:
    @pytest.mark.parametrize("vsize", [10, 100])
    def test_uniform_model_gives_vocab_size(self, vsize):
        cfg = tiny_config(vsize, context_window=16)
        params = init_lm_params(cfg)
        for t in params.tensors.values():
            t.data[...] = 0.0
        for name in params.names():
            if name.endswith(".g"):
                params.tensors[name].data[...] = 1.0
        pairs = [([V.BOS, 6], [7, 8, 9]), ([V.BOS], [6, 7])]
        assert perplexity(params, cfg, pairs) == pytest.approx(
            vsize, rel=1e-6)

    def test_token_weighting(self):
        cfg = tiny_config(12, context_window=16)
        params = init_lm_params(cfg)
        a = ([V.BOS], [6])
        b = ([V.BOS], [7, 8, 9])
        ppl_joint = perplexity(params, cfg, [a, b])
        from explainqa.model import sequence_log_probs
        la = sequence_log_probs(params, cfg, [a])[0]
        lb = sequence_log_probs(params, cfg, [b])[0]
        assert ppl_joint == pytest.approx(math.exp(-(la + lb) / 4), rel=1e-9)

    def test_empty_pairs_rejected(self):
        cfg = tiny_config(12)
        params = init_lm_params(cfg)
        with pytest.raises(ValueError):
            perplexity(params, cfg, [])


class TestAccuracy:
    def test_simple_fraction(self):
        assert accuracy({"a": 0, "b": 1, "c": 2},
                        {"a": 0, "b": 0, "c": 2}) == pytest.approx(2 / 3)

    def test_unknown_id_rejected(self):
        with pytest.raises(ValueError):
            accuracy({"zzz": 0}, {"a": 0})

    def test_empty_overlap_rejected(self):
        with pytest.raises(ValueError):
            accuracy({}, {"a": 0})


class TestReport:
    def make_report(self):
        return MetricsReport(
            spec={"variant": "baseline", "seed": 0},
            accuracy=0.123456789,
            bleu=0.04123,
            overlap=OverlapStats(43.0, 21.0, 58.0, 10.0, 5.0, 100),
            containment=(6.25, 5.0),
            length_analysis=(14.0, 13.0),
            n={"train": 10, "eval": 4},
        )

    def test_reals_rounded_to_six_decimals(self):
        data = json.loads(report_json(self.make_report()))
        assert data["accuracy"] == 0.123457

    def test_keys_sorted_and_trailing_newline(self):
        s = report_json(self.make_report())
        assert s.endswith("\n")
        data = json.loads(s)
        assert list(data) == sorted(data)

    def test_byte_identical_across_calls(self):
        assert report_json(self.make_report()) == report_json(
            self.make_report())

    def test_file_round_trip(self, tmp_path):
        r = self.make_report()
        path = tmp_path / "report.json"
        write_report(r, path)
        data = read_report(path)
        assert data["spec"]["variant"] == "baseline"
        assert data["overlap"]["pct_contains_answer"] == 43.0
        assert data["length_analysis"]["mean_words_correct"] == 13.0

    def test_absent_metrics_omitted(self):
        data = json.loads(report_json(MetricsReport(spec={})))
        assert "accuracy" not in data
        assert "bleu" not in data
        assert "overlap" not in data

    def test_unwritable_path_raises_oserror(self, tmp_path):
        with pytest.raises(OSError):
            write_report(MetricsReport(spec={}), tmp_path / "no" / "dir.json")
