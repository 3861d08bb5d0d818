import numpy as np
import pytest

from conceptqa.dictionary import empty_dictionary
from conceptqa.evaluation import (
    ABLATION_VARIANTS,
    FULL,
    NO_GATING,
    NO_ICD,
    NO_RESIDUAL,
    MetricReport,
    ablated_model,
    apply_ablation,
    evaluate,
    format_report_table,
    latency_ratio,
    measure_forward_latency,
    model_embedder,
    predict_all,
)
from conceptqa.model import encoder_forward
from conceptqa.tokenizer import build_boost_vector


class TestAblationMapping:
    def test_variant_configs(self, tiny_model):
        cfg = tiny_model.config
        assert apply_ablation(cfg, FULL) == cfg
        assert apply_ablation(cfg, NO_GATING).gate_mode == "off"
        assert apply_ablation(cfg, NO_ICD).boost_mode == "off"
        assert apply_ablation(cfg, NO_RESIDUAL).residual_skip is False
        with pytest.raises(ValueError, match="unknown ablation"):
            apply_ablation(cfg, "half_gating")

    def test_ablated_model_shares_parameters(self, tiny_model):
        m = ablated_model(tiny_model, NO_GATING)
        assert m.params is tiny_model.params

    def test_no_icd_equals_full_with_empty_dictionary(self, tiny_model, tiny_encoded):
        ex = tiny_encoded[0].example
        boost_empty = build_boost_vector(ex, empty_dictionary())
        assert boost_empty.tobytes() == np.ones(len(ex)).tobytes()
        h_no_icd = encoder_forward(ablated_model(tiny_model, NO_ICD),
                                   ex.token_ids, ex.boost)
        h_empty = encoder_forward(tiny_model, ex.token_ids, boost_empty)
        np.testing.assert_allclose(h_no_icd, h_empty, atol=1e-9)


class TestEvaluate:
    def test_memorized_model_tops_out(self, memorized):
        model, encoded, vocab, dictionary = memorized
        report = evaluate(model, encoded, vocab=vocab, dictionary=dictionary,
                          measure_latency=False)
        assert report.em == 100.0
        assert report.f1 == 100.0
        assert report.rouge_l == pytest.approx(1.0)
        assert report.embed_score == pytest.approx(1.0)
        assert report.n_examples == len(encoded)

    def test_deterministic_except_latency(self, memorized):
        model, encoded, vocab, dictionary = memorized
        a = evaluate(model, encoded, vocab=vocab, dictionary=dictionary)
        b = evaluate(model, encoded, vocab=vocab, dictionary=dictionary)
        da, db = a.to_dict(), b.to_dict()
        da.pop("mean_latency_ms")
        db.pop("mean_latency_ms")
        assert da == db

    def test_concept_em_subset(self, memorized):
        model, encoded, vocab, dictionary = memorized
        report = evaluate(model, encoded, vocab=vocab, dictionary=dictionary,
                          measure_latency=False)
        # synthetic gold answers contain no dictionary terms
        assert report.concept_em is None

    def test_empty_dataset_error(self, memorized):
        model, _, vocab, dictionary = memorized
        with pytest.raises(ValueError, match="empty dataset"):
            evaluate(model, [], vocab=vocab)

    def test_predictions_have_required_fields(self, memorized):
        model, encoded, vocab, _ = memorized
        preds = predict_all(model, encoded, vocab)
        assert set(preds[0]) == {"id", "pred_text", "gold_text", "start", "end"}
        assert preds[0]["pred_text"] == preds[0]["gold_text"]


class TestLatency:
    def test_per_example_latency_positive(self, memorized):
        model, encoded, _, _ = memorized
        lat = measure_forward_latency(model, encoded[:3], repeats=3)
        assert lat.shape == (3,)
        assert np.all(lat > 0)

    def test_gate_overhead_is_modest(self, memorized):
        model, encoded, _, _ = memorized
        ratio = latency_ratio(model, encoded[:4], FULL, NO_GATING, repeats=3)
        assert ratio < 1.5  # loose smoke bound; the acceptance suite pins 1.15


class TestReportFormat:
    def _report(self, variant):
        return MetricReport(em=97.85, f1=95.12, bleu=0.9355, rouge_l=0.9705,
                            embed_score=0.9790, mean_latency_ms=1.42,
                            n_examples=10, variant=variant)

    def test_ablation_table_columns(self):
        table = format_report_table([self._report(v) for v in ABLATION_VARIANTS],
                                    ablation_style=True)
        header = table.splitlines()[0]
        assert "EM" in header and "F1" in header and "EmbedScore" in header
        assert "BLEU" not in header
        assert len(table.splitlines()) == 2 + len(ABLATION_VARIANTS)

    def test_full_table_columns(self):
        table = format_report_table([self._report(FULL)])
        header = table.splitlines()[0]
        for col in ("EM (%)", "F1 (%)", "BLEU (%)", "ROUGE-L (%)", "EmbedScore (%)",
                    "Time (ms)"):
            assert col in header

    def test_report_json_round_trip(self, tmp_path):
        import json
        report = self._report(FULL)
        path = tmp_path / "report.json"
        report.to_json(path)
        loaded = json.loads(path.read_text())
        assert loaded["em"] == 97.85
        assert loaded["variant"] == "full"


class TestModelEmbedder:
    def test_produces_one_vector_per_token(self, memorized):
        model, _, vocab, _ = memorized
        emb = model_embedder(model, vocab)
        out = emb(["patience", "mercy", "gathering"])
        assert out.shape == (3, model.config.hidden)
        assert np.isfinite(out).all()

    def test_multi_piece_words_pool(self, memorized):
        model, _, vocab, _ = memorized
        emb = model_embedder(model, vocab)
        out = emb(["steadfastness"])  # splits into several pieces
        assert out.shape == (1, model.config.hidden)
