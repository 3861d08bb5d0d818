"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s`.  Every tolerance is pinned
here; nothing is deferred to later calibration.
"""

import time

import numpy as np

import conceptqa as cq
from conceptqa import metrics, model as model_mod, synthetic, training
from conceptqa import data as data_mod
from conceptqa import evaluation
from conceptqa import tokenizer as tok
from conceptqa.gating import GateParams, gate_forward, gradient_check
from conceptqa.model import (
    EncoderModel,
    ModelConfig,
    build_model,
    count_parameters,
    encoder_forward,
)


def report(n, text):
    print(f"\nACCEPTANCE {n}: PASS - {text}")


def train_simple(model, encoded, steps, lr, seed, trainable):
    cfg = training.TrainConfig(learning_rate=lr, warmup_steps=max(2, steps // 10),
                               seed=seed)
    return training.train_epochs_simple(model, encoded, cfg, max_steps=steps,
                                        trainable=trainable, total_steps=steps)


def train_em(model, encoded, vocab):
    hits = []
    for enc in encoded:
        start, end, _ = model_mod.qa_forward(model, enc.example)
        pred = model_mod.predict_span(start, end, enc.example, 30)
        text = enc.example.span_text(vocab, (pred.start, pred.end))
        hits.append(float(metrics.normalize_answer(text)
                          == metrics.normalize_answer(enc.gold_texts[0])))
    return 100.0 * float(np.mean(hits))


def test_criterion_1_table3_reproduction():
    t0 = time.time()
    dictionary = cq.builtin_dictionary()
    assert len(dictionary) == 12
    for entry in dictionary.entries.values():
        expected = cq.boost_factor(entry.importance_score)
        assert abs(entry.boost_factor - expected) <= 0.005, entry.term
    elapsed = time.time() - t0
    assert elapsed < 1.0
    report(1, f"all 12 boost factors within 0.005 of 2*IS+1 ({elapsed:.3f}s)")


def test_criterion_2_gradient_correctness():
    t0 = time.time()
    rng = np.random.default_rng(1234)
    worst = 0.0
    for _ in range(100):
        seq_len = int(rng.integers(1, 9))
        dim = int(rng.integers(1, 17))
        params = GateParams(rng.standard_normal((dim, dim)) * 0.5,
                            rng.standard_normal(dim) * 0.5)
        x = rng.standard_normal((seq_len, dim))
        boost = 1.0 + 2.0 * rng.random(seq_len)
        worst = max(worst, gradient_check(params, x, boost, epsilon=1e-5))
    elapsed = time.time() - t0
    assert worst < 1e-6
    assert elapsed < 10.0
    report(2, f"100 instances, max relative error {worst:.2e} < 1e-6 ({elapsed:.1f}s)")


def test_criterion_3_identity_and_ablation_coherence(tiny_model, tiny_encoded):
    # (a) saturated gate is the identity
    rng = np.random.default_rng(0)
    x = rng.standard_normal((8, 16))
    params = GateParams(np.zeros((16, 16)), np.full(16, -40.0))
    r, _ = gate_forward(x, np.full(8, 3.0), params)
    gap = float(np.max(np.abs(r - x)))
    assert gap < 1e-12

    # (b) the dictionary-off path equals a full run with an empty dictionary
    ex = tiny_encoded[0].example
    empty_boost = tok.build_boost_vector(ex, cq.empty_dictionary())
    assert empty_boost.tobytes() == np.ones(len(ex), dtype=np.float64).tobytes()
    h_no_icd = encoder_forward(evaluation.ablated_model(tiny_model, evaluation.NO_ICD),
                               ex.token_ids, ex.boost)
    h_empty = encoder_forward(tiny_model, ex.token_ids, empty_boost)
    gap_b = float(np.max(np.abs(h_no_icd - h_empty)))
    assert gap_b < 1e-9

    # (c) zero-initialized adapters leave the backbone untouched
    zeroed = EncoderModel(
        config=tiny_model.config,
        params={k: (np.zeros_like(v) if k.endswith(".lora_a") else v)
                for k, v in tiny_model.params.items()},
        seed=tiny_model.seed)
    h_adapted = encoder_forward(tiny_model, ex.token_ids, ex.boost)
    h_base = encoder_forward(zeroed, ex.token_ids, ex.boost)
    gap_c = float(np.max(np.abs(h_adapted - h_base)))
    assert gap_c < 1e-12
    report(3, f"identity gap {gap:.1e}, dictionary-off gap {gap_b:.1e}, "
              f"adapter-zero gap {gap_c:.1e}")


def test_criterion_4_parameter_budget():
    cfg = ModelConfig(layers=12, hidden=768, heads=12, vocab_size=30_000,
                      max_len=384, gate_mode="shared")
    counts = count_parameters(cfg)
    gates = counts["by_group"]["gates"]
    assert gates == 590_592
    assert gates < 1_200_000
    report(4, f"shared-gate trainables at d=768: {gates:,} < 1,200,000")


def test_criterion_5_learning_sanity():
    t0 = time.time()
    fixture = synthetic.generate_records(64, seed=11)
    vocab = tok.train_vocab(synthetic.corpus_texts(fixture), 384)
    assert len(vocab) <= 512
    dictionary = cq.builtin_dictionary()
    encoded, _ = data_mod.encode_dataset(fixture.records, vocab, dictionary)

    cfg = ModelConfig(layers=2, hidden=32, heads=4, vocab_size=len(vocab))
    model = build_model(cfg, seed=0)
    tcfg = training.TrainConfig(learning_rate=5e-3, warmup_steps=100, seed=0)
    opt_state = training.init_optimizer_state({})
    rng = np.random.default_rng(0)

    total_steps = 2000
    step = 0
    em = 0.0
    while step < total_steps:
        order = rng.permutation(len(encoded))
        for i in range(0, len(order), tcfg.effective_batch):
            if step >= total_steps:
                break
            batch = order[i:i + tcfg.effective_batch]
            acc = {}
            for j in batch:
                _, grads = model_mod.qa_loss_and_grads(model, encoded[j].example)
                for k, g in grads.items():
                    acc[k] = acc[k] + g if k in acc else g
            for k in acc:
                acc[k] = acc[k] / len(batch)
            lr = training.lr_schedule(min(step + 1, total_steps), tcfg, total_steps)
            training.optimizer_step(model.params, acc, opt_state, tcfg, lr=lr)
            step += 1
        if step % 200 == 0 or step >= total_steps:
            em = train_em(model, encoded, vocab)
            if em >= 95.0:
                break
    elapsed = time.time() - t0
    assert em >= 95.0, f"training EM {em:.1f}% after {step} steps"
    assert step <= 2000
    assert elapsed < 300.0
    report(5, f"training EM {em:.1f}% after {step} steps ({elapsed:.0f}s < 300s)")


def test_criterion_6_directional_concept_sensitivity():
    t0 = time.time()
    dictionary = cq.builtin_dictionary()
    variants = {
        evaluation.FULL: ("lora", "gates", "heads", "embed_domain"),
        evaluation.NO_GATING: ("lora", "heads", "embed_domain"),
        evaluation.NO_ICD: ("lora", "gates", "heads", "embed_domain"),
    }
    results = {v: [] for v in variants}
    for seed in range(5):
        train_fix = synthetic.generate_records(96, seed=100 + seed)
        test_fix = synthetic.generate_records(32, seed=200 + seed)
        vocab = tok.train_vocab(synthetic.corpus_texts(train_fix), 384)
        enc_train, _ = data_mod.encode_dataset(train_fix.records, vocab, dictionary)
        enc_test, _ = data_mod.encode_dataset(test_fix.records, vocab, dictionary)
        for variant, groups in variants.items():
            cfg = evaluation.apply_ablation(
                ModelConfig(layers=2, hidden=32, heads=4, vocab_size=len(vocab)),
                variant)
            model = build_model(cfg, seed=seed)
            model = train_simple(model, enc_train, steps=600, lr=5e-3, seed=seed,
                                 trainable=groups)
            results[variant].append(train_em(model, enc_test, vocab))
    med = {v: float(np.median(ems)) for v, ems in results.items()}
    elapsed = time.time() - t0
    assert med[evaluation.FULL] >= med[evaluation.NO_GATING], med
    assert med[evaluation.FULL] >= med[evaluation.NO_ICD], med
    report(6, f"median held-out EM: full {med['full']:.1f} >= "
              f"no_gating {med['no_gating']:.1f} and >= no_icd {med['no_icd']:.1f} "
              f"({elapsed:.0f}s)")


def test_criterion_7_metric_oracle_equivalence():
    from test_metrics import bleu_oracle, lcs_brute_force, random_phrase

    rng = np.random.default_rng(55)
    worst = 0.0
    for _ in range(50):
        pred, gold = random_phrase(rng), random_phrase(rng)

        p_toks, g_toks = metrics.normalize_answer(pred), metrics.normalize_answer(gold)
        from collections import Counter
        overlap = sum((Counter(p_toks) & Counter(g_toks)).values())
        if not p_toks and not g_toks:
            f1_expected = 1.0
        elif overlap == 0:
            f1_expected = 0.0
        else:
            p, r = overlap / len(p_toks), overlap / len(g_toks)
            f1_expected = 2 * p * r / (p + r)
        worst = max(worst, abs(metrics.token_f1(pred, gold) - f1_expected))
        worst = max(worst, abs(metrics.bleu(pred, gold) - bleu_oracle(pred, gold)))

        lcs = lcs_brute_force(p_toks, g_toks) if p_toks and g_toks else 0
        if lcs == 0:
            rouge_expected = 0.0
        else:
            r, p = lcs / len(g_toks), lcs / len(p_toks)
            rouge_expected = 2 * r * p / (r + p)
        worst = max(worst, abs(metrics.rouge_l(pred, gold) - rouge_expected))
    assert worst < 1e-9
    report(7, f"token_f1/bleu/rouge_l match brute-force oracles, "
              f"max deviation {worst:.1e} < 1e-9")


def test_criterion_8_overhead_bound():
    t0 = time.time()
    dictionary = cq.builtin_dictionary()
    fixture = synthetic.generate_records(50, seed=77, target_context_words=340,
                                         target_question_words=15.1)
    vocab = tok.train_vocab(synthetic.corpus_texts(fixture), 384)
    encoded, _ = data_mod.encode_dataset(fixture.records, vocab, dictionary)
    cfg = ModelConfig(layers=2, hidden=32, heads=4, vocab_size=len(vocab))
    model = build_model(cfg, seed=0)
    ratio = evaluation.latency_ratio(model, encoded, evaluation.FULL,
                                     evaluation.NO_GATING, repeats=5)
    elapsed = time.time() - t0
    assert ratio <= 1.15, f"latency ratio {ratio:.3f}"
    report(8, f"forward latency full/no_gating = {ratio:.3f} <= 1.15 "
              f"over 50 sequences ({elapsed:.0f}s)")


def _pipeline_run(tmp_path, tag):
    """ingest -> split -> train -> eval, fully seeded."""
    raw = tmp_path / f"raw-{tag}.json"
    fixture = synthetic.generate_records(60, seed=9)
    synthetic.write_squad(fixture, raw)
    dataset = data_mod.ingest_squad(raw)
    train_recs, val_recs, test_recs = data_mod.split_dataset(dataset, seed=3)

    vocab = tok.train_vocab([f"{r.question} {r.context}" for r in dataset.records], 320)
    dictionary = cq.builtin_dictionary()
    enc_train, _ = data_mod.encode_dataset(train_recs, vocab, dictionary)
    enc_val, _ = data_mod.encode_dataset(val_recs, vocab, dictionary)
    enc_test, _ = data_mod.encode_dataset(test_recs, vocab, dictionary)

    cfg = ModelConfig(layers=1, hidden=16, heads=2, vocab_size=len(vocab), lora_rank=2)
    model = build_model(cfg, seed=5, dictionary_version=dictionary.version)
    tcfg = training.TrainConfig(learning_rate=3e-3, warmup_steps=2, patience=5, seed=5)
    stages = [
        training.StageConfig("adaptation", 2, False, ("lora", "heads")),
        training.StageConfig("specialization", 2, True,
                             ("lora", "gates", "heads", "embed_domain")),
    ]
    model, history = training.train_two_stage(model, enc_train, enc_val, tcfg,
                                              stages, vocab=vocab)
    ckpt = tmp_path / f"checkpoint-{tag}.bin"
    model_mod.save_checkpoint(model, ckpt)
    rep = evaluation.evaluate(model, enc_test, vocab=vocab, dictionary=dictionary)
    payload = rep.to_dict()
    payload.pop("mean_latency_ms")
    return ckpt.read_bytes(), payload, history.records


def test_criterion_9_pipeline_determinism(tmp_path):
    t0 = time.time()
    ckpt1, report1, hist1 = _pipeline_run(tmp_path, "a")
    ckpt2, report2, hist2 = _pipeline_run(tmp_path, "b")
    assert ckpt1 == ckpt2
    assert report1 == report2
    assert hist1 == hist2
    report(9, f"two ingest->split->train->eval runs produced identical "
              f"checkpoints and reports ({time.time() - t0:.0f}s)")
