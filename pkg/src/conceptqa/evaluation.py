"""Model evaluation: span prediction, the five answer metrics, latency,
and the ablation variants (full / no gating / no dictionary / no residual).
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass

import numpy as np

from . import metrics
from .data import EncodedExample
from .dictionary import ConceptDictionary
from .model import (
    BOOST_OFF,
    GATE_OFF,
    EncoderModel,
    ModelConfig,
    encoder_forward,
    predict_span,
    qa_forward,
)
from .tokenizer import Vocab

FULL = "full"
NO_GATING = "no_gating"
NO_ICD = "no_icd"
NO_RESIDUAL = "no_residual"
ABLATION_VARIANTS = (FULL, NO_GATING, NO_ICD, NO_RESIDUAL)


def apply_ablation(config: ModelConfig, variant: str) -> ModelConfig:
    """Map an ablation variant onto backbone modes."""
    if variant == FULL:
        return config
    if variant == NO_GATING:
        return dataclasses.replace(config, gate_mode=GATE_OFF)
    if variant == NO_ICD:
        return dataclasses.replace(config, boost_mode=BOOST_OFF)
    if variant == NO_RESIDUAL:
        return dataclasses.replace(config, residual_skip=False)
    raise ValueError(f"unknown ablation variant {variant!r}")


def ablated_model(model: EncoderModel, variant: str) -> EncoderModel:
    """Same parameters, ablated configuration (parameters are shared)."""
    return EncoderModel(
        config=apply_ablation(model.config, variant),
        params=model.params,
        seed=model.seed,
        dictionary_version=model.dictionary_version,
    )


@dataclass
class MetricReport:
    em: float                 # percent
    f1: float                 # percent
    bleu: float               # [0, 1]
    rouge_l: float            # [0, 1]
    embed_score: float        # [0, 1]
    mean_latency_ms: float
    n_examples: int
    concept_em: float | None = None
    variant: str = FULL

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def model_embedder(model: EncoderModel, vocab: Vocab) -> metrics.Embedder:
    """Per-token embeddings from the encoder's final hidden states.

    The token list is packed as a context-only sequence and each word's
    subword states are mean-pooled, yielding one vector per input token.
    """
    def embed_tokens(tokens):
        pieces = [vocab.cls_id]
        owner = [-1]
        for wi, tok in enumerate(tokens):
            for piece in vocab.encode_word(tok):
                pieces.append(vocab.piece_to_id[piece])
                owner.append(wi)
        pieces.append(vocab.sep_id)
        owner.append(-1)
        ids = np.asarray(pieces, dtype=np.int32)
        hidden = encoder_forward(model, ids, np.ones(len(ids)))
        owner_arr = np.asarray(owner)
        out = np.zeros((len(tokens), hidden.shape[1]))
        for wi in range(len(tokens)):
            mask = owner_arr == wi
            out[wi] = hidden[mask].mean(axis=0)
        return out

    return embed_tokens


def predict_all(
    model: EncoderModel,
    dataset: list[EncodedExample],
    vocab: Vocab,
    ablation: str = FULL,
) -> list[dict]:
    """Span predictions as {id, pred_text, gold_text, start, end} dicts."""
    m = ablated_model(model, ablation)
    out = []
    for enc in dataset:
        start_logits, end_logits, _ = qa_forward(m, enc.example)
        pred = predict_span(start_logits, end_logits, enc.example, m.config.max_answer_len)
        out.append({
            "id": enc.id,
            "pred_text": enc.example.span_text(vocab, (pred.start, pred.end)),
            "gold_text": enc.gold_texts[0],
            "start": pred.start,
            "end": pred.end,
        })
    return out


def measure_forward_latency(
    model: EncoderModel,
    dataset: list[EncodedExample],
    repeats: int = 5,
    ablation: str = FULL,
) -> np.ndarray:
    """Median-of-``repeats`` forward wall time per example, in milliseconds."""
    m = ablated_model(model, ablation)
    out = np.zeros(len(dataset))
    for i, enc in enumerate(dataset):
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            encoder_forward(m, enc.example.token_ids, enc.example.boost)
            times.append((time.perf_counter() - t0) * 1e3)
        out[i] = float(np.median(times))
    return out


def latency_ratio(
    model: EncoderModel,
    dataset: list[EncodedExample],
    variant_a: str = FULL,
    variant_b: str = NO_GATING,
    repeats: int = 5,
) -> float:
    """Median-latency ratio variant_a / variant_b over the dataset.

    The two variants run interleaved per example (after a warmup pass) so
    CPU frequency drift cannot bias the comparison.
    """
    ma = ablated_model(model, variant_a)
    mb = ablated_model(model, variant_b)
    first = dataset[0].example
    for _ in range(2):
        encoder_forward(ma, first.token_ids, first.boost)
        encoder_forward(mb, first.token_ids, first.boost)
    times_a, times_b = [], []
    for enc in dataset:
        ids, boost = enc.example.token_ids, enc.example.boost
        ta, tb = [], []
        for _ in range(repeats):
            t0 = time.perf_counter()
            encoder_forward(ma, ids, boost)
            ta.append(time.perf_counter() - t0)
            t0 = time.perf_counter()
            encoder_forward(mb, ids, boost)
            tb.append(time.perf_counter() - t0)
        times_a.append(float(np.median(ta)))
        times_b.append(float(np.median(tb)))
    return float(np.median(times_a) / np.median(times_b))


def evaluate(
    model: EncoderModel,
    dataset: list[EncodedExample],
    ablation: str = FULL,
    vocab: Vocab | None = None,
    embedder: metrics.Embedder | None = None,
    dictionary: ConceptDictionary | None = None,
    measure_latency: bool = True,
) -> MetricReport:
    """Full metric pass over an encoded dataset.

    EM and F1 take the max over gold references; BLEU, ROUGE-L and the
    embedding score use the primary reference.  Latency is forward-only and
    excluded from determinism guarantees.
    """
    if not dataset:
        raise ValueError("empty dataset")
    if vocab is None:
        raise ValueError("a vocabulary is required to decode predictions")
    preds = predict_all(model, dataset, vocab, ablation)

    ems, f1s, bleus, rouges = [], [], [], []
    primary_pairs = []
    concept_flags = []
    for enc, pred in zip(dataset, preds):
        text = pred["pred_text"]
        norm_pred = metrics.normalize_answer(text)
        ems.append(max(
            float(norm_pred == metrics.normalize_answer(g)) for g in enc.gold_texts
        ))
        f1s.append(max(metrics.token_f1(text, g) for g in enc.gold_texts))
        bleus.append(metrics.bleu(text, enc.gold_texts[0]))
        rouges.append(metrics.rouge_l(text, enc.gold_texts[0]))
        primary_pairs.append((text, enc.gold_texts[0]))
        if dictionary is not None:
            gold_words = metrics.normalize_answer(enc.gold_texts[0])
            concept_flags.append(any(w in dictionary for w in gold_words))

    if embedder is None:
        embedder = model_embedder(ablated_model(model, ablation), vocab)
    emb = metrics.embed_score(primary_pairs, embedder)

    concept_em = None
    if dictionary is not None and any(concept_flags):
        sel = [e for e, flag in zip(ems, concept_flags) if flag]
        concept_em = 100.0 * float(np.mean(sel))

    latency = 0.0
    if measure_latency:
        latency = float(np.mean(measure_forward_latency(model, dataset, ablation=ablation)))

    return MetricReport(
        em=100.0 * float(np.mean(ems)),
        f1=100.0 * float(np.mean(f1s)),
        bleu=float(np.mean(bleus)),
        rouge_l=float(np.mean(rouges)),
        embed_score=emb,
        mean_latency_ms=latency,
        n_examples=len(dataset),
        concept_em=concept_em,
        variant=ablation,
    )


def format_report_table(reports: list[MetricReport], ablation_style: bool = False) -> str:
    """Aligned text table; ablation style keeps the EM / F1 / EmbedScore columns."""
    if ablation_style:
        header = f"{'Configuration':<16}{'EM':>9}{'F1':>9}{'EmbedScore':>12}"
        lines = [header, "-" * len(header)]
        for r in reports:
            lines.append(
                f"{r.variant:<16}{r.em:>8.2f}%{r.f1:>8.2f}%{100 * r.embed_score:>11.2f}%"
            )
    else:
        header = (f"{'Model':<16}{'EM (%)':>9}{'F1 (%)':>9}{'BLEU (%)':>10}"
                  f"{'ROUGE-L (%)':>13}{'EmbedScore (%)':>16}{'Time (ms)':>11}")
        lines = [header, "-" * len(header)]
        for r in reports:
            lines.append(
                f"{r.variant:<16}{r.em:>9.2f}{r.f1:>9.2f}{100 * r.bleu:>10.2f}"
                f"{100 * r.rouge_l:>13.2f}{100 * r.embed_score:>16.2f}"
                f"{r.mean_latency_ms:>11.2f}"
            )
    return "\n".join(lines)
