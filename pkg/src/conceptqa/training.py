"""Two-stage fine-tuning: warmup schedule, AdamW, early stopping, k-fold,
and concept-preserving synonym augmentation.

Stage 1 adapts the LoRA adapters and span heads with a neutral boost vector;
stage 2 switches the concept boost on and additionally trains the gate and
the domain-embedding term.  Early stopping tracks validation exact match and
always returns the best checkpoint seen.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics, model as model_mod
from .dictionary import ConceptDictionary
from .model import ADAPTABLE_GROUPS, EncoderModel
from .text import normalize_text, words_with_spans
from .tokenizer import Vocab

STAGE_ADAPTATION = "adaptation"
STAGE_SPECIALIZATION = "specialization"


@dataclass(frozen=True)
class StageConfig:
    stage: str
    epochs: int
    boost_enabled: bool
    trainable: tuple[str, ...]

    def __post_init__(self):
        if self.stage == STAGE_ADAPTATION and self.boost_enabled:
            raise ValueError("adaptation stage must run with the boost disabled")
        if self.stage == STAGE_SPECIALIZATION and not self.boost_enabled:
            raise ValueError("specialization stage must run with the boost enabled")
        for group in self.trainable:
            if group not in ADAPTABLE_GROUPS:
                raise ValueError(f"unknown trainable group {group!r}")


def default_stages(stage1_epochs: int = 10, stage2_epochs: int = 20) -> list[StageConfig]:
    return [
        StageConfig(STAGE_ADAPTATION, stage1_epochs, False, ("lora", "heads")),
        StageConfig(STAGE_SPECIALIZATION, stage2_epochs, True,
                    ("lora", "gates", "heads", "embed_domain")),
    ]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-5
    effective_batch: int = 4
    warmup_steps: int = 500
    max_epochs: int = 50
    patience: int = 3
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if min(self.learning_rate, self.effective_batch, self.warmup_steps,
               self.max_epochs, self.patience) <= 0:
            raise ValueError("all training settings must be positive")


@dataclass
class TrainHistory:
    records: list[dict] = field(default_factory=list)
    best_step: int = -1
    best_em: float = -1.0
    skipped_truncated: int = 0

    def append(self, step: int, train_loss: float, val_em: float, val_f1: float,
               lr: float) -> None:
        if self.records and step <= self.records[-1]["step"]:
            raise ValueError("history steps must be strictly increasing")
        self.records.append(
            {"step": step, "loss": train_loss, "em": val_em, "f1": val_f1, "lr": lr}
        )

    def to_csv(self, path: str | Path) -> None:
        lines = ["step,loss,em,f1,lr"]
        for r in self.records:
            lines.append(f"{r['step']},{r['loss']:.6f},{r['em']:.4f},{r['f1']:.4f},{r['lr']:.3e}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def lr_schedule(step: int, cfg: TrainConfig, total_steps: int) -> float:
    """Linear warmup to the base rate, then linear decay to zero."""
    if total_steps <= cfg.warmup_steps:
        raise ValueError(
            f"schedule underflow: total_steps {total_steps} <= warmup {cfg.warmup_steps}"
        )
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    if step <= cfg.warmup_steps:
        return cfg.learning_rate * step / cfg.warmup_steps
    return cfg.learning_rate * (total_steps - step) / (total_steps - cfg.warmup_steps)


def init_optimizer_state(params: dict[str, np.ndarray]) -> dict:
    return {
        "step": 0,
        "m": {k: np.zeros_like(v) for k, v in params.items()},
        "v": {k: np.zeros_like(v) for k, v in params.items()},
    }


def optimizer_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: dict,
    cfg: TrainConfig,
    lr: float | None = None,
) -> tuple[dict[str, np.ndarray], dict]:
    """One decoupled-weight-decay adaptive-moment update, in place.

    Moments are kept per parameter name; parameters without a gradient this
    step are left untouched (no decay either).  A non-finite gradient aborts
    the step before any parameter moves.
    """
    lr = cfg.learning_rate if lr is None else lr
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name!r}; step aborted")
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
    state["step"] += 1
    t = state["step"]
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for name, g in grads.items():
        p = params[name]
        g = g.astype(p.dtype, copy=False)
        m = state["m"].setdefault(name, np.zeros_like(p))
        v = state["v"].setdefault(name, np.zeros_like(p))
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        update = (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
        p -= lr * (update + cfg.weight_decay * p)
    return params, state


def kfold_split(dataset: list, k: int = 5, seed: int = 0) -> list[tuple[list, list]]:
    """k disjoint validation folds covering the dataset, sizes within one."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(dataset) < k:
        raise ValueError(f"dataset of {len(dataset)} items cannot make {k} folds")
    perm = np.random.default_rng(seed).permutation(len(dataset))
    folds = np.array_split(perm, k)
    out = []
    for i, fold in enumerate(folds):
        val_idx = set(fold.tolist())
        train = [dataset[j] for j in perm if j not in val_idx]
        val = [dataset[j] for j in fold]
        out.append((train, val))
    return out


# ---------------------------------------------------------------------------
# synonym augmentation
# ---------------------------------------------------------------------------

_WORD_TOKEN = re.compile(r"^\w+$")


@dataclass
class SynonymTable:
    table: dict[str, list[str]]

    def __post_init__(self):
        self.table = {normalize_text(k): list(v) for k, v in self.table.items()}

    def validate_against(self, dictionary: ConceptDictionary) -> None:
        for key, values in self.table.items():
            if key in dictionary:
                raise ValueError(f"synonym key {key!r} is a dictionary concept term")
            for v in values:
                if v in dictionary:
                    raise ValueError(f"synonym value {v!r} is a dictionary concept term")

    @classmethod
    def load(cls, path: str | Path) -> "SynonymTable":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))


def augment_synonym(
    record: dict,
    table: SynonymTable,
    dictionary: ConceptDictionary,
    rate: float,
    seed: int,
) -> dict:
    """Replace non-concept context words with synonyms, preserving the answer.

    Each clean word token outside the answer span is independently replaced
    with probability ``rate``; concept terms and the answer text itself are
    never touched, and the answer character offset is re-derived from the
    edits before it.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate {rate} outside [0, 1]")
    rng = np.random.default_rng(seed)
    context = record["context"]
    answer = record["answer_text"]
    ans_start = record["answer_char_start"]
    ans_end = ans_start + len(answer)
    if context[ans_start:ans_end] != answer:
        raise ValueError("record is inconsistent: answer not at stated offset")

    pieces: list[str] = []
    cursor = 0
    new_ans_start = ans_start
    for raw, start, end in words_with_spans(context):
        pieces.append(context[cursor:start])
        cursor = end
        replacement = raw
        key = normalize_text(raw)
        eligible = (
            _WORD_TOKEN.match(raw)
            and (end <= ans_start or start >= ans_end)
            and key in table.table
            and table.table[key]
            and key not in dictionary
        )
        if eligible and rng.random() < rate:
            candidates = table.table[key]
            replacement = candidates[int(rng.integers(len(candidates)))]
        if end <= ans_start:
            new_ans_start += len(replacement) - len(raw)
        pieces.append(replacement)
    pieces.append(context[cursor:])
    new_context = "".join(pieces)

    if new_context[new_ans_start:new_ans_start + len(answer)] != answer:
        raise RuntimeError("augmentation corrupted the answer span")
    out = dict(record)
    out["context"] = new_context
    out["answer_char_start"] = new_ans_start
    return out


# ---------------------------------------------------------------------------
# two-stage training loop
# ---------------------------------------------------------------------------

def _quick_eval(model: EncoderModel, examples, vocab: Vocab, boost_enabled: bool):
    """Validation EM/F1 (percent) by greedy span prediction and text match."""
    ems, f1s = [], []
    for enc in examples:
        boost = enc.example.boost if boost_enabled else np.ones(len(enc.example))
        start, end, _ = model_mod.qa_forward(model, enc.example, boost=boost)
        pred = model_mod.predict_span(start, end, enc.example,
                                      model.config.max_answer_len)
        text = enc.example.span_text(vocab, (pred.start, pred.end))
        ems.append(max(
            float(metrics.normalize_answer(text) == metrics.normalize_answer(g))
            for g in enc.gold_texts
        ))
        f1s.append(max(metrics.token_f1(text, g) for g in enc.gold_texts))
    return 100.0 * float(np.mean(ems)), 100.0 * float(np.mean(f1s))


def train_two_stage(
    model: EncoderModel,
    train_set: list,
    val_set: list,
    cfg: TrainConfig,
    stages: list[StageConfig] | None = None,
    vocab: Vocab | None = None,
    eval_every_epochs: int = 1,
) -> tuple[EncoderModel, TrainHistory]:
    """Run the two-stage loop with per-epoch validation and early stopping.

    Validation EM that fails to improve for ``patience`` consecutive
    evaluations ends the current stage; the best checkpoint is tracked
    globally and is what the call returns.  Examples whose gold span fell
    outside the packed sequence are skipped (counted in the history).
    """
    if vocab is None:
        raise ValueError("a vocabulary is required for validation decoding")
    if not train_set or not val_set:
        raise ValueError("empty split")
    stages = stages if stages is not None else default_stages()

    history = TrainHistory()
    usable = [e for e in train_set if e.example.gold_span is not None]
    history.skipped_truncated = len(train_set) - len(usable)
    if not usable:
        raise ValueError("no trainable examples: every gold span was truncated away")

    steps_per_epoch = math.ceil(len(usable) / cfg.effective_batch)
    planned_epochs = min(sum(s.epochs for s in stages), cfg.max_epochs)
    total_steps = planned_epochs * steps_per_epoch
    lr_schedule(0, cfg, total_steps)  # validates the schedule up front

    rng = np.random.default_rng(cfg.seed)
    opt_state = init_optimizer_state({})
    best_params = {k: v.copy() for k, v in model.params.items()}
    best_em = -1.0
    global_step = 0
    epochs_done = 0

    for stage in stages:
        neutral = None if stage.boost_enabled else True
        # patience is per stage: a new stage changes the objective, so it
        # starts with a fresh non-improvement budget (the best checkpoint
        # remains global across stages)
        bad_evals = 0
        for _ in range(stage.epochs):
            if epochs_done >= cfg.max_epochs:
                break
            order = rng.permutation(len(usable))
            losses = []
            for batch_start in range(0, len(order), cfg.effective_batch):
                batch = order[batch_start:batch_start + cfg.effective_batch]
                acc: dict[str, np.ndarray] = {}
                for j in batch:
                    enc = usable[j]
                    boost = np.ones(len(enc.example)) if neutral else None
                    loss, grads = model_mod.qa_loss_and_grads(
                        model, enc.example, boost=boost,
                        trainable_groups=stage.trainable,
                    )
                    losses.append(loss)
                    for k, g in grads.items():
                        acc[k] = acc[k] + g if k in acc else g
                for k in acc:
                    acc[k] = acc[k] / len(batch)
                lr = lr_schedule(min(global_step + 1, total_steps), cfg, total_steps)
                optimizer_step(model.params, acc, opt_state, cfg, lr=lr)
                global_step += 1
            epochs_done += 1

            val_em, val_f1 = _quick_eval(model, val_set, vocab, stage.boost_enabled)
            history.append(global_step, float(np.mean(losses)), val_em, val_f1, lr)
            if val_em > best_em:
                best_em = val_em
                best_params = {k: v.copy() for k, v in model.params.items()}
                history.best_step = global_step
                history.best_em = val_em
                bad_evals = 0
            else:
                bad_evals += 1
                if bad_evals >= cfg.patience:
                    break  # this stage has converged; move to the next

    model.params = best_params
    return model, history


def train_epochs_simple(
    model: EncoderModel,
    train_set: list,
    cfg: TrainConfig,
    max_steps: int,
    trainable: tuple[str, ...] = ADAPTABLE_GROUPS,
    boost_enabled: bool = True,
    total_steps: int | None = None,
) -> EncoderModel:
    """Budgeted single-stage loop (no validation); used by sanity checks."""
    usable = [e for e in train_set if e.example.gold_span is not None]
    if not usable:
        raise ValueError("no trainable examples")
    rng = np.random.default_rng(cfg.seed)
    opt_state = init_optimizer_state({})
    total = total_steps if total_steps is not None else max_steps
    step = 0
    while step < max_steps:
        order = rng.permutation(len(usable))
        for batch_start in range(0, len(order), cfg.effective_batch):
            if step >= max_steps:
                break
            batch = order[batch_start:batch_start + cfg.effective_batch]
            acc: dict[str, np.ndarray] = {}
            for j in batch:
                enc = usable[j]
                boost = None if boost_enabled else np.ones(len(enc.example))
                _, grads = model_mod.qa_loss_and_grads(
                    model, enc.example, boost=boost, trainable_groups=trainable
                )
                for k, g in grads.items():
                    acc[k] = acc[k] + g if k in acc else g
            for k in acc:
                acc[k] = acc[k] / len(batch)
            lr = lr_schedule(min(step + 1, total), cfg, total)
            optimizer_step(model.params, acc, opt_state, cfg, lr=lr)
            step += 1
    return model
