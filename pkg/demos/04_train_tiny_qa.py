"""End-to-end tiny QA run: synthetic fixture, two-stage training, metrics.

Stage 1 adapts the low-rank adapters and span heads with a neutral boost;
stage 2 switches the concept boost on and trains the gate.  Runs in about a
minute on one CPU core.
"""

from conceptqa import builtin_dictionary, evaluate, train_two_stage
from conceptqa.data import encode_dataset, split_dataset
from conceptqa.evaluation import format_report_table
from conceptqa.model import ModelConfig, build_model, count_parameters
from conceptqa.synthetic import corpus_texts, generate_records
from conceptqa.tokenizer import train_vocab
from conceptqa.training import StageConfig, TrainConfig

fixture = generate_records(120, seed=17)
train_recs, val_recs, test_recs = split_dataset(fixture, seed=0)
print(f"{len(train_recs)} train / {len(val_recs)} val / {len(test_recs)} test records")
print("sample question:", train_recs[0].question)
print("sample context: ", train_recs[0].context[:90], "...")
print("gold answer:    ", train_recs[0].answer_text)

vocab = train_vocab(corpus_texts(fixture), 384)
dictionary = builtin_dictionary()
enc_train, stats = encode_dataset(train_recs, vocab, dictionary)
enc_val, _ = encode_dataset(val_recs, vocab, dictionary)
enc_test, _ = encode_dataset(test_recs, vocab, dictionary)
print(f"\nencoded {stats['n_examples']} training examples "
      f"({stats['n_absent_spans']} truncated spans)")

config = ModelConfig(layers=2, hidden=32, heads=4, vocab_size=len(vocab))
counts = count_parameters(config)
print(f"parameters: {counts['trainable']:,} trainable / {counts['frozen']:,} frozen")
for group, n in counts["by_group"].items():
    print(f"  {group:<14} {n:,}")

model = build_model(config, seed=0, dictionary_version=dictionary.version)
train_cfg = TrainConfig(learning_rate=5e-3, warmup_steps=50, patience=5, seed=0)
stages = [
    StageConfig("adaptation", 8, False, ("lora", "heads")),
    StageConfig("specialization", 16, True, ("lora", "gates", "heads", "embed_domain")),
]

print("\ntraining (per-epoch validation EM drives early stopping) ...")
model, history = train_two_stage(model, enc_train, enc_val, train_cfg, stages,
                                 vocab=vocab)
for record in history.records:
    print(f"  step {record['step']:>4}  loss {record['loss']:.3f}  "
          f"val EM {record['em']:5.1f}%  val F1 {record['f1']:5.1f}%")
print(f"best checkpoint: step {history.best_step} at {history.best_em:.1f}% EM")

report = evaluate(model, enc_test, vocab=vocab, dictionary=dictionary)
report.variant = "tiny model"
print("\n=== held-out test metrics ===")
print(format_report_table([report]))
