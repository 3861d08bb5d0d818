"""Subword tokenization, QA packing and boost-vector construction.

Shows the [CLS] question [SEP] context [SEP] layout, how a multi-subword
concept word spreads its boost increment evenly over its pieces, and the
answer-span alignment that survives tokenization.
"""

import numpy as np

from conceptqa import align_answer_span, build_boost_vector, builtin_dictionary, encode_qa
from conceptqa.tokenizer import train_vocab

corpus = [
    "what did the messenger speak of",
    "the messenger spoke of patience and the people listened",
    "a lesson about prayer and charity in the evening",
]

# a deliberately small vocabulary so longer words split into pieces
vocab = train_vocab(corpus, 48)
print(f"trained {len(vocab)} pieces; sample:", vocab.pieces[4:14])

question = "what did the messenger speak of"
context = "the messenger spoke of patience and the people listened"
example = encode_qa(question, context, vocab)

print("\n=== packed sequence ===")
seg_names = {0: "SPL", 1: "Q", 2: "CTX"}
pieces = vocab.ids_to_pieces(example.token_ids)
for pos, (piece, seg) in enumerate(zip(pieces, example.segment_flags)):
    print(f"  {pos:>3} {seg_names[int(seg)]:<4} {piece}")

dictionary = builtin_dictionary()
example.boost = build_boost_vector(example, dictionary)
print("\n=== boost vector (messenger carries BF 2.41x) ===")
for pos, (piece, value) in enumerate(zip(pieces, example.boost)):
    marker = "  <-- boosted" if value > 1.0 else ""
    print(f"  {pos:>3} {piece:<12} M = {value:.3f}{marker}")

word = "messenger"
n_pieces = len(vocab.encode_word(word))
print(f"\n'{word}' splits into {n_pieces} piece(s); each gets "
      f"1 + (2.41 - 1)/{n_pieces} = {1 + 1.41 / n_pieces:.3f}")

answer = "patience"
span = align_answer_span(context, answer, context.index(answer), example)
print(f"\nanswer {answer!r} aligned to token span {span}")
print("detokenized span:", example.span_text(vocab, span))
assert example.span_text(vocab, span) == answer

boost_sum = float(np.sum(example.boost - 1.0))
print(f"\ntotal boost increment in the sequence: {boost_sum:.3f} "
      "(2.41-1 for 'messenger' in the question plus the same in the context)")
