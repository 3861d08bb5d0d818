"""Build a concept dictionary from a toy corpus and inspect the boost factors.

The importance score of a term is its normalized log frequency times a
scholarly weight, clamped to [0, 1]; the boost factor is the linear map
2 * IS + 1, so it always lands in [1.0, 3.0].
"""

import tempfile
from pathlib import Path

from conceptqa import (
    boost_factor,
    build_dictionary,
    builtin_dictionary,
    compute_importance,
    load_dictionary,
    save_dictionary,
)

corpus = [
    "allah is mentioned in nearly every narration of this corpus",
    "the prophet spoke of prayer and the prophet spoke of charity",
    "a hadith records what the prophet approved",
    "prayer at dawn and prayer at dusk frame the day",
    "allah allah allah",
]

terms = ["allah", "prophet", "prayer", "hadith", "paradise"]

print("=== importance scores from raw counts ===")
counts = {t: sum(doc.split().count(t) for doc in corpus) for t in terms if any(
    t in doc.split() for doc in corpus)}
print("raw occurrence counts:", counts)
scores = compute_importance(counts)
for term, score in sorted(scores.items(), key=lambda kv: -kv[1]):
    print(f"  IS({term}) = {score:.3f}  ->  BF = {boost_factor(score):.2f}x")

print("\n=== full build (adds document fractions and neutral fallbacks) ===")
dictionary = build_dictionary(corpus, terms, version="demo-1")
for entry in dictionary.entries.values():
    print(f"  {entry.term:<10} IS={entry.importance_score:.3f} "
          f"BF={entry.boost_factor:.2f}x doc_freq={entry.corpus_frequency:.2f}")
for warning in dictionary.build_warnings:
    print("  note:", warning)

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "demo_dictionary.json"
    save_dictionary(dictionary, path)
    assert load_dictionary(path) == dictionary
    print(f"\nround-tripped through {path.name} without loss")

print("\n=== the curated 12-term table shipped with the package ===")
builtin = builtin_dictionary()
for entry in builtin.entries.values():
    print(f"  {entry.term:<10} IS={entry.importance_score:.3f} "
          f"BF={entry.boost_factor:.2f}x  ({entry.category})")
