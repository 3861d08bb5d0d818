"""Concept dictionary: importance scores and attention boost factors.

A concept dictionary is a small, frozen table of domain terms.  Each term
carries an importance score IS in [0, 1] derived from log corpus frequency
times a scholarly weight, and a boost factor BF = 2 * IS + 1 in [1, 3] that
later scales token emphasis inside the encoder.  A curated 12-term fixture
ships with the package (``builtin_dictionary``).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .text import normalize_text

log = logging.getLogger(__name__)

# Tolerance for the BF = 2*IS + 1 coupling when validating serialized files
# (values in files are typically rounded to two decimals).
BF_INVARIANT_TOL = 0.005

SCHOLAR_WEIGHT_RANGE = (0.8, 1.2)


class DictionaryError(ValueError):
    """Malformed dictionary file or violated dictionary invariant."""


@dataclass(frozen=True)
class ConceptEntry:
    term: str
    importance_score: float
    boost_factor: float
    category: str = ""
    corpus_frequency: float = 0.0

    def validate(self) -> None:
        if not 0.0 <= self.importance_score <= 1.0:
            raise DictionaryError(
                f"term {self.term!r}: importance_score {self.importance_score} outside [0, 1]"
            )
        if not 1.0 <= self.boost_factor <= 3.0:
            raise DictionaryError(
                f"term {self.term!r}: boost_factor {self.boost_factor} outside [1, 3]"
            )
        expected = boost_factor(self.importance_score)
        if abs(self.boost_factor - expected) > BF_INVARIANT_TOL:
            raise DictionaryError(
                f"term {self.term!r}: boost_factor {self.boost_factor} inconsistent with "
                f"importance_score (expected {expected:.4f} +/- {BF_INVARIANT_TOL})"
            )


@dataclass
class ConceptDictionary:
    """Immutable-by-convention term table keyed by normalized term."""

    entries: dict[str, ConceptEntry]
    version: str = "unversioned"
    # Populated by build_dictionary for terms never seen in the corpus;
    # excluded from equality and from serialization.
    build_warnings: list[str] = field(default_factory=list, compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, term: str) -> bool:
        return normalize_text(term) in self.entries

    def lookup(self, term: str) -> ConceptEntry | None:
        return self.entries.get(normalize_text(term))

    def boost_of(self, term: str) -> float:
        """Boost factor for ``term``, 1.0 when the term is not in the dictionary."""
        entry = self.lookup(term)
        return entry.boost_factor if entry is not None else 1.0

    def validate(self) -> None:
        for key, entry in self.entries.items():
            if key != normalize_text(entry.term):
                raise DictionaryError(f"entry key {key!r} does not match term {entry.term!r}")
            entry.validate()


def boost_factor(importance: float) -> float:
    """Linear map of an importance score into the [1.0, 3.0] boost range."""
    if not 0.0 <= importance <= 1.0:
        raise ValueError(f"importance out of range: {importance}")
    return 2.0 * importance + 1.0


def compute_importance(
    term_freqs: dict[str, int],
    weights: dict[str, float] | None = None,
    stats: dict | None = None,
) -> dict[str, float]:
    """Importance scores from raw occurrence counts and scholarly weights.

    IS(t) = log(f_t + 1) / max_j log(f_j + 1) * w(t), clamped to [0, 1].
    Missing weights default to 1.0.  The number of clamped terms is logged
    and written into ``stats["clamped"]`` when a stats dict is supplied.
    """
    if not term_freqs:
        raise ValueError("empty corpus")
    weights = weights or {}
    for term, count in term_freqs.items():
        if count < 1:
            raise ValueError(f"term {term!r} has count {count}; counts must be >= 1")
    for term, w in weights.items():
        lo, hi = SCHOLAR_WEIGHT_RANGE
        if not lo <= w <= hi:
            raise ValueError(f"scholar weight for {term!r} is {w}, outside [{lo}, {hi}]")

    log_max = max(math.log(c + 1.0) for c in term_freqs.values())
    scores: dict[str, float] = {}
    clamped = 0
    for term, count in term_freqs.items():
        raw = math.log(count + 1.0) / log_max * weights.get(term, 1.0)
        if raw > 1.0 or raw < 0.0:
            clamped += 1
        scores[term] = min(1.0, max(0.0, raw))
    if clamped:
        log.warning("importance scores clamped to [0, 1] for %d term(s)", clamped)
    if stats is not None:
        stats["clamped"] = clamped
    return scores


def build_dictionary(
    corpus: list[str],
    term_list: list[str],
    weights: dict[str, float] | None = None,
    version: str = "built",
) -> ConceptDictionary:
    """Build a dictionary from raw documents: one entry per requested term.

    Occurrence counts feed the importance score; document fraction is stored
    separately as corpus_frequency.  Terms absent from the whole corpus get a
    neutral entry (IS 0, BF 1.0) and a warning.
    """
    if not term_list:
        raise ValueError("term_list is empty")
    if not corpus:
        raise ValueError("empty corpus")

    norm_terms = {}
    for term in term_list:
        key = normalize_text(term)
        if not key:
            raise ValueError(f"term {term!r} normalizes to nothing")
        if key in norm_terms:
            raise DictionaryError(f"duplicate term after normalization: {term!r}")
        norm_terms[key] = term

    weights = {normalize_text(t): w for t, w in (weights or {}).items()}

    occurrences = {key: 0 for key in norm_terms}
    doc_hits = {key: 0 for key in norm_terms}
    for doc in corpus:
        words = normalize_text(doc).split()
        seen = set()
        for w in words:
            if w in occurrences:
                occurrences[w] += 1
                seen.add(w)
        for w in seen:
            doc_hits[w] += 1

    present = {k: c for k, c in occurrences.items() if c > 0}
    warnings: list[str] = []
    scores = compute_importance(present, weights) if present else {}

    entries: dict[str, ConceptEntry] = {}
    for key, surface in norm_terms.items():
        if key in scores:
            is_ = scores[key]
        else:
            is_ = 0.0
            warnings.append(f"term {surface!r} never observed in the corpus; boost set to 1.0")
        entries[key] = ConceptEntry(
            term=key,
            importance_score=is_,
            boost_factor=boost_factor(is_),
            category="",
            corpus_frequency=doc_hits[key] / len(corpus),
        )
    for msg in warnings:
        log.warning(msg)
    return ConceptDictionary(entries=entries, version=version, build_warnings=warnings)


def save_dictionary(dictionary: ConceptDictionary, path: str | Path) -> None:
    dictionary.validate()
    payload = {
        "version": dictionary.version,
        "entries": [
            {
                "term": e.term,
                "importance_score": e.importance_score,
                "boost_factor": e.boost_factor,
                "category": e.category,
                "corpus_frequency": e.corpus_frequency,
            }
            for e in dictionary.entries.values()
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _dictionary_from_payload(payload: dict, source: str) -> ConceptDictionary:
    if not isinstance(payload, dict) or "entries" not in payload:
        raise DictionaryError(f"{source}: not a dictionary file (missing 'entries')")
    entries: dict[str, ConceptEntry] = {}
    for raw in payload["entries"]:
        try:
            entry = ConceptEntry(
                term=str(raw["term"]),
                importance_score=float(raw["importance_score"]),
                boost_factor=float(raw["boost_factor"]),
                category=str(raw.get("category", "")),
                corpus_frequency=float(raw.get("corpus_frequency", 0.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DictionaryError(f"{source}: malformed entry {raw!r}: {exc}") from exc
        key = normalize_text(entry.term)
        if key in entries:
            raise DictionaryError(f"{source}: duplicate term {entry.term!r}")
        entries[key] = entry
    d = ConceptDictionary(entries=entries, version=str(payload.get("version", "unversioned")))
    d.validate()
    return d


def load_dictionary(path: str | Path) -> ConceptDictionary:
    """Load and validate a dictionary JSON file (BF invariant enforced)."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DictionaryError(f"{path}: parse error at line {exc.lineno}: {exc.msg}") from exc
    return _dictionary_from_payload(payload, str(path))


def builtin_dictionary() -> ConceptDictionary:
    """The packaged 12-term fixture dictionary."""
    data = resources.files("conceptqa.fixtures").joinpath("concept_dictionary.json")
    payload = json.loads(data.read_text(encoding="utf-8"))
    return _dictionary_from_payload(payload, "builtin fixture")


def empty_dictionary(version: str = "empty") -> ConceptDictionary:
    return ConceptDictionary(entries={}, version=version)
