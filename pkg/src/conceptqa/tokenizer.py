"""Subword tokenization, QA sequence packing and boost-vector construction.

The vocabulary is trained with greedy frequency merges (ties broken
lexicographically) and applied with longest-match-first matching, so a
word like "messenger" may split into several pieces marked with a "##"
continuation prefix.  Sequences are packed as

    [CLS] question pieces [SEP] context pieces [SEP]

with the context tail truncated first.  Each token carries the index of its
source word so that a word-level boost factor can be spread over its pieces.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .dictionary import ConceptDictionary
from .text import normalize_words, words_with_spans

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
SPECIALS = (PAD, UNK, CLS, SEP)
CONT = "##"

# segment_flags values
SEG_SPECIAL = 0
SEG_QUESTION = 1
SEG_CONTEXT = 2

DEFAULT_MAX_LEN = 384


@dataclass
class Vocab:
    pieces: list[str]
    piece_to_id: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.piece_to_id:
            self.piece_to_id = {p: i for i, p in enumerate(self.pieces)}
        if len(self.piece_to_id) != len(self.pieces):
            raise ValueError("duplicate pieces in vocabulary")
        for s in SPECIALS:
            if s not in self.piece_to_id:
                raise ValueError(f"special marker {s} missing from vocabulary")

    def __len__(self) -> int:
        return len(self.pieces)

    @property
    def pad_id(self) -> int:
        return self.piece_to_id[PAD]

    @property
    def unk_id(self) -> int:
        return self.piece_to_id[UNK]

    @property
    def cls_id(self) -> int:
        return self.piece_to_id[CLS]

    @property
    def sep_id(self) -> int:
        return self.piece_to_id[SEP]

    def encode_word(self, word: str) -> list[str]:
        """Longest-match-first subword split; [UNK] when the word is not coverable."""
        chars = list(word)
        out: list[str] = []
        start = 0
        while start < len(chars):
            end = len(chars)
            piece = None
            while start < end:
                cand = "".join(chars[start:end])
                if start > 0:
                    cand = CONT + cand
                if cand in self.piece_to_id:
                    piece = cand
                    break
                end -= 1
            if piece is None:
                return [UNK]
            out.append(piece)
            start = end
        return out

    def pieces_to_ids(self, pieces: list[str]) -> list[int]:
        return [self.piece_to_id[p] for p in pieces]

    def ids_to_pieces(self, ids) -> list[str]:
        return [self.pieces[i] for i in ids]

    def decode(self, ids) -> str:
        """Join pieces back into normalized text, dropping special markers."""
        words: list[str] = []
        for piece in self.ids_to_pieces(ids):
            if piece in SPECIALS:
                continue
            if piece.startswith(CONT) and words:
                words[-1] += piece[len(CONT):]
            else:
                words.append(piece[len(CONT):] if piece.startswith(CONT) else piece)
        return " ".join(words)


def save_vocab(vocab: Vocab, path) -> None:
    import json
    from pathlib import Path
    Path(path).write_text(json.dumps({"pieces": vocab.pieces}, indent=0) + "\n",
                          encoding="utf-8")


def load_vocab(path) -> Vocab:
    import json
    from pathlib import Path
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return Vocab(pieces=list(payload["pieces"]))


def train_vocab(corpus: list[str], target_size: int) -> Vocab:
    """Greedy frequency-merge vocabulary of exactly ``target_size`` pieces.

    Deterministic for a fixed corpus: the most frequent adjacent piece pair is
    merged each round, ties resolved by the lexicographically smallest pair.
    """
    if not corpus:
        raise ValueError("empty corpus")

    word_freqs = Counter()
    for doc in corpus:
        word_freqs.update(normalize_words(doc))
    if not word_freqs:
        raise ValueError("corpus contains no words after normalization")

    base: set[str] = set()
    splits: dict[str, list[str]] = {}
    for word in word_freqs:
        symbols = [word[0]] + [CONT + ch for ch in word[1:]]
        splits[word] = symbols
        base.update(symbols)

    pieces = list(SPECIALS) + sorted(base)
    if target_size < len(pieces):
        raise ValueError(
            f"target_size {target_size} below minimum {len(pieces)} "
            f"({len(base)} base pieces + {len(SPECIALS)} specials)"
        )
    known = set(pieces)

    while len(pieces) < target_size:
        pair_counts = Counter()
        for word, symbols in splits.items():
            freq = word_freqs[word]
            for a, b in zip(symbols, symbols[1:]):
                pair_counts[(a, b)] += freq
        if not pair_counts:
            raise ValueError(
                f"target_size {target_size} unreachable: vocabulary saturated at {len(pieces)}"
            )
        best_count = max(pair_counts.values())
        a, b = min(p for p, c in pair_counts.items() if c == best_count)
        merged = a + (b[len(CONT):] if b.startswith(CONT) else b)
        for word, symbols in splits.items():
            i = 0
            while i < len(symbols) - 1:
                if symbols[i] == a and symbols[i + 1] == b:
                    symbols[i:i + 2] = [merged]
                else:
                    i += 1
        if merged not in known:
            known.add(merged)
            pieces.append(merged)

    return Vocab(pieces=pieces)


@dataclass
class TokenizedExample:
    """A packed QA sequence plus the alignment bookkeeping around it.

    ``words`` holds the normalized source words (question first, then
    context); ``word_index`` maps each token to its entry there, -1 for
    special markers.  ``context_word_spans`` keeps raw character spans so
    answer offsets survive normalization.
    """

    token_ids: np.ndarray
    segment_flags: np.ndarray
    word_index: np.ndarray
    boost: np.ndarray
    gold_span: tuple[int, int] | None = None
    truncated: bool = False
    words: list[str] = field(default_factory=list)
    n_question_words: int = 0
    context_word_spans: list[tuple[int, int]] = field(default_factory=list)
    word_piece_counts: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.token_ids)

    @property
    def context_positions(self) -> np.ndarray:
        return np.flatnonzero(self.segment_flags == SEG_CONTEXT)

    def span_text(self, vocab: Vocab, span: tuple[int, int]) -> str:
        """Detokenized text of an inclusive token span."""
        s, e = span
        return vocab.decode(self.token_ids[s:e + 1])


def _fragments(text: str) -> tuple[list[str], list[tuple[int, int]]]:
    """Normalized word fragments of raw text with the raw span they came from.

    A raw whitespace token can normalize to zero fragments (pure punctuation)
    or several ("one/two"); every fragment inherits the raw token's span.
    """
    words: list[str] = []
    spans: list[tuple[int, int]] = []
    for raw, start, end in words_with_spans(text):
        for frag in normalize_words(raw):
            words.append(frag)
            spans.append((start, end))
    return words, spans


def encode_qa(
    question: str,
    context: str,
    vocab: Vocab,
    max_len: int = DEFAULT_MAX_LEN,
) -> TokenizedExample:
    """Pack a question/context pair into one fixed-budget token sequence.

    The question is kept whole (it may use at most ``max_len // 2`` slots
    including [CLS] and its [SEP]); the context is truncated from the tail
    when the total would exceed ``max_len``.
    """
    q_words = normalize_words(question)
    if not q_words:
        raise ValueError("question is empty")
    c_words, c_spans = _fragments(context)

    q_pieces = [vocab.encode_word(w) for w in q_words]
    c_pieces = [vocab.encode_word(w) for w in c_words]
    n_q_pieces = sum(len(p) for p in q_pieces)
    if 1 + n_q_pieces + 1 > max_len // 2:
        raise ValueError(
            f"question too long: {n_q_pieces} pieces exceed the {max_len // 2}-slot budget"
        )

    tokens: list[str] = [CLS]
    flags: list[int] = [SEG_SPECIAL]
    widx: list[int] = [-1]
    for wi, pieces in enumerate(q_pieces):
        for p in pieces:
            tokens.append(p)
            flags.append(SEG_QUESTION)
            widx.append(wi)
    tokens.append(SEP)
    flags.append(SEG_SPECIAL)
    widx.append(-1)

    budget = max_len - len(tokens) - 1  # slots left for context pieces
    truncated = False
    used = 0
    for wi, pieces in enumerate(c_pieces):
        for p in pieces:
            if used == budget:
                truncated = True
                break
            tokens.append(p)
            flags.append(SEG_CONTEXT)
            widx.append(len(q_words) + wi)
            used += 1
        if truncated:
            break
    tokens.append(SEP)
    flags.append(SEG_SPECIAL)
    widx.append(-1)

    ids = np.asarray(vocab.pieces_to_ids(tokens), dtype=np.int32)
    return TokenizedExample(
        token_ids=ids,
        segment_flags=np.asarray(flags, dtype=np.int8),
        word_index=np.asarray(widx, dtype=np.int32),
        boost=np.ones(len(ids), dtype=np.float64),
        gold_span=None,
        truncated=truncated,
        words=q_words + c_words,
        n_question_words=len(q_words),
        context_word_spans=c_spans,
        word_piece_counts=[len(p) for p in q_pieces] + [len(p) for p in c_pieces],
    )


def align_answer_span(
    context: str,
    answer_text: str,
    answer_char_start: int,
    example: TokenizedExample,
) -> tuple[int, int] | None:
    """Inclusive token span covering the answer, or None if truncated away.

    The answer must actually occur at the stated character offset.  A span
    that is only partially inside the packed sequence counts as absent: the
    caller never gets a silently clipped span.
    """
    end_char = answer_char_start + len(answer_text)
    if context[answer_char_start:end_char] != answer_text:
        raise ValueError(
            f"span mismatch: context at offset {answer_char_start} does not read {answer_text!r}"
        )

    overlapped = [
        i for i, (s, e) in enumerate(example.context_word_spans)
        if s < end_char and e > answer_char_start
    ]
    if not overlapped:
        raise ValueError("span mismatch: answer does not overlap any context word")

    wanted = {example.n_question_words + i for i in overlapped}
    positions = np.flatnonzero(np.isin(example.word_index, list(wanted)))
    if positions.size == 0:
        return None
    present = set(example.word_index[positions].tolist())
    if present != wanted:
        return None  # split by the truncation boundary
    last_word = max(wanted)
    n_present = int(np.sum(example.word_index == last_word))
    if n_present != example.word_piece_counts[last_word]:
        return None  # final answer word split by truncation
    return int(positions[0]), int(positions[-1])


def build_boost_vector(example: TokenizedExample, dictionary: ConceptDictionary) -> np.ndarray:
    """Per-token boost vector: the word-level boost increment spread evenly.

    A word with boost factor BF contributes M_i = 1 + (BF - 1) / n to each of
    its n pieces in the sequence; non-dictionary words and special markers
    stay at the neutral 1.0.
    """
    values = np.ones(len(example), dtype=np.float64)
    widx = example.word_index
    for wi in np.unique(widx):
        if wi < 0:
            continue
        bf = dictionary.boost_of(example.words[wi])
        if bf == 1.0:
            continue
        mask = widx == wi
        values[mask] = 1.0 + (bf - 1.0) / np.count_nonzero(mask)
    return values


def dictionary_flags(example: TokenizedExample) -> np.ndarray:
    """Boolean per-token flags marking dictionary-member tokens (boost > 1)."""
    return example.boost > 1.0
