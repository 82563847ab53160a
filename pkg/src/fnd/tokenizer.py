"""Subword vocabulary training and id-sequence encoding.

Vocabularies are trained with the WordPiece likelihood criterion
(merge the adjacent pair maximizing count(ab) / (count(a) * count(b)))
and applied with greedy longest-match-first segmentation.  Continuation
pieces carry the "##" prefix; the on-disk format is the usual vocab.txt,
one token per line, line number = id.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ValidationError

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP, MASK)
CONTINUATION_PREFIX = "##"
MAX_WORD_CHARS = 100  # longer words segment to a single UNK


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    token_to_id: dict[str, int] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self) -> None:
        if len(set(self.tokens)) != len(self.tokens):
            raise ValidationError("vocabulary contains duplicate tokens")
        for special in SPECIAL_TOKENS:
            if special not in self.tokens:
                raise ValidationError(f"vocabulary is missing special token {special}")
        object.__setattr__(self, "token_to_id", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return self.token_to_id[PAD]

    @property
    def unk_id(self) -> int:
        return self.token_to_id[UNK]

    @property
    def cls_id(self) -> int:
        return self.token_to_id[CLS]

    @property
    def sep_id(self) -> int:
        return self.token_to_id[SEP]

    @property
    def mask_id(self) -> int:
        return self.token_to_id[MASK]


@dataclass(frozen=True)
class Encoding:
    ids: tuple[int, ...]
    attention_mask: tuple[int, ...]
    n_oov: int


@dataclass(frozen=True)
class CoverageReport:
    n_words: int
    n_oov_words: int
    oov_rate: float
    top_oov: tuple[tuple[str, int], ...]


def _word_units(word: str) -> list[str]:
    return [word[0]] + [CONTINUATION_PREFIX + ch for ch in word[1:]]


def train_vocab(corpus: Sequence[str], vocab_size: int = 2000, min_frequency: int = 2) -> Vocabulary:
    """Train a subword vocabulary on cleaned texts.

    The alphabet keeps every single-character unit seen at least
    min_frequency times; merges then maximize the likelihood score
    count(pair) / (count(left) * count(right)) over the current corpus
    segmentation until vocab_size is reached or no pair clears
    min_frequency.  Score ties break lexicographically on the pair, so
    identical corpora always yield identical vocabularies.
    """
    if not corpus or not any(text.split() for text in corpus):
        raise ValidationError("cannot train a vocabulary on an empty corpus")
    if min_frequency < 1:
        raise ValidationError(f"min_frequency must be >= 1, got {min_frequency}")

    word_freq = Counter()
    for text in corpus:
        word_freq.update(text.split())

    unit_freq = Counter()
    for word, freq in word_freq.items():
        for unit in _word_units(word):
            unit_freq[unit] += freq
    alphabet = sorted(u for u, c in unit_freq.items() if c >= min_frequency)

    n_reserved = len(SPECIAL_TOKENS) + len(alphabet)
    if vocab_size < n_reserved:
        raise ValidationError(
            f"vocab_size {vocab_size} too small: need at least {n_reserved} "
            f"for {len(SPECIAL_TOKENS)} specials plus a {len(alphabet)}-character alphabet"
        )

    # Words containing below-threshold characters can never segment fully;
    # they are left out of the merge process (they encode to UNK anyway).
    known = set(alphabet)
    segs: dict[str, list[str]] = {
        w: units
        for w, units in ((w, _word_units(w)) for w in word_freq)
        if all(u in known for u in units)
    }

    merges: list[str] = []
    while n_reserved + len(merges) < vocab_size:
        pair_freq: Counter = Counter()
        part_freq: Counter = Counter()
        for word, units in segs.items():
            freq = word_freq[word]
            for unit in units:
                part_freq[unit] += freq
            for a, b in zip(units, units[1:]):
                pair_freq[(a, b)] += freq

        candidates = [(p, c) for p, c in pair_freq.items() if c >= min_frequency]
        if not candidates:
            break
        best_pair, _ = min(
            candidates,
            key=lambda item: (-item[1] / (part_freq[item[0][0]] * part_freq[item[0][1]]), item[0]),
        )
        a, b = best_pair
        merged = a + b[len(CONTINUATION_PREFIX):]
        merges.append(merged)

        for word, units in segs.items():
            segs[word] = _apply_merge(units, a, b, merged)

    tokens = tuple(SPECIAL_TOKENS) + tuple(alphabet) + tuple(merges)
    return Vocabulary(tokens)


def _apply_merge(units: list[str], a: str, b: str, merged: str) -> list[str]:
    out: list[str] = []
    i = 0
    while i < len(units):
        if i + 1 < len(units) and units[i] == a and units[i + 1] == b:
            out.append(merged)
            i += 2
        else:
            out.append(units[i])
            i += 1
    return out


def segment_word(word: str, v: Vocabulary) -> list[str]:
    """Greedy longest-match-first segmentation; unsegmentable words become [UNK]."""
    if len(word) > MAX_WORD_CHARS:
        return [UNK]
    pieces: list[str] = []
    start = 0
    while start < len(word):
        end = len(word)
        found = None
        while start < end:
            piece = word[start:end]
            if start > 0:
                piece = CONTINUATION_PREFIX + piece
            if piece in v.token_to_id:
                found = piece
                break
            end -= 1
        if found is None:
            return [UNK]
        pieces.append(found)
        start = end
    return pieces


def encode(text: str, v: Vocabulary, max_len: int) -> Encoding:
    """Encode cleaned text as [CLS] pieces... [SEP] padded to max_len.

    Content beyond max_len - 2 pieces is truncated; the attention mask is
    1 over non-pad positions.
    """
    if max_len < 3:
        raise ValidationError(f"max_len must be >= 3, got {max_len}")
    pieces: list[str] = []
    for word in text.split():
        pieces.extend(segment_word(word, v))
    pieces = pieces[: max_len - 2]

    ids = [v.cls_id] + [v.token_to_id[p] for p in pieces] + [v.sep_id]
    n_content = len(ids)
    ids.extend([v.pad_id] * (max_len - n_content))
    mask = [1] * n_content + [0] * (max_len - n_content)
    n_oov = sum(1 for p in pieces if p == UNK)
    return Encoding(ids=tuple(ids), attention_mask=tuple(mask), n_oov=n_oov)


def coverage_report(corpus: Sequence[str], v: Vocabulary, top_k: int = 20) -> CoverageReport:
    """Out-of-vocabulary rate over whitespace words.

    A word counts as OOV iff its greedy segmentation contains an UNK.
    top_oov ranks OOV words by frequency, ties lexicographic.
    """
    n_words = 0
    oov_counts: Counter = Counter()
    for text in corpus:
        for word in text.split():
            n_words += 1
            if UNK in segment_word(word, v):
                oov_counts[word] += 1
    if n_words == 0:
        raise ValidationError("coverage_report needs a non-empty corpus")
    n_oov = sum(oov_counts.values())
    ranked = sorted(oov_counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top_k]
    return CoverageReport(
        n_words=n_words,
        n_oov_words=n_oov,
        oov_rate=n_oov / n_words,
        top_oov=tuple(ranked),
    )


def save_vocab(v: Vocabulary, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for token in v.tokens:
            f.write(token + "\n")


def load_vocab(path: str | Path) -> Vocabulary:
    with open(path, encoding="utf-8") as f:
        tokens = tuple(line.rstrip("\n") for line in f if line.rstrip("\n"))
    if not tokens:
        raise ValidationError(f"vocabulary file {path} is empty")
    return Vocabulary(tokens)
