"""Arabic text cleaning pipeline.

Every step is a pure string transformation; clean_text chains the enabled
ones in a fixed order:

    emoji -> punctuation -> digits -> diacritics -> repeat-squeeze
          -> non-Arabic-token drop -> stopwords -> whitespace collapse

Diacritics are stripped before the repeat squeeze so that runs interrupted
only by vowel marks are still collapsed; otherwise a second clean pass
could change the text again and idempotence would not hold.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

from .errors import ValidationError

# Emoji presentation blocks plus variation selectors.  A fixed codepoint
# list keeps golden tests bit-exact across Python/Unicode versions.
EMOJI_RANGES = (
    (0x1F300, 0x1F5FF),  # misc symbols & pictographs
    (0x1F600, 0x1F64F),  # emoticons
    (0x1F680, 0x1F6FF),  # transport & map
    (0x1F900, 0x1F9FF),  # supplemental symbols & pictographs
    (0x2700, 0x27BF),    # dingbats
    (0xFE00, 0xFE0F),    # variation selectors
)

ARABIC_LETTER_RANGES = ((0x0621, 0x064A), (0x0671, 0x06D3))
DIACRITIC_RANGE = (0x064B, 0x0652)  # tashkeel
ARABIC_INDIC_DIGITS = (0x0660, 0x0669)

# Bracket/quote pairs survive cleaning; everything else in the P*
# categories goes.  Keeping paired delimiters matches how parenthesised
# glosses like "(تنين)" are preserved in real rumor-tweet corpora.
_KEPT_PUNCT_CATEGORIES = frozenset({"Ps", "Pe", "Pi", "Pf"})


def is_emoji(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in EMOJI_RANGES)


def is_arabic_letter(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in ARABIC_LETTER_RANGES)


def is_diacritic(ch: str) -> bool:
    return DIACRITIC_RANGE[0] <= ord(ch) <= DIACRITIC_RANGE[1]


def is_removable_digit(ch: str) -> bool:
    return "0" <= ch <= "9" or ARABIC_INDIC_DIGITS[0] <= ord(ch) <= ARABIC_INDIC_DIGITS[1]


def is_removable_punct(ch: str) -> bool:
    cat = unicodedata.category(ch)
    return cat.startswith("P") and cat not in _KEPT_PUNCT_CATEGORIES


def default_stopwords() -> tuple[str, ...]:
    """The bundled Arabic stopword list (one word per line resource)."""
    data = resources.files("fnd.resources").joinpath("stopwords_ar.txt").read_text("utf-8")
    return tuple(w for w in (line.strip() for line in data.splitlines()) if w)


def load_stopwords(path: str | Path) -> tuple[str, ...]:
    with open(path, encoding="utf-8") as f:
        words = tuple(w for w in (line.strip() for line in f) if w)
    if not words:
        raise ValidationError(f"stopword file {path} is empty")
    return words


@dataclass(frozen=True)
class CleaningConfig:
    """Switchboard for the cleaning steps.

    remove_stopwords defaults off: the collected rumor-tweet corpus keeps
    its function words, and the golden cleaning cases depend on that.
    Whitespace collapse always runs last under the default config.
    """

    remove_emoji: bool = True
    remove_punctuation: bool = True
    remove_digits: bool = True
    remove_non_arabic_tokens: bool = True
    squeeze_repeats: bool = True
    repeat_threshold: int = 3
    remove_stopwords: bool = False
    stopwords: tuple[str, ...] = ()
    strip_diacritics: bool = True
    collapse_whitespace: bool = True

    def __post_init__(self) -> None:
        if self.repeat_threshold < 2:
            raise ValidationError(f"repeat_threshold must be >= 2, got {self.repeat_threshold}")
        if self.remove_stopwords and not self.stopwords:
            raise ValidationError("remove_stopwords is set but the stopword list is empty")

    @classmethod
    def from_dict(cls, raw: dict) -> "CleaningConfig":
        raw = dict(raw)
        stopword_path = raw.pop("stopword_path", None)
        unknown = set(raw) - {f.name for f in cls.__dataclass_fields__.values()}
        if unknown:
            raise ValidationError(f"unknown cleaning config keys: {sorted(unknown)}")
        if "stopwords" in raw:
            raw["stopwords"] = tuple(raw["stopwords"])
        if stopword_path:
            raw["stopwords"] = load_stopwords(stopword_path)
        elif raw.get("remove_stopwords") and not raw.get("stopwords"):
            raw["stopwords"] = default_stopwords()
        return cls(**raw)

    @classmethod
    def from_json_file(cls, path: str | Path) -> "CleaningConfig":
        with open(path, encoding="utf-8") as f:
            try:
                raw = json.load(f)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"bad cleaning config {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ValidationError(f"bad cleaning config {path}: expected a JSON object")
        return cls.from_dict(raw)


@dataclass
class CleaningReport:
    n_emoji_removed: int = 0
    n_punct_removed: int = 0
    n_digits_removed: int = 0
    n_tokens_dropped: int = 0
    n_stopwords_removed: int = 0

    def merge(self, other: "CleaningReport") -> "CleaningReport":
        return CleaningReport(
            self.n_emoji_removed + other.n_emoji_removed,
            self.n_punct_removed + other.n_punct_removed,
            self.n_digits_removed + other.n_digits_removed,
            self.n_tokens_dropped + other.n_tokens_dropped,
            self.n_stopwords_removed + other.n_stopwords_removed,
        )


def strip_emoji(text: str) -> str:
    """Remove every codepoint in the emoji ranges, preserving the rest in order."""
    return "".join(ch for ch in text if not is_emoji(ch))


def strip_punctuation(text: str) -> str:
    return "".join(ch for ch in text if not is_removable_punct(ch))


def strip_digits(text: str) -> str:
    return "".join(ch for ch in text if not is_removable_digit(ch))


def strip_diacritics(text: str) -> str:
    return "".join(ch for ch in text if not is_diacritic(ch))


def squeeze_repeats(text: str, r: int) -> str:
    """Collapse every maximal run of one codepoint with length >= r to a single occurrence."""
    if r < 2:
        raise ValidationError(f"repeat threshold must be >= 2, got {r}")
    out: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        j = i
        while j < n and text[j] == text[i]:
            j += 1
        run = j - i
        out.append(text[i] if run >= r else text[i:j])
        i = j
    return "".join(out)


def drop_non_arabic_tokens(text: str) -> str:
    """Drop whitespace-delimited tokens containing no Arabic-block letter."""
    kept = [tok for tok in text.split() if any(is_arabic_letter(ch) for ch in tok)]
    return " ".join(kept)


def remove_stopwords(text: str, stopword_list: Iterable[str]) -> str:
    """Drop tokens exactly matching a stopword; survivors keep their order."""
    stopset = set(stopword_list)
    return " ".join(tok for tok in text.split() if tok not in stopset)


def collapse_whitespace(text: str) -> str:
    return " ".join(text.split())


def clean_text(text: str, cfg: CleaningConfig = CleaningConfig()) -> tuple[str, CleaningReport]:
    """Apply the enabled cleaning steps in pipeline order.

    Returns the cleaned string and per-document removal counts.  The
    result carries no leading/trailing whitespace and no double spaces;
    empty input yields empty output.
    """
    report = CleaningReport()
    if cfg.remove_emoji:
        before = len(text)
        text = strip_emoji(text)
        report.n_emoji_removed = before - len(text)
    if cfg.remove_punctuation:
        before = len(text)
        text = strip_punctuation(text)
        report.n_punct_removed = before - len(text)
    if cfg.remove_digits:
        before = len(text)
        text = strip_digits(text)
        report.n_digits_removed = before - len(text)
    if cfg.strip_diacritics:
        text = strip_diacritics(text)
    if cfg.squeeze_repeats:
        text = squeeze_repeats(text, cfg.repeat_threshold)
    if cfg.remove_non_arabic_tokens:
        before_tokens = len(text.split())
        text = drop_non_arabic_tokens(text)
        report.n_tokens_dropped = before_tokens - len(text.split())
    if cfg.remove_stopwords:
        stopset = cfg.stopwords
        if cfg.strip_diacritics:
            stopset = tuple(strip_diacritics(w) for w in stopset)
        before_tokens = len(text.split())
        text = remove_stopwords(text, stopset)
        report.n_stopwords_removed = before_tokens - len(text.split())
    if cfg.collapse_whitespace:
        text = collapse_whitespace(text)
    return text, report
