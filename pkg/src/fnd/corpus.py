"""Labeled news corpora: loading, saving, ingestion, dedup, stats and splitting.

A corpus is an ordered list of (id, text, label) rows where label 1 marks
fake/unreliable news and 0 marks real/reliable news.  This module performs
no text transformation; cleaning lives in :mod:`fnd.preprocess`.
"""

from __future__ import annotations

import csv
import json
import math
import os
import re
import time
import urllib.error
import urllib.request
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from html.parser import HTMLParser
from pathlib import Path
from typing import Iterable, Optional, Protocol, Sequence

import numpy as np

from .errors import NetworkError, TranslationError, ValidationError

FORMATS = ("csv", "jsonl")
CSV_HEADER = ["id", "text", "label", "source"]


@dataclass(frozen=True)
class LabeledDocument:
    """One news sentence/title with its binary label (1 = fake, 0 = real)."""

    id: str
    text: str
    label: int
    source: Optional[str] = None


@dataclass
class Dataset:
    documents: list[LabeledDocument]
    name: str = "dataset"

    def __len__(self) -> int:
        return len(self.documents)

    def labels(self) -> list[int]:
        return [doc.label for doc in self.documents]

    def texts(self) -> list[str]:
        return [doc.text for doc in self.documents]


@dataclass(frozen=True)
class ClassFrequencyReport:
    n_total: int
    n_fake: int
    n_real: int
    fake_fraction: float
    real_fraction: float


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0
    stratified: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ValidationError(
                f"train_fraction must lie in (0, 1), got {self.train_fraction}"
            )


def _parse_label(raw, line_num: int) -> int:
    """Strict 0/1 parse; anything else is a data error, never coerced."""
    if isinstance(raw, bool):
        raise ValidationError(f"label out of range at line {line_num}: {raw!r}")
    if isinstance(raw, int):
        value = raw
    elif isinstance(raw, str) and raw.strip() in ("0", "1"):
        value = int(raw.strip())
    else:
        raise ValidationError(f"label out of range at line {line_num}: {raw!r}")
    if value not in (0, 1):
        raise ValidationError(f"label out of range at line {line_num}: {raw!r}")
    return value


def _check_row(doc_id: str, text: str, line_num: int, seen_ids: set[str]) -> None:
    if not doc_id:
        raise ValidationError(f"empty id at line {line_num}")
    if doc_id in seen_ids:
        raise ValidationError(f"duplicate id {doc_id!r} at line {line_num}")
    if not text:
        raise ValidationError(f"empty text at line {line_num}")
    seen_ids.add(doc_id)


def load_dataset(path: str | Path, fmt: str) -> Dataset:
    """Load a labeled corpus from a CSV or JSONL file.

    CSV needs a header row ``id,text,label`` (optional 4th column
    ``source``); JSONL needs one object per line with the same keys.
    Rows are kept in file order.  Malformed rows raise ValidationError
    identifying the offending line.
    """
    path = Path(path)
    if fmt not in FORMATS:
        raise ValidationError(f"unknown format {fmt!r}, expected one of {FORMATS}")
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")

    documents: list[LabeledDocument] = []
    seen_ids: set[str] = set()

    if fmt == "csv":
        with open(path, encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            try:
                header = next(reader)
            except StopIteration:
                raise ValidationError(f"{path}: missing header row") from None
            if header not in (CSV_HEADER[:3], CSV_HEADER):
                raise ValidationError(
                    f"{path}: bad header {header!r}, expected id,text,label[,source]"
                )
            for row in reader:
                line_num = reader.line_num
                if len(row) not in (3, 4):
                    raise ValidationError(
                        f"malformed row at line {line_num}: expected 3 or 4 fields, got {len(row)}"
                    )
                doc_id, text = row[0], row[1]
                label = _parse_label(row[2], line_num)
                source = row[3] if len(row) == 4 and row[3] else None
                _check_row(doc_id, text, line_num, seen_ids)
                documents.append(LabeledDocument(doc_id, text, label, source))
    else:
        with open(path, encoding="utf-8") as f:
            for line_num, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValidationError(
                        f"malformed row at line {line_num}: {exc.msg}"
                    ) from None
                if not isinstance(obj, dict) or not {"id", "text", "label"} <= set(obj):
                    raise ValidationError(
                        f"malformed row at line {line_num}: need keys id, text, label"
                    )
                doc_id = str(obj["id"])
                text = obj["text"]
                if not isinstance(text, str):
                    raise ValidationError(f"malformed row at line {line_num}: text must be a string")
                label = _parse_label(obj["label"], line_num)
                source = obj.get("source")
                if source is not None and not isinstance(source, str):
                    raise ValidationError(f"malformed row at line {line_num}: source must be a string")
                _check_row(doc_id, text, line_num, seen_ids)
                documents.append(LabeledDocument(doc_id, text, label, source))

    return Dataset(documents, name=path.stem)


def save_dataset(d: Dataset, path: str | Path, fmt: str) -> None:
    """Write a corpus so that load_dataset reproduces it field-for-field."""
    path = Path(path)
    if fmt not in FORMATS:
        raise ValidationError(f"unknown format {fmt!r}, expected one of {FORMATS}")
    try:
        if fmt == "csv":
            with open(path, "w", encoding="utf-8", newline="") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(CSV_HEADER)
                for doc in d.documents:
                    writer.writerow([doc.id, doc.text, doc.label, doc.source or ""])
        else:
            with open(path, "w", encoding="utf-8") as f:
                for doc in d.documents:
                    obj = {"id": doc.id, "text": doc.text, "label": doc.label, "source": doc.source}
                    f.write(json.dumps(obj, ensure_ascii=False) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write dataset to {path}: {exc}") from exc


def deduplicate(d: Dataset) -> Dataset:
    """Collapse documents with identical whitespace-normalized text, keeping first occurrences."""
    seen: set[str] = set()
    kept = []
    for doc in d.documents:
        key = " ".join(doc.text.split())
        if key in seen:
            continue
        seen.add(key)
        kept.append(doc)
    return Dataset(kept, name=d.name)


def class_frequency(d: Dataset) -> ClassFrequencyReport:
    if not d.documents:
        raise ValidationError("class_frequency is undefined for an empty dataset")
    n_fake = sum(1 for doc in d.documents if doc.label == 1)
    n_total = len(d.documents)
    n_real = n_total - n_fake
    return ClassFrequencyReport(
        n_total=n_total,
        n_fake=n_fake,
        n_real=n_real,
        fake_fraction=n_fake / n_total,
        real_fraction=n_real / n_total,
    )


def _largest_remainder(targets: list[float], total: int) -> list[int]:
    """Integer allocation summing to `total`, each within 1 of its target."""
    floors = [math.floor(t) for t in targets]
    remainders = [t - fl for t, fl in zip(targets, floors)]
    short = total - sum(floors)
    order = sorted(range(len(targets)), key=lambda i: (-remainders[i], i))
    for i in order[:short]:
        floors[i] += 1
    return floors


def split_train_test(d: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Deterministic random split; |train| = round-half-up(train_fraction * n).

    In stratified mode per-class train counts are allocated by largest
    remainder so they match the global fraction within one document while
    the overall train size stays exact.  Both splits preserve the source
    document order.
    """
    n = len(d.documents)
    n_train = int(math.floor(spec.train_fraction * n + 0.5))
    if n < 2 or n_train < 1 or n_train >= n:
        raise ValidationError(
            f"dataset too small to split: n={n}, train_fraction={spec.train_fraction}"
        )
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(n)

    if spec.stratified:
        by_class: dict[int, list[int]] = {0: [], 1: []}
        for idx in order:
            by_class[d.documents[idx].label].append(int(idx))
        labels = sorted(c for c in by_class if by_class[c])
        targets = [spec.train_fraction * len(by_class[c]) for c in labels]
        counts = _largest_remainder(targets, n_train)
        train_idx = sorted(
            idx for c, k in zip(labels, counts) for idx in by_class[c][:k]
        )
    else:
        train_idx = sorted(int(i) for i in order[:n_train])

    train_set = set(train_idx)
    test_idx = [i for i in range(n) if i not in train_set]
    train = Dataset([d.documents[i] for i in train_idx], name=f"{d.name}:train")
    test = Dataset([d.documents[i] for i in test_idx], name=f"{d.name}:test")
    return train, test


# --- web article ingestion ------------------------------------------------

VOID_TAGS = frozenset(
    "area base br col embed hr img input link meta param source track wbr".split()
)


class _Node:
    __slots__ = ("tag", "classes", "elem_id", "children", "text_parts", "parent")

    def __init__(self, tag, attrs, parent):
        self.tag = tag
        attrs = dict(attrs)
        self.classes = set((attrs.get("class") or "").split())
        self.elem_id = attrs.get("id")
        self.children: list[_Node] = []
        self.text_parts: list[str] = []
        self.parent = parent

    def text(self) -> str:
        parts = list(self.text_parts)
        for child in self.children:
            parts.append(child.text())
        return " ".join(p.strip() for p in parts if p.strip())


class _TreeBuilder(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.root = _Node("[root]", [], None)
        self.stack = [self.root]

    def handle_starttag(self, tag, attrs):
        node = _Node(tag, attrs, self.stack[-1])
        self.stack[-1].children.append(node)
        if tag not in VOID_TAGS:
            self.stack.append(node)

    def handle_startendtag(self, tag, attrs):
        self.stack[-1].children.append(_Node(tag, attrs, self.stack[-1]))

    def handle_endtag(self, tag):
        # tolerate stray end tags; pop back to the matching open element
        for i in range(len(self.stack) - 1, 0, -1):
            if self.stack[i].tag == tag:
                del self.stack[i:]
                break

    def handle_data(self, data):
        self.stack[-1].text_parts.append(data)


_SIMPLE_SELECTOR_RE = re.compile(
    r"^(?P<tag>[a-zA-Z][a-zA-Z0-9]*)?(?:#(?P<id>[\w-]+))?(?:\.(?P<cls>[\w-]+))?$"
)


def _parse_selector(selector: str) -> list[dict]:
    steps = []
    for part in selector.split():
        m = _SIMPLE_SELECTOR_RE.match(part)
        if not m or not (m.group("tag") or m.group("id") or m.group("cls")):
            raise ValidationError(
                f"unsupported selector component {part!r}; use tag, tag.class, tag#id, .class or #id"
            )
        steps.append(m.groupdict())
    if not steps:
        raise ValidationError("empty selector")
    return steps


def _matches(node: _Node, step: dict) -> bool:
    if step["tag"] and node.tag != step["tag"].lower():
        return False
    if step["id"] and node.elem_id != step["id"]:
        return False
    if step["cls"] and step["cls"] not in node.classes:
        return False
    return True


def _select(root: _Node, steps: list[dict]) -> list[_Node]:
    """Descendant-combinator selection over the parsed tree, document order."""
    frontier = [root]
    for step in steps:
        matched: list[_Node] = []

        def walk(node: _Node):
            for child in node.children:
                if _matches(child, step):
                    matched.append(child)
                walk(child)

        seen: set[int] = set()
        uniq: list[_Node] = []
        for node in frontier:
            walk(node)
        for node in matched:
            if id(node) not in seen:
                seen.add(id(node))
                uniq.append(node)
        frontier = uniq
    return frontier


def extract_text(html_text: str, selector: str) -> str:
    """Text of all nodes matching a CSS-style descendant selector, space-joined."""
    builder = _TreeBuilder()
    builder.feed(html_text)
    nodes = _select(builder.root, _parse_selector(selector))
    return " ".join(t for t in (n.text() for n in nodes) if t).strip()


@dataclass(frozen=True)
class FetchFailure:
    url: str
    reason: str


def fetch_articles(
    urls: Sequence[str],
    selector: str,
    label: int,
    timeout: float = 10.0,
    delay: float = 0.0,
    max_workers: Optional[int] = None,
) -> tuple[list[LabeledDocument], list[FetchFailure]]:
    """Fetch pages and extract article text with a CSS-style selector.

    One document per successfully fetched URL, in input order, with the URL
    recorded as both id and source.  Per-URL failures (unreachable host,
    non-200 status, selector matching nothing) are collected instead of
    aborting the batch.
    """
    if label not in (0, 1):
        raise ValidationError(f"label must be 0 or 1, got {label!r}")
    steps = _parse_selector(selector)  # fail fast on a bad selector
    del steps
    if not urls:
        return [], []

    if max_workers is None:
        max_workers = int(os.environ.get("FND_THREADS", "4"))
    max_workers = max(1, min(max_workers, len(urls)))

    def fetch_one(url: str):
        if delay > 0:
            time.sleep(delay)
        try:
            with urllib.request.urlopen(url, timeout=timeout) as resp:
                charset = resp.headers.get_content_charset() or "utf-8"
                body = resp.read().decode(charset, errors="replace")
        except (urllib.error.URLError, OSError, ValueError) as exc:
            return FetchFailure(url, f"fetch failed: {exc}")
        text = extract_text(body, selector)
        if not text:
            return FetchFailure(url, "selector matched no text")
        return LabeledDocument(id=url, text=text, label=label, source=url)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        results = list(pool.map(fetch_one, urls))

    documents = [r for r in results if isinstance(r, LabeledDocument)]
    failures = [r for r in results if isinstance(r, FetchFailure)]
    return documents, failures


# --- translation ----------------------------------------------------------


class TranslationClient(Protocol):
    def translate(self, text: str, source_lang: str, target_lang: str = "ar") -> str:
        ...


class MockTranslationClient:
    """Deterministic offline stand-in for a live translation backend.

    Looks texts up in an optional mapping and falls back to the identity;
    raises TranslationError for texts matching `fail_pattern` (e.g. a
    Cyrillic range) to mimic untranslatable inputs.
    """

    def __init__(self, mapping: Optional[dict[str, str]] = None, fail_pattern: Optional[str] = None):
        self.mapping = mapping or {}
        self._fail_re = re.compile(fail_pattern) if fail_pattern else None

    def translate(self, text: str, source_lang: str, target_lang: str = "ar") -> str:
        if self._fail_re and self._fail_re.search(text):
            raise TranslationError(f"untranslatable text (matches {self._fail_re.pattern!r})")
        return self.mapping.get(text, text)


def translate_dataset(
    d: Dataset,
    client: TranslationClient,
    source_lang: str = "en",
    target_lang: str = "ar",
) -> tuple[Dataset, list[tuple[str, str]]]:
    """Translate every document; items the client fails on are dropped.

    Returns the dataset of successful translations plus a list of
    (document id, reason) drops.  Raises if every document fails.
    """
    kept: list[LabeledDocument] = []
    drops: list[tuple[str, str]] = []
    for doc in d.documents:
        try:
            translated = client.translate(doc.text, source_lang, target_lang)
        except TranslationError as exc:
            drops.append((doc.id, str(exc)))
            continue
        kept.append(LabeledDocument(doc.id, translated, doc.label, doc.source))
    if d.documents and not kept:
        raise ValidationError(f"translation failed for all {len(d.documents)} documents")
    return Dataset(kept, name=d.name), drops
