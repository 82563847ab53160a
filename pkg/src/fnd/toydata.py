"""Synthetic Arabic news corpus with class-indicative planted keywords.

Generated, never scraped, so the whole pipeline (and its tests) runs
offline.  Real items (label 0) carry confirmation-style keywords, fake
items (label 1) carry sensational rumor-style keywords, and both share a
common filler pool, which makes the task learnable by keyword attention
while keeping the texts non-trivial.
"""

from __future__ import annotations

import numpy as np

from .corpus import Dataset, LabeledDocument

REAL_KEYWORDS = ("أكدت", "سوريا", "داعش", "رسميا", "مؤتمر", "تقرير")
FAKE_KEYWORDS = ("عاجل", "هام", "انفجار", "جوائز", "اربع", "حصريا", "شاهد")

FILLER_WORDS = (
    "الحكومة", "اليوم", "مدينة", "الوزارة", "الرئيس", "الشركة", "المنطقة",
    "الاجتماع", "القرار", "السكان", "المشروع", "الجديد", "الدولة", "الأخبار",
    "البلاد", "العاصمة", "الخدمات", "الاقتصاد", "الصحة", "التعليم", "الطقس",
    "الأسعار", "النقل", "المطار", "الحدود", "الجيش", "الشرطة", "المستشفى",
    "الجامعة", "السوق",
)


def generate_toy_corpus(n: int = 2000, seed: int = 7, name: str = "toy") -> Dataset:
    """Balanced corpus of n documents; deterministic for a fixed seed."""
    rng = np.random.default_rng(seed)
    documents = []
    for i in range(n):
        label = i % 2
        pool = FAKE_KEYWORDS if label == 1 else REAL_KEYWORDS
        n_keywords = int(rng.integers(1, 3))
        n_filler = int(rng.integers(6, 11))
        words = [pool[int(k)] for k in rng.integers(0, len(pool), size=n_keywords)]
        words += [FILLER_WORDS[int(k)] for k in rng.integers(0, len(FILLER_WORDS), size=n_filler)]
        perm = rng.permutation(len(words))
        text = " ".join(words[int(j)] for j in perm)
        documents.append(LabeledDocument(id=f"toy-{i:05d}", text=text, label=label))
    return Dataset(documents, name=name)
