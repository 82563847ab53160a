import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from fnd.errors import ValidationError
from fnd.preprocess import (
    CleaningConfig,
    clean_text,
    collapse_whitespace,
    default_stopwords,
    drop_non_arabic_tokens,
    is_arabic_letter,
    is_emoji,
    load_stopwords,
    remove_stopwords,
    squeeze_repeats,
    strip_diacritics,
    strip_emoji,
)

ARABIC = "ابتثجحخدذرزسشصضطظعغفقكلمنهويءةى"
DIACRITICS = "ًٌٍَُِّْ"
EMOJI = "🙌🚁📰😀🔥❤️"
DIGITS = "0123456789٠١٢٣٤٥٦٧٨٩"
PUNCT = ".,!?؟،؛:()[]\"'-"
LATIN = "abcXYZ"

fuzz_text = st.text(alphabet=ARABIC + DIACRITICS + EMOJI + DIGITS + PUNCT + LATIN + "  ", max_size=80)

CONFIG_VARIANTS = [
    CleaningConfig(),
    CleaningConfig(remove_stopwords=True, stopwords=default_stopwords()),
    CleaningConfig(strip_diacritics=False),
    CleaningConfig(remove_punctuation=False),
    CleaningConfig(squeeze_repeats=False),
    CleaningConfig(remove_non_arabic_tokens=False, remove_digits=False),
    CleaningConfig(repeat_threshold=2),
]


class TestGoldenCases:
    def test_default_config_reproduces_golden_rows(self, golden_cleaning_rows):
        cfg = CleaningConfig()
        for i, row in enumerate(golden_cleaning_rows, start=1):
            cleaned, _ = clean_text(row["before"], cfg)
            assert cleaned == row["after"], f"golden row {i} mismatch"

    def test_golden_counts_row_one(self, golden_cleaning_rows):
        # three raised-hands emoji at the end of the first row
        _, report = clean_text(golden_cleaning_rows[0]["before"], CleaningConfig())
        assert report.n_emoji_removed == 3
        assert report.n_tokens_dropped == 0


class TestStripEmoji:
    def test_basic_removal_keeps_space(self):
        assert strip_emoji("نص 🙌") == "نص "

    def test_no_emoji_identity(self):
        text = "نص عادي بدون صور"
        assert strip_emoji(text) is not None and strip_emoji(text) == text

    def test_matches_per_codepoint_predicate(self):
        rng = random.Random(1)
        pool = ARABIC + EMOJI + " "
        for _ in range(200):
            text = "".join(rng.choice(pool) for _ in range(rng.randrange(0, 40)))
            expected = "".join(ch for ch in text if not is_emoji(ch))
            assert strip_emoji(text) == expected

    def test_variation_selector_removed(self):
        assert strip_emoji("قلب ❤️ هنا") == "قلب  هنا"


class TestSqueezeRepeats:
    def test_long_run_collapses(self):
        assert squeeze_repeats("حصريااااا", 3) == "حصريا"

    def test_below_threshold_untouched(self):
        assert squeeze_repeats("الله", 3) == "الله"

    def test_threshold_validation(self):
        with pytest.raises(ValidationError):
            squeeze_repeats("نص", 1)

    def test_matches_rle_recompression(self):
        rng = random.Random(2)
        for _ in range(300):
            text = "".join(rng.choice("اب!c ") for _ in range(rng.randrange(0, 30)))
            r = rng.choice([2, 3, 4])
            # run-length decode with capped runs
            runs = []
            for ch in text:
                if runs and runs[-1][0] == ch:
                    runs[-1][1] += 1
                else:
                    runs.append([ch, 1])
            expected = "".join(ch if n >= r else ch * n for ch, n in runs)
            assert squeeze_repeats(text, r) == expected


class TestRemoveStopwords:
    def test_basic(self):
        assert remove_stopwords("ذهب في البيت", {"في"}) == "ذهب البيت"

    def test_no_stopwords_identity(self):
        assert remove_stopwords("كلام مفيد", {"في"}) == "كلام مفيد"

    def test_matches_filter_oracle(self):
        rng = random.Random(3)
        vocabulary = ["في", "من", "خبر", "مدينة", "على", "جديد", "اليوم"]
        stopset = {"في", "من", "على"}
        for _ in range(50):
            tokens = [rng.choice(vocabulary) for _ in range(50)]
            text = " ".join(tokens)
            expected = " ".join(t for t in tokens if t not in stopset)
            assert remove_stopwords(text, stopset) == expected


class TestStepBehavior:
    def test_empty_input(self):
        cleaned, report = clean_text("", CleaningConfig())
        assert cleaned == ""
        assert vars(report) == dict.fromkeys(vars(report), 0)

    def test_digits_both_scripts_removed(self):
        cleaned, report = clean_text("كوفيد19 و٢٠٢٠ عام", CleaningConfig())
        assert cleaned == "كوفيد و عام"
        assert report.n_digits_removed == 6

    def test_mixed_token_survives_digit_strip(self):
        # the Arabic part of a mixed token survives; pure-Latin tokens drop
        cleaned, _ = clean_text("كوفيد19 eXtranews", CleaningConfig())
        assert cleaned == "كوفيد"

    def test_paired_delimiters_survive(self):
        cleaned, _ = clean_text("طلع (تنين) هنا؟!", CleaningConfig())
        assert cleaned == "طلع (تنين) هنا"

    def test_diacritics_stripped_by_default(self):
        cleaned, _ = clean_text("الرَّحِيم", CleaningConfig())
        assert cleaned == "الرحيم"

    def test_diacritics_kept_when_disabled(self):
        cleaned, _ = clean_text("الرَّحِيم", CleaningConfig(strip_diacritics=False))
        assert cleaned == "الرَّحِيم"

    def test_stopword_matching_after_diacritic_strip(self):
        cfg = CleaningConfig(remove_stopwords=True, stopwords=("في",))
        cleaned, report = clean_text("ذهب فِي البيت", cfg)
        assert cleaned == "ذهب البيت"
        assert report.n_stopwords_removed == 1

    def test_report_counts(self):
        cleaned, report = clean_text("خبر 🙌 مهم! رقم 15 test", CleaningConfig())
        assert cleaned == "خبر مهم رقم"
        assert report.n_emoji_removed == 1
        assert report.n_punct_removed == 1
        assert report.n_digits_removed == 2
        assert report.n_tokens_dropped == 1


class TestConfig:
    def test_repeat_threshold_validated(self):
        with pytest.raises(ValidationError):
            CleaningConfig(repeat_threshold=1)

    def test_stopwords_required_when_enabled(self):
        with pytest.raises(ValidationError):
            CleaningConfig(remove_stopwords=True)

    def test_from_json_file(self, tmp_path):
        path = tmp_path / "cleaning.json"
        path.write_text(
            json.dumps({"remove_stopwords": True, "repeat_threshold": 4, "strip_diacritics": False}),
            encoding="utf-8",
        )
        cfg = CleaningConfig.from_json_file(path)
        assert cfg.repeat_threshold == 4
        assert not cfg.strip_diacritics
        assert cfg.stopwords == default_stopwords()  # bundled list loaded implicitly

    def test_from_json_with_stopword_path(self, tmp_path):
        words = tmp_path / "words.txt"
        words.write_text("في\nمن\n", encoding="utf-8")
        path = tmp_path / "cleaning.json"
        path.write_text(json.dumps({"remove_stopwords": True, "stopword_path": str(words)}))
        cfg = CleaningConfig.from_json_file(path)
        assert cfg.stopwords == ("في", "من")

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "cleaning.json"
        path.write_text(json.dumps({"remove_emojis": True}))
        with pytest.raises(ValidationError, match="unknown"):
            CleaningConfig.from_json_file(path)

    def test_bundled_stopword_list_nonempty(self):
        words = default_stopwords()
        assert len(words) > 20 and "في" in words

    def test_empty_stopword_file_rejected(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("", encoding="utf-8")
        with pytest.raises(ValidationError):
            load_stopwords(path)


class TestPipelineProperties:
    @settings(max_examples=200, deadline=None)
    @given(fuzz_text)
    def test_idempotent_for_every_config(self, text):
        for cfg in CONFIG_VARIANTS:
            once, _ = clean_text(text, cfg)
            twice, _ = clean_text(once, cfg)
            assert twice == once

    @settings(max_examples=200, deadline=None)
    @given(fuzz_text)
    def test_monotone_length(self, text):
        for cfg in CONFIG_VARIANTS:
            cleaned, _ = clean_text(text, cfg)
            assert len(cleaned) <= len(text)

    @settings(max_examples=200, deadline=None)
    @given(fuzz_text)
    def test_arabic_letters_preserved_by_char_steps(self, text):
        # emoji/punctuation/digit steps may never delete an Arabic letter
        cfg = CleaningConfig(
            remove_non_arabic_tokens=False,
            squeeze_repeats=False,
            strip_diacritics=False,
            remove_stopwords=False,
        )
        cleaned, _ = clean_text(text, cfg)
        before = [ch for ch in text if is_arabic_letter(ch)]
        after = [ch for ch in cleaned if is_arabic_letter(ch)]
        assert before == after

    @settings(max_examples=150, deadline=None)
    @given(fuzz_text)
    def test_output_whitespace_normalized(self, text):
        cleaned, _ = clean_text(text, CleaningConfig())
        assert cleaned == cleaned.strip()
        assert "  " not in cleaned

    def test_helper_steps_agree_with_pipeline(self):
        text = "خبر  مُهم 👍؟"
        via_steps = collapse_whitespace(
            drop_non_arabic_tokens(strip_diacritics(strip_emoji(text).replace("؟", "")))
        )
        via_pipeline, _ = clean_text(text, CleaningConfig())
        assert via_pipeline == via_steps
