import json
import random

import pytest

from fnd.corpus import (
    Dataset,
    LabeledDocument,
    MockTranslationClient,
    SplitSpec,
    class_frequency,
    deduplicate,
    extract_text,
    fetch_articles,
    load_dataset,
    save_dataset,
    split_train_test,
    translate_dataset,
)
from fnd.errors import ValidationError


def make_dataset(n, name="d", label_of=lambda i: i % 2, text_of=lambda i: f"نص {i}"):
    return Dataset(
        [LabeledDocument(id=f"doc-{i}", text=text_of(i), label=label_of(i)) for i in range(n)],
        name=name,
    )


class TestLoadSave:
    @pytest.mark.parametrize("fmt", ["csv", "jsonl"])
    def test_round_trip_identity(self, tmp_path, fmt):
        d = Dataset(
            [
                LabeledDocument("1", "خبر عادي", 0, "al-arabiya"),
                LabeledDocument("2", 'نص فيه "اقتباس", وفاصلة', 1, None),
                LabeledDocument("3", "نص مع إيموجي 🙌 وسطر\nثاني", 1, "twitter"),
            ],
            name="sample",
        )
        path = tmp_path / f"sample.{fmt}"
        save_dataset(d, path, fmt)
        loaded = load_dataset(path, fmt)
        assert loaded.documents == d.documents

    def test_round_trip_preserves_order(self, tmp_path):
        d = make_dataset(50)
        path = tmp_path / "d.csv"
        save_dataset(d, path, "csv")
        loaded = load_dataset(path, "csv")
        assert [doc.id for doc in loaded.documents] == [doc.id for doc in d.documents]

    def test_empty_file_with_header(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("id,text,label\n", encoding="utf-8")
        assert len(load_dataset(path, "csv")) == 0

    def test_label_out_of_range_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text('id,text,label\n7,"نص",2\n', encoding="utf-8")
        with pytest.raises(ValidationError, match="label out of range at line 2"):
            load_dataset(path, "csv")

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "dup.csv"
        path.write_text("id,text,label\n1,نص,0\n1,آخر,1\n", encoding="utf-8")
        with pytest.raises(ValidationError, match="duplicate id '1' at line 3"):
            load_dataset(path, "csv")

    def test_empty_text_rejected(self, tmp_path):
        path = tmp_path / "empty_text.csv"
        path.write_text("id,text,label\n1,,0\n", encoding="utf-8")
        with pytest.raises(ValidationError, match="empty text at line 2"):
            load_dataset(path, "csv")

    def test_malformed_row_names_line(self, tmp_path):
        path = tmp_path / "short.csv"
        path.write_text("id,text,label\n1,نص,0\n2,نص\n", encoding="utf-8")
        with pytest.raises(ValidationError, match="line 3"):
            load_dataset(path, "csv")

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "nohdr.csv"
        path.write_text("1,نص,0\n", encoding="utf-8")
        with pytest.raises(ValidationError, match="header"):
            load_dataset(path, "csv")

    def test_jsonl_bad_json_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "1", "text": "نص", "label": 0}\n{oops\n', encoding="utf-8")
        with pytest.raises(ValidationError, match="line 2"):
            load_dataset(path, "jsonl")

    def test_jsonl_bool_label_rejected(self, tmp_path):
        path = tmp_path / "bool.jsonl"
        path.write_text('{"id": "1", "text": "نص", "label": true}\n', encoding="utf-8")
        with pytest.raises(ValidationError, match="label out of range"):
            load_dataset(path, "jsonl")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path / "nope.csv", "csv")

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValidationError, match="format"):
            load_dataset(tmp_path / "x.csv", "tsv")

    def test_save_io_error_names_path(self, tmp_path):
        target = tmp_path / "no" / "such" / "dir" / "out.csv"
        with pytest.raises(OSError, match="out.csv"):
            save_dataset(make_dataset(1), target, "csv")


class TestDeduplicate:
    def test_identical_pair_collapses(self):
        d = Dataset([LabeledDocument("a", "نفس النص", 0), LabeledDocument("b", "نفس النص", 1)])
        assert len(deduplicate(d)) == 1
        assert deduplicate(d).documents[0].id == "a"

    def test_no_duplicates_unchanged(self):
        d = make_dataset(10)
        assert deduplicate(d).documents == d.documents

    def test_whitespace_variants_collapse(self):
        d = Dataset([LabeledDocument("a", "نص  مكرر", 0), LabeledDocument("b", "نص مكرر ", 1)])
        assert len(deduplicate(d)) == 1

    def test_planted_duplicates_vs_set_cardinality(self):
        rng = random.Random(5)
        docs = [LabeledDocument(f"d{i}", f"جملة {rng.randrange(10**6)}", i % 2) for i in range(90)]
        for j in range(10):  # plant 10 copies of existing texts
            docs.append(LabeledDocument(f"dup{j}", docs[j * 3].text, 0))
        rng.shuffle(docs)
        d = Dataset(docs)
        expected = len({" ".join(doc.text.split()) for doc in docs})
        assert len(deduplicate(d)) == expected == 90

    def test_idempotent(self):
        d = Dataset([LabeledDocument(f"i{i}", "نص" if i % 3 == 0 else f"نص {i}", 0) for i in range(30)])
        once = deduplicate(d)
        assert deduplicate(once).documents == once.documents


class TestClassFrequency:
    def test_collected_corpus_shape(self):
        d = make_dataset(10_000, label_of=lambda i: 1 if i < 4_900 else 0)
        report = class_frequency(d)
        assert report.n_fake == 4_900 and report.n_real == 5_100
        assert report.fake_fraction == pytest.approx(0.49, abs=1e-12)

    def test_translated_corpus_shape(self):
        d = make_dataset(16_000, label_of=lambda i: 1 if i % 25 < 8 else 0)  # 32% fake
        report = class_frequency(d)
        assert report.n_fake == 5_120
        assert report.fake_fraction == pytest.approx(0.32, abs=1e-12)

    def test_all_fake(self):
        report = class_frequency(make_dataset(10, label_of=lambda i: 1))
        assert report.fake_fraction == 1.0 and report.n_real == 0

    def test_empty_dataset_errors(self):
        with pytest.raises(ValidationError):
            class_frequency(Dataset([]))

    def test_matches_brute_force_counts(self):
        rng = random.Random(11)
        for _ in range(25):
            n = rng.randrange(1, 200)
            d = make_dataset(n, label_of=lambda i: rng.randint(0, 1))
            report = class_frequency(d)
            fake = sum(1 for doc in d.documents if doc.label == 1)
            assert (report.n_fake, report.n_real) == (fake, n - fake)
            assert report.fake_fraction + report.real_fraction == pytest.approx(1.0, abs=1e-12)


class TestSplit:
    def test_80_20_exact_sizes(self):
        d = make_dataset(10_000)
        train, test = split_train_test(d, SplitSpec(0.8, seed=42))
        assert (len(train), len(test)) == (8_000, 2_000)

    def test_two_docs_half(self):
        train, test = split_train_test(make_dataset(2), SplitSpec(0.5, seed=0))
        assert (len(train), len(test)) == (1, 1)

    def test_round_half_up(self):
        train, test = split_train_test(make_dataset(3), SplitSpec(0.5, seed=0))
        assert (len(train), len(test)) == (2, 1)

    def test_partition_and_determinism(self):
        d = make_dataset(997)
        runs = [split_train_test(d, SplitSpec(0.8, seed=9)) for _ in range(3)]
        train, test = runs[0]
        train_ids = {doc.id for doc in train.documents}
        test_ids = {doc.id for doc in test.documents}
        assert train_ids.isdisjoint(test_ids)
        assert train_ids | test_ids == {doc.id for doc in d.documents}
        for other_train, other_test in runs[1:]:
            assert other_train.documents == train.documents
            assert other_test.documents == test.documents

    def test_different_seeds_differ(self):
        d = make_dataset(100)
        a, _ = split_train_test(d, SplitSpec(0.8, seed=1))
        b, _ = split_train_test(d, SplitSpec(0.8, seed=2))
        assert a.documents != b.documents

    def test_stratified_balanced(self):
        d = make_dataset(100, label_of=lambda i: i % 2)
        train, test = split_train_test(d, SplitSpec(0.8, seed=3, stratified=True))
        assert sum(train.labels()) == 40 and len(train) == 80
        assert sum(test.labels()) == 10

    def test_stratified_keeps_global_size(self):
        d = make_dataset(101, label_of=lambda i: 1 if i < 41 else 0)
        train, test = split_train_test(d, SplitSpec(0.8, seed=3, stratified=True))
        assert len(train) == 81  # round-half-up of 80.8
        n_fake = sum(train.labels())
        assert abs(n_fake - 0.8 * 41) <= 1

    def test_too_small_errors(self):
        with pytest.raises(ValidationError, match="too small"):
            split_train_test(make_dataset(1), SplitSpec(0.5))
        with pytest.raises(ValidationError, match="too small"):
            split_train_test(make_dataset(3), SplitSpec(0.9))

    def test_bad_fraction_rejected(self):
        with pytest.raises(ValidationError):
            SplitSpec(train_fraction=1.0)


class TestFetchArticles:
    def test_two_pages_title_selector(self, page_server):
        pages, base = page_server
        pages["/a"] = "<html><head><title>خبر الأول</title></head><body><p>x</p></body></html>"
        pages["/b"] = "<html><head><title>خبر الثاني</title></head><body></body></html>"
        docs, failures = fetch_articles([f"{base}/a", f"{base}/b"], "title", label=1)
        assert [d.text for d in docs] == ["خبر الأول", "خبر الثاني"]
        assert [d.source for d in docs] == [f"{base}/a", f"{base}/b"]
        assert all(d.label == 1 for d in docs)
        assert failures == []

    def test_nested_selector(self, page_server):
        pages, base = page_server
        pages["/art"] = (
            "<html><body><div class='nav'><p>تنقل</p></div>"
            "<article><h1>عنوان</h1><p>الفقرة الأولى</p><p>الفقرة الثانية</p></article>"
            "</body></html>"
        )
        docs, failures = fetch_articles([f"{base}/art"], "article p", label=0)
        assert docs[0].text == "الفقرة الأولى الفقرة الثانية"
        assert not failures

    def test_404_recorded_not_raised(self, page_server):
        pages, base = page_server
        pages["/ok"] = "<title>موجود</title>"
        docs, failures = fetch_articles([f"{base}/missing", f"{base}/ok"], "title", label=1)
        assert len(docs) == 1 and len(failures) == 1
        assert failures[0].url == f"{base}/missing"

    def test_selector_no_match_recorded(self, page_server):
        pages, base = page_server
        pages["/x"] = "<html><body><p>نص</p></body></html>"
        docs, failures = fetch_articles([f"{base}/x"], "article", label=1)
        assert docs == [] and "selector" in failures[0].reason

    def test_empty_url_list(self):
        assert fetch_articles([], "title", label=0) == ([], [])

    def test_results_in_input_order(self, page_server):
        pages, base = page_server
        for i in range(8):
            pages[f"/p{i}"] = f"<title>صفحة {i}</title>"
        urls = [f"{base}/p{i}" for i in range(8)]
        docs, _ = fetch_articles(urls, "title", label=0, max_workers=4)
        assert [d.id for d in docs] == urls

    def test_bad_selector_rejected(self):
        with pytest.raises(ValidationError, match="selector"):
            fetch_articles(["http://x"], "p >> div", label=0)

    def test_bad_label_rejected(self):
        with pytest.raises(ValidationError, match="label"):
            fetch_articles([], "title", label=3)


class TestExtractText:
    def test_class_and_id_selectors(self):
        html = "<div id='main'><span class='hdr'>أ</span><span>ب</span></div><span class='hdr'>ج</span>"
        assert extract_text(html, "#main .hdr") == "أ"
        assert extract_text(html, ".hdr") == "أ ج"

    def test_void_elements_do_not_break_nesting(self):
        html = "<article><p>قبل<br>بعد</p><img src='x'><p>ثاني</p></article>"
        assert extract_text(html, "article p") == "قبل بعد ثاني"


class TestTranslate:
    def test_identity_client_keeps_all(self):
        d = make_dataset(5)
        translated, drops = translate_dataset(d, MockTranslationClient())
        assert len(translated) == 5 and drops == []
        assert translated.documents == d.documents

    def test_mapping_applies(self):
        d = Dataset([LabeledDocument("1", "hello", 0)])
        client = MockTranslationClient(mapping={"hello": "مرحبا"})
        translated, _ = translate_dataset(d, client)
        assert translated.documents[0].text == "مرحبا"

    def test_cyrillic_failures_match_scan_oracle(self):
        rng = random.Random(3)
        docs = []
        for i in range(60):
            text = f"news item {i}" + (" Москва" if rng.random() < 0.3 else "")
            docs.append(LabeledDocument(f"k{i}", text, i % 2))
        d = Dataset(docs)
        client = MockTranslationClient(fail_pattern=r"[Ѐ-ӿ]")
        translated, drops = translate_dataset(d, client)
        expected_drops = sum(
            1 for doc in docs if any("Ѐ" <= ch <= "ӿ" for ch in doc.text)
        )
        assert len(drops) == expected_drops
        assert len(translated) == len(docs) - expected_drops

    def test_all_failing_errors(self):
        d = Dataset([LabeledDocument("1", "Москва", 0)])
        client = MockTranslationClient(fail_pattern=r"[Ѐ-ӿ]")
        with pytest.raises(ValidationError, match="all 1 documents"):
            translate_dataset(d, client)
