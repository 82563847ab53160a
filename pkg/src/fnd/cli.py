"""Command-line pipeline: ingest -> preprocess -> train-vocab -> train ->
evaluate -> keywords -> report.

Every command writes its artifact plus a run manifest (config snapshot,
input digests, seed, tool version).  Exit codes: 0 success, 2 usage or
validation failure, 3 I/O failure, 4 network failure, 5 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .corpus import (
    Dataset,
    LabeledDocument,
    MockTranslationClient,
    SplitSpec,
    class_frequency,
    deduplicate,
    fetch_articles,
    load_dataset,
    save_dataset,
    split_train_test,
    translate_dataset,
)
from .errors import NetworkError, NumericalError, ValidationError
from .evaluation import (
    comparison_report,
    export_audit,
    extract_keywords,
    metrics,
    MetricsReport,
)
from .manifest import RunManifest, manifest_path_for
from .model import ModelConfig, forward, predict
from .preprocess import CleaningConfig, CleaningReport, clean_text
from .tokenizer import coverage_report, encode, load_vocab, save_vocab, train_vocab
from .training import (
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train,
    write_epoch_metrics,
    write_loss_log,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NETWORK = 4
EXIT_NUMERICAL = 5


def _fmt_of(path: str | Path) -> str:
    return "csv" if str(path).endswith(".csv") else "jsonl"


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    with open(p, encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"bad config file {p}: {exc}") from None
    if not isinstance(raw, dict):
        raise ValidationError(f"bad config file {p}: expected a JSON object")
    return raw


def _require(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"missing {what}: {p}")
    return p


def cmd_ingest(args) -> int:
    log: dict = {"command": "ingest"}
    if args.urls:
        urls_file = _require(args.urls, "URL list")
        urls = [u.strip() for u in urls_file.read_text(encoding="utf-8").splitlines() if u.strip()]
        docs, failures = fetch_articles(urls, args.selector, args.label, delay=args.delay)
        log["n_requested"] = len(urls)
        log["n_fetched"] = len(docs)
        log["errors"] = [{"url": f.url, "reason": f.reason} for f in failures]
        if urls and not docs:
            raise NetworkError(f"all {len(urls)} fetches failed; see ingestion log")
        dataset = Dataset(docs, name=Path(args.out).stem)
    else:
        data_path = _require(args.csv or args.jsonl, "input corpus")
        dataset = load_dataset(data_path, _fmt_of(data_path))
        log["n_loaded"] = len(dataset)

    if args.translate:
        client = MockTranslationClient()
        dataset, drops = translate_dataset(dataset, client)
        log["translation"] = {"client": args.translate, "n_kept": len(dataset), "n_dropped": len(drops),
                              "drops": [{"id": i, "reason": r} for i, r in drops]}
    if args.dedup:
        before = len(dataset)
        dataset = deduplicate(dataset)
        log["n_duplicates_removed"] = before - len(dataset)

    save_dataset(dataset, args.out, _fmt_of(args.out))
    freq = class_frequency(dataset) if len(dataset) else None
    if freq:
        log["class_frequency"] = {"n_total": freq.n_total, "n_fake": freq.n_fake,
                                  "n_real": freq.n_real, "fake_fraction": freq.fake_fraction}
    log_path = args.log or str(args.out) + ".log.json"
    with open(log_path, "w", encoding="utf-8") as f:
        json.dump(log, f, ensure_ascii=False, indent=2)

    inputs = [p for p in (args.urls, args.csv, args.jsonl) if p]
    config = {"selector": args.selector, "label": args.label, "translate": args.translate,
              "dedup": args.dedup}
    RunManifest.for_run("ingest", config, inputs).write(manifest_path_for(args.out))
    print(f"wrote {len(dataset)} documents to {args.out}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    data_path = _require(args.data, "input corpus")
    dataset = load_dataset(data_path, _fmt_of(data_path))
    cfg = CleaningConfig.from_json_file(args.cleaning_config) if args.cleaning_config else CleaningConfig()

    cleaned_docs = []
    totals = CleaningReport()
    n_emptied = 0
    for doc in dataset.documents:
        cleaned, report = clean_text(doc.text, cfg)
        totals = totals.merge(report)
        if not cleaned:
            n_emptied += 1  # empty texts cannot be reloaded, so they are dropped here
            continue
        cleaned_docs.append(LabeledDocument(doc.id, cleaned, doc.label, doc.source))
    result = Dataset(cleaned_docs, name=dataset.name)
    if args.dedup:
        result = deduplicate(result)

    save_dataset(result, args.out, _fmt_of(args.out))
    log = {
        "command": "preprocess",
        "n_in": len(dataset),
        "n_out": len(result),
        "n_emptied": n_emptied,
        "counts": vars(totals),
    }
    with open(str(args.out) + ".log.json", "w", encoding="utf-8") as f:
        json.dump(log, f, ensure_ascii=False, indent=2)
    config = {"cleaning": {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(cfg).items()},
              "dedup": args.dedup}
    RunManifest.for_run("preprocess", config, [data_path]).write(manifest_path_for(args.out))
    print(f"cleaned {len(dataset)} -> {len(result)} documents -> {args.out}")
    return EXIT_OK


def cmd_train_vocab(args) -> int:
    data_path = _require(args.data, "cleaned corpus")
    dataset = load_dataset(data_path, _fmt_of(data_path))
    vocab = train_vocab(dataset.texts(), vocab_size=args.vocab_size, min_frequency=args.min_frequency)
    save_vocab(vocab, args.out)
    cov = coverage_report(dataset.texts(), vocab)
    config = {"vocab_size": args.vocab_size, "min_frequency": args.min_frequency}
    RunManifest.for_run("train-vocab", config, [data_path]).write(manifest_path_for(args.out))
    print(f"trained vocabulary of {len(vocab)} tokens (train-corpus OOV rate {cov.oov_rate:.4f}) -> {args.out}")
    return EXIT_OK


def _resolve_train_configs(args, vocab_len: int) -> tuple[ModelConfig, TrainConfig, SplitSpec]:
    file_cfg = _load_config_file(args.config)
    model_raw = dict(file_cfg.get("model", {}))
    train_raw = dict(file_cfg.get("training", {}))
    model_raw["vocab_size"] = vocab_len
    if args.max_len is not None:
        model_raw["max_len"] = args.max_len

    overrides = {
        "learning_rate": args.lr,
        "max_epochs": args.epochs,
        "batch_size": args.batch_size,
        "dropout": args.dropout,
        "optimizer": args.optimizer,
        "early_stop_patience": args.patience,
        "seed": args.seed,
    }
    for key, value in overrides.items():
        if value is not None:
            train_raw[key] = value

    model_cfg = ModelConfig.from_dict(model_raw)
    train_cfg = TrainConfig.from_dict(train_raw)
    split_fraction = args.split if args.split is not None else file_cfg.get("split", 0.8)
    split = SplitSpec(train_fraction=split_fraction, seed=train_cfg.seed, stratified=args.stratified)
    return model_cfg, train_cfg, split


def cmd_train(args) -> int:
    data_path = _require(args.data, "cleaned corpus")
    vocab_path = _require(args.vocab, "vocabulary file")
    dataset = load_dataset(data_path, _fmt_of(data_path))
    vocab = load_vocab(vocab_path)
    model_cfg, train_cfg, split = _resolve_train_configs(args, len(vocab))

    result = train(model_cfg, vocab, dataset, split, train_cfg)
    save_checkpoint(args.out, model_cfg, result.params, result.state.optimizer_state)
    write_loss_log(str(args.out) + ".loss.csv", result.state)
    write_epoch_metrics(str(args.out) + ".epochs.csv", result.epoch_metrics)

    config = {
        "model": model_cfg.to_dict(),
        "training": train_cfg.to_dict(),
        "split": {"train_fraction": split.train_fraction, "seed": split.seed,
                  "stratified": split.stratified},
    }
    RunManifest.for_run("train", config, [data_path, vocab_path], seed=train_cfg.seed).write(
        manifest_path_for(args.out)
    )
    print(
        f"trained {result.state.epoch} epochs; best val accuracy "
        f"{result.state.best_val_accuracy:.4f} at epoch {result.state.best_epoch} -> {args.out}"
    )
    return EXIT_OK


def cmd_evaluate(args) -> int:
    data_path = _require(args.data, "cleaned corpus")
    vocab_path = _require(args.vocab, "vocabulary file")
    ckpt_path = _require(args.checkpoint, "checkpoint")
    dataset = load_dataset(data_path, _fmt_of(data_path))
    vocab = load_vocab(vocab_path)
    model_cfg, params, _ = load_checkpoint(ckpt_path)

    if args.on == "all":
        part = dataset
    else:
        split = SplitSpec(train_fraction=args.split, seed=args.seed, stratified=args.stratified)
        train_part, test_part = split_train_test(dataset, split)
        part = train_part if args.on == "train" else test_part

    predictions, confidences = [], []
    for lo in range(0, len(part), args.batch_size):
        chunk = part.documents[lo : lo + args.batch_size]
        encodings = [encode(doc.text, vocab, model_cfg.max_len) for doc in chunk]
        for label, conf in predict(params, model_cfg, encodings):
            predictions.append(label)
            confidences.append(conf)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cm = export_audit(part, predictions, confidences, out_dir, positive_class=args.positive_class)
    report = metrics(cm)
    name = args.name or Path(args.checkpoint).stem
    payload = report.to_dict()
    payload["model"] = name
    payload["n_evaluated"] = cm.total
    with open(out_dir / "metrics.json", "w", encoding="utf-8") as f:
        json.dump(payload, f, ensure_ascii=False, indent=2)

    config = {"on": args.on, "split": args.split, "seed": args.seed,
              "positive_class": args.positive_class, "name": name}
    RunManifest.for_run("evaluate", config, [data_path, vocab_path, ckpt_path],
                        seed=args.seed).write(manifest_path_for(out_dir))
    print(
        f"evaluated {cm.total} documents: accuracy {report.accuracy:.4f} "
        f"(tp={cm.tp} tn={cm.tn} fp={cm.fp} fn={cm.fn}) -> {out_dir}"
    )
    return EXIT_OK


def cmd_keywords(args) -> int:
    audit_dir = Path(args.audit_dir)
    tp_path = _require(audit_dir / "tp.jsonl", "audit file")
    tn_path = _require(audit_dir / "tn.jsonl", "audit file")

    def texts_of(path: Path) -> list[str]:
        out = []
        with open(path, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    out.append(json.loads(line)["text"])
        return out

    report = extract_keywords(texts_of(tp_path), texts_of(tn_path),
                              top_k=args.top_k, alpha=args.alpha)
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, ensure_ascii=False, indent=2)
    config = {"top_k": args.top_k, "alpha": args.alpha}
    RunManifest.for_run("keywords", config, [tp_path, tn_path]).write(manifest_path_for(args.out))
    print(f"extracted {len(report.tp_keywords)} + {len(report.tn_keywords)} keywords -> {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    runs = []
    for path in args.metrics:
        p = _require(path, "metrics file")
        with open(p, encoding="utf-8") as f:
            raw = json.load(f)
        runs.append((raw.get("model", p.stem), MetricsReport.from_dict(raw)))
    markdown = comparison_report(runs, fmt="markdown")
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(markdown)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as f:
            f.write(comparison_report(runs, fmt="csv"))
    RunManifest.for_run("report", {"n_runs": len(runs)}, list(args.metrics)).write(
        manifest_path_for(args.out)
    )
    print(f"wrote comparison table for {len(runs)} runs -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fnd",
        description="Arabic fake-news detection pipeline (binary labels: 1 fake, 0 real).",
    )
    parser.add_argument("--version", action="version", version=f"fnd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="collect a labeled corpus from files or the web")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--csv", help="input corpus in CSV form (id,text,label[,source])")
    src.add_argument("--jsonl", help="input corpus in JSONL form")
    src.add_argument("--urls", help="text file with one URL per line to scrape")
    p.add_argument("--selector", default="title", help="CSS-style selector for the article text node")
    p.add_argument("--label", type=int, default=1, help="label for scraped documents (default 1 = fake)")
    p.add_argument("--translate", choices=["mock"], help="run texts through a translation client")
    p.add_argument("--dedup", action="store_true", help="drop duplicate texts")
    p.add_argument("--delay", type=float, default=0.0, help="politeness delay per request in seconds")
    p.add_argument("--log", help="ingestion log path (default <out>.log.json)")
    p.add_argument("--out", required=True, help="output corpus path (.jsonl or .csv)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("preprocess", help="clean a corpus with the standard pipeline")
    p.add_argument("--data", required=True)
    p.add_argument("--cleaning-config", help="JSON cleaning config (defaults used otherwise)")
    p.add_argument("--dedup", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train-vocab", help="train a subword vocabulary on cleaned texts")
    p.add_argument("--data", required=True)
    p.add_argument("--vocab-size", type=int, default=2000)
    p.add_argument("--min-frequency", type=int, default=2)
    p.add_argument("--out", required=True, help="vocab.txt output path")
    p.set_defaults(func=cmd_train_vocab)

    p = sub.add_parser("train", help="fine-tuning loop with early stopping")
    p.add_argument("--data", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--config", help="JSON config file; flags override file values")
    p.add_argument("--lr", type=float, dest="lr")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--optimizer", choices=["sgd", "adam", "adamw"])
    p.add_argument("--split", type=float, help="train fraction (default 0.8)")
    p.add_argument("--stratified", action="store_true")
    p.add_argument("--patience", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-len", type=int)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="metrics plus tp/tn/fp/fn audit files")
    p.add_argument("--data", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--stratified", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--on", choices=["test", "train", "all"], default="test")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--positive-class", choices=["real", "fake"], default="real")
    p.add_argument("--name", help="model name used in reports")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("keywords", help="contrastive keywords from audit buckets")
    p.add_argument("--audit-dir", required=True)
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_keywords)

    p = sub.add_parser("report", help="aggregate metrics files into a comparison table")
    p.add_argument("metrics", nargs="+", type=Path)
    p.add_argument("--csv", help="also write the table as CSV")
    p.add_argument("--out", required=True, help="markdown output path")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NetworkError as exc:
        print(f"network error: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
