"""Command-line entry point: prepare, train, eval, predict, ablate, stats."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import mlee
from .config import LAYOUT, RunManifest, read_config_file, resolve, toolkit_version
from .corpus import (
    NONE,
    annotation_counts,
    build_vocabs,
    corpus_stats,
    document_sequences,
    filter_rare_labels,
    has_gold,
    read_corpus_dir,
    read_dataset,
    write_dataset,
    Vocabularies,
)
from .errors import ConfigError, DimensionMismatch, MissingFile, TriggerError, VocabularyMismatch
from .evaluation import confusion_tsv, evaluate, pct, report_render
from .model import TriggerModel, load_checkpoint
from .training import _parse_header, fit, load_word2vec, log_tsv, multi_run, predict_all

log = logging.getLogger("trigger_rnn")

CORPUS_ENV = "TRIGGER_CORPUS_ROOT"
SPLITS = ("train", "dev", "test")
SPLIT_DIRS = {"train": ("train",), "dev": ("dev", "devel", "development"), "test": ("test",)}
DEFERRED_THRESHOLD = 10

ABLATION_VARIANTS = [
    ("word_only", "g_only"),
    ("word_only", "l_plus_g"),
    ("word_plus_entity", "g_only"),
    ("word_plus_entity", "l_plus_g"),
]
VARIANT_NAMES = {
    ("word_only", "g_only"): "E_w and g",
    ("word_only", "l_plus_g"): "E_w and l+g",
    ("word_plus_entity", "g_only"): "E_w+E_e and g",
    ("word_plus_entity", "l_plus_g"): "E_w+E_e and l+g",
}


def _split_dir(corpus_dir, split):
    for name in SPLIT_DIRS[split]:
        d = Path(corpus_dir) / name
        if d.is_dir():
            return d
    raise MissingFile(f"{corpus_dir}: no {split} subdirectory (tried {', '.join(SPLIT_DIRS[split])})")


def _count_tsv(split_counts):
    labels = sorted({l for c in split_counts.values() for l in c})
    rows = ["label\t" + "\t".join(split_counts)]
    for lab in labels:
        rows.append(lab + "\t" + "\t".join(str(c.get(lab, 0)) for c in split_counts.values()))
    return "\n".join(rows) + "\n"


def _read_count_tsv(path):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    splits = lines[0].split("\t")[1:]
    out = {s: {} for s in splits}
    for line in lines[1:]:
        cols = line.split("\t")
        for s, v in zip(splits, cols[1:]):
            out[s][cols[0]] = int(v)
    return out


# ---------------------------------------------------------------------------
# prepare


def cmd_prepare(corpus_dir, out_dir, vectors=None, threshold=DEFERRED_THRESHOLD):
    """Tokenize, align and index the train/dev/test splits of a standoff corpus."""
    docs = {s: read_corpus_dir(_split_dir(corpus_dir, s)) for s in SPLITS}
    seqs = {s: [q for d in docs[s] for q in document_sequences(d)] for s in SPLITS}
    known = None
    if vectors is not None:
        known = load_word2vec(vectors).entries.keys()
    vocabs = build_vocabs(seqs["train"] + seqs["dev"], known_words=known)
    trig_counts = {s: annotation_counts(docs[s])[0] for s in SPLITS}
    ent_counts = {s: annotation_counts(docs[s])[1] for s in SPLITS}
    _, deferred = filter_rare_labels(trig_counts["test"], threshold, labels=[l for l in vocabs.labels])
    vocabs = vocabs.with_deferred(deferred)

    out = Path(out_dir) / LAYOUT["prepared"]
    out.mkdir(parents=True, exist_ok=True)
    for s in SPLITS:
        write_dataset(out / f"{s}.tsv", seqs[s])
    vocabs.save(out / "vocab.json")
    (out / "deferred.txt").write_text("".join(f"{l}\n" for l in sorted(deferred)), encoding="utf-8")
    (out / "trigger_counts.tsv").write_text(_count_tsv(trig_counts), encoding="utf-8")
    (out / "entity_counts.tsv").write_text(_count_tsv(ent_counts), encoding="utf-8")
    log.info("prepared %s: %s sentences, deferred %s", out, {s: len(v) for s, v in seqs.items()}, sorted(deferred))
    return out


# ---------------------------------------------------------------------------
# train / ablate


def _load_prepared(prepared_dir):
    prepared_dir = Path(prepared_dir)
    vocab_path = prepared_dir / "vocab.json"
    missing = [p for p in [vocab_path] + [prepared_dir / f"{s}.tsv" for s in SPLITS] if not p.is_file()]
    if missing:
        raise MissingFile("missing prepared files: " + ", ".join(str(p) for p in missing))
    vocabs = Vocabularies.load(vocab_path)
    data = {s: read_dataset(prepared_dir / f"{s}.tsv", vocabs) for s in SPLITS}
    return vocabs, data


def _vector_header_dim(path):
    with open(path, "rb") as fh:
        return _parse_header(fh.readline().decode("ascii", errors="replace"), path)[1]


def _check_vector_dim(vectors, d_w):
    if vectors is None:
        return
    if not Path(vectors).is_file():
        raise MissingFile(f"vector file {vectors} does not exist")
    dim = _vector_header_dim(vectors)
    if dim != d_w:
        raise DimensionMismatch(f"{vectors}: vector dimension {dim}, d_w is {d_w}")


def _load_vectors(vectors, vocabs, d_w):
    if vectors is None:
        return None
    _check_vector_dim(vectors, d_w)
    return load_word2vec(vectors, vocabulary=[w for w in vocabs.words])


def _configs(args):
    file_values = read_config_file(args.config) if getattr(args, "config", None) else {}
    overrides = {
        "cell": args.cell,
        "features": getattr(args, "features", None),
        "head": getattr(args, "head", None),
        "lr": args.lr,
        "epochs": args.epochs,
        "seed": args.seed,
        "runs": args.runs,
        "clip": args.clip,
        "dropout": args.dropout,
        "combine_train_dev": True if args.combine_train_dev else None,
    }
    if args.command == "train" and args.runs is None and "runs" not in file_values:
        overrides["runs"] = 1
    return resolve(file_values, overrides)


def _make_layout(root):
    root = Path(root)
    for key in ("checkpoints", "reports", "logs"):
        (root / LAYOUT[key]).mkdir(parents=True, exist_ok=True)
    return root


def _out_root(args, prepared_dir):
    return _make_layout(Path(args.out) if args.out else Path(prepared_dir).resolve().parent)


def cmd_train(prepared_dir, vectors=None, model_cfg=None, train_cfg=None, out_root=None, command="train"):
    """Single run (train/dev selection) or, with runs > 1, the best-of-N protocol."""
    _check_vector_dim(vectors, model_cfg.d_w)
    vocabs, data = _load_prepared(prepared_dir)
    pretrained = _load_vectors(vectors, vocabs, model_cfg.d_w)
    root = _make_layout(out_root)
    manifest = RunManifest(command, model_cfg.to_dict(), train_cfg.to_dict(), version=toolkit_version())
    for s in SPLITS:
        manifest.add_dataset(s, Path(prepared_dir) / f"{s}.tsv")
    manifest.add_dataset("vocab", Path(prepared_dir) / "vocab.json")
    if vectors is not None:
        manifest.add_dataset("vectors", vectors)

    def make_model(seed):
        return TriggerModel(replace(model_cfg, seed=seed), vocabs, pretrained)

    if train_cfg.runs == 1:
        model, best, rows = fit(lambda: make_model(train_cfg.seed), data["train"], data["dev"], train_cfg)
        manifest.seeds = [train_cfg.seed]
        ckpt = root / LAYOUT["checkpoints"] / "model.ckpt"
        model.save(ckpt, meta={"epoch": best.epoch, "seed": train_cfg.seed})
        logf = root / LAYOUT["logs"] / "train.tsv"
        logf.write_text(log_tsv(rows), encoding="utf-8")
        manifest.artifacts = [str(ckpt.relative_to(root)), str(logf.relative_to(root))]
        manifest.extra = {"selected_epoch": best.epoch, "pretrained_rows": model.pretrained_rows}
        manifest.write(root)
        return model, None

    result = multi_run(make_model, data["train"], data["dev"], data["test"], train_cfg)
    manifest.seeds = [r.seed for r in result.runs]
    lines = ["run\tseed\ttest_precision\ttest_recall\ttest_f1"]
    for i, r in enumerate(result.runs):
        ckpt = root / LAYOUT["checkpoints"] / f"run{i}_seed{r.seed}.ckpt"
        r.model.save(ckpt, meta={"seed": r.seed})
        logf = root / LAYOUT["logs"] / f"train_run{i}.tsv"
        logf.write_text(log_tsv(r.log), encoding="utf-8")
        manifest.artifacts += [str(ckpt.relative_to(root)), str(logf.relative_to(root))]
        rep = r.test_report
        lines.append(f"{i}\t{r.seed}\t{rep.precision!r}\t{rep.recall!r}\t{rep.f1!r}")
    best = result.best
    lines.append(f"# best seed {best.seed}: F1 {pct(best.test_f1)}; mean {pct(result.mean)} +- {pct(result.std)}")
    summary = root / LAYOUT["reports"] / "multirun.tsv"
    summary.write_text("\n".join(lines) + "\n", encoding="utf-8")
    best_ckpt = root / LAYOUT["checkpoints"] / "best.ckpt"
    best.model.save(best_ckpt, meta={"seed": best.seed})
    manifest.artifacts += [str(summary.relative_to(root)), str(best_ckpt.relative_to(root))]
    manifest.extra = {"best_seed": best.seed, "test_f1": [r.test_f1 for r in result.runs]}
    manifest.write(root)
    return best.model, result


def cmd_ablate(prepared_dir, vectors=None, model_cfg=None, train_cfg=None, out_root=None):
    """Train and test the four feature/head variants with shared seeds."""
    _check_vector_dim(vectors, model_cfg.d_w)
    vocabs, data = _load_prepared(prepared_dir)
    pretrained = _load_vectors(vectors, vocabs, model_cfg.d_w)
    root = _make_layout(out_root)
    manifest = RunManifest("ablate", model_cfg.to_dict(), train_cfg.to_dict(), version=toolkit_version())
    for s in SPLITS:
        manifest.add_dataset(s, Path(prepared_dir) / f"{s}.tsv")
    manifest.seeds = [train_cfg.seed + i for i in range(train_cfg.runs)]
    lines = ["index\tmethod\tfeature_variant\thead_variant\ttest_f1\tmean_f1\tpublished_f1"]
    scores = {}
    for idx, (feat, head) in enumerate(ABLATION_VARIANTS, 1):
        cfg = replace(model_cfg, feature_variant=feat, head_variant=head)
        res = multi_run(lambda seed: TriggerModel(replace(cfg, seed=seed), vocabs, pretrained),
                        data["train"], data["dev"], data["test"], train_cfg)
        scores[(feat, head)] = res.scores
        lines.append(
            f"{idx}\t{VARIANT_NAMES[(feat, head)]}\t{feat}\t{head}\t{pct(res.best.test_f1)}\t{pct(res.mean)}\t{mlee.PUBLISHED_ABLATION[(feat, head)]:.2f}"
        )
    out = root / LAYOUT["reports"] / "ablation.tsv"
    text = "\n".join(lines) + "\n"
    out.write_text(text, encoding="utf-8")
    manifest.artifacts = [str(out.relative_to(root))]
    manifest.extra = {"scores": {f"{f}/{h}": s for (f, h), s in scores.items()}}
    manifest.write(root)
    return text, scores


# ---------------------------------------------------------------------------
# eval / predict


def _check_vocab(header, dataset):
    vocab_path = Path(dataset).parent / "vocab.json"
    if not vocab_path.is_file():
        raise VocabularyMismatch(f"no vocab.json next to {dataset}; cannot verify the dataset vocabulary")
    digest = Vocabularies.load(vocab_path).digest()
    if digest != header["vocab_digest"]:
        raise VocabularyMismatch(f"{dataset} was prepared with a different vocabulary than the checkpoint")


def cmd_predict(checkpoint, dataset, out_file):
    model, header = load_checkpoint(checkpoint)
    _check_vocab(header, dataset)
    seqs = read_dataset(dataset, model.vocabs)
    preds = predict_all(model, seqs)
    write_dataset(out_file, seqs, preds)
    return model, seqs, preds


def cmd_eval(checkpoint, dataset, out_dir):
    """Predictions plus (when the dataset has gold labels) the full report set."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model, seqs, preds = cmd_predict(checkpoint, dataset, out / "predictions.tsv")
    if not has_gold(seqs):
        return None
    vocabs = model.vocabs
    report = evaluate([s.labels for s in seqs], preds, list(vocabs.labels),
                      vocabs.deferred_fn_labels, mlee.CATEGORY_MAP, mlee.CATEGORIES)
    text, record = report_render(report)
    (out / "report.txt").write_text(text, encoding="utf-8")
    (out / "record.txt").write_text(record, encoding="utf-8")
    (out / "confusion.tsv").write_text(confusion_tsv(report, mlee.ABBREVIATIONS), encoding="utf-8")
    if report.per_category:
        rows = ["category\tprecision\trecall\tf1"]
        rows += [f"{c}\t{pct(v.precision)}\t{pct(v.recall)}\t{pct(v.f1)}" for c, v in report.per_category.items()]
        (out / "categories.tsv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    return report


# ---------------------------------------------------------------------------
# stats


def cmd_stats(prepared_dir):
    """Trigger and entity counts per split, with the published MLEE counts alongside."""
    prepared_dir = Path(prepared_dir)
    needed = [prepared_dir / f"{s}.tsv" for s in SPLITS] + [prepared_dir / "trigger_counts.tsv", prepared_dir / "entity_counts.tsv"]
    missing = [str(p) for p in needed if not p.is_file()]
    if missing:
        raise MissingFile("missing prepared files: " + ", ".join(missing))
    parse_trig = _read_count_tsv(prepared_dir / "trigger_counts.tsv")
    parse_ent = _read_count_tsv(prepared_dir / "entity_counts.tsv")
    token_trig, token_ent = {}, {}
    for s in SPLITS:
        token_trig[s], token_ent[s] = corpus_stats(read_dataset(prepared_dir / f"{s}.tsv"))

    def table(title, parse, token, reference):
        labels = sorted({l for c in parse.values() for l in c} | {l for c in token.values() for l in c})
        out = [title, "label\t" + "\t".join(f"{s}(ann)" for s in SPLITS) + "\ttrain+dev(ann)\t"
               + "\t".join(f"{s}(tok)" for s in SPLITS) + "\tpublished_train\tpublished_test"]
        for lab in labels:
            if lab == NONE:
                continue
            ann = [parse.get(s, {}).get(lab, 0) for s in SPLITS]
            tok = [token[s].get(lab, 0) for s in SPLITS]
            ref = reference.get(lab)
            ref_cols = [str(ref[-2]), str(ref[-1])] if ref else ["-", "-"]
            out.append("\t".join([mlee.display_name(lab)] + [str(v) for v in ann] + [str(ann[0] + ann[1])]
                                 + [str(v) for v in tok] + ref_cols))
        return "\n".join(out)

    text = table("# Triggers", parse_trig, token_trig, mlee.TRIGGERS) + "\n\n" + table("# Entities", parse_ent, token_ent, mlee.ENTITIES) + "\n"
    return text, {"triggers": parse_trig, "entities": parse_ent, "token_triggers": token_trig, "token_entities": token_ent}


# ---------------------------------------------------------------------------
# argument parsing


def _add_train_flags(p, with_variant=True):
    p.add_argument("prepared_dir")
    p.add_argument("--vectors", help="word2vec vectors (text, or binary with .bin suffix)")
    p.add_argument("--config", help="flat 'key = value' config file")
    p.add_argument("--out", help="output root (default: parent of prepared_dir)")
    p.add_argument("--cell", choices=["lstm", "gru"])
    if with_variant:
        p.add_argument("--features", choices=["w", "we"])
        p.add_argument("--head", choices=["g", "lg"])
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--clip", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--combine-train-dev", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="trigger-rnn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="tokenize and index a standoff corpus")
    p.add_argument("corpus_dir", nargs="?", help=f"train/dev/test standoff dirs (default ${CORPUS_ENV})")
    p.add_argument("out_dir")
    p.add_argument("--vectors", help="pretrained vectors, used to decide number normalization")
    p.add_argument("--threshold", type=int, default=DEFERRED_THRESHOLD)

    _add_train_flags(sub.add_parser("train", help="train one model or the best-of-N protocol"))
    _add_train_flags(sub.add_parser("ablate", help="feature/head ablation grid"), with_variant=False)

    p = sub.add_parser("eval", help="score a checkpoint on a prepared dataset")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("--out", required=True)

    p = sub.add_parser("predict", help="write predictions for a prepared dataset")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("--out", required=True)

    p = sub.add_parser("stats", help="corpus statistics tables")
    p.add_argument("prepared_dir")
    return parser


def run(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "prepare":
        corpus = args.corpus_dir or os.environ.get(CORPUS_ENV)
        if not corpus:
            raise ConfigError(f"no corpus directory given and ${CORPUS_ENV} is unset")
        out = cmd_prepare(corpus, args.out_dir, args.vectors, args.threshold)
        print(out)
    elif args.command in ("train", "ablate"):
        model_cfg, train_cfg = _configs(args)
        root = _out_root(args, args.prepared_dir)
        if args.command == "train":
            _, result = cmd_train(args.prepared_dir, args.vectors, model_cfg, train_cfg, root)
            if result is not None:
                print(f"best of {len(result.runs)}: F1 {pct(result.best.test_f1)} (seed {result.best.seed})")
            print(root / LAYOUT["manifest"])
        else:
            text, _ = cmd_ablate(args.prepared_dir, args.vectors, model_cfg, train_cfg, root)
            sys.stdout.write(text)
    elif args.command == "eval":
        report = cmd_eval(args.checkpoint, args.dataset, args.out)
        if report is None:
            print("no gold labels: wrote predictions only")
        else:
            sys.stdout.write(report_render(report)[0])
    elif args.command == "predict":
        cmd_predict(args.checkpoint, args.dataset, args.out)
    elif args.command == "stats":
        sys.stdout.write(cmd_stats(args.prepared_dir)[0])
    return 0


def main(argv=None):
    try:
        return run(argv)
    except TriggerError as exc:
        msg = str(exc).replace("\n", " ")
        print(f"{type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
