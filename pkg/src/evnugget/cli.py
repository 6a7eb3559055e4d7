"""Command line entry point: ``train``, ``predict``, ``score`` and ``analyze``.

Settings come from a flat ``key = value`` file (``--config``); ``--set
key=value`` and the dedicated flags override it. Relative paths in the file
are resolved against the file's directory.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

from . import coref, nugget, scorer
from .analysis import all_tables
from .corpus import ParseError, read_annotations, read_documents, vocabulary, write_annotation_file
from .nn import ModelFormatError
from .resources import ResourceBundle, load_bundle, load_embeddings

log = logging.getLogger("evnugget")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
MODES = ("joint", "separate_span_realis", "single_member")
MANIFEST = "manifest.json"

_PATH_KEYS = ("corpus", "gold", "embeddings", "pos_vocab", "deprel_vocab", "affix_list", "ner_vocab",
              "subtype_vocab", "model_dir", "output_dir", "ensemble_spec")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


@dataclass
class RunConfig:
    corpus: str | None = None
    gold: str | None = None
    embeddings: str | None = None
    pos_vocab: str | None = None
    deprel_vocab: str | None = None
    affix_list: str | None = None
    ner_vocab: str | None = None
    subtype_vocab: str | None = None
    model_dir: str | None = None
    output_dir: str | None = None
    ensemble_spec: str | None = None
    base_seed: int = 0
    mode: str = "joint"
    workers: int = 0
    same_type_filter: bool = True
    keep_other_subtype: bool = False
    emit_margin: float = 0.0
    coref_threshold: float = 0.5
    learning_rate: float = 0.01
    batch_size: int = 32
    coref_epochs: int = coref.CorefConfig.epochs
    coref_learning_rate: float = coref.CorefConfig.learning_rate
    coref_neg_ratio: float = coref.CorefConfig.neg_ratio
    strongest_span_member: str = "S1"
    strongest_type_member: str = "T1"
    system_id: str = "evnugget"
    run_name: str = "I"

    def set(self, key: str, raw: str, base: Path | None = None) -> None:
        types = {f.name: f.type for f in fields(self)}
        if key not in types:
            raise UsageError(f"unknown configuration key {key!r}")
        kind = types[key]
        value: object
        if kind == "bool":
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no", "on", "off"):
                raise UsageError(f"{key} expects a boolean, got {raw!r}")
            value = low in ("true", "1", "yes", "on")
        elif kind == "int":
            value = _convert(int, key, raw)
        elif kind == "float":
            value = _convert(float, key, raw)
        else:
            value = raw.strip()
            if key in _PATH_KEYS and base is not None and not Path(value).is_absolute():
                value = str(base / value)
        setattr(self, key, value)

    def hyperparameters(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items() if k not in _PATH_KEYS}


def _convert(fn, key, raw):
    try:
        return fn(raw.strip())
    except ValueError:
        raise UsageError(f"{key} expects a {fn.__name__}, got {raw!r}") from None


def load_config(path: str | None, overrides: Sequence[str] = ()) -> RunConfig:
    cfg = RunConfig()
    if path:
        p = Path(path)
        if not p.is_file():
            raise UsageError(f"config file {path} does not exist")
        for lineno, raw in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            cfg.set(key.strip(), value.strip().strip('"'), p.parent)
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value)
    if cfg.mode not in MODES:
        raise UsageError(f"mode must be one of {', '.join(MODES)}")
    return cfg


def _require(cfg: RunConfig, *keys: str) -> None:
    for key in keys:
        value = getattr(cfg, key)
        if not value:
            raise UsageError(f"missing required setting {key!r}")
        if key != "model_dir" and key != "output_dir" and not Path(value).exists():
            raise UsageError(f"{key} path {value} does not exist")


def _workers(cfg: RunConfig) -> int:
    return cfg.workers if cfg.workers > 0 else nugget.default_workers()


def _bundle(cfg: RunConfig, docs, vocabs: dict | None = None) -> ResourceBundle:
    restrict = vocabulary(docs)
    if vocabs is not None:
        words, vectors = load_embeddings(cfg.embeddings, restrict)
        return ResourceBundle(words, vectors, **{k: tuple(v) for k, v in vocabs.items()})
    return load_bundle(cfg.embeddings, cfg.pos_vocab, cfg.deprel_vocab, cfg.affix_list, cfg.ner_vocab,
                       cfg.subtype_vocab, restrict=restrict)


def _specs(cfg: RunConfig) -> dict[str, nugget.EnsembleSpec]:
    overrides = {"learning_rate": cfg.learning_rate, "batch_size": cfg.batch_size}
    if cfg.ensemble_spec:
        specs = nugget.parse_spec(Path(cfg.ensemble_spec).read_text(encoding="utf-8"), **overrides)
    else:
        specs = nugget.default_specs(**overrides)
    for task in ("span_realis", "type"):
        if task not in specs:
            raise UsageError(f"ensemble spec has no {task} members")
    return specs


# --------------------------------------------------------------------------
# subcommands


def cmd_train(cfg: RunConfig) -> Path:
    _require(cfg, "corpus", "gold", "embeddings", "model_dir")
    if cfg.mode == "single_member":
        raise UsageError("single_member selects members of a joint model at predict time; train with mode=joint")
    specs = _specs(cfg)
    docs = read_documents(cfg.corpus)
    doc_map = {d.doc_id: d for d in docs}
    gold, clusterings = read_annotations(cfg.gold, docs=doc_map)
    bundle = _bundle(cfg, docs)
    log.info("training on %d documents, %d gold nuggets, mode %s", len(docs), len(gold), cfg.mode)

    models = nugget.train_ensembles(docs, gold, specs, bundle, cfg.base_seed, cfg.mode, _workers(cfg))
    coref_cfg = coref.CorefConfig(cfg.coref_epochs, cfg.coref_learning_rate, cfg.batch_size,
                                  cfg.coref_neg_ratio, cfg.base_seed)
    coref_net = coref.train_coref(docs, gold, clusterings, bundle, coref_cfg)

    out = Path(cfg.model_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": 1,
        "mode": models.mode,
        "base_seed": cfg.base_seed,
        "config": cfg.hyperparameters(),
        "spec": {task: nugget.format_spec(spec) for task, spec in specs.items()},
        "vocab": {"pos_vocab": list(bundle.pos_vocab), "deprel_vocab": list(bundle.deprel_vocab),
                  "affix_list": list(bundle.affix_list), "ner_vocab": list(bundle.ner_vocab),
                  "subtype_vocab": list(bundle.subtype_vocab)},
        "ensembles": {task: nugget.save_ensemble(ens, out / task) for task, ens in models.ensembles().items()},
        "coref": coref.save_coref(coref_net, out / "coref", coref_cfg),
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    log.info("wrote models to %s", out)
    return out


_TASK_CLASSES = {"span_realis": nugget.SPAN_REALIS_CLASSES, "span": nugget.SPAN_CLASSES,
                 "realis": nugget.REALIS_CLASSES}


def load_models(model_dir: str | Path) -> tuple[dict, nugget.NuggetModels, coref.CorefNet]:
    root = Path(model_dir)
    try:
        manifest = json.loads((root / MANIFEST).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"no {MANIFEST} in {root}") from None
    subtypes = tuple(manifest["vocab"]["subtype_vocab"]) + (nugget.OTHER_SUBTYPE,)
    ensembles = {}
    for task, entries in manifest["ensembles"].items():
        classes = subtypes if task == "type" else _TASK_CLASSES[task]
        ensembles[task] = nugget.load_ensemble(root, task, entries, classes)
    try:
        models = nugget.NuggetModels(ensembles["type"], ensembles.get("span_realis"),
                                     ensembles.get("span"), ensembles.get("realis"))
    except KeyError as exc:
        raise DataError(f"manifest lacks the {exc} ensemble") from None
    if models.mode != manifest["mode"]:
        raise DataError("manifest mode does not match its ensembles")
    return manifest, models, coref.load_coref(root / "coref")


def cmd_predict(cfg: RunConfig, out_path: str | None = None) -> Path:
    _require(cfg, "corpus", "embeddings", "model_dir")
    if not Path(cfg.model_dir).is_dir():
        raise UsageError(f"model directory {cfg.model_dir} does not exist")
    manifest, models, coref_net = load_models(cfg.model_dir)
    wanted = "joint" if cfg.mode == "single_member" else cfg.mode
    if manifest["mode"] != wanted:
        raise DataError(f"models were trained in mode {manifest['mode']!r}, cannot predict in {cfg.mode!r}")
    if cfg.mode == "single_member":
        models = models.select(cfg.strongest_span_member, cfg.strongest_type_member)

    docs = read_documents(cfg.corpus)
    bundle = _bundle(cfg, docs, manifest["vocab"])
    nuggets, clusterings = [], {}
    for doc in docs:
        found = nugget.detect_document(doc, models, bundle, keep_other=cfg.keep_other_subtype,
                                       emit_margin=cfg.emit_margin)
        clusterings[doc.doc_id] = coref.resolve_document(found, doc, bundle, coref_net,
                                                         cfg.coref_threshold, cfg.same_type_filter)
        nuggets.extend(found)
        log.info("%s: %d nuggets, %d clusters", doc.doc_id, len(found), len(clusterings[doc.doc_id]))

    if out_path is None:
        if not cfg.output_dir:
            raise UsageError("give --out or set output_dir")
        out_path = str(Path(cfg.output_dir) / "system.txt")
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(write_annotation_file(nuggets, clusterings, cfg.system_id), encoding="utf-8")
    return out


def cmd_score(gold_path: str, sys_path: str, corpus_path: str, out_dir: str, run: str = "I") -> scorer.ScoreReport:
    for label, p in (("gold", gold_path), ("system", sys_path), ("corpus", corpus_path)):
        if not p:
            raise UsageError(f"missing {label} file")
        if not Path(p).is_file():
            raise UsageError(f"{label} file {p} does not exist")
    docs = read_documents(corpus_path)
    doc_map = {d.doc_id: d for d in docs}
    gold, gold_clusters = read_annotations(gold_path, docs=doc_map)
    sys_nuggets, sys_clusters = read_annotations(sys_path, docs=doc_map)
    if set(gold_clusters) != set(sys_clusters):
        missing = sorted(set(gold_clusters) ^ set(sys_clusters))[:5]
        raise scorer.UniverseMismatch(f"gold and system files cover different documents, e.g. {missing}")
    scored_docs = [d for d in docs if d.doc_id in gold_clusters]
    report = scorer.score(gold, gold_clusters, sys_nuggets, sys_clusters, scored_docs)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "mention.tsv").write_text(scorer.mention_tsv(report, run), encoding="utf-8")
    (out / "coref.tsv").write_text(scorer.coref_tsv(report, run), encoding="utf-8")
    (out / "per_document.tsv").write_text(scorer.per_document_tsv(report), encoding="utf-8")
    hist = scorer.per_document_breakdown(gold, sys_nuggets, scored_docs)
    (out / "histogram.tsv").write_text(scorer.histogram_tsv(hist), encoding="utf-8")
    return report


def cmd_analyze(corpus_path: str, gold_path: str, out_dir: str) -> dict:
    for label, p in (("corpus", corpus_path), ("gold", gold_path)):
        if not p or not Path(p).is_file():
            raise UsageError(f"{label} file {p} does not exist")
    docs = read_documents(corpus_path)
    gold, _ = read_annotations(gold_path, docs={d.doc_id: d for d in docs})
    tables = all_tables(docs, gold)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, table in tables.items():
        (out / f"{name}.tsv").write_text(table.to_tsv(), encoding="utf-8")
    return tables


# --------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evnugget", description=__doc__.split("\n")[0])
    parser.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, models=True):
        p.add_argument("--config", help="key = value settings file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one setting (repeatable)")
        p.add_argument("--seed", type=int, help="base seed")
        p.add_argument("--workers", type=int, help="parallel training workers")
        p.add_argument("--mode", choices=MODES)
        p.add_argument("--corpus")
        p.add_argument("--embeddings")
        if models:
            p.add_argument("--models", help="model directory")

    p = sub.add_parser("train", help="train nugget ensembles and the coreference net")
    common(p)
    p.add_argument("--gold")
    p = sub.add_parser("predict", help="detect nuggets and coreference chains")
    common(p)
    p.add_argument("--out", help="output annotation file")
    p = sub.add_parser("score", help="score a system file against gold")
    p.add_argument("--config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--gold")
    p.add_argument("--sys", required=True)
    p.add_argument("--corpus")
    p.add_argument("--run", help="run label for the report rows")
    p.add_argument("--out", help="report directory")
    p = sub.add_parser("analyze", help="corpus distribution tables")
    p.add_argument("--config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--corpus")
    p.add_argument("--gold")
    p.add_argument("--out", help="table directory")
    return parser


def _apply_flags(cfg: RunConfig, args) -> None:
    for flag, key in (("seed", "base_seed"), ("workers", "workers"), ("mode", "mode"), ("corpus", "corpus"),
                      ("embeddings", "embeddings"), ("models", "model_dir"), ("gold", "gold")):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, key, value)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, args.set)
        _apply_flags(cfg, args)
        if args.command == "train":
            cmd_train(cfg)
        elif args.command == "predict":
            print(cmd_predict(cfg, args.out))
        elif args.command == "score":
            out = args.out or cfg.output_dir
            if not out:
                raise UsageError("give --out or set output_dir")
            report = cmd_score(cfg.gold, args.sys, cfg.corpus, out, args.run or cfg.run_name)
            sys.stdout.write(scorer.mention_tsv(report, args.run or cfg.run_name))
            sys.stdout.write(scorer.coref_tsv(report, args.run or cfg.run_name))
        elif args.command == "analyze":
            out = args.out or cfg.output_dir
            if not out:
                raise UsageError("give --out or set output_dir")
            cmd_analyze(cfg.corpus, cfg.gold, out)
    except UsageError as exc:
        print(f"evnugget: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ParseError, ModelFormatError, scorer.UniverseMismatch, ValueError, KeyError, OSError) as exc:
        print(f"evnugget: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
