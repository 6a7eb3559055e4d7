"""Ensemble nugget detection: joint span+realis labelling then subtype labelling."""

from __future__ import annotations

import hashlib
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import nn
from .corpus import Document, EventNugget, Sentence, Token, nuggets_by_doc
from .features import SPAN_REALIS_DIM, TYPE_DIM, sentence_matrix, span_realis_features, type_features
from .resources import OTHER_SUBTYPE, ResourceBundle

log = logging.getLogger(__name__)

NON_EVENT = "NonEvent"
SPAN_REALIS_CLASSES = (NON_EVENT, "Actual", "Generic", "Other")
SPAN_CLASSES = (NON_EVENT, "Event")
REALIS_CLASSES = ("Actual", "Generic", "Other")

TASK_WIDTHS = {"span_realis": 4, "type": 19, "span": 2, "realis": 3}

# Table of member recipes; dropout strings are kept verbatim, short ones are zero-padded.
DEFAULT_SPEC_TEXT = """\
S1 2468-600-600-50-4 0-.5-0-0-0 10
S2 2468-600-600-50-4 0-.2-0-0 15
S3 2468-2468-1234-600-200-4 0-.2-.5-.2-0 10
S4 2468-2468-1234-600-200-4 0-.2-.5-.2-0 15
S5 2468-2468-1234-600-200-4 0-0-.5-.2-0 10
S6 2468-2468-1234-600-200-4 0-0-.5-.5-0 15
S7 2468-2468-1234-600-200-4 0-0-.2-.2-0 15
S8 2468-2468-1234-600-200-4 0-.5-.5-.5-0 15
S9 2468-1000-600-200-4 0-.5-0-0 10
S10 2468-1000-600-200-4 0-.5-0-0 15
T1 852-852-852-200-19 0-0-0-0 10
T2 852-852-852-200-19 0-0-0-0 15
T3 852-852-400-200-19 0-0-0-0 15
"""


@dataclass(frozen=True)
class EnsembleSpec:
    task: str
    members: tuple[nn.NetConfig, ...]
    names: tuple[str, ...]

    def __post_init__(self):
        if self.task not in TASK_WIDTHS:
            raise ValueError(f"unknown task {self.task!r}")
        if len(self.members) != len(self.names):
            raise ValueError("one name per member is required")
        if len(set(self.names)) != len(self.names):
            raise ValueError("member names must be unique")
        width = TASK_WIDTHS[self.task]
        for name, cfg in zip(self.names, self.members):
            if cfg.layer_sizes[-1] != width:
                raise ValueError(f"{self.task} member {name} must end in {width} outputs")

    def with_output(self, task: str) -> "EnsembleSpec":
        """Same members with the output layer resized for ``task``."""
        width = TASK_WIDTHS[task]
        members = tuple(replace(c, layer_sizes=c.layer_sizes[:-1] + (width,)) for c in self.members)
        return EnsembleSpec(task, members, self.names)


def parse_spec(text: str, **overrides) -> dict[str, EnsembleSpec]:
    """Parse ``NAME LAYERS DROPOUTS EPOCHS`` lines, grouped by task.

    The task follows from the output width (4: span+realis, 19: type).
    ``overrides`` (e.g. ``learning_rate``) apply to every member.
    """
    grouped: dict[str, tuple[list, list]] = {}
    by_width = {4: "span_realis", 19: "type"}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"spec line {lineno}: expected NAME LAYERS DROPOUTS EPOCHS")
        name, layers, dropouts, epochs = parts
        cfg = nn.NetConfig.from_table(layers, dropouts, epochs, **overrides)
        task = by_width.get(cfg.layer_sizes[-1])
        if task is None:
            raise ValueError(f"spec line {lineno}: output width {cfg.layer_sizes[-1]} is neither 4 nor 19")
        names, members = grouped.setdefault(task, ([], []))
        names.append(name)
        members.append(cfg)
    return {task: EnsembleSpec(task, tuple(m), tuple(n)) for task, (n, m) in grouped.items()}


def default_specs(**overrides) -> dict[str, EnsembleSpec]:
    return parse_spec(DEFAULT_SPEC_TEXT, **overrides)


def format_spec(spec: EnsembleSpec) -> str:
    lines = []
    for name, cfg in zip(spec.names, spec.members):
        layers = "-".join(map(str, cfg.layer_sizes))
        drops = "-".join(f"{r:g}" for r in cfg.dropout_rates)
        lines.append(f"{name} {layers} {drops} {cfg.epochs}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class ClassProbabilities:
    scores: np.ndarray
    classes: tuple[str, ...]

    def __post_init__(self):
        if len(self.scores) != len(self.classes):
            raise ValueError("scores and classes differ in length")

    @property
    def best(self) -> int:
        return int(np.argmax(self.scores))

    @property
    def label(self) -> str:
        return self.classes[self.best]


def _exact_sum(stack: np.ndarray) -> np.ndarray:
    # fsum is exactly rounded, hence independent of member order; exact ties stay ties.
    flat = stack.reshape(stack.shape[0], -1)
    out = np.array([math.fsum(flat[:, j]) for j in range(flat.shape[1])])
    return out.reshape(stack.shape[1:])


def aggregate(member_outputs: Sequence[Sequence[float]], classes: Sequence[str] | None = None) -> ClassProbabilities:
    """Sum member probability vectors without renormalising."""
    if not len(member_outputs):
        raise ValueError("no member outputs to aggregate")
    widths = {len(o) for o in member_outputs}
    if len(widths) != 1:
        raise ValueError(f"member outputs differ in length: {sorted(widths)}")
    stack = np.asarray(member_outputs, dtype=np.float64)
    if classes is None:
        classes = tuple(str(i) for i in range(stack.shape[1]))
    return ClassProbabilities(_exact_sum(stack), tuple(classes))


@dataclass
class Ensemble:
    task: str
    names: tuple[str, ...]
    nets: tuple[nn.DenseNet, ...]
    classes: tuple[str, ...]

    def __post_init__(self):
        for net in self.nets:
            if net.output_size != len(self.classes):
                raise ValueError(f"net output {net.output_size} does not match {len(self.classes)} classes")

    def scores(self, X: np.ndarray) -> np.ndarray:
        """Aggregated (n, classes) scores for a feature matrix."""
        if not self.nets:
            raise ValueError(f"{self.task} ensemble has no trained members")
        X = np.atleast_2d(X)
        if len(X) == 0:
            return np.zeros((0, len(self.classes)))
        return _exact_sum(np.stack([nn.predict(net, X) for net in self.nets]))

    def member(self, name: str) -> "Ensemble":
        try:
            i = self.names.index(name)
        except ValueError:
            raise KeyError(f"{self.task} ensemble has no member {name!r}") from None
        return Ensemble(self.task, (name,), (self.nets[i],), self.classes)


@dataclass
class NuggetModels:
    """Trained classifiers for one experiment mode.

    ``joint`` uses ``span_realis`` + ``type``; ``separate_span_realis`` uses
    ``span`` + ``realis`` + ``type``.
    """

    type: Ensemble
    span_realis: Ensemble | None = None
    span: Ensemble | None = None
    realis: Ensemble | None = None

    @property
    def mode(self) -> str:
        return "joint" if self.span_realis is not None else "separate_span_realis"

    def ensembles(self) -> dict[str, Ensemble]:
        return {e.task: e for e in (self.span_realis, self.span, self.realis, self.type) if e is not None}

    def select(self, span_member: str, type_member: str) -> "NuggetModels":
        """Single-member variant: one named member per task."""
        pick = lambda e: None if e is None else e.member(span_member)
        return NuggetModels(self.type.member(type_member), pick(self.span_realis), pick(self.span), pick(self.realis))


# --------------------------------------------------------------------------
# inference


def classify_token(token: Token, sentence: Sentence, ensemble: Ensemble, bundle: ResourceBundle) -> str:
    x = span_realis_features(token, sentence, bundle).values
    return ensemble.classes[int(np.argmax(ensemble.scores(x)[0]))]


def classify_type(token: Token, sentence: Sentence, ensemble: Ensemble, bundle: ResourceBundle) -> str:
    x = type_features(token, sentence, bundle).values
    return ensemble.classes[int(np.argmax(ensemble.scores(x)[0]))]


def _realis_decisions(X: np.ndarray, models: NuggetModels, emit_margin: float) -> list[str]:
    if models.span_realis is not None:
        scores = models.span_realis.scores(X)
        best = scores.argmax(axis=1)
        labels = []
        for row, b in zip(scores, best):
            if b != 0 and emit_margin > 0 and row[b] - row[0] < emit_margin:
                b = 0
            labels.append(SPAN_REALIS_CLASSES[b])
        return labels
    if models.span is None or models.realis is None:
        raise ValueError("separate mode needs both span and realis ensembles")
    span = models.span.scores(X)
    labels = [NON_EVENT] * len(X)
    triggers = [i for i, row in enumerate(span)
                if row.argmax() == 1 and (emit_margin <= 0 or row[1] - row[0] >= emit_margin)]
    if triggers:
        realis = models.realis.scores(X[triggers]).argmax(axis=1)
        for i, r in zip(triggers, realis):
            labels[i] = REALIS_CLASSES[r]
    return labels


def detect_document(doc: Document, models: NuggetModels, bundle: ResourceBundle,
                    keep_other: bool = False, emit_margin: float = 0.0) -> list[EventNugget]:
    """Label every token and emit single-token nuggets ``E1, E2, ...`` in order."""
    found: list[EventNugget] = []
    for si, sent in enumerate(doc.sentences, start=1):
        if not sent.tokens:
            continue
        realis = _realis_decisions(sentence_matrix(sent, bundle, "span_realis"), models, emit_margin)
        triggers = [i for i, r in enumerate(realis) if r != NON_EVENT]
        if not triggers:
            continue
        Xt = np.vstack([type_features(sent.tokens[i], sent, bundle).values for i in triggers])
        types = models.type.scores(Xt).argmax(axis=1)
        for i, t in zip(triggers, types):
            subtype = models.type.classes[t]
            if subtype == OTHER_SUBTYPE and not keep_other:
                continue
            tok = sent.tokens[i]
            found.append(EventNugget(f"E{len(found) + 1}", doc.doc_id, ((si, tok.index),),
                                     tok.text, subtype, realis[i]))
    return found


def detect_corpus(docs: Iterable[Document], models: NuggetModels, bundle: ResourceBundle,
                  **kwargs) -> dict[str, list[EventNugget]]:
    return {doc.doc_id: detect_document(doc, models, bundle, **kwargs) for doc in docs}


# --------------------------------------------------------------------------
# training


def token_labels(doc: Document, nuggets: Sequence[EventNugget]) -> dict[tuple[int, int], EventNugget]:
    """Map each covered token position to its (first) covering nugget."""
    cover: dict[tuple[int, int], EventNugget] = {}
    for n in nuggets:
        for pos in n.span:
            cover.setdefault(pos, n)
    return cover


@dataclass
class TrainingData:
    span_X: np.ndarray
    span_realis_y: np.ndarray
    type_X: np.ndarray
    type_y: np.ndarray
    realis_y: np.ndarray  # realis index for each type_X row


def build_training_data(docs: Sequence[Document], gold: Sequence[EventNugget],
                        bundle: ResourceBundle) -> TrainingData:
    by_doc = nuggets_by_doc(gold)
    type_index = {label: i for i, label in enumerate(bundle.type_labels)}
    other = type_index[OTHER_SUBTYPE]
    span_rows, span_y, type_rows, type_y, realis_y = [], [], [], [], []
    for doc in docs:
        cover = token_labels(doc, by_doc.get(doc.doc_id, []))
        for si, sent in enumerate(doc.sentences, start=1):
            if not sent.tokens:
                continue
            span_rows.append(sentence_matrix(sent, bundle, "span_realis"))
            for tok in sent.tokens:
                n = cover.get((si, tok.index))
                if n is None:
                    span_y.append(0)
                    continue
                span_y.append(SPAN_REALIS_CLASSES.index(n.realis))
                type_rows.append(type_features(tok, sent, bundle).values)
                type_y.append(type_index.get(n.subtype, other))
                realis_y.append(REALIS_CLASSES.index(n.realis))
    span_X = np.vstack(span_rows) if span_rows else np.zeros((0, SPAN_REALIS_DIM))
    type_X = np.vstack(type_rows) if type_rows else np.zeros((0, TYPE_DIM))
    return TrainingData(span_X, np.array(span_y, dtype=int), type_X,
                        np.array(type_y, dtype=int), np.array(realis_y, dtype=int))


def _train_member(job):
    cfg, X, y, n_classes, label = job
    return nn.train(cfg, X, y, n_classes, name=label)


def train_ensemble(spec: EnsembleSpec, X: np.ndarray, y: np.ndarray, classes: Sequence[str],
                   base_seed: int, workers: int = 1) -> Ensemble:
    """Train every member with seed ``base_seed + member index``."""
    if len(X) == 0:
        raise ValueError(f"no training instances for the {spec.task} task")
    jobs = [(replace(cfg, seed=base_seed + i), X, y, len(classes), f"{spec.task}/{name}")
            for i, (name, cfg) in enumerate(zip(spec.names, spec.members))]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            nets = list(pool.map(_train_member, jobs))
    else:
        nets = [_train_member(job) for job in jobs]
    return Ensemble(spec.task, spec.names, tuple(nets), tuple(classes))


def train_ensembles(train_docs: Sequence[Document], gold_nuggets: Sequence[EventNugget],
                    specs: Mapping[str, EnsembleSpec], bundle: ResourceBundle, base_seed: int = 0,
                    mode: str = "joint", workers: int = 1) -> NuggetModels:
    data = build_training_data(train_docs, gold_nuggets, bundle)
    if len(data.span_X) == 0:
        raise ValueError("training corpus has no tokens")
    span_spec = specs["span_realis"]
    type_ensemble = train_ensemble(specs["type"], data.type_X, data.type_y, bundle.type_labels,
                                   base_seed, workers)
    if mode == "joint":
        sr = train_ensemble(span_spec, data.span_X, data.span_realis_y, SPAN_REALIS_CLASSES, base_seed, workers)
        return NuggetModels(type_ensemble, span_realis=sr)
    if mode == "separate_span_realis":
        span = train_ensemble(span_spec.with_output("span"), data.span_X,
                              (data.span_realis_y > 0).astype(int), SPAN_CLASSES, base_seed, workers)
        triggers = data.span_realis_y > 0
        realis = train_ensemble(span_spec.with_output("realis"), data.span_X[triggers],
                                data.span_realis_y[triggers] - 1, REALIS_CLASSES, base_seed, workers)
        return NuggetModels(type_ensemble, span=span, realis=realis)
    raise ValueError(f"unknown training mode {mode!r}")


# --------------------------------------------------------------------------
# persistence


def save_ensemble(ensemble: Ensemble, directory: str | Path) -> list[dict]:
    """Write one model file per member; returns manifest entries."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, net in zip(ensemble.names, ensemble.nets):
        payload = nn.serialize(net)
        path = directory / f"{name}.bin"
        path.write_bytes(payload)
        entries.append({"name": name, "file": f"{directory.name}/{path.name}",
                        "sha256": hashlib.sha256(payload).hexdigest()})
    return entries


def load_ensemble(root: str | Path, task: str, entries: Sequence[Mapping], classes: Sequence[str]) -> Ensemble:
    root = Path(root)
    nets, names = [], []
    for entry in entries:
        payload = (root / entry["file"]).read_bytes()
        digest = hashlib.sha256(payload).hexdigest()
        if entry.get("sha256") and digest != entry["sha256"]:
            raise ValueError(f"model file {entry['file']} does not match its manifest digest")
        nets.append(nn.deserialize(payload))
        names.append(entry["name"])
    return Ensemble(task, tuple(names), tuple(nets), tuple(classes))


def default_workers() -> int:
    return os.cpu_count() or 1
