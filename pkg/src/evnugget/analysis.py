"""Corpus distribution tables: modifier relations, modifier POS, surface-context
POS and modifier entity types, each conditioned on the gold class of the token."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import Document, EventNugget, nuggets_by_doc
from .features import CONTEXT_WINDOW, modifiers
from .nugget import token_labels

CLASS_COLUMNS = ("Actual", "Generic", "Other", "Non-Event")
ENTITY_COLUMNS = ("Person", "Location", "Organization", "Number", "Misc")
_ENTITY_LABELS = {"PERSON": "Person", "LOCATION": "Location", "ORGANIZATION": "Organization",
                  "NUMBER": "Number", "MISC": "Misc"}


@dataclass(frozen=True)
class FrequencyTable:
    title: str
    row_header: str
    row_labels: tuple[str, ...]
    column_labels: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]

    def cell(self, row: str, column: str) -> int:
        if row not in self.row_labels:
            return 0
        return self.counts[self.row_labels.index(row)][self.column_labels.index(column)]

    @property
    def total(self) -> int:
        return sum(map(sum, self.counts))

    def as_counter(self) -> Counter:
        return Counter({(r, c): n for r, row in zip(self.row_labels, self.counts)
                        for c, n in zip(self.column_labels, row) if n})

    def to_tsv(self) -> str:
        lines = ["\t".join((self.row_header,) + self.column_labels)]
        for label, row in zip(self.row_labels, self.counts):
            lines.append("\t".join([label] + [str(n) for n in row]))
        return "\n".join(lines) + "\n"


def _table(title: str, row_header: str, counter: Counter, columns: Sequence[str], mass: Sequence[str]) -> FrequencyTable:
    rows = sorted({r for r, _ in counter},
                  key=lambda r: (-sum(counter[(r, c)] for c in mass), r))
    counts = tuple(tuple(counter[(r, c)] for c in columns) for r in rows)
    return FrequencyTable(title, row_header, tuple(rows), tuple(columns), counts)


def _labelled_tokens(docs: Iterable[Document], gold: Sequence[EventNugget]):
    by_doc = nuggets_by_doc(gold)
    for doc in docs:
        cover = token_labels(doc, by_doc.get(doc.doc_id, []))
        for si, sent in enumerate(doc.sentences, start=1):
            for tok in sent.tokens:
                n = cover.get((si, tok.index))
                yield sent, tok, (n.realis if n is not None else "Non-Event")


def modifier_deprel_table(docs: Iterable[Document], gold: Sequence[EventNugget]) -> FrequencyTable:
    counter = Counter()
    for sent, tok, cls in _labelled_tokens(docs, gold):
        for _, rel in modifiers(tok, sent):
            counter[(rel, cls)] += 1
    return _table("modifier dependency relations", "Dep. Rel.", counter, CLASS_COLUMNS, CLASS_COLUMNS[:3])


def modifier_pos_table(docs: Iterable[Document], gold: Sequence[EventNugget]) -> FrequencyTable:
    counter = Counter()
    for sent, tok, cls in _labelled_tokens(docs, gold):
        for mod, _ in modifiers(tok, sent):
            counter[(mod.pos, cls)] += 1
    return _table("modifier POS tags", "POS", counter, CLASS_COLUMNS, CLASS_COLUMNS[:3])


def context_pos_table(docs: Iterable[Document], gold: Sequence[EventNugget]) -> FrequencyTable:
    counter = Counter()
    for sent, tok, cls in _labelled_tokens(docs, gold):
        for offset in range(-CONTEXT_WINDOW, CONTEXT_WINDOW + 1):
            j = tok.index + offset
            if offset and 1 <= j <= len(sent):
                counter[(sent[j].pos, cls)] += 1
    return _table("surface context POS tags", "POS", counter, CLASS_COLUMNS, CLASS_COLUMNS[:3])


def ner_by_subtype_table(docs: Iterable[Document], gold: Sequence[EventNugget]) -> FrequencyTable:
    counter = Counter()
    by_doc = nuggets_by_doc(gold)
    for doc in docs:
        for n in by_doc.get(doc.doc_id, []):
            s, t = n.trigger
            sent = doc.sentences[s - 1]
            for mod, _ in modifiers(sent[t], sent):
                label = _ENTITY_LABELS.get(mod.ner.upper())
                if label is not None:
                    counter[(n.subtype, label)] += 1
    return _table("modifier entity types by subtype", "Event Type", counter, ENTITY_COLUMNS, ENTITY_COLUMNS)


TABLES = {
    "modifier_deprel": modifier_deprel_table,
    "modifier_pos": modifier_pos_table,
    "context_pos": context_pos_table,
    "ner_by_subtype": ner_by_subtype_table,
}


def all_tables(docs: Sequence[Document], gold: Sequence[EventNugget]) -> dict[str, FrequencyTable]:
    return {name: fn(docs, gold) for name, fn in TABLES.items()}
