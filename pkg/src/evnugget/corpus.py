"""Readers and writers for pre-parsed documents and event nugget annotations.

Two plain-text formats are handled here.

Parsed documents::

    #doc <doc_id> <genre>
    INDEX FORM LEMMA POS NER HEAD DEPREL CHAR_BEGIN CHAR_END   (tab separated)
    ...
    <blank line between sentences>
    #enddoc

Annotations (token-based, one block per document)::

    #BeginOfDocument <doc_id>
    <system_id> <doc_id> <mention_id> <s>:<t>[,<s>:<t>...] <text> <subtype> <realis>
    @Coreference <cluster_id> <mention_id>[,<mention_id>...]
    #EndOfDocument

Sentence and token indices in nugget spans are both 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

GENRES = ("newswire", "discussion_forum")
REALIS_LABELS = ("Actual", "Generic", "Other")

_DOC_HEADER = "#doc"
_DOC_END = "#enddoc"
_ANN_BEGIN = "#BeginOfDocument"
_ANN_END = "#EndOfDocument"
_COREF = "@Coreference"


class ParseError(ValueError):
    """Malformed input; ``line`` is the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Token:
    index: int
    text: str
    lemma: str
    pos: str
    ner: str
    char_begin: int
    char_end: int
    head: int
    deprel: str


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]

    def __len__(self) -> int:
        return len(self.tokens)

    def __getitem__(self, index: int) -> Token:
        """Token by its 1-based index."""
        if index < 1 or index > len(self.tokens):
            raise IndexError(index)
        return self.tokens[index - 1]

    def __iter__(self):
        return iter(self.tokens)


@dataclass(frozen=True)
class Document:
    doc_id: str
    genre: str
    sentences: tuple[Sentence, ...]

    @property
    def text_length(self) -> int:
        # The file format carries no explicit length; the last offset bounds it.
        for sent in reversed(self.sentences):
            if sent.tokens:
                return sent.tokens[-1].char_end
        return 0

    def token(self, sent_index: int, tok_index: int) -> Token:
        """Token at 1-based (sentence, token) position."""
        if sent_index < 1 or sent_index > len(self.sentences):
            raise IndexError((sent_index, tok_index))
        return self.sentences[sent_index - 1][tok_index]

    def positions(self) -> Iterable[tuple[int, int]]:
        for si, sent in enumerate(self.sentences, start=1):
            for tok in sent.tokens:
                yield si, tok.index


@dataclass(frozen=True)
class EventNugget:
    mention_id: str
    doc_id: str
    span: tuple[tuple[int, int], ...]
    text: str
    subtype: str
    realis: str

    @property
    def trigger(self) -> tuple[int, int]:
        """Position of the first span token."""
        return self.span[0]


@dataclass(frozen=True)
class Clustering:
    """A partition of mention ids; singletons are stored explicitly."""

    clusters: frozenset[frozenset[str]] = field(default_factory=frozenset)

    def __post_init__(self):
        seen: set[str] = set()
        for cluster in self.clusters:
            if not cluster:
                raise ValueError("empty cluster")
            if seen & cluster:
                raise ValueError(f"mention in two clusters: {sorted(seen & cluster)}")
            seen |= cluster

    @classmethod
    def from_groups(cls, groups: Iterable[Iterable[str]], mentions: Iterable[str] = ()) -> "Clustering":
        """Build from explicit groups, adding singletons for any uncovered ``mentions``."""
        clusters = [frozenset(g) for g in groups]
        covered = set().union(*clusters) if clusters else set()
        clusters.extend(frozenset([m]) for m in mentions if m not in covered)
        return cls(frozenset(c for c in clusters if c))

    @property
    def mentions(self) -> frozenset[str]:
        return frozenset().union(*self.clusters) if self.clusters else frozenset()

    def cluster_of(self) -> dict[str, frozenset[str]]:
        return {m: c for c in self.clusters for m in c}

    def __len__(self) -> int:
        return len(self.clusters)

    def __iter__(self):
        return iter(self.clusters)


# --------------------------------------------------------------------------
# validation


def _validate_sentence(tokens: list[Token], first_line: int) -> None:
    n = len(tokens)
    for i, tok in enumerate(tokens):
        line = first_line + i
        if tok.index != i + 1:
            raise ParseError(f"token index {tok.index}, expected {i + 1}", line)
        if tok.char_begin < 0 or tok.char_begin >= tok.char_end:
            raise ParseError(f"bad offsets {tok.char_begin}-{tok.char_end}", line)
        if tok.head < 0 or tok.head > n or tok.head == tok.index:
            raise ParseError(f"bad head {tok.head}", line)
    roots = [t for t in tokens if t.head == 0]
    if len(roots) != 1:
        raise ParseError(f"sentence has {len(roots)} roots", first_line)
    # every node must reach the root without revisiting anything
    for tok in tokens:
        seen = set()
        node = tok.index
        while node != 0:
            if node in seen:
                raise ParseError("dependency cycle", first_line + tok.index - 1)
            seen.add(node)
            node = tokens[node - 1].head


def _validate_offsets(sentences: list[tuple[list[Token], int]]) -> None:
    prev_end = 0
    for tokens, first_line in sentences:
        for i, tok in enumerate(tokens):
            if tok.char_begin < prev_end:
                raise ParseError("token offsets overlap or go backwards", first_line + i)
            prev_end = tok.char_end


# --------------------------------------------------------------------------
# parsed documents


def _parse_token(line: str, lineno: int) -> Token:
    cols = line.split("\t")
    if len(cols) != 9:
        raise ParseError(f"expected 9 tab-separated columns, got {len(cols)}", lineno)
    try:
        index, head, begin, end = int(cols[0]), int(cols[5]), int(cols[7]), int(cols[8])
    except ValueError as exc:
        raise ParseError(f"non-integer field: {exc}", lineno) from None
    if any(not c for c in cols):
        raise ParseError("empty column", lineno)
    return Token(index, cols[1], cols[2], cols[3], cols[4], begin, end, head, cols[6])


def parse_document_file(text: str) -> list[Document]:
    docs: list[Document] = []
    header: tuple[str, str, int] | None = None
    sentences: list[tuple[list[Token], int]] = []
    current: list[Token] = []
    current_start = 0

    def close_sentence():
        nonlocal current
        if current:
            _validate_sentence(current, current_start)
            sentences.append((current, current_start))
        current = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r")
        if header is None:
            if not line.strip():
                continue
            parts = line.split()
            if parts[0] != _DOC_HEADER or len(parts) != 3:
                raise ParseError("expected '#doc <doc_id> <genre>'", lineno)
            if parts[2] not in GENRES:
                raise ParseError(f"unknown genre {parts[2]!r}", lineno)
            header = (parts[1], parts[2], lineno)
            sentences, current = [], []
            continue
        if line == _DOC_END:
            close_sentence()
            _validate_offsets(sentences)
            docs.append(Document(header[0], header[1],
                                 tuple(Sentence(tuple(toks)) for toks, _ in sentences)))
            header = None
            continue
        if not line.strip():
            close_sentence()
            continue
        if line.startswith("#"):
            raise ParseError(f"unexpected directive {line.split()[0]!r}", lineno)
        if not current:
            current_start = lineno
        current.append(_parse_token(line, lineno))

    if header is not None:
        raise ParseError(f"document {header[0]!r} not terminated by {_DOC_END}", header[2])
    return docs


def write_document_file(docs: Sequence[Document]) -> str:
    out: list[str] = []
    for doc in docs:
        out.append(f"{_DOC_HEADER} {doc.doc_id} {doc.genre}")
        for si, sent in enumerate(doc.sentences):
            if si:
                out.append("")
            for t in sent.tokens:
                out.append("\t".join(map(str, (t.index, t.text, t.lemma, t.pos, t.ner,
                                               t.head, t.deprel, t.char_begin, t.char_end))))
        out.append(_DOC_END)
    return "".join(line + "\n" for line in out)


# --------------------------------------------------------------------------
# annotations


def _parse_span(field_: str, lineno: int) -> tuple[tuple[int, int], ...]:
    span = []
    for part in field_.split(","):
        try:
            s, t = part.split(":")
            span.append((int(s), int(t)))
        except ValueError:
            raise ParseError(f"bad span element {part!r}", lineno) from None
    return tuple(span)


def parse_annotation_file(
    text: str,
    subtypes: Sequence[str] | None = None,
    docs: Mapping[str, Document] | None = None,
) -> tuple[list[EventNugget], dict[str, Clustering]]:
    """Parse nuggets and per-document clusterings.

    ``subtypes`` restricts the accepted labels when given. If a subtype
    field lists several labels separated by ``;`` only the first is kept.
    ``docs`` enables checking that every span token exists.
    """
    allowed = set(subtypes) if subtypes is not None else None
    nuggets: list[EventNugget] = []
    clusterings: dict[str, Clustering] = {}
    doc_id: str | None = None
    doc_mentions: list[str] = []
    groups: list[list[str]] = []
    all_ids: set[str] = set()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            continue
        if doc_id is None:
            parts = line.split()
            if parts[0] != _ANN_BEGIN or len(parts) != 2:
                raise ParseError(f"expected '{_ANN_BEGIN} <doc_id>'", lineno)
            doc_id = parts[1]
            if doc_id in clusterings:
                raise ParseError(f"document {doc_id!r} appears twice", lineno)
            doc_mentions, groups, all_ids = [], [], set()
            continue
        if line.strip() == _ANN_END:
            clusterings[doc_id] = Clustering.from_groups(groups, doc_mentions)
            doc_id = None
            continue
        cols = line.split("\t")
        if cols[0] == _COREF:
            if len(cols) != 3:
                raise ParseError("coreference line needs 3 columns", lineno)
            members = cols[2].split(",")
            for m in members:
                if m not in all_ids:
                    raise ParseError(f"unknown mention id {m!r} in coreference line", lineno)
                if any(m in g for g in groups):
                    raise ParseError(f"mention {m!r} in two coreference chains", lineno)
            if len(set(members)) != len(members):
                raise ParseError("repeated mention in coreference line", lineno)
            groups.append(members)
            continue
        if len(cols) != 7:
            raise ParseError(f"nugget line needs 7 columns, got {len(cols)}", lineno)
        _, ndoc, mid, span_field, surface, subtype, realis = cols
        if ndoc != doc_id:
            raise ParseError(f"nugget doc id {ndoc!r} inside document {doc_id!r}", lineno)
        if mid in all_ids:
            raise ParseError(f"duplicate mention id {mid!r}", lineno)
        if realis not in REALIS_LABELS:
            raise ParseError(f"unknown realis label {realis!r}", lineno)
        subtype = subtype.split(";")[0]
        if allowed is not None and subtype not in allowed:
            raise ParseError(f"unknown subtype {subtype!r}", lineno)
        span = _parse_span(span_field, lineno)
        if docs is not None:
            doc = docs.get(doc_id)
            if doc is None:
                raise ParseError(f"document {doc_id!r} not in corpus", lineno)
            for s, t in span:
                try:
                    doc.token(s, t)
                except IndexError:
                    raise ParseError(f"span token {s}:{t} does not exist", lineno) from None
        all_ids.add(mid)
        doc_mentions.append(mid)
        nuggets.append(EventNugget(mid, doc_id, span, surface, subtype, realis))

    if doc_id is not None:
        raise ParseError(f"document {doc_id!r} not terminated by {_ANN_END}")
    return nuggets, clusterings


def write_annotation_file(
    nuggets: Sequence[EventNugget],
    clusterings: Mapping[str, Clustering],
    system_id: str,
) -> str:
    """Serialize nuggets grouped by document.

    Documents are written in the order of ``clusterings`` followed by any
    further documents referenced by nuggets. Chains are numbered in order of
    their earliest mention; singletons are implicit.
    """
    by_doc: dict[str, list[EventNugget]] = {d: [] for d in clusterings}
    for n in nuggets:
        by_doc.setdefault(n.doc_id, []).append(n)

    out: list[str] = []
    for doc_id, doc_nuggets in by_doc.items():
        out.append(f"{_ANN_BEGIN} {doc_id}")
        order = {n.mention_id: i for i, n in enumerate(doc_nuggets)}
        for n in doc_nuggets:
            span = ",".join(f"{s}:{t}" for s, t in n.span)
            out.append("\t".join((system_id, doc_id, n.mention_id, span, n.text, n.subtype, n.realis)))
        clustering = clusterings.get(doc_id, Clustering())
        chains = [sorted(c, key=lambda m: order.get(m, len(order))) for c in clustering if len(c) > 1]
        chains.sort(key=lambda c: order.get(c[0], len(order)))
        for k, chain in enumerate(chains, start=1):
            out.append(f"{_COREF}\tC{k}\t{','.join(chain)}")
        out.append(_ANN_END)
    return "".join(line + "\n" for line in out)


def nuggets_by_doc(nuggets: Iterable[EventNugget]) -> dict[str, list[EventNugget]]:
    grouped: dict[str, list[EventNugget]] = {}
    for n in nuggets:
        grouped.setdefault(n.doc_id, []).append(n)
    return grouped


def vocabulary(docs: Iterable[Document]) -> set[str]:
    """Every token form and lemma in ``docs``."""
    words = set()
    for doc in docs:
        for sent in doc.sentences:
            for tok in sent.tokens:
                words.add(tok.text)
                words.add(tok.lemma)
    return words


def read_documents(path) -> list[Document]:
    with open(path, encoding="utf-8") as fh:
        return parse_document_file(fh.read())


def read_annotations(path, **kwargs) -> tuple[list[EventNugget], dict[str, Clustering]]:
    with open(path, encoding="utf-8") as fh:
        return parse_annotation_file(fh.read(), **kwargs)
