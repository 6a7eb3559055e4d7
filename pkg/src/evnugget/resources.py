"""Vocabularies and word embeddings shared by every feature extractor."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

EMBEDDING_DIM = 300
POS_DIM = 47
DEPREL_DIM = 208
AFFIX_DIM = 36
NER_DIM = 8
N_SUBTYPES = 18
OTHER_SUBTYPE = "OTHER"

# Penn Treebank tags as emitted by CoreNLP, plus HYPH and NFP.
DEFAULT_POS = (
    "CC", "CD", "DT", "EX", "FW", "IN", "JJ", "JJR", "JJS", "LS", "MD", "NN",
    "NNS", "NNP", "NNPS", "PDT", "POS", "PRP", "PRP$", "RB", "RBR", "RBS", "RP",
    "SYM", "TO", "UH", "VB", "VBD", "VBG", "VBN", "VBP", "VBZ", "WDT", "WP",
    "WP$", "WRB", "#", "$", "''", "``", ",", ".", ":", "-LRB-", "-RRB-", "HYPH",
    "NFP",
)

_BASE_RELATIONS = (
    "acl", "acl:relcl", "advcl", "advmod", "amod", "appos", "aux", "auxpass",
    "case", "cc", "cc:preconj", "ccomp", "compound", "compound:prt", "conj",
    "cop", "csubj", "csubjpass", "dep", "det", "det:predet", "discourse",
    "dislocated", "dobj", "expl", "foreign", "goeswith", "iobj", "list", "mark",
    "mwe", "neg", "nmod", "nmod:agent", "nmod:npmod", "nmod:poss", "nmod:tmod",
    "nsubj", "nsubjpass", "nummod", "parataxis", "punct", "remnant",
    "reparandum", "root", "vocative", "xcomp",
)
# Preposition-specialised nmod/acl/advcl labels from enhanced dependencies.
_PREPOSITIONS = (
    "about", "above", "across", "after", "against", "along", "among", "around",
    "as", "at", "before", "behind", "below", "beside", "between", "beyond", "by",
    "despite", "during", "except", "for", "from", "in", "inside", "into", "like",
    "near", "of", "off", "on", "onto", "out", "outside", "over", "per", "since",
    "than", "through", "throughout", "to", "toward", "towards", "under", "until",
    "upon", "via", "with", "within", "without",
)
_CLAUSAL = ("acl:to", "advcl:to", "advcl:if", "advcl:as", "advcl:after",
            "advcl:before", "advcl:while", "advcl:because")

DEFAULT_RELATIONS = _BASE_RELATIONS + tuple(f"nmod:{p}" for p in _PREPOSITIONS) + _CLAUSAL
DEFAULT_DEPREL = tuple(f"in:{r}" for r in DEFAULT_RELATIONS) + tuple(f"out:{r}" for r in DEFAULT_RELATIONS)

DEFAULT_AFFIXES = (
    "un-", "re-", "in-", "im-", "dis-", "en-", "non-", "pre-", "mis-", "over-",
    "under-", "inter-", "de-", "sub-", "trans-", "anti-", "out-", "co-",
    "-tion", "-sion", "-ment", "-ing", "-ed", "-er", "-or", "-al", "-ance",
    "-ence", "-ity", "-ize", "-ise", "-ure", "-age", "-ery", "-ion", "-ist",
)

DEFAULT_NER = ("PERSON", "LOCATION", "ORGANIZATION", "NUMBER", "DATE", "TIME", "DURATION", "MISC")

DEFAULT_SUBTYPES = (
    "Conflict_Attack", "Conflict_Demonstrate", "Contact_Broadcast", "Contact_Contact",
    "Contact_Correspondence", "Contact_Meet", "Justice_Arrest-Jail", "Life_Die",
    "Life_Injure", "Manufacture_Artifact", "Movement_Transport-Artifact",
    "Movement_Transport-Person", "Personnel_Elect", "Personnel_End-Position",
    "Personnel_Start-Position", "Transaction_Transaction", "Transaction_Transfer-Money",
    "Transaction_Transfer-Ownership",
)

assert len(DEFAULT_POS) == POS_DIM
assert len(DEFAULT_DEPREL) == DEPREL_DIM
assert len(DEFAULT_AFFIXES) == AFFIX_DIM
assert len(DEFAULT_SUBTYPES) == N_SUBTYPES


def incoming(deprel: str) -> str:
    """Label for a relation seen from the head's side (a modifier attaches here)."""
    return f"in:{deprel}"


def outgoing(deprel: str) -> str:
    """Label for a relation seen from the dependent's side (attaching to a head)."""
    return f"out:{deprel}"


def _index(labels: Sequence[str], name: str, size: int) -> dict[str, int]:
    if len(labels) != size:
        raise ValueError(f"{name} must have {size} entries, got {len(labels)}")
    idx = {label: i for i, label in enumerate(labels)}
    if len(idx) != len(labels):
        raise ValueError(f"{name} entries are not unique")
    return idx


@dataclass(frozen=True, eq=False)
class ResourceBundle:
    """Embeddings plus the fixed-size label inventories."""

    words: Mapping[str, int]
    vectors: np.ndarray
    pos_vocab: tuple[str, ...] = DEFAULT_POS
    deprel_vocab: tuple[str, ...] = DEFAULT_DEPREL
    affix_list: tuple[str, ...] = DEFAULT_AFFIXES
    ner_vocab: tuple[str, ...] = DEFAULT_NER
    subtype_vocab: tuple[str, ...] = DEFAULT_SUBTYPES
    pos_index: dict = field(init=False, repr=False)
    deprel_index: dict = field(init=False, repr=False)
    ner_index: dict = field(init=False, repr=False)
    subtype_index: dict = field(init=False, repr=False)

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[1] != EMBEDDING_DIM:
            raise ValueError(f"embeddings must be n x {EMBEDDING_DIM}, got {self.vectors.shape}")
        if len(self.words) != self.vectors.shape[0]:
            raise ValueError("word index and vector matrix disagree")
        set_ = object.__setattr__
        set_(self, "pos_index", _index(self.pos_vocab, "pos_vocab", POS_DIM))
        set_(self, "deprel_index", _index(self.deprel_vocab, "deprel_vocab", DEPREL_DIM))
        set_(self, "ner_index", _index(self.ner_vocab, "ner_vocab", NER_DIM))
        set_(self, "subtype_index", _index(self.subtype_vocab, "subtype_vocab", N_SUBTYPES))
        _index(self.affix_list, "affix_list", AFFIX_DIM)
        for a in self.affix_list:
            if a.startswith("-") == a.endswith("-") or len(a) < 2:
                raise ValueError(f"affix {a!r} must be 'prefix-' or '-suffix'")
        self.vectors.setflags(write=False)

    @classmethod
    def from_embeddings(cls, embeddings: Mapping[str, Sequence[float]], **vocabs) -> "ResourceBundle":
        words = {w: i for i, w in enumerate(embeddings)}
        if words:
            vectors = np.array([np.asarray(v, dtype=np.float64) for v in embeddings.values()])
        else:
            vectors = np.zeros((0, EMBEDDING_DIM))
        return cls(words, vectors, **{k: tuple(v) for k, v in vocabs.items()})

    @property
    def type_labels(self) -> tuple[str, ...]:
        """The 19 type-classifier classes: the subtypes then OTHER."""
        return self.subtype_vocab + (OTHER_SUBTYPE,)

    def embedding(self, word: str) -> np.ndarray:
        i = self.words.get(word)
        if i is None:
            i = self.words.get(word.lower())
        if i is None:
            return np.zeros(EMBEDDING_DIM)
        return self.vectors[i]


def load_embeddings(path: str | Path, restrict: Iterable[str] | None = None) -> tuple[dict[str, int], np.ndarray]:
    """Read a whitespace-separated text embedding file.

    A leading ``<count> <dim>`` header line is skipped. With ``restrict``,
    only those words (or their lowercased forms) are kept.
    """
    keep = None
    if restrict is not None:
        keep = set(restrict)
        keep |= {w.lower() for w in keep}
    words: dict[str, int] = {}
    rows: list[np.ndarray] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if lineno == 1 and len(parts) == 2:
                continue
            if not parts or parts == [""]:
                continue
            word = parts[0]
            if keep is not None and word not in keep:
                continue
            if len(parts) != EMBEDDING_DIM + 1:
                raise ValueError(f"{path}:{lineno}: expected {EMBEDDING_DIM} values, got {len(parts) - 1}")
            if word in words:
                continue
            words[word] = len(rows)
            rows.append(np.array(parts[1:], dtype=np.float64))
    vectors = np.vstack(rows) if rows else np.zeros((0, EMBEDDING_DIM))
    log.info("loaded %d embeddings from %s", len(words), path)
    return words, vectors


def write_embeddings(path: str | Path, embeddings: Mapping[str, np.ndarray]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for word, vec in embeddings.items():
            fh.write(word + " " + " ".join(repr(float(x)) for x in vec) + "\n")


def load_labels(path: str | Path) -> tuple[str, ...]:
    with open(path, encoding="utf-8") as fh:
        return tuple(line.strip() for line in fh if line.strip())


def load_bundle(
    embeddings: str | Path,
    pos_vocab: str | Path | None = None,
    deprel_vocab: str | Path | None = None,
    affix_list: str | Path | None = None,
    ner_vocab: str | Path | None = None,
    subtype_vocab: str | Path | None = None,
    restrict: Iterable[str] | None = None,
) -> ResourceBundle:
    words, vectors = load_embeddings(embeddings, restrict)
    vocabs = {}
    for name, p in (("pos_vocab", pos_vocab), ("deprel_vocab", deprel_vocab), ("affix_list", affix_list),
                    ("ner_vocab", ner_vocab), ("subtype_vocab", subtype_vocab)):
        if p is not None:
            vocabs[name] = load_labels(p)
    return ResourceBundle(words, vectors, **vocabs)
