"""Token feature vectors for the span+realis and subtype classifiers.

Relation labels are directed: a modifier's relation is read from the head's
side (``in:<rel>``), while a token's own attachment to its governor, and the
attachment of each context-window token to its own head, is read from the
dependent's side (``out:<rel>``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Sentence, Token
from .resources import (
    AFFIX_DIM, DEPREL_DIM, EMBEDDING_DIM, NER_DIM, POS_DIM, ResourceBundle, incoming, outgoing,
)

CONTEXT_WINDOW = 2
_CONTEXT_SIZE = 2 * CONTEXT_WINDOW + 1

SPAN_REALIS_BLOCKS: tuple[tuple[str, int], ...] = (
    ("lemma_vector", EMBEDDING_DIM),
    ("pos", POS_DIM),
    ("context_pos", _CONTEXT_SIZE * POS_DIM),
    ("context_deprel", _CONTEXT_SIZE * DEPREL_DIM),
    ("token_minus_lemma", EMBEDDING_DIM),
    ("modifier_deprel", DEPREL_DIM),
    ("modifier_pos", POS_DIM),
    ("governor_deprel", DEPREL_DIM),
    ("governor_pos", POS_DIM),
    ("affixes", AFFIX_DIM),
)
TYPE_BLOCKS: tuple[tuple[str, int], ...] = (
    ("lemma_vector", EMBEDDING_DIM),
    ("token_vector", EMBEDDING_DIM),
    ("modifier_deprel", DEPREL_DIM),
    ("affixes", AFFIX_DIM),
    ("modifier_ner", NER_DIM),
)

SPAN_REALIS_DIM = sum(d for _, d in SPAN_REALIS_BLOCKS)
TYPE_DIM = sum(d for _, d in TYPE_BLOCKS)

_DIMS = {"span_realis": SPAN_REALIS_DIM, "type": TYPE_DIM}


def block_slices(blocks: Sequence[tuple[str, int]]) -> dict[str, slice]:
    out, start = {}, 0
    for name, dim in blocks:
        out[name] = slice(start, start + dim)
        start += dim
    return out


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    kind: str

    def __post_init__(self):
        expected = _DIMS.get(self.kind)
        if expected is not None and self.values.shape != (expected,):
            raise ValueError(f"{self.kind} vector must have length {expected}, got {self.values.shape}")

    def __len__(self) -> int:
        return len(self.values)


def one_hot(label: str, vocab: Sequence[str] | dict[str, int], size: int | None = None) -> np.ndarray:
    """1.0 at ``label``'s position; all zeros for labels outside ``vocab``."""
    index = vocab if isinstance(vocab, dict) else {v: i for i, v in enumerate(vocab)}
    vec = np.zeros(size if size is not None else len(index))
    i = index.get(label)
    if i is not None:
        vec[i] = 1.0
    return vec


def multi_hot(labels, vocab, size: int | None = None) -> np.ndarray:
    vec = np.zeros(size if size is not None else len(vocab))
    for label in labels:
        np.maximum(vec, one_hot(label, vocab, len(vec)), out=vec)
    return vec


def lookup_embedding(word: str, bundle: ResourceBundle) -> np.ndarray:
    return bundle.embedding(word)


def modifiers(token: Token, sentence: Sentence) -> list[tuple[Token, str]]:
    return [(t, t.deprel) for t in sentence.tokens if t.head == token.index]


def governor(token: Token, sentence: Sentence) -> tuple[Token, str] | None:
    if token.head == 0:
        return None
    return sentence[token.head], token.deprel


def affix_features(word: str, bundle: ResourceBundle) -> np.ndarray:
    w = word.lower()
    vec = np.zeros(AFFIX_DIM)
    if not w:
        return vec
    for i, affix in enumerate(bundle.affix_list):
        a = affix.lower()
        if a.endswith("-"):
            hit = w.startswith(a[:-1])
        else:
            hit = w.endswith(a[1:])
        if hit:
            vec[i] = 1.0
    return vec


def _context(token: Token, sentence: Sentence, bundle: ResourceBundle) -> tuple[np.ndarray, np.ndarray]:
    pos = np.zeros((_CONTEXT_SIZE, POS_DIM))
    rel = np.zeros((_CONTEXT_SIZE, DEPREL_DIM))
    for k, offset in enumerate(range(-CONTEXT_WINDOW, CONTEXT_WINDOW + 1)):
        j = token.index + offset
        if 1 <= j <= len(sentence):
            neighbour = sentence[j]
            pos[k] = one_hot(neighbour.pos, bundle.pos_index, POS_DIM)
            rel[k] = one_hot(outgoing(neighbour.deprel), bundle.deprel_index, DEPREL_DIM)
    return pos.ravel(), rel.ravel()


def span_realis_features(token: Token, sentence: Sentence, bundle: ResourceBundle) -> FeatureVector:
    lemma_vec = bundle.embedding(token.lemma)
    mods = modifiers(token, sentence)
    gov = governor(token, sentence)
    ctx_pos, ctx_rel = _context(token, sentence, bundle)
    if gov is None:
        gov_rel = np.zeros(DEPREL_DIM)
        gov_pos = np.zeros(POS_DIM)
    else:
        gov_rel = one_hot(outgoing(gov[1]), bundle.deprel_index, DEPREL_DIM)
        gov_pos = one_hot(gov[0].pos, bundle.pos_index, POS_DIM)
    values = np.concatenate([
        lemma_vec,
        one_hot(token.pos, bundle.pos_index, POS_DIM),
        ctx_pos,
        ctx_rel,
        bundle.embedding(token.text) - lemma_vec,
        multi_hot([incoming(rel) for _, rel in mods], bundle.deprel_index, DEPREL_DIM),
        multi_hot([m.pos for m, _ in mods], bundle.pos_index, POS_DIM),
        gov_rel,
        gov_pos,
        affix_features(token.text, bundle),
    ])
    return FeatureVector(values, "span_realis")


def modifier_entity_types(token: Token, sentence: Sentence) -> list[str]:
    return [m.ner for m, _ in modifiers(token, sentence) if m.ner != "O"]


def type_features(token: Token, sentence: Sentence, bundle: ResourceBundle) -> FeatureVector:
    mods = modifiers(token, sentence)
    values = np.concatenate([
        bundle.embedding(token.lemma),
        bundle.embedding(token.text),
        multi_hot([incoming(rel) for _, rel in mods], bundle.deprel_index, DEPREL_DIM),
        affix_features(token.text, bundle),
        multi_hot([e.upper() for e in modifier_entity_types(token, sentence)], bundle.ner_index, NER_DIM),
    ])
    return FeatureVector(values, "type")


def sentence_matrix(sentence: Sentence, bundle: ResourceBundle, kind: str) -> np.ndarray:
    """Stack the ``kind`` features of every token of ``sentence``."""
    fn = span_realis_features if kind == "span_realis" else type_features
    if not sentence.tokens:
        return np.zeros((0, _DIMS[kind]))
    return np.vstack([fn(t, sentence, bundle).values for t in sentence.tokens])
