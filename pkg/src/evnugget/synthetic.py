"""Seeded synthetic corpora with planted event triggers, realis cues and chains.

Every sentence follows one of a handful of parsed templates. Realis is
signalled by modifiers (a date for Actual, ``often`` for Generic, ``will``
or ``if`` for Other) and each trigger lemma carries a fixed subtype, so the
classifiers can learn the corpus. Repeated trigger lemmas inside a document
form coreference chains.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from .corpus import (
    Clustering, Document, EventNugget, Sentence, Token, vocabulary, write_annotation_file,
    write_document_file,
)
from .resources import EMBEDDING_DIM, write_embeddings

# lemma -> (subtype, past, present 3sg)
TRIGGERS = {
    "attack": ("Conflict_Attack", "attacked", "attacks"),
    "meet": ("Contact_Meet", "met", "meets"),
    "die": ("Life_Die", "died", "dies"),
    "travel": ("Movement_Transport-Person", "traveled", "travels"),
    "pay": ("Transaction_Transfer-Money", "paid", "pays"),
    "elect": ("Personnel_Elect", "elected", "elects"),
    "arrest": ("Justice_Arrest-Jail", "arrested", "arrests"),
    "announce": ("Contact_Broadcast", "announced", "announces"),
    # outside the evaluation inventory: trains the OTHER type class
    "marry": ("Life_Marry", "married", "marries"),
}
NON_TRIGGERS = {"like": ("liked", "likes"), "see": ("saw", "sees"), "want": ("wanted", "wants"),
                "own": ("owned", "owns")}
PEOPLE = ("John", "Mary", "Ahmed", "Chen", "Olga", "Pedro")
PLACES = ("Paris", "Baghdad", "Lagos", "Lima", "Oslo")
ORGS = ("Reuters", "Interpol", "Unicef")
OBJECTS = ("report", "house", "car", "city", "money", "office", "bank")
GROUPS = ("officials", "workers", "soldiers", "students")
DAYS = ("Monday", "Tuesday", "Friday", "2008")

GENRES = ("newswire", "discussion_forum")


def _tok(text, lemma, pos, ner, head, deprel):
    return [str(text), str(lemma), pos, ner, head, deprel]


def _actual(rng, lemma, forms):
    who, obj, place, day = rng.choice(PEOPLE), rng.choice(OBJECTS), rng.choice(PLACES), rng.choice(DAYS)
    day_ner = "NUMBER" if day.isdigit() else "DATE"
    day_pos = "CD" if day.isdigit() else "NNP"
    return [
        _tok(who, who, "NNP", "PERSON", 2, "nsubj"),
        _tok(forms[0], lemma, "VBD", "O", 0, "root"),
        _tok("the", "the", "DT", "O", 4, "det"),
        _tok(obj, obj, "NN", "O", 2, "dobj"),
        _tok("in", "in", "IN", "O", 6, "case"),
        _tok(place, place, "NNP", "LOCATION", 2, "nmod:in"),
        _tok(day, day, day_pos, day_ner, 2, "nmod:tmod"),
        _tok(".", ".", ".", "O", 2, "punct"),
    ], 2


def _generic(rng, lemma, forms):
    group, obj = rng.choice(GROUPS), rng.choice(OBJECTS)
    return [
        _tok(group.capitalize(), group, "NNS", "O", 3, "nsubj"),
        _tok("often", "often", "RB", "O", 3, "advmod"),
        _tok(lemma, lemma, "VBP", "O", 0, "root"),
        _tok(obj + "s", obj, "NNS", "O", 3, "dobj"),
        _tok(".", ".", ".", "O", 3, "punct"),
    ], 3


def _other(rng, lemma, forms):
    who, org = rng.choice(PEOPLE), rng.choice(ORGS)
    if rng.random() < 0.5:
        return [
            _tok(who, who, "NNP", "PERSON", 3, "nsubj"),
            _tok("will", "will", "MD", "O", 3, "aux"),
            _tok(lemma, lemma, "VB", "O", 0, "root"),
            _tok("with", "with", "IN", "O", 5, "case"),
            _tok(org, org, "NNP", "ORGANIZATION", 3, "nmod:with"),
            _tok(".", ".", ".", "O", 3, "punct"),
        ], 3
    return [
        _tok("If", "if", "IN", "O", 3, "mark"),
        _tok(who, who, "NNP", "PERSON", 3, "nsubj"),
        _tok(forms[1], lemma, "VBZ", "O", 0, "root"),
        _tok(",", ",", ",", "O", 3, "punct"),
        _tok("they", "they", "PRP", "O", 6, "nsubj"),
        _tok("worry", "worry", "VBP", "O", 3, "parataxis"),
        _tok(".", ".", ".", "O", 3, "punct"),
    ], 3


def _plain(rng):
    verb = list(NON_TRIGGERS)[rng.integers(len(NON_TRIGGERS))]
    who, obj = rng.choice(PEOPLE), rng.choice(OBJECTS)
    return [
        _tok(who, who, "NNP", "PERSON", 2, "nsubj"),
        _tok(NON_TRIGGERS[verb][0], verb, "VBD", "O", 0, "root"),
        _tok("the", "the", "DT", "O", 5, "det"),
        _tok("big", "big", "JJ", "O", 5, "amod"),
        _tok(obj, obj, "NN", "O", 2, "dobj"),
        _tok(".", ".", ".", "O", 2, "punct"),
    ]


_REALIS_MAKERS = {"Actual": _actual, "Generic": _generic, "Other": _other}


def generate_corpus(n_docs: int = 10, seed: int = 0, sentences: tuple[int, int] = (3, 7),
                    event_rate: float = 0.7):
    """Return ``(docs, nuggets, clusterings)`` for a seeded synthetic corpus."""
    rng = np.random.default_rng(seed)
    docs, nuggets, clusterings = [], [], {}
    lemmas = list(TRIGGERS)
    for d in range(n_docs):
        doc_id = f"doc{d:03d}"
        genre = GENRES[d % 2]
        n_sent = int(rng.integers(sentences[0], sentences[1] + 1))
        # a small per-document pool of trigger lemmas makes repeats (chains) likely
        pool = list(rng.choice(lemmas, size=min(3, len(lemmas)), replace=False))
        sents, offset = [], 0
        chains: dict[str, list[str]] = {}
        doc_nuggets = []
        for si in range(1, n_sent + 1):
            if rng.random() < event_rate:
                lemma = str(pool[rng.integers(len(pool))])
                subtype, past, third = TRIGGERS[lemma]
                realis = ("Actual", "Generic", "Other")[rng.integers(3)]
                rows, trig = _REALIS_MAKERS[realis](rng, lemma, (past, third))
                mid = f"m{len(doc_nuggets) + 1}"
                doc_nuggets.append(EventNugget(mid, doc_id, ((si, trig),), rows[trig - 1][0], subtype, realis))
                chains.setdefault(lemma, []).append(mid)
            else:
                rows = _plain(rng)
            tokens = []
            for i, (text, lemma_, pos, ner, head, rel) in enumerate(rows, start=1):
                tokens.append(Token(i, text, lemma_, pos, ner, offset, offset + len(text), head, rel))
                offset += len(text) + 1
            sents.append(Sentence(tuple(tokens)))
        docs.append(Document(doc_id, genre, tuple(sents)))
        nuggets.extend(doc_nuggets)
        clusterings[doc_id] = Clustering.from_groups(chains.values())
    return docs, nuggets, clusterings


def generate_embeddings(words, seed: int = 0) -> dict[str, np.ndarray]:
    """Gaussian vectors; inflected trigger forms sit near their lemma."""
    rng = np.random.default_rng(seed)
    base = {}
    for w in sorted(words):
        base[w] = rng.normal(0.0, 1.0, EMBEDDING_DIM) / np.sqrt(EMBEDDING_DIM) * 4
    for lemma, (_, past, third) in TRIGGERS.items():
        for form in (past, third):
            if form in base and lemma in base:
                base[form] = base[lemma] + 0.3 * base[form]
    return base


def write_fixture(directory: str | Path, n_docs: int = 10, seed: int = 0) -> dict[str, Path]:
    """Write corpus, gold annotations and embeddings for a synthetic corpus."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    docs, nuggets, clusterings = generate_corpus(n_docs, seed)
    paths = {"corpus": directory / "corpus.txt", "gold": directory / "gold.txt",
             "embeddings": directory / "embeddings.txt"}
    paths["corpus"].write_text(write_document_file(docs), encoding="utf-8")
    paths["gold"].write_text(write_annotation_file(nuggets, clusterings, "gold"), encoding="utf-8")
    write_embeddings(paths["embeddings"], generate_embeddings(vocabulary(docs), seed))
    return paths


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description="write a synthetic fixture corpus")
    parser.add_argument("directory")
    parser.add_argument("--docs", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    for name, path in write_fixture(args.directory, args.docs, args.seed).items():
        print(f"{name}\t{path}")


if __name__ == "__main__":
    main()
