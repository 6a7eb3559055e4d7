"""Random valid documents and annotations for round-trip and property tests."""

from evnugget.corpus import GENRES, REALIS_LABELS, Clustering, Document, EventNugget, Sentence, Token
from evnugget.resources import DEFAULT_NER, DEFAULT_POS, DEFAULT_RELATIONS, DEFAULT_SUBTYPES

ALPHABET = list("abcdefghijklmnopqrstuvwxyzABCDEFGHIJ0123456789-'.,éßø中文") + ["Ω"]


def random_word(rng, max_len=8):
    n = int(rng.integers(1, max_len + 1))
    return "".join(rng.choice(ALPHABET, size=n))


def random_heads(rng, n):
    """Heads of a random tree over tokens 1..n (0 marks the root)."""
    order = list(rng.permutation(n) + 1)
    heads = [0] * (n + 1)
    for k, node in enumerate(order[1:], start=1):
        heads[node] = int(order[rng.integers(k)])
    return heads[1:]


def random_sentence(rng, offset, max_tokens=9):
    n = int(rng.integers(1, max_tokens + 1))
    heads = random_heads(rng, n)
    tokens = []
    for i in range(1, n + 1):
        text = random_word(rng)
        offset += int(rng.integers(0, 3))
        ner = "O" if rng.random() < 0.6 else str(rng.choice(DEFAULT_NER))
        rel = "root" if heads[i - 1] == 0 else str(rng.choice(DEFAULT_RELATIONS))
        tokens.append(Token(i, text, random_word(rng), str(rng.choice(DEFAULT_POS)), ner,
                            offset, offset + len(text), heads[i - 1], rel))
        offset += len(text)
    return Sentence(tuple(tokens)), offset


def random_document(rng, doc_id, max_sentences=5):
    sents, offset = [], 0
    for _ in range(int(rng.integers(0, max_sentences + 1))):
        sent, offset = random_sentence(rng, offset)
        sents.append(sent)
    return Document(doc_id, str(rng.choice(GENRES)), tuple(sents))


def random_annotations(rng, doc, max_nuggets=6):
    positions = list(doc.positions())
    nuggets = []
    if positions:
        for k in range(int(rng.integers(0, max_nuggets + 1))):
            width = int(rng.integers(1, 3))
            picks = sorted({positions[int(rng.integers(len(positions)))] for _ in range(width)})
            text = " ".join(doc.token(s, t).text for s, t in picks)
            nuggets.append(EventNugget(f"m{k + 1}", doc.doc_id, tuple(picks), text,
                                       str(rng.choice(DEFAULT_SUBTYPES)), str(rng.choice(REALIS_LABELS))))
    ids = [n.mention_id for n in nuggets]
    labels = rng.integers(0, max(1, len(ids)), size=len(ids))
    groups = {}
    for m, c in zip(ids, labels):
        groups.setdefault(int(c), []).append(m)
    return nuggets, Clustering.from_groups(groups.values())


def random_clustering(rng, mentions, max_clusters=None):
    mentions = list(mentions)
    k = max_clusters or max(1, len(mentions))
    labels = rng.integers(0, k, size=len(mentions))
    groups = {}
    for m, c in zip(mentions, labels):
        groups.setdefault(int(c), []).append(m)
    return Clustering.from_groups(groups.values())
