"""Pairwise event coreference scoring and greedy antecedent merging.

A mention is represented by its trigger token (the first span token). The
pair network is a siamese sigmoid layer over lemma embedding + POS one-hot,
whose two outputs are compared by cosine similarity and L1/L2 distance; the
three similarities are concatenated with a sigmoid embedding of the pair's
side features and fed through a 10-unit layer to a single sigmoid output.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import nn
from .corpus import Clustering, Document, EventNugget, nuggets_by_doc
from .features import affix_features, modifier_entity_types, multi_hot, one_hot
from .resources import AFFIX_DIM, EMBEDDING_DIM, NER_DIM, POS_DIM, ResourceBundle

log = logging.getLogger(__name__)

MENTION_DIM = EMBEDDING_DIM + POS_DIM                    # 347
SIDE_DIM = EMBEDDING_DIM + 2 * AFFIX_DIM + NER_DIM       # 380
N_SIMILARITIES = 3
MERGE_DIM = 10
SUBNETS = ("shared", "side", "merge", "output")


@dataclass(frozen=True)
class MentionEncoding:
    base: np.ndarray

    def __post_init__(self):
        if self.base.shape != (MENTION_DIM,):
            raise ValueError(f"mention encoding must have length {MENTION_DIM}")


@dataclass(frozen=True)
class PairFeatures:
    similarities: np.ndarray   # cosine, L1, L2
    side_input: np.ndarray

    def __post_init__(self):
        if self.similarities.shape != (N_SIMILARITIES,) or self.side_input.shape != (SIDE_DIM,):
            raise ValueError("pair features have the wrong shape")


def _layer(n_in: int, n_out: int) -> nn.NetConfig:
    return nn.NetConfig((n_in, n_out), (0.0, 0.0), ("sigmoid",))


@dataclass(eq=False)
class CorefNet:
    shared: nn.DenseNet
    side: nn.DenseNet
    merge: nn.DenseNet
    output: nn.DenseNet

    def __post_init__(self):
        expected = {"shared": (MENTION_DIM, MENTION_DIM), "side": (SIDE_DIM, SIDE_DIM),
                    "merge": (N_SIMILARITIES + SIDE_DIM, MERGE_DIM), "output": (MERGE_DIM, 1)}
        for name, (n_in, n_out) in expected.items():
            net = getattr(self, name)
            if net.config.layer_sizes != (n_in, n_out):
                raise ValueError(f"{name} layer must be {n_in}->{n_out}")

    @classmethod
    def initial(cls, seed: int = 0) -> "CorefNet":
        rng = np.random.default_rng(seed)
        return cls(nn.init_net(_layer(MENTION_DIM, MENTION_DIM), rng),
                   nn.init_net(_layer(SIDE_DIM, SIDE_DIM), rng),
                   nn.init_net(_layer(N_SIMILARITIES + SIDE_DIM, MERGE_DIM), rng),
                   nn.init_net(_layer(MERGE_DIM, 1), rng))

    def subnets(self) -> dict[str, nn.DenseNet]:
        return {name: getattr(self, name) for name in SUBNETS}


# --------------------------------------------------------------------------
# features


def _trigger(nugget: EventNugget, doc: Document):
    s, t = nugget.trigger
    try:
        return doc.sentences[s - 1], doc.token(s, t)
    except IndexError:
        raise ValueError(f"nugget {nugget.mention_id} points at missing token {s}:{t}") from None


def encode_mention(nugget: EventNugget, doc: Document, bundle: ResourceBundle) -> MentionEncoding:
    _, tok = _trigger(nugget, doc)
    return MentionEncoding(np.concatenate([bundle.embedding(tok.lemma),
                                           one_hot(tok.pos, bundle.pos_index, POS_DIM)]))


def side_input(m1: EventNugget, m2: EventNugget, doc: Document, bundle: ResourceBundle) -> np.ndarray:
    s1, t1 = _trigger(m1, doc)
    s2, t2 = _trigger(m2, doc)
    diff = np.abs(bundle.embedding(t1.text) - bundle.embedding(t2.text))
    a1, a2 = affix_features(t1.lemma, bundle), affix_features(t2.lemma, bundle)
    shared_types = ({e.upper() for e in modifier_entity_types(t1, s1)}
                    & {e.upper() for e in modifier_entity_types(t2, s2)})
    overlap = multi_hot(sorted(shared_types), bundle.ner_index, NER_DIM)
    return np.concatenate([diff, np.maximum(a1, a2), np.minimum(a1, a2), overlap])


def _similarities(h1: np.ndarray, h2: np.ndarray) -> np.ndarray:
    n1 = np.linalg.norm(h1, axis=-1)
    n2 = np.linalg.norm(h2, axis=-1)
    cos = (h1 * h2).sum(axis=-1) / (n1 * n2)
    d = h1 - h2
    return np.stack([cos, np.abs(d).sum(axis=-1), np.sqrt((d * d).sum(axis=-1))], axis=-1)


def pair_features(m1: EventNugget, m2: EventNugget, doc: Document, bundle: ResourceBundle,
                  net: CorefNet) -> PairFeatures:
    h1 = nn.predict(net.shared, encode_mention(m1, doc, bundle).base)[0]
    h2 = nn.predict(net.shared, encode_mention(m2, doc, bundle).base)[0]
    sims = _similarities(h1, h2)
    sims[0] = np.clip(sims[0], -1.0, 1.0)
    return PairFeatures(sims, side_input(m1, m2, doc, bundle))


@dataclass
class _PairCache:
    c1: nn.Cache
    c2: nn.Cache
    cs: nn.Cache
    cm: nn.Cache
    co: nn.Cache
    h1: np.ndarray
    h2: np.ndarray
    sims: np.ndarray


def _forward(net: CorefNet, E1, E2, S) -> tuple[np.ndarray, _PairCache]:
    h1, c1 = nn.forward(net.shared, E1)
    h2, c2 = nn.forward(net.shared, E2)
    g, cs = nn.forward(net.side, S)
    sims = _similarities(h1, h2)
    m, cm = nn.forward(net.merge, np.hstack([sims, g]))
    p, co = nn.forward(net.output, m)
    return p[:, 0], _PairCache(c1, c2, cs, cm, co, h1, h2, sims)


def score_batch(net: CorefNet, E1: np.ndarray, E2: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Scores for row-aligned mention encodings and side inputs."""
    return _forward(net, np.atleast_2d(E1), np.atleast_2d(E2), np.atleast_2d(S))[0]


def coref_score(m1: EventNugget, m2: EventNugget, doc: Document, bundle: ResourceBundle,
                net: CorefNet) -> float:
    E1 = encode_mention(m1, doc, bundle).base
    E2 = encode_mention(m2, doc, bundle).base
    return float(score_batch(net, E1, E2, side_input(m1, m2, doc, bundle))[0])


def pair_loss(net: CorefNet, E1, E2, S, y) -> float:
    p = score_batch(net, E1, E2, S)
    y = np.asarray(y, dtype=np.float64)
    eps = 1e-300
    return float(-(y * np.log(np.maximum(p, eps)) + (1 - y) * np.log(np.maximum(1 - p, eps))).mean())


def pair_gradient(net: CorefNet, E1, E2, S, y) -> dict[str, nn.Gradients]:
    """Gradient of mean binary cross-entropy for a batch of pairs."""
    E1, E2, S = np.atleast_2d(E1), np.atleast_2d(E2), np.atleast_2d(S)
    p, cache = _forward(net, E1, E2, S)
    n = len(p)
    g_out = nn.backward(net.output, cache.co, ((p - np.asarray(y, dtype=np.float64)) / n)[:, None], of="preact")
    g_merge = nn.backward(net.merge, cache.cm, g_out.inputs)
    d_sims, d_side = g_merge.inputs[:, :N_SIMILARITIES], g_merge.inputs[:, N_SIMILARITIES:]
    g_side = nn.backward(net.side, cache.cs, d_side)

    h1, h2 = cache.h1, cache.h2
    n1 = np.linalg.norm(h1, axis=1, keepdims=True)
    n2 = np.linalg.norm(h2, axis=1, keepdims=True)
    cos = cache.sims[:, :1]
    diff = h1 - h2
    l2 = cache.sims[:, 2:3]
    unit = np.divide(diff, l2, out=np.zeros_like(diff), where=l2 > 0)
    sign = np.sign(diff)
    d_cos, d_l1, d_l2 = d_sims[:, :1], d_sims[:, 1:2], d_sims[:, 2:3]
    d_h1 = d_cos * (h2 / (n1 * n2) - cos * h1 / n1 ** 2) + d_l1 * sign + d_l2 * unit
    d_h2 = d_cos * (h1 / (n1 * n2) - cos * h2 / n2 ** 2) - d_l1 * sign - d_l2 * unit
    g1 = nn.backward(net.shared, cache.c1, d_h1)
    g2 = nn.backward(net.shared, cache.c2, d_h2)
    g_shared = nn.Gradients([a + b for a, b in zip(g1.weights, g2.weights)],
                            [a + b for a, b in zip(g1.biases, g2.biases)])
    return {"shared": g_shared, "side": g_side, "merge": g_merge, "output": g_out}


# --------------------------------------------------------------------------
# inference


def greedy_resolve(mentions: Sequence[EventNugget], score: Callable[[EventNugget, EventNugget], float],
                   threshold: float = 0.5, same_type_filter: bool = True) -> Clustering:
    """Merge each mention into the cluster of its best-scoring antecedent.

    Mentions are scanned in the given order; ``score(antecedent, mention)``
    must exceed ``threshold`` for a merge. Equal best scores resolve to the
    nearest antecedent.
    """
    cluster_id: dict[str, int] = {}
    groups: list[list[str]] = []
    for j, mention in enumerate(mentions):
        best, best_i = None, None
        for i in range(j):
            ante = mentions[i]
            if same_type_filter and ante.subtype != mention.subtype:
                continue
            s = score(ante, mention)
            if best is None or s >= best:
                best, best_i = s, i
        if best is not None and best > threshold:
            cid = cluster_id[mentions[best_i].mention_id]
        else:
            cid = len(groups)
            groups.append([])
        groups[cid].append(mention.mention_id)
        cluster_id[mention.mention_id] = cid
    return Clustering.from_groups(groups)


def score_matrix(nuggets: Sequence[EventNugget], doc: Document, bundle: ResourceBundle,
                 net: CorefNet) -> np.ndarray:
    """Upper-triangular matrix of pair scores ``M[i, j]`` for ``i < j``."""
    n = len(nuggets)
    M = np.zeros((n, n))
    if n < 2:
        return M
    enc = np.vstack([encode_mention(m, doc, bundle).base for m in nuggets])
    ii, jj = np.triu_indices(n, k=1)
    S = np.vstack([side_input(nuggets[i], nuggets[j], doc, bundle) for i, j in zip(ii, jj)])
    M[ii, jj] = score_batch(net, enc[ii], enc[jj], S)
    return M


def resolve_document(nuggets: Sequence[EventNugget], doc: Document, bundle: ResourceBundle, net: CorefNet,
                     threshold: float = 0.5, same_type_filter: bool = True) -> Clustering:
    M = score_matrix(nuggets, doc, bundle, net)
    pos = {m.mention_id: k for k, m in enumerate(nuggets)}
    return greedy_resolve(nuggets, lambda a, b: M[pos[a.mention_id], pos[b.mention_id]],
                          threshold, same_type_filter)


# --------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class CorefConfig:
    epochs: int = 30
    learning_rate: float = 0.5
    batch_size: int = 32
    neg_ratio: float = 3.0
    seed: int = 0


def build_pairs(docs: Sequence[Document], nuggets: Sequence[EventNugget],
                clusterings: Mapping[str, Clustering], bundle: ResourceBundle,
                neg_ratio: float, rng: np.random.Generator):
    """Within-document training pairs: all positives plus sampled negatives."""
    by_doc = nuggets_by_doc(nuggets)
    pos, neg = [], []
    for doc in docs:
        ms = by_doc.get(doc.doc_id, [])
        owner = clusterings.get(doc.doc_id, Clustering()).cluster_of()
        for j in range(len(ms)):
            for i in range(j):
                a, b = ms[i], ms[j]
                same = a.mention_id in owner and owner.get(a.mention_id) is owner.get(b.mention_id)
                (pos if same else neg).append((doc, a, b))
    if not pos:
        raise ValueError("no coreferent pairs in the training corpus")
    n_neg = min(len(neg), int(round(neg_ratio * len(pos))))
    picked = [neg[k] for k in sorted(rng.choice(len(neg), size=n_neg, replace=False))] if n_neg else []
    pairs = pos + picked
    labels = np.array([1.0] * len(pos) + [0.0] * len(picked))
    E1 = np.vstack([encode_mention(a, d, bundle).base for d, a, _ in pairs])
    E2 = np.vstack([encode_mention(b, d, bundle).base for d, _, b in pairs])
    S = np.vstack([side_input(a, b, d, bundle) for d, a, b in pairs])
    return E1, E2, S, labels


def train_coref(train_docs: Sequence[Document], gold_nuggets: Sequence[EventNugget],
                gold_clusterings: Mapping[str, Clustering], bundle: ResourceBundle,
                config: CorefConfig = CorefConfig()) -> CorefNet:
    rng = np.random.default_rng(config.seed)
    E1, E2, S, y = build_pairs(train_docs, gold_nuggets, gold_clusterings, bundle, config.neg_ratio, rng)
    net = CorefNet.initial(config.seed)
    subnets = net.subnets()
    n = len(y)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            grads = pair_gradient(net, E1[idx], E2[idx], S[idx], y[idx])
            for name, sub in subnets.items():
                g = grads[name]
                for k in range(len(sub.weights)):
                    sub.weights[k] -= config.learning_rate * g.weights[k]
                    sub.biases[k] -= config.learning_rate * g.biases[k]
        log.info("coref epoch %d/%d loss %.6f", epoch + 1, config.epochs, pair_loss(net, E1, E2, S, y))
    return net


def pair_accuracy(net: CorefNet, E1, E2, S, y) -> float:
    return float(((score_batch(net, E1, E2, S) > 0.5) == (np.asarray(y) > 0.5)).mean())


# --------------------------------------------------------------------------
# persistence


def save_coref(net: CorefNet, directory: str | Path, config: CorefConfig | None = None) -> dict:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, sub in net.subnets().items():
        payload = nn.serialize(sub)
        (directory / f"{name}.bin").write_bytes(payload)
        entries.append({"name": name, "file": f"{name}.bin", "sha256": hashlib.sha256(payload).hexdigest()})
    manifest = {"subnets": entries, "config": asdict(config) if config else None}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_coref(directory: str | Path) -> CorefNet:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    subs = {}
    for entry in manifest["subnets"]:
        payload = (directory / entry["file"]).read_bytes()
        if hashlib.sha256(payload).hexdigest() != entry["sha256"]:
            raise ValueError(f"coref subnet {entry['name']} does not match its manifest digest")
        subs[entry["name"]] = nn.deserialize(payload)
    missing = set(SUBNETS) - set(subs)
    if missing:
        raise ValueError(f"coref manifest lacks subnets {sorted(missing)}")
    return CorefNet(**{k: subs[k] for k in SUBNETS})
