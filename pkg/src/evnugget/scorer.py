"""Mention detection and coreference evaluation.

Mention scores are micro-averaged over all documents with exact token-span
matching. Coreference metrics (MUC, B-cubed, CEAF-e, BLANC) compare two
clusterings over one mention universe; the reported CoNLL score is the mean
of all four F1 values.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .corpus import Clustering, Document, EventNugget, nuggets_by_doc

ATTRIBUTES = ("span", "type", "realis", "all")
COREF_METRICS = ("B3", "CEAFe", "MUC", "BLANC")
N_BINS = 10


class UniverseMismatch(ValueError):
    pass


@dataclass(frozen=True)
class PRF:
    """Precision/recall pair; ``f1`` defaults to their harmonic mean."""

    precision: float
    recall: float
    f1: float | None = None

    def __post_init__(self):
        if self.f1 is None:
            p, r = self.precision, self.recall
            object.__setattr__(self, "f1", 2 * p * r / (p + r) if p + r > 0 else 0.0)

    @classmethod
    def from_counts(cls, p_num, p_den, r_num, r_den) -> "PRF":
        return cls(p_num / p_den if p_den else 0.0, r_num / r_den if r_den else 0.0)


def round2(x: float) -> str:
    """Round half-up to two decimals."""
    # formatting to 10 places first absorbs binary representation error
    return str(Decimal(f"{x:.10f}").quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def percent(x: float) -> str:
    return round2(x * 100)


# --------------------------------------------------------------------------
# mention detection


def _attr_equal(g: EventNugget, s: EventNugget, attribute: str) -> bool:
    if attribute == "span":
        return True
    if attribute == "type":
        return g.subtype == s.subtype
    if attribute == "realis":
        return g.realis == s.realis
    if attribute == "all":
        return g.subtype == s.subtype and g.realis == s.realis
    raise ValueError(f"unknown attribute {attribute!r}")


def match_mentions(gold: Sequence[EventNugget], sys: Sequence[EventNugget],
                   attribute: str = "span") -> list[tuple[EventNugget, EventNugget]]:
    """Greedy 1:1 matching in document order (one document's nuggets)."""
    used: set[int] = set()
    pairs = []
    for s in sys:
        for k, g in enumerate(gold):
            if k not in used and g.span == s.span and _attr_equal(g, s, attribute):
                used.add(k)
                pairs.append((g, s))
                break
    return pairs


def mention_counts(gold: Sequence[EventNugget], sys: Sequence[EventNugget], attribute: str) -> tuple[int, int, int]:
    """(true positives, |sys|, |gold|) pooled over documents."""
    g_by, s_by = nuggets_by_doc(gold), nuggets_by_doc(sys)
    tp = sum(len(match_mentions(g_by.get(d, []), s_by.get(d, []), attribute)) for d in set(g_by) | set(s_by))
    return tp, len(sys), len(gold)


def mention_f1(gold: Sequence[EventNugget], sys: Sequence[EventNugget], attribute: str = "span") -> PRF:
    tp, n_sys, n_gold = mention_counts(gold, sys, attribute)
    return PRF.from_counts(tp, n_sys, tp, n_gold)


# --------------------------------------------------------------------------
# coreference


def _check_universe(gold: Clustering, sys: Clustering) -> None:
    if gold.mentions != sys.mentions:
        diff = sorted(map(str, gold.mentions ^ sys.mentions))[:5]
        raise UniverseMismatch(f"clusterings cover different mentions, e.g. {diff}")


def _muc_side(key: Clustering, response: Clustering) -> tuple[int, int]:
    owner = response.cluster_of()
    num = den = 0
    for c in key:
        parts = {owner[m] for m in c}
        num += len(c) - len(parts)
        den += len(c) - 1
    return num, den


def muc(gold: Clustering, sys: Clustering) -> PRF:
    _check_universe(gold, sys)
    r_num, r_den = _muc_side(gold, sys)
    p_num, p_den = _muc_side(sys, gold)
    return PRF.from_counts(p_num, p_den, r_num, r_den)


def b_cubed(gold: Clustering, sys: Clustering) -> PRF:
    _check_universe(gold, sys)
    g_of, s_of = gold.cluster_of(), sys.cluster_of()
    n = len(g_of)
    if not n:
        return PRF(0.0, 0.0)
    p = r = 0.0
    for m, g in g_of.items():
        s = s_of[m]
        overlap = len(g & s)
        p += overlap / len(s)
        r += overlap / len(g)
    return PRF(p / n, r / n)


def phi4(g: frozenset, s: frozenset) -> float:
    return 2 * len(g & s) / (len(g) + len(s))


def assignment_max(weights) -> tuple[list[tuple[int, int]], float]:
    """Maximum-weight one-to-one matching of a rectangular weight matrix."""
    W = np.asarray(weights, dtype=np.float64)
    if W.size == 0:
        return [], 0.0
    rows, cols = linear_sum_assignment(W, maximize=True)
    pairs = [(int(r), int(c)) for r, c in zip(rows, cols)]
    return pairs, math.fsum(W[r, c] for r, c in pairs)


def ceaf_e(gold: Clustering, sys: Clustering) -> PRF:
    _check_universe(gold, sys)
    g_list, s_list = list(gold), list(sys)
    if not g_list or not s_list:
        return PRF(0.0, 0.0)
    W = np.array([[phi4(g, s) for s in s_list] for g in g_list])
    _, total = assignment_max(W)
    return PRF.from_counts(total, len(s_list), total, len(g_list))


@dataclass
class BlancCounts:
    """Pair decisions: correct/sys/gold counts for links and non-links."""

    link_tp: int = 0
    link_sys: int = 0
    link_gold: int = 0
    non_tp: int = 0
    non_sys: int = 0
    non_gold: int = 0

    def __iadd__(self, other: "BlancCounts"):
        for k in vars(self):
            setattr(self, k, getattr(self, k) + getattr(other, k))
        return self


def blanc_counts(gold: Clustering, sys: Clustering) -> BlancCounts:
    _check_universe(gold, sys)
    g_of, s_of = gold.cluster_of(), sys.cluster_of()
    c = BlancCounts()
    for a, b in itertools.combinations(sorted(g_of, key=str), 2):
        in_gold = g_of[a] is g_of[b]
        in_sys = s_of[a] is s_of[b]
        c.link_gold += in_gold
        c.link_sys += in_sys
        c.link_tp += in_gold and in_sys
        c.non_gold += not in_gold
        c.non_sys += not in_sys
        c.non_tp += (not in_gold) and (not in_sys)
    return c


def blanc_from_counts(c: BlancCounts) -> PRF:
    """Mean of link and non-link scores; a side with no gold and no system pairs is dropped."""
    links = PRF.from_counts(c.link_tp, c.link_sys, c.link_tp, c.link_gold)
    non = PRF.from_counts(c.non_tp, c.non_sys, c.non_tp, c.non_gold)
    links_vacuous = c.link_gold == 0 and c.link_sys == 0
    non_vacuous = c.non_gold == 0 and c.non_sys == 0
    if links_vacuous and non_vacuous:
        return PRF(0.0, 0.0)
    if links_vacuous:
        return non
    if non_vacuous:
        return links
    # F is the mean of the two F1 values, not the harmonic mean of the mean P and R
    return PRF((links.precision + non.precision) / 2, (links.recall + non.recall) / 2,
               (links.f1 + non.f1) / 2)


def blanc(gold: Clustering, sys: Clustering) -> PRF:
    return blanc_from_counts(blanc_counts(gold, sys))


def conll_avg(scores: Sequence[PRF | float]) -> float:
    values = [s.f1 if isinstance(s, PRF) else float(s) for s in scores]
    if len(values) != 4:
        raise ValueError("the CoNLL average here takes exactly four F1 values")
    return sum(values) / 4


# --------------------------------------------------------------------------
# corpus-level coreference over possibly different mention sets


def coref_universe(gold: Sequence[EventNugget], gold_clusters: Clustering,
                   sys: Sequence[EventNugget], sys_clusters: Clustering) -> tuple[Clustering, Clustering]:
    """Put gold and system clusterings of one document on a common mention set.

    System mentions matching a gold mention by span and subtype take the gold
    mention's identity; unmatched mentions from either side enter the other
    side as singletons.
    """
    mapping = {s.mention_id: g.mention_id for g, s in match_mentions(gold, sys, "type")}
    g_key = lambda m: ("g", m)
    s_key = lambda m: ("g", mapping[m]) if m in mapping else ("s", m)
    g_groups = [[g_key(m) for m in c] for c in gold_clusters]
    s_groups = [[s_key(m) for m in c] for c in sys_clusters]
    universe = [g_key(n.mention_id) for n in gold] + [s_key(n.mention_id) for n in sys]
    return (Clustering.from_groups(g_groups, universe), Clustering.from_groups(s_groups, universe))


def _prefix(clustering: Clustering, doc_id: str) -> Clustering:
    return Clustering(frozenset(frozenset((doc_id, m) for m in c) for c in clustering))


def corpus_coref(gold: Sequence[EventNugget], gold_clusterings: Mapping[str, Clustering],
                 sys: Sequence[EventNugget], sys_clusterings: Mapping[str, Clustering]) -> dict[str, PRF]:
    """Pool all documents: metrics over the union of per-document clusterings.

    BLANC pools pair counts within documents only.
    """
    g_by, s_by = nuggets_by_doc(gold), nuggets_by_doc(sys)
    g_all, s_all = [], []
    counts = BlancCounts()
    for doc_id in sorted(set(gold_clusterings) | set(sys_clusterings) | set(g_by) | set(s_by)):
        gc = gold_clusterings.get(doc_id) or Clustering.from_groups([], [n.mention_id for n in g_by.get(doc_id, [])])
        sc = sys_clusterings.get(doc_id) or Clustering.from_groups([], [n.mention_id for n in s_by.get(doc_id, [])])
        g, s = coref_universe(g_by.get(doc_id, []), gc, s_by.get(doc_id, []), sc)
        counts += blanc_counts(g, s)
        g_all.extend(_prefix(g, doc_id))
        s_all.extend(_prefix(s, doc_id))
    G, S = Clustering(frozenset(g_all)), Clustering(frozenset(s_all))
    return {"B3": b_cubed(G, S), "CEAFe": ceaf_e(G, S), "MUC": muc(G, S), "BLANC": blanc_from_counts(counts)}


# --------------------------------------------------------------------------
# reports


@dataclass
class ScoreReport:
    mention: dict[str, PRF]
    coref: dict[str, PRF]
    per_document: dict[str, tuple[str, float, float]] = field(default_factory=dict)

    @property
    def conll(self) -> float:
        return conll_avg([self.coref[m] for m in COREF_METRICS])


def per_document_scores(gold: Sequence[EventNugget], sys: Sequence[EventNugget],
                        docs: Iterable[Document]) -> dict[str, tuple[str, float, float]]:
    g_by, s_by = nuggets_by_doc(gold), nuggets_by_doc(sys)
    out = {}
    for doc in docs:
        g, s = g_by.get(doc.doc_id, []), s_by.get(doc.doc_id, [])
        out[doc.doc_id] = (doc.genre, mention_f1(g, s, "span").f1, mention_f1(g, s, "all").f1)
    return out


def bin_index(f1: float, n_bins: int = N_BINS) -> int:
    # the top bin is closed on the right so a perfect score lands in it
    return min(int(Decimal(f"{f1:.12f}") * n_bins), n_bins - 1)


def per_document_breakdown(gold: Sequence[EventNugget], sys: Sequence[EventNugget],
                           docs: Sequence[Document]) -> dict[tuple[str, str], list[int]]:
    """Histogram counts keyed by (subtask, genre); subtasks ``span`` and ``type+realis``."""
    from .corpus import GENRES
    hist = {(task, genre): [0] * N_BINS for task in ("span", "type+realis") for genre in GENRES}
    for genre, span_f1, all_f1 in per_document_scores(gold, sys, docs).values():
        hist[("span", genre)][bin_index(span_f1)] += 1
        hist[("type+realis", genre)][bin_index(all_f1)] += 1
    return hist


def histogram_tsv(hist: Mapping[tuple[str, str], Sequence[int]]) -> str:
    lines = ["subtask\tgenre\tbin_low\tbin_high\tdocuments"]
    for (task, genre), counts in hist.items():
        for k, c in enumerate(counts):
            lines.append(f"{task}\t{genre}\t{k / N_BINS:.1f}\t{(k + 1) / N_BINS:.1f}\t{c}")
    return "\n".join(lines) + "\n"


def score(gold: Sequence[EventNugget], gold_clusterings: Mapping[str, Clustering],
          sys: Sequence[EventNugget], sys_clusterings: Mapping[str, Clustering],
          docs: Sequence[Document] = ()) -> ScoreReport:
    mention = {a: mention_f1(gold, sys, a) for a in ATTRIBUTES}
    coref = corpus_coref(gold, gold_clusterings, sys, sys_clusterings)
    return ScoreReport(mention, coref, per_document_scores(gold, sys, docs))


def mention_tsv(report: ScoreReport, run: str) -> str:
    header = ["Runs"] + [f"{a.capitalize()}-{m}" for a in ATTRIBUTES for m in ("P", "R", "F1")]
    row = [run]
    for a in ATTRIBUTES:
        prf = report.mention[a]
        row += [percent(prf.precision), percent(prf.recall), percent(prf.f1)]
    return "\t".join(header) + "\n" + "\t".join(row) + "\n"


def coref_tsv(report: ScoreReport, run: str) -> str:
    header = ["Runs", "B3", "CeafE", "MUC", "BLANC", "CoNLL"]
    row = [run] + [percent(report.coref[m].f1) for m in COREF_METRICS] + [percent(report.conll)]
    return "\t".join(header) + "\n" + "\t".join(row) + "\n"


def per_document_tsv(report: ScoreReport) -> str:
    lines = ["doc_id\tgenre\tspan_f1\ttype_realis_f1"]
    for doc_id, (genre, span_f1, all_f1) in report.per_document.items():
        lines.append(f"{doc_id}\t{genre}\t{percent(span_f1)}\t{percent(all_f1)}")
    return "\n".join(lines) + "\n"
