import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evnugget.corpus import Sentence
from evnugget.features import (
    SPAN_REALIS_BLOCKS, SPAN_REALIS_DIM, TYPE_BLOCKS, TYPE_DIM, FeatureVector, affix_features,
    block_slices, governor, lookup_embedding, modifiers, one_hot, sentence_matrix, span_realis_features,
    type_features,
)
from evnugget.resources import DEFAULT_AFFIXES, DEFAULT_NER, DEFAULT_POS, ResourceBundle
from conftest import make_sentence, random_bundle
from generators import random_document

# literal indices into the default inventories
VBD, NNS, NNP = 27, 12, 13
NSUBJ, DOBJ, ROOT = 37, 23, 44
IN, OUT = 0, 104
ED = 22

TROOPS = [("Troops", "troop", "NNS", "O", 2, "nsubj"),
          ("attacked", "attack", "VBD", "O", 0, "root"),
          ("towns", "town", "NNS", "LOCATION", 2, "dobj")]


@pytest.fixture(scope="module")
def troops():
    sent = make_sentence(TROOPS)
    words = {"troop", "Troops", "attack", "attacked", "town", "towns"}
    return sent, random_bundle(words, seed=3)


def test_block_dims_match_network_inputs():
    assert [d for _, d in SPAN_REALIS_BLOCKS] == [300, 47, 235, 1040, 300, 208, 47, 208, 47, 36]
    assert SPAN_REALIS_DIM == 300 + 47 + 235 + 1040 + 300 + 208 + 47 + 208 + 47 + 36 == 2468
    assert [d for _, d in TYPE_BLOCKS] == [300, 300, 208, 36, 8]
    assert TYPE_DIM == 852
    slices = block_slices(SPAN_REALIS_BLOCKS)
    assert slices["context_deprel"] == slice(582, 1622)
    assert slices["affixes"] == slice(2432, 2468)


def test_feature_vector_length_checked():
    with pytest.raises(ValueError):
        FeatureVector(np.zeros(10), "span_realis")
    assert len(FeatureVector(np.zeros(852), "type")) == 852


class TestOneHot:
    def test_known_label(self):
        v = one_hot("NN", DEFAULT_POS)
        assert v.shape == (47,) and v[11] == 1.0 and v.sum() == 1.0

    def test_unknown_label(self):
        assert not one_hot("XYZ", DEFAULT_POS).any()

    @given(st.text(max_size=6))
    def test_sum_is_zero_or_one(self, label):
        assert one_hot(label, DEFAULT_POS).sum() in (0.0, 1.0)


class TestEmbedding:
    def test_lookup_policies(self):
        vec = np.arange(300, dtype=float)
        bundle = ResourceBundle.from_embeddings({"the": vec})
        assert np.array_equal(lookup_embedding("the", bundle), vec)
        assert np.array_equal(lookup_embedding("The", bundle), vec)
        assert np.array_equal(lookup_embedding("zzz", bundle), np.zeros(300))

    def test_exact_match_preferred(self):
        bundle = ResourceBundle.from_embeddings({"US": np.ones(300), "us": np.zeros(300)})
        assert lookup_embedding("US", bundle).sum() == 300


class TestTree:
    def test_modifiers_and_governor(self):
        rows = [("The", "the", "DT", "O", 2, "det"),
                ("army", "army", "NN", "O", 3, "nsubj"),
                ("shelled", "shell", "VBD", "O", 0, "root"),
                ("the", "the", "DT", "O", 5, "det"),
                ("city", "city", "NN", "O", 3, "dobj")]
        sent = make_sentence(rows)
        assert [(m.index, r) for m, r in modifiers(sent[3], sent)] == [(2, "nsubj"), (5, "dobj")]
        assert [(m.index, r) for m, r in modifiers(sent[5], sent)] == [(4, "det")]
        assert modifiers(sent[1], sent) == []
        assert governor(sent[3], sent) is None
        gov, rel = governor(sent[5], sent)
        assert (gov.index, rel) == (3, "dobj")

    def test_root_with_three_dependents(self, troops):
        sent = make_sentence(TROOPS + [(".", ".", ".", "O", 2, "punct")])
        assert [m.index for m, _ in modifiers(sent[2], sent)] == [1, 3, 4]

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_token_is_modifier_of_its_governor(self, seed):
        doc = random_document(np.random.default_rng(seed), "d")
        for sent in doc.sentences:
            for tok in sent.tokens:
                gov = governor(tok, sent)
                if gov is not None:
                    assert (tok, tok.deprel) in modifiers(gov[0], sent)


class TestAffixes:
    def test_default_affixes(self, troops):
        _, bundle = troops
        v = affix_features("education", bundle)
        assert v[DEFAULT_AFFIXES.index("-tion")] == 1.0 and v[DEFAULT_AFFIXES.index("-ion")] == 1.0
        assert v.sum() == 2
        u = affix_features("Untie", bundle)
        assert u[DEFAULT_AFFIXES.index("un-")] == 1.0 and u.sum() == 1
        assert not affix_features("", bundle).any()

    def test_configured_positions(self):
        affixes = [f"p{i}-" for i in range(18)] + [f"-s{i}" for i in range(18)]
        affixes[3] = "un-"
        affixes[20] = "-tion"
        bundle = ResourceBundle.from_embeddings({}, affix_list=affixes)
        assert np.flatnonzero(affix_features("education", bundle)).tolist() == [20]
        assert np.flatnonzero(affix_features("untie", bundle)).tolist() == [3]


class TestSpanRealis:
    def test_hand_assembled_vector(self, troops):
        sent, bundle = troops
        E = bundle.embedding
        expected = np.zeros(2468)
        expected[0:300] = E("attack")
        expected[300 + VBD] = 1
        # context POS: slots t-2 (absent), t-1, t, t+1, t+2 (absent)
        expected[347 + 47 * 1 + NNS] = 1
        expected[347 + 47 * 2 + VBD] = 1
        expected[347 + 47 * 3 + NNS] = 1
        expected[582 + 208 * 1 + OUT + NSUBJ] = 1
        expected[582 + 208 * 2 + OUT + ROOT] = 1
        expected[582 + 208 * 3 + OUT + DOBJ] = 1
        expected[1622:1922] = E("attacked") - E("attack")
        expected[1922 + IN + NSUBJ] = 1
        expected[1922 + IN + DOBJ] = 1
        expected[2130 + NNS] = 1
        expected[2432 + ED] = 1
        got = span_realis_features(sent[2], sent, bundle)
        assert got.kind == "span_realis"
        np.testing.assert_array_equal(got.values, expected)

    def test_dependent_token_has_governor_blocks(self, troops):
        sent, bundle = troops
        v = span_realis_features(sent[3], sent, bundle).values
        assert np.flatnonzero(v[2177:2385]).tolist() == [OUT + DOBJ]
        assert np.flatnonzero(v[2385:2432]).tolist() == [VBD]
        # towns sits at t; slot 0 is Troops, slot 1 attacked, slots 3-4 fall outside
        ctx = v[347:582].reshape(5, 47)
        assert [np.flatnonzero(r).tolist() for r in ctx] == [[NNS], [VBD], [NNS], [], []]
        assert not v[1922:2177].any()

    def test_oov_single_token(self):
        sent = make_sentence([("qwzx", "qwzx", "NN", "O", 0, "root")])
        bundle = random_bundle({"other"})
        v = span_realis_features(sent[1], sent, bundle).values
        slices = block_slices(SPAN_REALIS_BLOCKS)
        for name in ("lemma_vector", "token_minus_lemma", "modifier_deprel", "modifier_pos",
                     "governor_deprel", "governor_pos"):
            assert not v[slices[name]].any(), name
        ctx_pos = v[slices["context_pos"]].reshape(5, 47)
        ctx_rel = v[slices["context_deprel"]].reshape(5, 208)
        assert not np.delete(ctx_pos, 2, axis=0).any() and not np.delete(ctx_rel, 2, axis=0).any()

    def test_unknown_labels_give_zero_blocks(self):
        sent = make_sentence([("x", "x", "BOGUS", "O", 0, "weirdrel")])
        v = span_realis_features(sent[1], sent, random_bundle(set())).values
        assert not v.any()

    def test_repeated_modifier_is_multi_hot(self):
        rows = [("a", "a", "JJ", "O", 3, "amod"), ("b", "b", "JJ", "O", 3, "amod"), ("c", "c", "NN", "O", 0, "root")]
        sent = make_sentence(rows)
        v = span_realis_features(sent[3], sent, random_bundle(set())).values
        assert v[1922:2130].max() == 1.0 and v[1922:2130].sum() == 1.0
        assert v[2130:2177].sum() == 1.0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_categorical_blocks_binary(self, seed):
        rng = np.random.default_rng(seed)
        doc = random_document(rng, "d")
        bundle = random_bundle({"a"})
        slices = block_slices(SPAN_REALIS_BLOCKS)
        one_hot_blocks = ("pos", "governor_deprel", "governor_pos")
        for sent in doc.sentences:
            for tok in sent.tokens:
                v = span_realis_features(tok, sent, bundle).values
                for name, s in slices.items():
                    if name in ("lemma_vector", "token_minus_lemma"):
                        continue
                    assert set(np.unique(v[s])) <= {0.0, 1.0}
                    if name in one_hot_blocks:
                        assert v[s].sum() <= 1

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_locality(self, seed):
        rng = np.random.default_rng(seed)
        doc = random_document(rng, "d", max_sentences=2)
        sents = [s for s in doc.sentences if len(s) >= 6]
        if not sents:
            return
        sent = sents[0]
        t = sent[int(rng.integers(1, len(sent) + 1))]
        linked = {m.index for m, _ in modifiers(t, sent)} | {t.head}
        far = [u for u in sent.tokens if abs(u.index - t.index) > 2 and u.index not in linked]
        if not far:
            return
        u = far[int(rng.integers(len(far)))]
        words = {tok.text for tok in sent.tokens} | {tok.lemma for tok in sent.tokens} | {"zz"}
        bundle = random_bundle(words, seed=1)
        changed = dataclasses.replace(u, text="zz", lemma="zz", pos="CC", ner="PERSON", deprel="dep")
        sent2 = Sentence(tuple(changed if tok.index == u.index else tok for tok in sent.tokens))
        np.testing.assert_array_equal(span_realis_features(t, sent, bundle).values,
                                      span_realis_features(t, sent2, bundle).values)


class TestType:
    def test_hand_assembled_vector(self, troops):
        sent, bundle = troops
        expected = np.zeros(852)
        expected[0:300] = bundle.embedding("attack")
        expected[300:600] = bundle.embedding("attacked")
        expected[600 + IN + NSUBJ] = 1
        expected[600 + IN + DOBJ] = 1
        expected[808 + ED] = 1
        expected[844 + DEFAULT_NER.index("LOCATION")] = 1
        got = type_features(sent[2], sent, bundle)
        assert got.kind == "type"
        np.testing.assert_array_equal(got.values, expected)

    def test_no_modifiers(self, troops):
        sent, bundle = troops
        v = type_features(sent[1], sent, bundle).values
        assert not v[600:808].any() and not v[844:852].any()

    def test_one_person_modifier(self):
        rows = [("John", "John", "NNP", "PERSON", 2, "nsubj"), ("left", "leave", "VBD", "O", 0, "root")]
        sent = make_sentence(rows)
        ner = type_features(sent[2], sent, random_bundle(set())).values[844:]
        assert ner.tolist() == [1, 0, 0, 0, 0, 0, 0, 0]

    def test_lowercase_ner_labels_accepted(self):
        rows = [("Oslo", "Oslo", "NNP", "location", 2, "nmod:in"), ("met", "meet", "VBD", "O", 0, "root")]
        sent = make_sentence(rows)
        assert type_features(sent[2], sent, random_bundle(set())).values[845] == 1


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dims_for_random_tokens(seed):
    rng = np.random.default_rng(seed)
    doc = random_document(rng, "d")
    bundle = random_bundle({"a", "b"})
    for sent in doc.sentences:
        for tok in sent.tokens:
            assert len(span_realis_features(tok, sent, bundle)) == 2468
            assert len(type_features(tok, sent, bundle)) == 852
        assert sentence_matrix(sent, bundle, "span_realis").shape == (len(sent), 2468)
        assert sentence_matrix(sent, bundle, "type").shape == (len(sent), 852)
