import numpy as np
import pytest

from evnugget import nn, synthetic
from evnugget.corpus import Document, Sentence, Token, vocabulary
from evnugget.resources import EMBEDDING_DIM, ResourceBundle


def make_sentence(rows, start=0):
    """Tokens from ``(text, lemma, pos, ner, head, deprel)`` rows, single-space offsets."""
    tokens, offset = [], start
    for i, (text, lemma, pos, ner, head, rel) in enumerate(rows, start=1):
        tokens.append(Token(i, text, lemma, pos, ner, offset, offset + len(text), head, rel))
        offset += len(text) + 1
    return Sentence(tuple(tokens))


def make_document(doc_id, sentence_rows, genre="newswire"):
    sents, offset = [], 0
    for rows in sentence_rows:
        sent = make_sentence(rows, offset)
        sents.append(sent)
        offset = sent.tokens[-1].char_end + 1
    return Document(doc_id, genre, tuple(sents))


def random_bundle(words, seed=0, **vocabs):
    rng = np.random.default_rng(seed)
    return ResourceBundle.from_embeddings({w: rng.normal(size=EMBEDDING_DIM) for w in sorted(words)}, **vocabs)


def constant_net(n_in, probs):
    """Single softmax layer with zero weights whose output is ``probs`` for every input."""
    probs = np.asarray(probs, dtype=np.float64)
    bias = np.full(len(probs), -1000.0)
    bias[probs > 0] = np.log(probs[probs > 0])
    cfg = nn.NetConfig((n_in, len(probs)), (0.0, 0.0), ("softmax",))
    return nn.DenseNet([np.zeros((len(probs), n_in))], [bias], cfg)


@pytest.fixture(scope="session")
def corpus10():
    return synthetic.generate_corpus(10, seed=0)


@pytest.fixture(scope="session")
def bundle10(corpus10):
    docs = corpus10[0]
    return ResourceBundle.from_embeddings(synthetic.generate_embeddings(vocabulary(docs), 0))


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number, title, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {title}" + (f" ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
