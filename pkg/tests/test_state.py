import numpy as np
import pytest

from qselftrain.crf import CRFTagger
from qselftrain.data import Sentence, TagSet
from qselftrain.dqn import QNetwork, q_forward
from qselftrain.embeddings import EmbeddingTable
from qselftrain.exceptions import RejectedInputError
from qselftrain.state import build_state, encode_content, marginal_input


@pytest.fixture
def emb():
    rng = np.random.default_rng(0)
    return EmbeddingTable.from_dict({w: rng.normal(size=4) for w in "abcdef"})


def zero_tagger(emb, labels=("O", "X")):
    """A fitted-looking tagger whose parameters are all zero."""
    tagger = CRFTagger(emb, window=3)
    tagger.tagset_ = TagSet(labels, "plain")
    n = len(labels)
    tagger.coef_ = np.zeros((n, 3 * emb.dim))
    tagger.intercept_ = np.zeros(n)
    tagger.transitions_ = np.zeros((n, n))
    tagger.start_ = np.zeros(n)
    tagger.stop_ = np.zeros(n)
    return tagger


def test_zero_tagger_binary_confidence(emb):
    net = QNetwork(4, 2, seed=1)
    state, tags = build_state(Sentence(("a", "c", "d")), zero_tagger(emb), emb, net)
    assert abs(state.h_c - 0.5) < 1e-12
    assert tags == ["O", "O", "O"]


def test_component_sizes(emb):
    net = QNetwork(4, 2, seed=1)
    state, _ = build_state(Sentence(("a", "b", "c", "d")), zero_tagger(emb), emb, net)
    state.check(384, 20, 2)
    assert state.vector().shape == (384 + 1 + 20 + 2,)


def test_bit_identical(emb):
    net = QNetwork(4, 2, seed=1)
    tagger = zero_tagger(emb)
    tagger.coef_ = np.random.default_rng(2).normal(size=tagger.coef_.shape)
    a, _ = build_state(Sentence(("a", "b", "e")), tagger, emb, net)
    b, _ = build_state(Sentence(("a", "b", "e")), tagger, emb, net)
    assert a.vector().tobytes() == b.vector().tobytes()


def test_deferred_encoding_filled_by_q_forward(emb):
    rng = np.random.default_rng(3)
    net = QNetwork(4, 2, seed=1)
    for name in ("conv3_b", "conv4_b", "conv5_b", "marg_b"):
        net.params[name] = rng.normal(size=net.params[name].shape)
    tagger = zero_tagger(emb)
    tagger.coef_ = rng.normal(size=tagger.coef_.shape)
    sentence = Sentence(("a", "b", "e", "f", "c"))
    eager, _ = build_state(sentence, tagger, emb, net)
    lazy, _ = build_state(sentence, tagger, emb, net, encode=False)
    assert lazy.h_s is None and lazy.h_p is None
    q = q_forward(net, lazy)
    assert np.allclose(lazy.vector(), eager.vector(), atol=1e-12)
    assert np.array_equal(q, q_forward(net, eager))


def test_single_token_sentence(emb):
    net = QNetwork(4, 2, seed=1)
    state, _ = build_state(Sentence(("f",)), zero_tagger(emb), emb, net)
    assert np.all(np.isfinite(state.vector()))


def test_predicted_mode_uses_viterbi_column(emb):
    net = QNetwork(4, 2, hp_mode="predicted", seed=1)
    tagger = zero_tagger(emb)
    tagger.intercept_ = np.array([0.0, 1.0])
    state, tags = build_state(Sentence(("a", "b")), tagger, emb, net)
    assert tags == ["X", "X"]
    marg = tagger.analyse(("a", "b"))[2]
    assert np.allclose(state.marginal_input[:, 0], marg[:, 1])
    assert state.marginal_input.shape == (2, 1)


def test_hidden_features_match_tagger(emb):
    net = QNetwork(4, 2, seed=1)
    tagger = zero_tagger(emb)
    tagger.coef_ = np.random.default_rng(3).normal(size=tagger.coef_.shape)
    state, _ = build_state(Sentence(("a", "d")), tagger, emb, net)
    assert np.allclose(state.h_t, tagger.transform([("a", "d")])[0])


def test_content_ignores_encoder_of_other_sentence(emb):
    net = QNetwork(4, 2, seed=1)
    x = emb.embed(["a", "b", "c"])
    assert np.array_equal(encode_content(x, net.content_banks()),
                          encode_content(x.copy(), net.content_banks()))


def test_check_rejects_bad_confidence(emb):
    net = QNetwork(4, 2, seed=1)
    state, _ = build_state(Sentence(("a",)), zero_tagger(emb), emb, net)
    state.h_c = 0.0
    with pytest.raises(RejectedInputError):
        state.check()


def test_unknown_hp_mode():
    with pytest.raises(RejectedInputError):
        marginal_input(np.ones((2, 2)), [0, 1], "everything")
