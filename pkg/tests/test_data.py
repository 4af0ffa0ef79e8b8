import numpy as np
import pytest

from qselftrain.crf import CRFTagger
from qselftrain.data import (
    Sentence, SyntheticSpec, TagSet, gen_shifted_synthetic, gen_synthetic, is_valid_bio,
    parse_conll, repair_bio, stream, write_conll,
)
from qselftrain.exceptions import ParseError, RejectedInputError


def write(tmp_path, text):
    path = tmp_path / "c.conll"
    path.write_text(text, encoding="utf-8")
    return path


def test_two_sentences(tmp_path):
    corpus = parse_conll(write(tmp_path, "EU B-ORG\nrejects O\n\nPeter B-PER\nBlackburn I-PER\n"))
    assert len(corpus) == 2
    assert corpus[0].tokens == ("EU", "rejects") and corpus[0].tags == ("B-ORG", "O")
    assert corpus[1].tags == ("B-PER", "I-PER")


def test_docstart_skipped(tmp_path):
    corpus = parse_conll(write(tmp_path, "-DOCSTART- -X- O O\n\nEU NNP B-NP B-ORG\n"))
    assert len(corpus) == 1 and corpus[0].tokens == ("EU",)


def test_bio_repair(tmp_path):
    corpus = parse_conll(write(tmp_path, "a O\nb I-LOC\n"))
    assert corpus[0].tags == ("O", "B-LOC") and corpus.repairs == 1


def test_repair_rule():
    assert repair_bio(["I-PER", "I-LOC", "I-LOC"]) == (["B-PER", "B-LOC", "I-LOC"], 2)
    assert is_valid_bio(["B-PER", "I-PER", "O"])
    assert not is_valid_bio(["O", "I-PER"])


def test_ragged_columns(tmp_path):
    with pytest.raises(ParseError) as err:
        parse_conll(write(tmp_path, "a x O\nb O\n"))
    assert err.value.lineno == 2


def test_no_sentences(tmp_path):
    with pytest.raises(RejectedInputError):
        parse_conll(write(tmp_path, "\n\n"))


def test_single_column_is_unlabeled(tmp_path):
    corpus = parse_conll(write(tmp_path, "a\nb\n\nc\n"))
    assert [s.tags for s in corpus] == [None, None]
    assert corpus[0].tokens == ("a", "b")


def test_write_roundtrip(tmp_path):
    sents = [Sentence(("a", "b"), ("B-X", "O")), Sentence(("c",))]
    write_conll(sents[:1], tmp_path / "l.conll")
    assert list(parse_conll(tmp_path / "l.conll")) == sents[:1]
    write_conll(sents[1:], tmp_path / "u.conll")
    assert list(parse_conll(tmp_path / "u.conll")) == sents[1:]


def test_tagset():
    ts = TagSet.from_tags(["B-PER", "O", "I-LOC"])
    assert ts.labels[0] == "O" and set(ts.entity_types) == {"LOC", "PER"}
    assert ts.index("B-PER") == ts.labels.index("B-PER")
    with pytest.raises(RejectedInputError):
        TagSet(("O", "X-PER"))


def test_sentence_length_mismatch():
    with pytest.raises(RejectedInputError):
        Sentence(("a", "b"), ("O",))


class TestStream:
    def test_same_seed_same_order(self):
        items = list(range(30))
        assert list(stream(items, 5)) == list(stream(items, 5))

    def test_single(self):
        assert list(stream(["x"], 0)) == ["x"]

    def test_is_permutation(self):
        assert sorted(stream(range(50), 3)) == list(range(50))

    def test_first_element_uniform(self):
        # Monte Carlo: over 10^4 seeds the first element of a 100-permutation is uniform
        items = list(range(100))
        counts = np.bincount([next(stream(items, s)) for s in range(10_000)], minlength=100)
        assert np.max(np.abs(counts / 10_000 - 0.01)) < 0.01


class TestSynthetic:
    def test_deterministic(self):
        a, b = gen_synthetic(SyntheticSpec(n_train=20, n_unlabeled=30)), \
            gen_synthetic(SyntheticSpec(n_train=20, n_unlabeled=30))
        assert list(a.train) == list(b.train) and list(a.unlabeled) == list(b.unlabeled)
        assert np.array_equal(a.embeddings.vectors, b.embeddings.vectors)

    def test_byte_identical_files(self, tmp_path):
        for name in ("a", "b"):
            write_conll(gen_synthetic(SyntheticSpec(n_train=25)).train, tmp_path / f"{name}.conll")
        assert (tmp_path / "a.conll").read_bytes() == (tmp_path / "b.conll").read_bytes()

    def test_zero_density_all_outside(self):
        spec = SyntheticSpec(entity_density=0.0, uninformative_density=0.0, n_train=20,
                             n_dev=10, n_test=10, n_unlabeled=10)
        d = gen_synthetic(spec)
        assert all(t == "O" for part in (d.train, d.dev, d.unlabeled) for s in part for t in s.tags)
        assert not any(d.informative)

    def test_informative_flags_match_gold(self):
        d = gen_synthetic(SyntheticSpec(n_unlabeled=200))
        assert d.informative == [any(t != "O" for t in s.tags) for s in d.unlabeled]
        assert 0.35 < np.mean(d.informative) < 0.65

    def test_valid_bio(self):
        d = gen_synthetic(SyntheticSpec(n_train=100))
        assert all(is_valid_bio(s.tags) for s in d.train)

    def test_every_token_embedded(self):
        d = gen_synthetic(SyntheticSpec(n_train=50))
        assert all(t in d.embeddings.vocab for s in d.train for t in s.tokens)

    def test_invalid_spec(self):
        with pytest.raises(RejectedInputError):
            gen_synthetic(SyntheticSpec(noise_rate=1.5))
        with pytest.raises(RejectedInputError):
            gen_synthetic(SyntheticSpec(min_len=5, max_len=3))

    def test_json_roundtrip(self, tmp_path):
        spec = SyntheticSpec(n_train=7, separation=0.5)
        spec.to_json(tmp_path / "s.json")
        assert SyntheticSpec.from_json(tmp_path / "s.json") == spec
        assert spec.digest() == SyntheticSpec.from_json(tmp_path / "s.json").digest()

    def test_default_world_leaves_headroom(self):
        d = gen_synthetic(SyntheticSpec())
        X_dev, y_dev = [s.tokens for s in d.dev], [s.tags for s in d.dev]

        def dev_f1(sentences):
            tagger = CRFTagger(d.embeddings).fit([s.tokens for s in sentences],
                                                 [s.tags for s in sentences])
            return tagger.score(X_dev, y_dev)

        assert dev_f1(d.train[:100]) < 0.85
        assert dev_f1(d.train) >= 0.95


def words(corpus):
    return {t for s in corpus for t in s.tokens}


class TestShifted:
    SPEC = SyntheticSpec(n_train=200, n_dev=100, n_test=100, n_unlabeled=300)

    def test_zero_shift_source_is_the_plain_world(self):
        source, _ = gen_shifted_synthetic(self.SPEC, 0.0)
        plain = gen_synthetic(self.SPEC)
        assert list(source.train) == list(plain.train) and list(source.dev) == list(plain.dev)
        assert np.array_equal(source.embeddings.vectors, plain.embeddings.vectors)

    def test_private_vocabulary(self):
        source, target = gen_shifted_synthetic(self.SPEC, 0.4)
        k = round(0.4 * self.SPEC.entity_vocab)
        src, tgt = words(source.train), words(target.unlabeled)
        assert not any(f"per{i}" in tgt for i in range(k))
        assert not any(f"per{i}" in src for i in range(self.SPEC.entity_vocab - k,
                                                       self.SPEC.entity_vocab))
        assert src & tgt  # the middle of each vocabulary is shared

    def test_shared_embeddings(self):
        source, target = gen_shifted_synthetic(self.SPEC, 0.3)
        assert source.embeddings is target.embeddings
        assert all(t in source.embeddings.vocab for s in target.unlabeled for t in s.tokens)

    def test_target_flags_and_determinism(self):
        a = gen_shifted_synthetic(self.SPEC, 0.3)[1]
        b = gen_shifted_synthetic(self.SPEC, 0.3)[1]
        assert list(a.unlabeled) == list(b.unlabeled)
        assert a.informative == [any(t != "O" for t in s.tags) for s in a.unlabeled]

    @pytest.mark.parametrize("shift", [-0.1, 0.5, 1.0])
    def test_bad_shift(self, shift):
        with pytest.raises(RejectedInputError):
            gen_shifted_synthetic(self.SPEC, shift)
