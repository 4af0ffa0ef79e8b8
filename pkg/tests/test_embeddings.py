import numpy as np
import pytest

from qselftrain.embeddings import EmbeddingTable, load_embeddings, lookup, save_embeddings
from qselftrain.exceptions import ParseError, RejectedInputError


def write(tmp_path, text, name="emb.txt"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_two_lines_dim_three(tmp_path):
    table = load_embeddings(write(tmp_path, "a 1 2 3\nb 4 5 6\n"))
    assert len(table) == 2 and table.dim == 3


def test_header_is_optional(tmp_path):
    plain = load_embeddings(write(tmp_path, "a 1 2 3\nb 4 5 6\n", "a.txt"))
    headed = load_embeddings(write(tmp_path, "2 3\na 1 2 3\nb 4 5 6\n", "b.txt"))
    assert plain.vocab == headed.vocab
    assert np.array_equal(plain.vectors, headed.vectors)


def test_oov_is_mean():
    table = EmbeddingTable.from_dict({"x": [1.0, 1.0], "y": [3.0, 3.0]})
    assert table.oov_vector.tolist() == [2.0, 2.0]


def test_lookup_order():
    table = EmbeddingTable.from_dict({"paris": [1.0, 0.0], "Rome": [0.0, 1.0]})
    assert lookup(table, "Rome").tolist() == [0.0, 1.0]
    assert lookup(table, "Paris").tolist() == [1.0, 0.0]
    assert lookup(table, "rome").tolist() == table.oov_vector.tolist()
    assert lookup(table, "Berlin").tolist() == table.oov_vector.tolist()


def test_embed_shape():
    table = EmbeddingTable.from_dict({"a": [1.0, 2.0]})
    assert table.embed(["a", "zzz", "a"]).shape == (3, 2)


def test_ragged_row_reports_line(tmp_path):
    with pytest.raises(ParseError) as err:
        load_embeddings(write(tmp_path, "a 1 2\nb 1 2 3\n"))
    assert err.value.lineno == 2


def test_expected_dim_mismatch(tmp_path):
    with pytest.raises(ParseError):
        load_embeddings(write(tmp_path, "a 1 2\n"), expected_dim=3)


def test_non_numeric(tmp_path):
    with pytest.raises(ParseError):
        load_embeddings(write(tmp_path, "a 1 x\n"))


def test_empty_file(tmp_path):
    with pytest.raises(RejectedInputError):
        load_embeddings(write(tmp_path, ""))


def test_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_embeddings(tmp_path / "nope.txt")


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    table = EmbeddingTable.from_dict({f"w{i}": rng.normal(size=4) for i in range(5)})
    save_embeddings(table, tmp_path / "out.txt")
    again = load_embeddings(tmp_path / "out.txt")
    assert again.vocab == table.vocab
    assert np.array_equal(again.vectors, table.vectors)


def test_duplicate_token_keeps_first():
    table = EmbeddingTable._build(["a", "a"], np.array([[1.0], [2.0]]), "mean")
    assert table.lookup("a").tolist() == [1.0]
