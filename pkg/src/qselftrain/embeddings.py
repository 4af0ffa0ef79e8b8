"""Pre-trained word embedding tables in whitespace-separated text format."""

from dataclasses import dataclass

import numpy as np

from .exceptions import ParseError, RejectedInputError


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    vocab: dict
    vectors: np.ndarray
    oov_vector: np.ndarray

    @property
    def dim(self):
        return self.vectors.shape[1]

    def __len__(self):
        return self.vectors.shape[0]

    def lookup(self, token):
        """Exact match, then lowercased match, then the OOV vector."""
        idx = self.vocab.get(token)
        if idx is None:
            idx = self.vocab.get(token.lower())
        if idx is None:
            return self.oov_vector
        return self.vectors[idx]

    def embed(self, tokens):
        """Stack lookups into an (n, dim) matrix."""
        if not tokens:
            return np.zeros((0, self.dim))
        return np.stack([self.lookup(t) for t in tokens])

    @classmethod
    def from_dict(cls, mapping, oov="mean"):
        tokens = list(mapping)
        if not tokens:
            raise RejectedInputError("empty embedding table")
        vectors = np.asarray([mapping[t] for t in tokens], dtype=np.float64)
        return cls._build(tokens, vectors, oov)

    @classmethod
    def _build(cls, tokens, vectors, oov):
        vocab = {}
        for i, tok in enumerate(tokens):
            vocab.setdefault(tok, i)
        if oov == "mean":
            oov_vec = vectors.mean(axis=0)
        elif oov == "zeros":
            oov_vec = np.zeros(vectors.shape[1])
        else:
            raise RejectedInputError(f"unknown oov mode {oov!r}")
        return cls(vocab, vectors, oov_vec)


def lookup(table, token):
    return table.lookup(token)


def _is_header(fields):
    return len(fields) == 2 and all(f.isdigit() for f in fields)


def load_embeddings(path, expected_dim=None, oov="mean"):
    """Read ``token v1 ... vd`` lines, with an optional ``V d`` header line.

    Duplicate tokens keep their first row. The OOV vector is the mean of all
    rows unless ``oov="zeros"``.
    """
    tokens, rows = [], []
    dim = expected_dim
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            fields = line.rstrip("\n").split()
            if not fields:
                continue
            if lineno == 1 and _is_header(fields):
                header_dim = int(fields[1])
                if dim is not None and header_dim != dim:
                    raise ParseError(f"header dim {header_dim} != expected {dim}", lineno, path)
                dim = header_dim
                continue
            values = fields[1:]
            if dim is None:
                dim = len(values)
            if len(values) != dim or dim == 0:
                raise ParseError(f"expected {dim} values, got {len(values)}", lineno, path)
            try:
                rows.append([float(v) for v in values])
            except ValueError as exc:
                raise ParseError(str(exc), lineno, path) from None
            tokens.append(fields[0])
    if not rows:
        raise RejectedInputError(f"no embeddings in {path}")
    return EmbeddingTable._build(tokens, np.asarray(rows, dtype=np.float64), oov)


def save_embeddings(table, path):
    inv = sorted(table.vocab.items(), key=lambda kv: kv[1])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(inv)} {table.dim}\n")
        for tok, idx in inv:
            fh.write(tok + " " + " ".join(repr(float(v)) for v in table.vectors[idx]) + "\n")
