"""Corpora: CoNLL column files, shuffled streams, and a synthetic NER corpus."""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ._validation import substream
from .embeddings import EmbeddingTable
from .exceptions import ParseError, RejectedInputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Sentence:
    tokens: tuple
    tags: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.tags is not None:
            object.__setattr__(self, "tags", tuple(self.tags))
            if len(self.tags) != len(self.tokens):
                raise RejectedInputError("tags and tokens differ in length")

    def __len__(self):
        return len(self.tokens)

    def with_tags(self, tags):
        return Sentence(self.tokens, tuple(tags))


@dataclass(frozen=True)
class TagSet:
    """Ordered label inventory; ``O`` (when present) is index 0."""

    labels: tuple
    scheme: str = "bio"

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(set(self.labels)) != len(self.labels):
            raise RejectedInputError("duplicate labels")
        if self.scheme == "bio":
            for lab in self.labels:
                if lab == "O":
                    continue
                prefix, _, etype = lab.partition("-")
                if prefix not in ("B", "I") or not etype:
                    raise RejectedInputError(f"label {lab!r} is not BIO")
                other = ("I-" if prefix == "B" else "B-") + etype
                if other not in self.labels:
                    raise RejectedInputError(f"label {lab!r} has no {other!r} partner")
            if "O" not in self.labels:
                raise RejectedInputError("bio tagset needs an O label")
        elif self.scheme != "plain":
            raise RejectedInputError(f"unknown scheme {self.scheme!r}")

    def __len__(self):
        return len(self.labels)

    def index(self, label):
        return self.labels.index(label)

    @property
    def entity_types(self):
        return sorted({lab[2:] for lab in self.labels if lab != "O"})

    @classmethod
    def from_tags(cls, tags, scheme="bio"):
        seen = set(tags)
        if scheme == "plain":
            return cls(tuple(sorted(seen)), "plain")
        types = sorted({t[2:] for t in seen if t != "O"})
        labels = ["O"]
        for etype in types:
            labels += [f"B-{etype}", f"I-{etype}"]
        return cls(tuple(labels), "bio")


@dataclass
class Corpus:
    sentences: list
    tagset: TagSet
    provenance: str = ""
    repairs: int = 0

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __getitem__(self, i):
        return self.sentences[i]


def repair_bio(tags):
    """Promote each I-X that cannot continue a span to B-X.

    Returns the repaired tag list and the number of changes.
    """
    out, fixes, prev = [], 0, "O"
    for tag in tags:
        if tag.startswith("I-") and prev[2:] != tag[2:]:
            tag = "B-" + tag[2:]
            fixes += 1
        out.append(tag)
        prev = tag
    return out, fixes


def is_valid_bio(tags):
    return repair_bio(tags)[1] == 0


def parse_conll(path, token_col=0, tag_col=-1, scheme="bio"):
    """Read a blank-line separated CoNLL column file.

    A file with a single column is read as unlabeled text (``tags=None``).
    ``-DOCSTART-`` lines are skipped. Under the BIO scheme, invalid ``I-X``
    tags are promoted to ``B-X``; the count is stored on ``Corpus.repairs``.
    """
    sentences, tokens, tags = [], [], []
    ncols = None
    repairs = 0

    def flush():
        nonlocal repairs
        if tokens and ncols == 1:
            sentences.append(Sentence(tuple(tokens)))
            tokens.clear()
            tags.clear()
        elif tokens:
            fixed = tags
            if scheme == "bio":
                fixed, n = repair_bio(tags)
                repairs += n
            sentences.append(Sentence(tuple(tokens), tuple(fixed)))
            tokens.clear()
            tags.clear()

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            fields = line.split()
            if not fields:
                flush()
                continue
            if fields[0] == "-DOCSTART-":
                flush()
                continue
            if ncols is None:
                ncols = len(fields)
            if len(fields) != ncols:
                raise ParseError(f"expected {ncols} columns, got {len(fields)}", lineno, path)
            try:
                tokens.append(fields[token_col])
                tags.append(fields[tag_col])
            except IndexError:
                raise ParseError("column index out of range", lineno, path) from None
    flush()
    if not sentences:
        raise RejectedInputError(f"no sentences in {path}")
    if repairs:
        logger.warning("%s: repaired %d BIO violations", path, repairs)
    if ncols == 1:
        return Corpus(sentences, None, str(path), 0)
    tagset = TagSet.from_tags((t for s in sentences for t in s.tags), scheme)
    return Corpus(sentences, tagset, str(path), repairs)


def write_conll(sentences, path):
    with open(path, "w", encoding="utf-8") as fh:
        for s in sentences:
            if s.tags is None:
                fh.writelines(f"{tok}\n" for tok in s.tokens)
            else:
                fh.writelines(f"{tok} {tag}\n" for tok, tag in zip(s.tokens, s.tags))
            fh.write("\n")


def stream(sentences, seed):
    """Iterate ``sentences`` in a seed-determined random order."""
    sentences = list(sentences)
    order = np.random.default_rng(seed).permutation(len(sentences))
    for i in order:
        yield sentences[i]


@dataclass
class SyntheticSpec:
    """Knobs for the synthetic entity-tagging corpus.

    Entity tokens of each type sit around a type-specific centre in embedding
    space, context tokens around another, and noise tokens (tagged ``O``)
    between the two. ``informative_fraction`` of the unlabeled split carries
    at least one entity span; the rest carry none.
    """

    entity_types: tuple = ("PER", "LOC", "ORG")
    type_weights: tuple = (0.5, 0.3, 0.2)
    entity_vocab: int = 150
    context_vocab: int = 300
    noise_vocab: int = 60
    min_len: int = 6
    max_len: int = 14
    entity_density: float = 0.2
    uninformative_density: float = 0.0
    noise_rate: float = 0.1
    max_span: int = 3
    informative_fraction: float = 0.5
    labeled_entity_fraction: float = 0.7
    n_train: int = 3000
    n_dev: int = 200
    n_test: int = 200
    n_unlabeled: int = 1000
    dim: int = 50
    separation: float = 1.0
    noise_scale: float = 2.0
    seed: int = 0

    def validate(self):
        for name in ("entity_density", "uninformative_density", "noise_rate",
                     "informative_fraction", "labeled_entity_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise RejectedInputError(f"{name} must lie in [0, 1]")
        for name in ("entity_vocab", "context_vocab", "n_train", "n_dev", "n_test",
                     "n_unlabeled", "dim", "min_len", "max_span"):
            if getattr(self, name) < 1:
                raise RejectedInputError(f"{name} must be >= 1")
        if self.max_len < self.min_len:
            raise RejectedInputError("max_len < min_len")
        if len(self.type_weights) != len(self.entity_types) or not self.entity_types:
            raise RejectedInputError("type_weights must match entity_types")
        if self.noise_rate > 0 and self.noise_vocab < 1:
            raise RejectedInputError("noise_rate > 0 needs noise_vocab >= 1")

    @classmethod
    def separable(cls, **overrides):
        """Low-noise variant in which entity and context tokens barely overlap;
        the initial tagger finds nearly every entity, so informativeness is
        readable from the selection state."""
        return cls(**{"noise_scale": 0.5, "n_unlabeled": 2500, **overrides})

    def digest(self):
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha1(blob).hexdigest()[:12]

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        for key in ("entity_types", "type_weights"):
            if key in raw:
                raw[key] = tuple(raw[key])
        try:
            return cls(**raw)
        except TypeError as exc:
            raise RejectedInputError(str(exc)) from None

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)


@dataclass
class SyntheticData:
    train: Corpus
    dev: Corpus
    test: Corpus
    unlabeled: Corpus
    informative: list = field(default_factory=list)
    embeddings: EmbeddingTable = None


def _synthetic_sentence(spec, rng, density, vocab):
    n = int(rng.integers(spec.min_len, spec.max_len + 1))
    weights = np.asarray(spec.type_weights, dtype=np.float64)
    weights = weights / weights.sum()
    tokens, tags = [], []
    while len(tokens) < n:
        if density > 0 and rng.random() < density:
            etype = spec.entity_types[rng.choice(len(weights), p=weights)]
            span = int(rng.integers(1, spec.max_span + 1))
            words = vocab[etype]
            for j in range(span):
                tokens.append(words[rng.integers(len(words))])
                tags.append(("B-" if j == 0 else "I-") + etype)
            # entities never touch, so every span has a context token after it
            tokens.append(vocab["O"][rng.integers(len(vocab["O"]))])
            tags.append("O")
        elif vocab["noise"] and rng.random() < spec.noise_rate:
            tokens.append(vocab["noise"][rng.integers(len(vocab["noise"]))])
            tags.append("O")
        else:
            tokens.append(vocab["O"][rng.integers(len(vocab["O"]))])
            tags.append("O")
    return Sentence(tuple(tokens), tuple(tags))


def _split(spec, rng, size, entity_fraction, vocab):
    """Draw ``size`` sentences; ``entity_fraction`` of them carry entities."""
    sentences, flags = [], []
    for _ in range(size):
        informative = rng.random() < entity_fraction
        density = spec.entity_density if informative else spec.uninformative_density
        while True:
            s = _synthetic_sentence(spec, rng, density, vocab)
            has_ent = any(t != "O" for t in s.tags)
            if not informative or has_ent or density == 0:
                break
        sentences.append(s)
        flags.append(has_ent)
    return sentences, flags


def _vocab_and_table(spec):
    erng = substream(spec.seed, "synthetic-embeddings")
    vocab = {"O": [f"ctx{i}" for i in range(spec.context_vocab)],
             "noise": [f"nz{i}" for i in range(spec.noise_vocab)] if spec.noise_rate > 0 else []}
    for etype in spec.entity_types:
        vocab[etype] = [f"{etype.lower()}{i}" for i in range(spec.entity_vocab)]

    # per-coordinate scale 1/sqrt(dim) keeps vectors near unit norm
    scale = 1.0 / np.sqrt(spec.dim)
    centres = erng.standard_normal((len(spec.entity_types) + 1, spec.dim))
    centres *= spec.separation * scale
    vectors = {}
    for k, etype in enumerate(("O",) + tuple(spec.entity_types)):
        for tok in vocab[etype]:
            vectors[tok] = centres[k] + spec.noise_scale * scale * erng.standard_normal(spec.dim)
    midpoint = centres.mean(axis=0)
    for tok in vocab["noise"]:
        vectors[tok] = midpoint + spec.noise_scale * scale * erng.standard_normal(spec.dim)
    return vocab, EmbeddingTable.from_dict(vectors)


def _world(spec, rng, vocab, table):
    frac = spec.labeled_entity_fraction
    train, _ = _split(spec, rng, spec.n_train, frac, vocab)
    dev, _ = _split(spec, rng, spec.n_dev, frac, vocab)
    test, _ = _split(spec, rng, spec.n_test, frac, vocab)
    unlabeled, informative = _split(spec, rng, spec.n_unlabeled, spec.informative_fraction, vocab)

    tagset = TagSet.from_tags([f"B-{t}" for t in spec.entity_types] + ["O"]
                              + [f"I-{t}" for t in spec.entity_types])
    prov = f"synthetic:{spec.digest()}"
    return SyntheticData(
        Corpus(train, tagset, prov + ":train"),
        Corpus(dev, tagset, prov + ":dev"),
        Corpus(test, tagset, prov + ":test"),
        Corpus(unlabeled, tagset, prov + ":unlabeled"),
        informative,
        table,
    )


def gen_synthetic(spec=None):
    """Build train/dev/test/unlabeled corpora plus their embedding table.

    The unlabeled split keeps its gold tags (for analysis only); the
    ``informative`` list flags which unlabeled sentences contain entities.
    """
    spec = spec or SyntheticSpec()
    spec.validate()
    vocab, table = _vocab_and_table(spec)
    return _world(spec, substream(spec.seed, "synthetic-corpus"), vocab, table)


def gen_shifted_synthetic(spec=None, shift=0.3):
    """Source and target worlds whose token distributions differ.

    With ``k = round(shift * size)`` for each entity and context vocabulary,
    the source draws from all but the last ``k`` words and the target from all
    but the first ``k``, so ``k`` words of each list are private to each side.
    Both worlds share one embedding table; ``shift = 0`` gives the source
    world of ``gen_synthetic(spec)``. Returns ``(source, target)``.
    """
    spec = spec or SyntheticSpec()
    spec.validate()
    if not 0.0 <= shift < 0.5:
        raise RejectedInputError("shift must lie in [0, 0.5)")
    vocab, table = _vocab_and_table(spec)
    source, target = {"noise": vocab["noise"]}, {"noise": vocab["noise"]}
    for key in ("O",) + tuple(spec.entity_types):
        words = vocab[key]
        k = round(shift * len(words))
        source[key], target[key] = words[: len(words) - k], words[k:]
    return (_world(spec, substream(spec.seed, "synthetic-corpus"), source, table),
            _world(spec, substream(spec.seed, "synthetic-target"), target, table))
