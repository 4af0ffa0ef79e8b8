"""Input validation helpers used by the estimators and drivers."""

import zlib

import numpy as np

from .exceptions import NumericError, RejectedInputError


def check_array(x, ndim=None, name="array", allow_empty=False):
    """Return ``x`` as a finite float64 array, raising on bad input."""
    arr = np.asarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise RejectedInputError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if not allow_empty and arr.size == 0:
        raise RejectedInputError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise RejectedInputError(f"{name} contains non-finite values")
    return arr


def check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")
    return arr


def check_sentences(sentences, require_tags=False, name="sentences", allow_empty=False):
    """Validate a list of :class:`~qselftrain.data.Sentence`."""
    sentences = list(sentences)
    if not sentences and not allow_empty:
        raise RejectedInputError(f"{name} is empty")
    for i, s in enumerate(sentences):
        if len(s.tokens) == 0:
            raise RejectedInputError(f"{name}[{i}] has no tokens")
        if require_tags and s.tags is None:
            raise RejectedInputError(f"{name}[{i}] has no gold tags")
    return sentences


def substream(seed, name):
    """Independent generator for a named random sub-stream of ``seed``.

    The child seed is ``seed XOR crc32(name)`` so every consumer of randomness
    (tagger init, replay sampling, ...) is isolated from the others.
    """
    return np.random.default_rng((int(seed) ^ zlib.crc32(name.encode())) & 0xFFFFFFFF)
