"""Selection state of one candidate sentence.

The state concatenates a content vector from max-pooled convolutions over the
sentence's word embeddings, the tagger's confidence, a mean-pooled
convolution over its token marginals, and the tagger's hidden features.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import RejectedInputError
from .nn import conv1d_forward, pool

HP_MODES = ("full", "predicted")


@dataclass
class SelectionState:
    """Encoded candidate plus the raw inputs needed to re-encode it.

    ``embedded`` (n, dim) and ``marginal_input`` (n, L or 1) are kept because
    the encoder filters keep training after the state is stored in replay.
    """

    h_s: np.ndarray
    h_c: float
    h_p: np.ndarray
    h_t: np.ndarray
    embedded: np.ndarray
    marginal_input: np.ndarray

    def vector(self):
        return np.concatenate([self.h_s, [self.h_c], self.h_p, self.h_t])

    def check(self, content_size=384, marginal_size=20, n_labels=None):
        if self.h_s.shape != (content_size,) or self.h_p.shape != (marginal_size,):
            raise RejectedInputError("state component has the wrong length")
        if n_labels is not None and self.h_t.shape != (n_labels,):
            raise RejectedInputError("h_t length differs from the tag count")
        if not 0.0 < self.h_c <= 1.0:
            raise RejectedInputError(f"confidence {self.h_c} outside (0, 1]")
        if not np.all(np.isfinite(self.vector())):
            raise RejectedInputError("state has non-finite entries")
        return self


def encode_content(embedded, banks):
    """Concatenate max-pooled ReLU convolutions, one block per filter bank."""
    return np.concatenate([pool(conv1d_forward(embedded, bank), "max_over_positions")
                           for bank in banks])


def encode_marginals(marg, bank):
    """Mean-pooled ReLU convolution over the (n, L) marginal matrix."""
    marg = np.asarray(marg, dtype=np.float64)
    if marg.ndim != 2 or marg.shape[1] != bank.dim:
        raise RejectedInputError(
            f"marginal width {marg.shape[-1]} != filter bank width {bank.dim}")
    return pool(conv1d_forward(marg, bank), "mean_over_positions")


def marginal_input(marg, tags_idx, hp_mode="full"):
    """Matrix fed to the marginal encoder under ``hp_mode``.

    ``full`` passes every label's marginal; ``predicted`` keeps only the
    marginal of each token's Viterbi label, as an (n, 1) column.
    """
    if hp_mode == "full":
        return marg
    if hp_mode == "predicted":
        return marg[np.arange(len(tags_idx)), tags_idx][:, None]
    raise RejectedInputError(f"unknown hp_mode {hp_mode!r}")


def build_state(sentence, tagger, emb, net, encode=True):
    """Assemble the state of ``sentence`` under ``tagger`` and ``net``'s encoders.

    Returns ``(state, predicted_tags)`` so callers that accept the sentence do
    not decode it twice. With ``encode=False`` ``h_s`` and ``h_p`` are left as
    None for ``q_forward`` to fill from its own forward pass.
    """
    tokens = sentence.tokens if hasattr(sentence, "tokens") else tuple(sentence)
    tags, conf, marg, hidden = tagger.analyse(tokens)
    index = {lab: i for i, lab in enumerate(tagger.tagset_.labels)}
    m_in = marginal_input(marg, [index[t] for t in tags], net.hp_mode)
    embedded = emb.embed(tokens)
    state = SelectionState(
        h_s=encode_content(embedded, net.content_banks()) if encode else None,
        h_c=conf,
        h_p=encode_marginals(m_in, net.marginal_bank()) if encode else None,
        h_t=hidden,
        embedded=embedded,
        marginal_input=m_in,
    )
    return state, tags
