"""Shared builders for tests that need selection states without a tagger."""

import numpy as np

from qselftrain.state import SelectionState, encode_content, encode_marginals


def random_state(net, rng, n=None):
    n = n if n is not None else int(rng.integers(1, 9))
    embedded = rng.normal(size=(n, net.dim))
    marg = rng.dirichlet(np.ones(net.hp_width), size=n)
    return SelectionState(
        h_s=encode_content(embedded, net.content_banks()),
        h_c=float(rng.uniform(0.2, 1.0)),
        h_p=encode_marginals(marg, net.marginal_bank()),
        h_t=rng.normal(size=net.n_labels),
        embedded=embedded,
        marginal_input=marg,
    )
