"""Linear-chain CRF tagger over window-concatenated word embeddings.

The lattice algorithms work on padded batches: ``unary`` has shape
(batch, max_len, L) and ``mask`` marks real positions. Single-lattice helpers
(:func:`log_partition`, :func:`viterbi`, :func:`marginals`) wrap them.
Transition entry ``(i, j)`` scores tag ``j`` following tag ``i``.
"""

import copy
import json
import struct
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import substream
from .data import TagSet
from .exceptions import NumericError, RejectedInputError
from .metrics import micro_f1
from .nn import DenseLayer, window_matrix

MAGIC = b"CRFTAG1\n"


@dataclass
class Lattice:
    unary: np.ndarray
    transitions: np.ndarray
    start: np.ndarray
    stop: np.ndarray

    def __post_init__(self):
        self.unary = np.asarray(self.unary, dtype=np.float64)
        n_labels = self.unary.shape[1]
        if self.unary.ndim != 2 or self.unary.shape[0] < 1:
            raise RejectedInputError("unary must be (n >= 1, L)")
        if np.shape(self.transitions) != (n_labels, n_labels):
            raise RejectedInputError("transitions must be L x L")
        if np.shape(self.start) != (n_labels,) or np.shape(self.stop) != (n_labels,):
            raise RejectedInputError("start/stop must have length L")

    def batch(self):
        return self.unary[None], np.ones((1, self.unary.shape[0]), dtype=bool)


def _check_scores(*arrays):
    if not all(np.all(np.isfinite(a)) for a in arrays):
        raise NumericError("non-finite lattice scores")


def _lse(x, axis):
    m = x.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(x - m).sum(axis=axis)) + np.squeeze(m, axis=axis)


# Below this score spread every term of the shifted matrix-product recursion is
# at least exp(-_FAST_SPREAD), far above the float64 underflow point.
_FAST_SPREAD = 600.0


def _spread(x, axis=None):
    return float(np.max(np.ptp(x, axis=axis))) if x.size else 0.0


def _moderate(unary, transitions, start, stop):
    bound = (_spread(unary, axis=2) + 2 * _spread(transitions) + _spread(start)
             + _spread(stop))
    return bound < _FAST_SPREAD


def _log_tables(unary, mask, transitions, start, stop, moderate=None):
    """Forward and backward recursions in log space.

    Padded positions repeat the last real forward vector and carry ``stop`` as
    their backward vector, so ``log_alpha[:, -1]`` and ``log_beta[:, len-1]``
    are the quantities closing each sentence. Returns
    ``(log_alpha, log_beta, log_z)``.

    When the scores are moderate the log-sum-exp over neighbours is taken as
    a matrix product of shifted exponentials; otherwise it is taken elementwise.
    """
    _check_scores(unary, transitions, start, stop)
    n_batch, n_pos, n_labels = unary.shape
    if moderate is None:
        moderate = _moderate(unary, transitions, start, stop)
    if moderate:
        t_max = transitions.max()
        exp_t = np.exp(transitions - t_max)

        def forward_step(prev):
            m = prev.max(axis=1, keepdims=True)
            return np.log(np.exp(prev - m) @ exp_t) + m + t_max

        def backward_step(nxt):
            m = nxt.max(axis=1, keepdims=True)
            return np.log(np.exp(nxt - m) @ exp_t.T) + m + t_max
    else:
        def forward_step(prev):
            return _lse(prev[:, :, None] + transitions, axis=1)

        def backward_step(nxt):
            return _lse(transitions + nxt[:, None, :], axis=2)

    log_alpha = np.empty_like(unary)
    log_alpha[:, 0] = start + unary[:, 0]
    for t in range(1, n_pos):
        nxt = forward_step(log_alpha[:, t - 1]) + unary[:, t]
        log_alpha[:, t] = np.where(mask[:, t, None], nxt, log_alpha[:, t - 1])
    log_beta = np.empty_like(unary)
    log_beta[:, n_pos - 1] = stop
    for t in range(n_pos - 2, -1, -1):
        prev = backward_step(unary[:, t + 1] + log_beta[:, t + 1])
        log_beta[:, t] = np.where(mask[:, t + 1, None], prev, stop)
    log_z = _lse(log_alpha[:, -1] + stop, axis=1)
    return log_alpha, log_beta, log_z


def _posteriors(log_alpha, log_beta, log_z, mask):
    logp = np.where(mask[:, :, None], log_alpha + log_beta - log_z[:, None, None], -np.inf)
    return np.exp(logp)


def forward_batch(unary, mask, transitions, start, stop):
    """Log forward table (B, N, L) and log partition (B,)."""
    log_alpha, _, log_z = _log_tables(unary, mask, transitions, start, stop)
    return log_alpha, log_z


def marginals_batch(unary, mask, transitions, start, stop):
    """Per-position posteriors (B, N, L), zero at padded positions, and log Z."""
    log_alpha, log_beta, log_z = _log_tables(unary, mask, transitions, start, stop)
    return _posteriors(log_alpha, log_beta, log_z, mask), log_z


def viterbi_batch(unary, mask, transitions, start, stop):
    """Best paths (list of int arrays) and their scores (B,).

    Ties go to the lowest tag index, both at the final position and at every
    backpointer.
    """
    n_batch, n_pos, n_labels = unary.shape
    lengths = mask.sum(axis=1)
    back = np.zeros((n_batch, n_pos, n_labels), dtype=np.int64)
    delta = start + unary[:, 0]
    ident = np.broadcast_to(np.arange(n_labels), (n_batch, n_labels))
    for t in range(1, n_pos):
        cand = delta[:, :, None] + transitions
        best = np.argmax(cand, axis=1)
        new = np.take_along_axis(cand, best[:, None, :], axis=1)[:, 0] + unary[:, t]
        live = mask[:, t, None]
        delta = np.where(live, new, delta)
        back[:, t] = np.where(live, best, ident)
    final = delta + stop
    last = np.argmax(final, axis=1)
    scores = final[np.arange(n_batch), last]
    paths = np.zeros((n_batch, n_pos), dtype=np.int64)
    paths[:, n_pos - 1] = last
    for t in range(n_pos - 1, 0, -1):
        paths[:, t - 1] = back[np.arange(n_batch), t, paths[:, t]]
    # padded positions carry the last real tag through identity pointers,
    # so the real prefix ends at paths[:, n-1]
    return [paths[b, : lengths[b]] for b in range(n_batch)], scores


def nll_grad_batch(unary, mask, gold, transitions, start, stop):
    """Summed negative log-likelihood of ``gold`` and its gradients.

    Returns ``(nll, d_unary, d_transitions, d_start, d_stop)``; ``gold`` is an
    int array (B, N) whose padded entries are ignored.
    """
    n_batch, n_pos, n_labels = unary.shape
    moderate = _moderate(unary, transitions, start, stop)
    log_alpha, log_beta, log_z = _log_tables(unary, mask, transitions, start, stop, moderate)
    marg = _posteriors(log_alpha, log_beta, log_z, mask)
    rows = np.arange(n_batch)
    lengths = mask.sum(axis=1)
    last_tag = gold[rows, lengths - 1]
    onehot = np.zeros_like(unary)
    np.put_along_axis(onehot, gold[:, :, None], 1.0, axis=2)
    onehot *= mask[:, :, None]

    gold_score = np.sum(onehot * unary) + start[gold[:, 0]].sum() + stop[last_tag].sum()
    d_trans = np.zeros_like(transitions)
    if n_pos > 1:
        pair_mask = mask[:, 1:]
        prev, nxt = gold[:, :-1][pair_mask], gold[:, 1:][pair_mask]
        gold_score += transitions[prev, nxt].sum()
        np.add.at(d_trans, (prev, nxt), -1.0)
        # expected transition counts: xi_t(i, j) = alpha_{t-1}(i) T(i, j) u_t(j) beta_t(j) / Z
        left = log_alpha[:, :-1]
        right = unary[:, 1:] + log_beta[:, 1:] - log_z[:, None, None]
        if moderate:
            # factor each term as exp(left - m) exp(T - t_max) exp(right + m + t_max)
            m = left.max(axis=2, keepdims=True)
            t_max = transitions.max()
            a = np.exp(left - m)[pair_mask]
            b = np.exp(right + m + t_max)[pair_mask]
            d_trans += np.exp(transitions - t_max) * (a.T @ b)
        else:
            logp = left[:, :, :, None] + transitions + right[:, :, None, :]
            pair = np.exp(np.where(pair_mask[:, :, None, None], logp, -np.inf))
            d_trans += pair.sum(axis=(0, 1))
    nll = log_z.sum() - gold_score

    d_start = marg[:, 0].sum(axis=0) - np.bincount(gold[:, 0], minlength=n_labels)
    d_stop = marg[rows, lengths - 1].sum(axis=0) - np.bincount(last_tag, minlength=n_labels)
    return nll, marg - onehot, d_trans, d_start, d_stop


def log_partition(lat):
    """Return ``(log Z, forward table)`` for one lattice."""
    unary, mask = lat.batch()
    alphas, log_z = forward_batch(unary, mask, lat.transitions, lat.start, lat.stop)
    return float(log_z[0]), alphas[0]


def viterbi(lat):
    unary, mask = lat.batch()
    paths, scores = viterbi_batch(unary, mask, lat.transitions, lat.start, lat.stop)
    return [int(y) for y in paths[0]], float(scores[0])


def marginals(lat):
    unary, mask = lat.batch()
    return marginals_batch(unary, mask, lat.transitions, lat.start, lat.stop)[0][0]


def path_score(lat, tags):
    tags = list(tags)
    s = lat.start[tags[0]] + lat.stop[tags[-1]]
    s += sum(lat.unary[t, y] for t, y in enumerate(tags))
    s += sum(lat.transitions[a, b] for a, b in zip(tags, tags[1:]))
    return float(s)


def lattice_confidence(lat):
    """n-th root of the probability of the best path."""
    log_z, _ = log_partition(lat)
    _, best = viterbi(lat)
    return float(np.exp((best - log_z) / lat.unary.shape[0]))


def featurize(tokens, emb, window):
    """Row t concatenates embeddings of tokens t-w//2 .. t+w//2 (zeros off the edges)."""
    if window < 1 or window % 2 == 0:
        raise RejectedInputError("window must be odd")
    return window_matrix(emb.embed(tokens), window)


class CRFTagger(BaseEstimator):
    """Linear-chain CRF with a dense unary layer over window features.

    Parameters
    ----------
    embeddings : EmbeddingTable
        Fixed word vectors; never updated.
    window : int
        Odd number of tokens concatenated into each position's features.
    solver : {"lbfgs", "sgd"}
        Full-batch L-BFGS (deterministic, the default) or mini-batch SGD.
    epochs : int
        SGD passes over the data in :meth:`fit`.
    max_iter, tol : L-BFGS iteration limit and gradient tolerance for :meth:`fit`.
    retrain_epochs : int
        SGD passes, or L-BFGS iterations, used by :meth:`partial_fit`
        (warm-started retraining).
    batch_size, learning_rate : SGD mini-batch size and step size.
    l2 : float
        L2 penalty; the objective is mean negative log-likelihood plus
        ``l2 * ||theta||^2``.
    labels : sequence of str, optional
        Full label inventory. Inferred from ``y`` when omitted.
    random_state : int
        Seeds parameter initialisation and mini-batch order.

    Attributes
    ----------
    tagset_ : TagSet
    coef_ : ndarray (L, window * dim)
    intercept_ : ndarray (L,)
    transitions_ : ndarray (L, L)
    start_, stop_ : ndarray (L,)
    """

    def __init__(self, embeddings=None, window=3, epochs=20, retrain_epochs=5,
                 batch_size=16, learning_rate=0.05, l2=1e-4, labels=None,
                 init_scale=0.01, solver="lbfgs", max_iter=200, tol=1e-5, random_state=0):
        self.embeddings = embeddings
        self.window = window
        self.epochs = epochs
        self.retrain_epochs = retrain_epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.l2 = l2
        self.labels = labels
        self.init_scale = init_scale
        self.solver = solver
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    # -- parameters -------------------------------------------------------

    PARAM_NAMES = ("coef_", "intercept_", "transitions_", "start_", "stop_")

    def _params(self):
        return {k: getattr(self, k) for k in self.PARAM_NAMES}

    def _init_params(self, n_features):
        rng = substream(self.random_state, "tagger-init")
        n_labels = len(self.tagset_)
        self.coef_ = self.init_scale * rng.standard_normal((n_labels, n_features))
        self.intercept_ = np.zeros(n_labels)
        self.transitions_ = np.zeros((n_labels, n_labels))
        self.start_ = np.zeros(n_labels)
        self.stop_ = np.zeros(n_labels)

    @property
    def unary_layer(self):
        check_is_fitted(self, "coef_")
        return DenseLayer(self.coef_, self.intercept_)

    # -- features -----------------------------------------------------------

    def _features(self, tokens):
        cache = self.__dict__.setdefault("_feature_cache", {})
        key = tuple(tokens)
        feats = cache.get(key)
        if feats is None:
            if not key:
                raise RejectedInputError("empty token sequence")
            feats = featurize(key, self.embeddings, self.window)
            cache[key] = feats
        return feats

    def _pack(self, X):
        feats = [self._features(x) for x in X]
        n_pos = max(f.shape[0] for f in feats)
        packed = np.zeros((len(feats), n_pos, feats[0].shape[1]))
        mask = np.zeros((len(feats), n_pos), dtype=bool)
        for i, f in enumerate(feats):
            packed[i, : f.shape[0]] = f
            mask[i, : f.shape[0]] = True
        return packed, mask

    def _unary(self, packed):
        return packed @ self.coef_.T + self.intercept_

    def lattice(self, tokens):
        check_is_fitted(self, "coef_")
        return Lattice(self._unary(self._features(tokens)), self.transitions_,
                       self.start_, self.stop_)

    # -- training -----------------------------------------------------------

    def _encode_tags(self, y):
        index = {lab: i for i, lab in enumerate(self.tagset_.labels)}
        try:
            return [np.array([index[t] for t in tags], dtype=np.int64) for tags in y]
        except KeyError as exc:
            raise RejectedInputError(f"unknown label {exc.args[0]!r}") from None

    def _check_xy(self, X, y):
        X, y = [tuple(x) for x in X], list(y)
        if not X:
            raise RejectedInputError("empty training set")
        if len(X) != len(y):
            raise RejectedInputError("X and y differ in length")
        for x, tags in zip(X, y):
            if tags is None or len(tags) != len(x) or not x:
                raise RejectedInputError("every training sentence needs aligned gold tags")
        return X, y

    def _gold(self, y_idx, mask):
        gold = np.zeros(mask.shape, dtype=np.int64)
        for i, tags in enumerate(y_idx):
            gold[i, : len(tags)] = tags
        return gold

    def _packed_loss(self, packed, mask, gold, params):
        unary = packed @ params["coef_"].T + params["intercept_"]
        nll, d_unary, d_trans, d_start, d_stop = nll_grad_batch(
            unary, mask, gold, params["transitions_"], params["start_"], params["stop_"])
        n = len(packed)
        loss = nll / n
        grads = {
            "coef_": d_unary.reshape(-1, d_unary.shape[2]).T @ packed.reshape(-1, packed.shape[2]) / n,
            "intercept_": d_unary.sum(axis=(0, 1)) / n,
            "transitions_": d_trans / n,
            "start_": d_start / n,
            "stop_": d_stop / n,
        }
        for k, p in params.items():
            loss += self.l2 * float(np.sum(p * p))
            grads[k] = grads[k] + 2 * self.l2 * p
        return loss, grads

    def loss_and_grad(self, X, y_idx, params=None):
        """Mean NLL plus L2 penalty over ``X``, and gradients keyed like params."""
        params = params if params is not None else self._params()
        packed, mask = self._pack(X)
        return self._packed_loss(packed, mask, self._gold(y_idx, mask), params)

    def _run_lbfgs(self, X, y_idx, max_iter):
        """Minimise the full-batch objective from the current parameters."""
        packed, mask = self._pack(X)
        gold = self._gold(y_idx, mask)
        shapes = [(k, getattr(self, k).shape) for k in self.PARAM_NAMES]

        def unflatten(theta):
            out, lo = {}, 0
            for k, shape in shapes:
                size = int(np.prod(shape))
                out[k] = theta[lo: lo + size].reshape(shape)
                lo += size
            return out

        def objective(theta):
            loss, grads = self._packed_loss(packed, mask, gold, unflatten(theta))
            return loss, np.concatenate([grads[k].ravel() for k, _ in shapes])

        theta0 = np.concatenate([getattr(self, k).ravel() for k, _ in shapes])
        res = minimize(objective, theta0, jac=True, method="L-BFGS-B",
                       options={"maxiter": max_iter, "gtol": self.tol})
        if not np.all(np.isfinite(res.x)):
            raise NumericError("CRF parameters diverged")
        for k, v in unflatten(res.x).items():
            setattr(self, k, v.copy())
        self.n_iter_ = int(res.nit)

    def _run_epochs(self, X, y_idx, epochs, rng, eval_set=None):
        best_f1, best = -1.0, None
        n = len(X)
        for _ in range(epochs):
            order = rng.permutation(n)
            for lo in range(0, n, self.batch_size):
                idx = order[lo: lo + self.batch_size]
                _, grads = self.loss_and_grad([X[i] for i in idx], [y_idx[i] for i in idx])
                for k in self.PARAM_NAMES:
                    getattr(self, k)[...] -= self.learning_rate * grads[k]
            if not all(np.all(np.isfinite(p)) for p in self._params().values()):
                raise NumericError("CRF parameters diverged")
            if eval_set is not None:
                f1 = self.score(*eval_set)
                if f1 > best_f1:
                    best_f1, best = f1, copy.deepcopy(self._params())
        if best is not None:
            for k, v in best.items():
                setattr(self, k, v)
            self.best_dev_f1_ = best_f1

    def fit(self, X, y, eval_set=None):
        """Train from scratch.

        With ``eval_set=(X_dev, y_dev)`` the parameters from the epoch with the
        best dev F1 are kept.
        """
        if self.embeddings is None:
            raise RejectedInputError("CRFTagger needs an embedding table")
        if self.solver not in ("sgd", "lbfgs"):
            raise RejectedInputError(f"unknown solver {self.solver!r}")
        X, y = self._check_xy(X, y)
        if self.labels is not None:
            self.tagset_ = TagSet(tuple(self.labels))
        else:
            self.tagset_ = TagSet.from_tags(t for tags in y for t in tags)
        self._init_params(self._features(X[0]).shape[1])
        self._rng = substream(self.random_state, "tagger-train")
        if self.solver == "lbfgs":
            self._run_lbfgs(X, self._encode_tags(y), self.max_iter)
            if eval_set is not None:
                self.best_dev_f1_ = self.score(*eval_set)
        else:
            self._run_epochs(X, self._encode_tags(y), self.epochs, self._rng, eval_set)
        return self

    def partial_fit(self, X, y, epochs=None, rng=None):
        """Continue training from the current parameters (no dev selection)."""
        check_is_fitted(self, "coef_")
        X, y = self._check_xy(X, y)
        rng = rng if rng is not None else self._rng
        epochs = self.retrain_epochs if epochs is None else epochs
        if self.solver == "lbfgs":
            self._run_lbfgs(X, self._encode_tags(y), epochs)
            return self
        self._run_epochs(X, self._encode_tags(y), epochs, rng)
        return self

    # -- inference ------------------------------------------------------------

    def _batches(self, X, size=256):
        X = [tuple(x) for x in X]
        for lo in range(0, len(X), size):
            yield self._pack(X[lo: lo + size])

    def predict(self, X):
        check_is_fitted(self, "coef_")
        labels = self.tagset_.labels
        out = []
        for packed, mask in self._batches(X):
            paths, _ = viterbi_batch(self._unary(packed), mask, self.transitions_,
                                     self.start_, self.stop_)
            out.extend([labels[i] for i in p] for p in paths)
        return out

    def predict_marginals(self, X):
        check_is_fitted(self, "coef_")
        out = []
        for packed, mask in self._batches(X):
            marg, _ = marginals_batch(self._unary(packed), mask, self.transitions_,
                                      self.start_, self.stop_)
            lengths = mask.sum(axis=1)
            out.extend(marg[i, : lengths[i]] for i in range(len(lengths)))
        return out

    def confidence(self, X):
        """``exp((best path score - log Z) / n)`` per sentence."""
        check_is_fitted(self, "coef_")
        out = []
        for packed, mask in self._batches(X):
            unary = self._unary(packed)
            _, log_z = marginals_batch(unary, mask, self.transitions_, self.start_, self.stop_)
            _, best = viterbi_batch(unary, mask, self.transitions_, self.start_, self.stop_)
            out.append(np.exp((best - log_z) / mask.sum(axis=1)))
        return np.concatenate(out) if out else np.zeros(0)

    def analyse(self, tokens):
        """Tags, confidence, marginals and hidden features of one sentence."""
        unary = self._unary(self._features(tokens))[None]
        mask = np.ones(unary.shape[:2], dtype=bool)
        marg, log_z = marginals_batch(unary, mask, self.transitions_,
                                      self.start_, self.stop_)
        paths, best = viterbi_batch(unary, mask, self.transitions_, self.start_, self.stop_)
        conf = float(np.exp((best[0] - log_z[0]) / unary.shape[1]))
        tags = [self.tagset_.labels[i] for i in paths[0]]
        return tags, conf, marg[0], unary[0].mean(axis=0)

    def transform(self, X):
        """Hidden features: per-sentence mean of the unary score rows, shape (n, L)."""
        check_is_fitted(self, "coef_")
        return np.stack([self._unary(self._features(x)).mean(axis=0) for x in X])

    def score(self, X, y):
        return micro_f1(list(y), self.predict(X))

    def token_log_likelihood(self, X, y):
        """Mean per-token log p(y|x) (no penalty)."""
        y_idx = self._encode_tags(y)
        packed, mask = self._pack(X)
        gold = np.zeros(mask.shape, dtype=np.int64)
        for i, tags in enumerate(y_idx):
            gold[i, : len(tags)] = tags
        nll = nll_grad_batch(self._unary(packed), mask, gold, self.transitions_,
                             self.start_, self.stop_)[0]
        return -nll / mask.sum()

    # -- persistence ------------------------------------------------------------

    def save(self, path):
        """Write ``CRFTAG1``, a JSON header (tagset, config, shapes), then the
        parameter arrays as little-endian float64 in declaration order."""
        check_is_fitted(self, "coef_")
        params = {k: v for k, v in self.get_params().items()
                  if k not in ("embeddings", "labels")}
        header = {
            "labels": list(self.tagset_.labels),
            "scheme": self.tagset_.scheme,
            "params": params,
            "shapes": [list(getattr(self, k).shape) for k in self.PARAM_NAMES],
        }
        blob = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            for k in self.PARAM_NAMES:
                fh.write(np.ascontiguousarray(getattr(self, k), dtype="<f8").tobytes())

    @classmethod
    def load(cls, path, embeddings):
        with open(path, "rb") as fh:
            if fh.read(len(MAGIC)) != MAGIC:
                raise RejectedInputError(f"{path} is not a CRFTAG1 model file")
            (size,) = struct.unpack("<I", fh.read(4))
            header = json.loads(fh.read(size))
            model = cls(embeddings=embeddings, labels=tuple(header["labels"]),
                        **header["params"])
            model.tagset_ = TagSet(tuple(header["labels"]), header["scheme"])
            for k, shape in zip(cls.PARAM_NAMES, header["shapes"]):
                count = int(np.prod(shape))
                arr = np.frombuffer(fh.read(8 * count), dtype="<f8").astype(np.float64)
                setattr(model, k, arr.reshape(shape))
        model._rng = substream(model.random_state, "tagger-train")
        if model.coef_.shape[1] != model.window * embeddings.dim:
            raise RejectedInputError("model feature width does not match the embeddings")
        return model


def train_crf(train, dev, emb, **params):
    """Fit a :class:`CRFTagger` on gold-tagged sentences, selecting on ``dev`` F1."""
    tagger = CRFTagger(embeddings=emb, **params)
    X = [s.tokens for s in train]
    y = [s.tags for s in train]
    eval_set = ([s.tokens for s in dev], [s.tags for s in dev]) if dev else None
    return tagger.fit(X, y, eval_set=eval_set)

