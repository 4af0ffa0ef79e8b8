"""Q-network over selection states, experience replay and the TD update.

Action 0 rejects a candidate sentence, action 1 accepts it.
"""

import json
import struct
from collections import deque
from dataclasses import dataclass

import numpy as np

from ._validation import substream
from .exceptions import NumericError, RejectedInputError
from .nn import ConvFilterBank, DenseLayer, Optimizer, OptimizerConfig, relu, window_matrix

MAGIC = b"DQNSEL1\n"

REJECT, ACCEPT = 0, 1


class QNetwork:
    """Content CNN + marginal CNN + one ReLU hidden layer + 2 outputs.

    Parameters are held in ``params`` (an ordered dict of float64 arrays) so
    optimizers and the gradient checker can treat them uniformly.
    """

    def __init__(self, dim, n_labels, hp_mode="full", windows=(3, 4, 5),
                 content_filters=128, marginal_filters=20, marginal_window=3,
                 hidden=256, seed=0, zero=False):
        self.dim = dim
        self.n_labels = n_labels
        self.hp_mode = hp_mode
        self.windows = tuple(windows)
        self.content_filters = content_filters
        self.marginal_filters = marginal_filters
        self.marginal_window = marginal_window
        self.hidden = hidden
        self.hp_width = n_labels if hp_mode == "full" else 1
        rng = substream(seed, "dqn-init")
        self.params = {}
        for w in self.windows:
            self._add(f"conv{w}_W", (content_filters, w * dim), rng, zero)
            self.params[f"conv{w}_b"] = np.zeros(content_filters)
        self._add("marg_W", (marginal_filters, marginal_window * self.hp_width), rng, zero)
        self.params["marg_b"] = np.zeros(marginal_filters)
        self._add("hidden_W", (hidden, self.state_size), rng, zero)
        self.params["hidden_b"] = np.zeros(hidden)
        self._add("out_W", (2, hidden), rng, zero, scale=0.01)
        self.params["out_b"] = np.zeros(2)

    def _add(self, name, shape, rng, zero, scale=None):
        if zero:
            self.params[name] = np.zeros(shape)
            return
        std = scale if scale is not None else np.sqrt(2.0 / shape[1])
        self.params[name] = std * rng.standard_normal(shape)

    @property
    def content_size(self):
        return self.content_filters * len(self.windows)

    @property
    def state_size(self):
        return self.content_size + 1 + self.marginal_filters + self.n_labels

    def config(self):
        return {
            "dim": self.dim, "n_labels": self.n_labels, "hp_mode": self.hp_mode,
            "windows": list(self.windows), "content_filters": self.content_filters,
            "marginal_filters": self.marginal_filters,
            "marginal_window": self.marginal_window, "hidden": self.hidden,
        }

    def copy(self):
        other = QNetwork.__new__(QNetwork)
        other.__dict__.update(self.__dict__)
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    def content_banks(self):
        return [ConvFilterBank(w, self.params[f"conv{w}_W"], self.params[f"conv{w}_b"])
                for w in self.windows]

    def marginal_bank(self):
        return ConvFilterBank(self.marginal_window, self.params["marg_W"], self.params["marg_b"])

    def hidden_layer(self):
        return DenseLayer(self.params["hidden_W"], self.params["hidden_b"])

    def output_layer(self):
        return DenseLayer(self.params["out_W"], self.params["out_b"])

    # -- batched forward / backward ---------------------------------------

    def _pack(self, states):
        n_pos = max(s.embedded.shape[0] for s in states)
        emb = np.zeros((len(states), n_pos, self.dim))
        marg = np.zeros((len(states), n_pos, self.hp_width))
        mask = np.zeros((len(states), n_pos), dtype=bool)
        for i, s in enumerate(states):
            n = s.embedded.shape[0]
            emb[i, :n] = s.embedded
            marg[i, :n] = s.marginal_input
            mask[i, :n] = True
        return emb, marg, mask

    def _column_slices(self):
        """Column ranges of each bank inside the widest window's feature rows."""
        widest = max(self.windows)
        w_left = (widest - 1) // 2
        out = []
        for w in self.windows:
            lo = (w_left - (w - 1) // 2) * self.dim
            out.append(slice(lo, lo + w * self.dim))
        return widest, out

    def forward(self, states, params=None):
        """Q-values (B, 2) for a list of states, plus a cache for backward."""
        p = self.params if params is None else params
        emb, marg, mask = self._pack(states)
        n_batch, n_pos = mask.shape
        lengths = mask.sum(axis=1)

        # every narrower window is a column slice of the widest one; padded
        # rows are never computed and stay at zero activation
        widest, cols = self._column_slices()
        rows = mask.ravel()
        win = window_matrix(emb, widest).reshape(n_batch * n_pos, -1)[rows]
        act = np.zeros((n_batch * n_pos, self.content_filters * len(self.windows)))
        act[rows] = relu(np.concatenate(
            [win[:, c] @ p[f"conv{w}_W"].T + p[f"conv{w}_b"] for w, c in zip(self.windows, cols)],
            axis=1,
        ))
        act = act.reshape(n_batch, n_pos, -1)
        h_s = act.max(axis=1)

        mwin = window_matrix(marg, self.marginal_window).reshape(n_batch * n_pos, -1)[rows]
        mact = np.zeros((n_batch * n_pos, p["marg_b"].shape[0]))
        mact[rows] = relu(mwin @ p["marg_W"].T + p["marg_b"])
        mact = mact.reshape(n_batch, n_pos, -1)
        h_p = mact.sum(axis=1) / lengths[:, None]

        h_c = np.array([[s.h_c] for s in states])
        h_t = np.stack([s.h_t for s in states])
        full = np.concatenate([h_s, h_c, h_p, h_t], axis=1)
        z = full @ p["hidden_W"].T + p["hidden_b"]
        a = relu(z)
        q = a @ p["out_W"].T + p["out_b"]
        if not np.all(np.isfinite(q)):
            raise NumericError("non-finite Q-values")
        cache = dict(mask=mask, win=win, act=act, mwin=mwin, mact=mact,
                     lengths=lengths, full=full, z=z, a=a)
        return q, cache

    def backward(self, cache, d_q, params=None):
        """Gradients of ``sum(d_q * q)`` with respect to every parameter."""
        p = self.params if params is None else params
        mask = cache["mask"]
        n_batch, n_pos = mask.shape
        grads = {}
        grads["out_W"] = d_q.T @ cache["a"]
        grads["out_b"] = d_q.sum(axis=0)
        d_z = (d_q @ p["out_W"]) * (cache["z"] > 0)
        grads["hidden_W"] = d_z.T @ cache["full"]
        grads["hidden_b"] = d_z.sum(axis=0)
        d_full = d_z @ p["hidden_W"]

        # max pooling routes each filter's gradient to its first argmax position
        act = cache["act"]
        n_content = act.shape[2]
        idx = np.argmax(np.ascontiguousarray(act.transpose(0, 2, 1)), axis=2)
        d_pre = np.zeros_like(act)
        d_pre[np.arange(n_batch)[:, None], idx, np.arange(n_content)[None, :]] = \
            d_full[:, :n_content]
        d_pre *= act > 0
        flat = d_pre.reshape(n_batch * n_pos, n_content)[mask.ravel()]
        _, cols = self._column_slices()
        win = cache["win"]
        for k, (w, c) in enumerate(zip(self.windows, cols)):
            block = flat[:, k * self.content_filters: (k + 1) * self.content_filters]
            grads[f"conv{w}_W"] = block.T @ win[:, c]
            grads[f"conv{w}_b"] = block.sum(axis=0)

        offset = n_content + 1  # h_c carries no parameters
        mact, lengths = cache["mact"], cache["lengths"]
        n_f = mact.shape[2]
        d_hp = d_full[:, offset: offset + n_f]
        d_mpre = (d_hp / lengths[:, None])[:, None, :] * (mact > 0)
        flat = d_mpre.reshape(n_batch * n_pos, n_f)[mask.ravel()]
        grads["marg_W"] = flat.T @ cache["mwin"]
        grads["marg_b"] = flat.sum(axis=0)
        return {k: grads[k] for k in p}

    # -- persistence --------------------------------------------------------

    def save(self, path):
        """``DQNSEL1``, a JSON header, then every array as little-endian float64."""
        header = dict(self.config(), shapes={k: list(v.shape) for k, v in self.params.items()},
                      order=list(self.params))
        blob = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            for v in self.params.values():
                fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            if fh.read(len(MAGIC)) != MAGIC:
                raise RejectedInputError(f"{path} is not a DQNSEL1 network file")
            (size,) = struct.unpack("<I", fh.read(4))
            header = json.loads(fh.read(size))
            net = cls(header["dim"], header["n_labels"], header["hp_mode"],
                      tuple(header["windows"]), header["content_filters"],
                      header["marginal_filters"], header["marginal_window"],
                      header["hidden"], zero=True)
            for name in header["order"]:
                shape = header["shapes"][name]
                count = int(np.prod(shape))
                data = np.frombuffer(fh.read(8 * count), dtype="<f8")
                net.params[name] = data.astype(np.float64).reshape(shape)
        return net


def q_forward(net, state):
    """``(Q(s, reject), Q(s, accept))`` for one state.

    Also stores the content and marginal encodings of this forward pass in
    ``state.h_s`` and ``state.h_p``.
    """
    q, cache = net.forward([state])
    n_content = net.content_filters * len(net.windows)
    full = cache["full"][0]
    state.h_s = full[:n_content].copy()
    state.h_p = full[n_content + 1: n_content + 1 + net.marginal_filters].copy()
    return q[0]


def select_action(qvalue, epsilon, rng):
    """Epsilon-greedy; the greedy choice rejects unless accept scores strictly higher."""
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(2))
    return ACCEPT if qvalue[1] > qvalue[0] else REJECT


def bellman_target(reward, next_state, terminal, net, gamma):
    if not 0.0 <= gamma <= 1.0:
        raise RejectedInputError("gamma must lie in [0, 1]")
    if terminal or gamma == 0.0:
        return float(reward)
    return float(reward + gamma * np.max(q_forward(net, next_state)))


@dataclass
class Transition:
    state: object
    action: int
    reward: float
    next_state: object
    terminal: bool

    def __post_init__(self):
        if self.action not in (REJECT, ACCEPT):
            raise RejectedInputError("action must be 0 or 1")
        if not np.isfinite(self.reward):
            raise RejectedInputError("reward must be finite")
        if self.action == REJECT and self.reward != 0:
            raise RejectedInputError("a rejected candidate earns zero reward")


class ReplayBuffer:
    """Fixed-capacity FIFO of transitions with uniform sampling."""

    def __init__(self, capacity=10000, rng=None):
        if capacity < 1:
            raise RejectedInputError("capacity must be >= 1")
        self.capacity = capacity
        self.items = deque(maxlen=capacity)
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def __len__(self):
        return len(self.items)

    def push(self, transition):
        self.items.append(transition)

    def sample(self, k, rng=None):
        """``k`` draws uniformly with replacement."""
        if not self.items:
            raise RejectedInputError("cannot sample from an empty replay buffer")
        rng = rng if rng is not None else self.rng
        return [self.items[i] for i in rng.integers(len(self.items), size=k)]


def replay_push(buf, t):
    buf.push(t)


def replay_sample(buf, k, rng=None):
    return buf.sample(k, rng)


def td_targets(net, batch, gamma, target_net=None):
    """Bellman targets for a batch; next-state values come from ``target_net`` if given."""
    rewards = np.array([t.reward for t in batch], dtype=np.float64)
    live = [i for i, t in enumerate(batch) if not t.terminal]
    if gamma > 0 and live:
        evaluator = target_net if target_net is not None else net
        q_next, _ = evaluator.forward([batch[i].next_state for i in live])
        rewards[live] += gamma * q_next.max(axis=1)
    return rewards


def batch_loss_and_grad(net, batch, targets, params=None):
    """Mean squared TD error and its gradient; targets are constants."""
    q, cache = net.forward([t.state for t in batch], params)
    actions = np.array([t.action for t in batch])
    rows = np.arange(len(batch))
    err = q[rows, actions] - targets
    d_q = np.zeros_like(q)
    d_q[rows, actions] = 2.0 * err / len(batch)
    return float(np.mean(err ** 2)), net.backward(cache, d_q, params)


def dqn_train_step(net, batch, gamma, opt, target_net=None):
    """One optimizer step on the batch's mean squared TD error.

    ``opt`` is an :class:`~qselftrain.nn.Optimizer` (or an
    :class:`~qselftrain.nn.OptimizerConfig`, wrapped on the fly). Returns the
    loss measured before the step.
    """
    if not batch:
        raise RejectedInputError("empty batch")
    if isinstance(opt, OptimizerConfig):
        opt = Optimizer(opt)
    targets = td_targets(net, batch, gamma, target_net)
    loss, grads = batch_loss_and_grad(net, batch, targets)
    opt.step(net.params, grads)
    return loss
