"""Small numpy kernel: dense layers, 1-D convolution, pooling, optimizers.

Gradients are written out by hand for the fixed architectures used in this
package; :func:`finite_diff_check` is the independent check for all of them.
Everything is float64.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._validation import check_array
from .exceptions import GradientCheckError, RejectedInputError


@dataclass
class DenseLayer:
    """Affine map ``x -> weights @ x + bias`` with weights shaped (out, in)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = check_array(self.weights, ndim=2, name="weights")
        self.bias = check_array(self.bias, ndim=1, name="bias")
        if self.bias.shape[0] != self.weights.shape[0]:
            raise RejectedInputError(
                f"bias length {self.bias.shape[0]} != weights rows {self.weights.shape[0]}"
            )


@dataclass
class ConvFilterBank:
    """``num_filters`` filters spanning ``window`` consecutive token vectors.

    Row ``f`` of ``weights`` is the filter applied to the concatenation of the
    window's vectors, first token first.
    """

    window: int
    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.window < 1:
            raise RejectedInputError("window must be >= 1")
        self.weights = check_array(self.weights, ndim=2, name="weights")
        self.bias = check_array(self.bias, ndim=1, name="bias")
        if self.bias.shape[0] != self.weights.shape[0]:
            raise RejectedInputError("num_filters differs between weights and bias")
        if self.weights.shape[1] % self.window:
            raise RejectedInputError("weights width is not a multiple of window")

    @property
    def num_filters(self):
        return self.weights.shape[0]

    @property
    def dim(self):
        return self.weights.shape[1] // self.window


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise RejectedInputError(f"unknown optimizer {self.kind!r}")
        if not self.learning_rate > 0:
            raise RejectedInputError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise RejectedInputError("adam betas must lie in (0, 1)")


def relu(x):
    return np.maximum(x, 0.0)


def dense_forward(x, layer, activation="relu"):
    """Apply ``layer`` to a vector, or row-wise to a (batch, in) matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.weights.shape[1]:
        raise RejectedInputError(
            f"input width {x.shape[-1]} != layer input {layer.weights.shape[1]}"
        )
    z = x @ layer.weights.T + layer.bias
    if activation == "relu":
        return relu(z)
    if activation == "identity":
        return z
    raise RejectedInputError(f"unknown activation {activation!r}")


def pad_widths(window):
    """Left/right zero padding that keeps one output position per token."""
    left = (window - 1) // 2
    return left, window - 1 - left


def window_matrix(embedded, window):
    """Stack the zero-padded windows of a (n, dim) or (batch, n, dim) array.

    Returns shape (..., n, window * dim); position ``t`` covers tokens
    ``t - left`` to ``t + right``.
    """
    left, right = pad_widths(window)
    pad = [(0, 0)] * embedded.ndim
    pad[-2] = (left, right)
    padded = np.pad(embedded, pad)
    win = sliding_window_view(padded, window, axis=-2)  # (..., n, dim, window)
    win = np.swapaxes(win, -1, -2)
    return win.reshape(*win.shape[:-2], window * embedded.shape[-1])


def conv1d_forward(embedded, bank):
    """ReLU convolution over an (n, dim) sequence; returns (n, num_filters)."""
    embedded = check_array(embedded, ndim=2, name="embedded")
    if embedded.shape[1] != bank.dim:
        raise RejectedInputError(
            f"embedding width {embedded.shape[1]} != filter bank width {bank.dim}"
        )
    return relu(window_matrix(embedded, bank.window) @ bank.weights.T + bank.bias)


def pool(features, kind="max_over_positions", return_argmax=False):
    """Pool a (positions, filters) map down to one value per filter."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise RejectedInputError("cannot pool an empty feature map")
    if kind == "max_over_positions":
        idx = np.argmax(features, axis=0)
        out = features[idx, np.arange(features.shape[1])]
        return (out, idx) if return_argmax else out
    if kind == "mean_over_positions":
        return features.mean(axis=0)
    raise RejectedInputError(f"unknown pooling {kind!r}")


def optimizer_step(params, grads, cfg, step, state=None):
    """Update ``params`` in place and return it.

    ``step`` counts from 1 and drives Adam's bias correction. ``state`` holds
    Adam's moment estimates between calls (created on first use when given
    as an empty dict).
    """
    if params.keys() != grads.keys():
        raise RejectedInputError("params and grads have different keys")
    for name, g in grads.items():
        if np.shape(params[name]) != np.shape(g):
            raise RejectedInputError(f"shape mismatch for {name}")
    lr = cfg.learning_rate
    if cfg.kind == "sgd":
        for name, g in grads.items():
            params[name] -= lr * g
        return params
    if state is None:
        raise RejectedInputError("adam needs a state dict")
    b1, b2 = cfg.beta1, cfg.beta2
    c1, c2 = 1 - b1**step, 1 - b2**step
    for name, g in grads.items():
        if name not in state:
            state[name] = (np.zeros_like(g), np.zeros_like(g))
        m, v = state[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        denom = np.sqrt(v / c2)
        denom += cfg.eps
        params[name] -= lr * (m / c1) / denom
    return params


class Optimizer:
    """Stateful wrapper around :func:`optimizer_step`."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.t = 0
        self.state = {}

    def step(self, params, grads):
        self.t += 1
        return optimizer_step(params, grads, self.cfg, self.t, self.state)


def finite_diff_check(loss, params, h=1e-5, max_coords=None, rng=None):
    """Compare analytic gradients with central differences.

    ``loss(params)`` must return ``(value, grads)`` with ``grads`` keyed like
    ``params``. Coordinates are perturbed in place and restored. When
    ``max_coords`` is set, at most that many randomly chosen coordinates per
    array are probed.

    Returns the max over probed coordinates of
    ``|analytic - numeric| / max(1, |analytic|)``.
    """
    _, analytic = loss(params)
    analytic = {k: np.array(v, dtype=np.float64) for k, v in analytic.items()}
    rng = rng if rng is not None else np.random.default_rng(0)
    worst = 0.0
    for name, arr in params.items():
        flat = arr.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        grad = analytic[name].reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            up = loss(params)[0]
            flat[i] = orig - h
            down = loss(params)[0]
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise GradientCheckError(name, int(i), up if not np.isfinite(up) else down)
            numeric = (up - down) / (2 * h)
            err = abs(grad[i] - numeric) / max(1.0, abs(grad[i]))
            worst = max(worst, err)
    return worst
