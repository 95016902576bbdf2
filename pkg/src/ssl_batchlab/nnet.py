"""Dense ReLU classifier with per-task linear heads and exact gradients.

All parameters share a single flat float64 buffer (per layer: weights
then bias) so optimiser, EMA and checkpoint code work on one vector.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError


@dataclass
class MlpParams:
    flat: np.ndarray
    layer_dims: tuple
    head_slices: tuple  # ((start, stop), ...) into the output layer

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        self.head_slices = tuple((int(a), int(b)) for a, b in self.head_slices)
        if self.flat.shape != (param_count(self.layer_dims),):
            raise ValueError("flat buffer does not match layer_dims")

    def layers(self):
        """(W, b) views per layer."""
        out = []
        o = 0
        for n_in, n_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            W = self.flat[o:o + n_in * n_out].reshape(n_in, n_out)
            o += n_in * n_out
            out.append((W, self.flat[o:o + n_out]))
            o += n_out
        return out

    def weight_mask(self):
        """1.0 on weight-matrix entries, 0.0 on biases."""
        mask = np.zeros_like(self.flat)
        o = 0
        for n_in, n_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            mask[o:o + n_in * n_out] = 1.0
            o += n_in * n_out + n_out
        return mask

    def copy(self):
        return MlpParams(self.flat.copy(), self.layer_dims, self.head_slices)

    def zeros_like(self):
        return MlpParams(np.zeros_like(self.flat), self.layer_dims, self.head_slices)

    @property
    def num_tasks(self):
        return len(self.head_slices)


# Gradients share the parameter layout.
GradBuffer = MlpParams


def param_count(layer_dims):
    return sum(a * b + b for a, b in zip(layer_dims[:-1], layer_dims[1:]))


def head_slices_for(num_classes):
    slices, start = [], 0
    for c in num_classes:
        slices.append((start, start + c))
        start += c
    return tuple(slices)


def init(layer_dims, seed, num_classes=None) -> MlpParams:
    """He-uniform weights, zero biases."""
    layer_dims = tuple(int(d) for d in layer_dims)
    if len(layer_dims) < 2 or min(layer_dims) < 1:
        raise ConfigError("layer_dims needs an input and an output width", key="model.layer_dims")
    if num_classes is None:
        num_classes = (layer_dims[-1],)
    if sum(num_classes) != layer_dims[-1]:
        raise ConfigError("output width must equal the total class count", key="model.layer_dims")
    rng = np.random.default_rng(seed)
    params = MlpParams(np.zeros(param_count(layer_dims)), layer_dims, head_slices_for(num_classes))
    for W, _ in params.layers():
        limit = np.sqrt(6.0 / W.shape[0])
        W[...] = rng.uniform(-limit, limit, W.shape)
    return params


@dataclass
class ForwardCache:
    acts: list
    flat_id: int
    version: bytes

    @property
    def logits(self):
        return self.acts[-1]


def _fingerprint(flat):
    # cheap staleness check: exact bytes of a few strided entries and the sum
    return flat[:: max(1, len(flat) // 16)].tobytes() + np.float64(flat.sum()).tobytes()


def forward(params: MlpParams, X):
    """Logits for the whole output layer plus the cache ``backward`` needs."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.layer_dims[0]:
        raise ValueError(f"expected input of width {params.layer_dims[0]}, got shape {X.shape}")
    acts = _kernels.mlp_forward(params.flat, params.layer_dims, X)
    return acts[-1], ForwardCache(acts, id(params.flat), _fingerprint(params.flat))


def task_logits(params: MlpParams, logits, task):
    a, b = params.head_slices[task]
    return np.ascontiguousarray(logits[:, a:b])


def backward(params: MlpParams, cache: ForwardCache, dlogits, grad: GradBuffer | None = None) -> GradBuffer:
    """Accumulate parameter gradients into ``grad`` (fresh zero buffer if omitted)."""
    if cache.flat_id != id(params.flat) or cache.version != _fingerprint(params.flat):
        raise ValueError("forward cache is stale: parameters changed since the forward pass")
    if grad is None:
        grad = params.zeros_like()
    dlogits = np.ascontiguousarray(dlogits, dtype=np.float64)
    _kernels.mlp_backward(params.flat, params.layer_dims, cache.acts, dlogits, grad.flat)
    return grad


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(logits, targets, weights):
    """Weighted cross-entropy ``sum_i w_i CE_i`` and its gradient.

    Returns ``(loss, dlogits, per_row_ce)``.
    """
    logits = np.ascontiguousarray(logits, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.int64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if len(targets) == 0:
        return 0.0, np.zeros_like(logits), np.zeros(0)
    return _kernels.softmax_xent(logits, targets, weights)


def predict(params: MlpParams, X, task=0):
    """Class (lowest index on ties) and max softmax probability for one task."""
    if not 0 <= task < params.num_tasks:
        raise ValueError(f"task {task} out of range")
    logits, _ = forward(params, X)
    return _kernels.softmax_confidence(task_logits(params, logits, task))


def accuracy(params: MlpParams, X, y, task=0):
    if len(y) == 0:
        return float("nan")
    pred, _ = predict(params, X, task)
    return float(np.mean(pred == y))


@dataclass
class EmaParams:
    shadow: MlpParams
    decay: float = 0.999

    @classmethod
    def from_params(cls, params, decay=0.999):
        if not 0.0 <= decay < 1.0:
            raise ConfigError("ema decay must lie in [0, 1)", key="train.ema_decay")
        return cls(params.copy(), decay)


def ema_update(ema: EmaParams, params: MlpParams) -> EmaParams:
    """In place: ``shadow = decay * shadow + (1 - decay) * params``."""
    if ema.shadow.flat.shape != params.flat.shape:
        raise ValueError("EMA and live parameters differ in shape")
    ema.shadow.flat *= ema.decay
    ema.shadow.flat += (1.0 - ema.decay) * params.flat
    return ema
