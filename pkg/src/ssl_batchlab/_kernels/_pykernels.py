"""Pure numpy implementation of the dense-network kernels.

Parameters live in one flat float64 buffer: for every layer the weight
matrix (fan_in x fan_out, row-major) followed by its bias vector.
"""
import numpy as np


def mlp_forward(flat, layer_dims, X):
    acts = [X]
    offset = 0
    h = X
    last = len(layer_dims) - 2
    for i in range(len(layer_dims) - 1):
        n_in, n_out = layer_dims[i], layer_dims[i + 1]
        W = flat[offset:offset + n_in * n_out].reshape(n_in, n_out)
        offset += n_in * n_out
        b = flat[offset:offset + n_out]
        offset += n_out
        z = h @ W + b
        if i < last:
            np.maximum(z, 0.0, out=z)
        acts.append(z)
        h = z
    return acts


def mlp_backward(flat, layer_dims, acts, dlogits, grad):
    """Accumulate d(loss)/d(params) into ``grad`` (same layout as ``flat``)."""
    offsets = []
    offset = 0
    for i in range(len(layer_dims) - 1):
        offsets.append(offset)
        offset += layer_dims[i] * layer_dims[i + 1] + layer_dims[i + 1]
    dz = dlogits
    for i in range(len(layer_dims) - 2, -1, -1):
        n_in, n_out = layer_dims[i], layer_dims[i + 1]
        o = offsets[i]
        W = flat[o:o + n_in * n_out].reshape(n_in, n_out)
        gW = grad[o:o + n_in * n_out].reshape(n_in, n_out)
        gW += acts[i].T @ dz
        grad[o + n_in * n_out:o + n_in * n_out + n_out] += dz.sum(axis=0)
        if i > 0:
            da = dz @ W.T
            da *= acts[i] > 0.0
            dz = da
    return grad


def softmax_xent(logits, targets, weights):
    """Weighted cross-entropy sum and its gradient w.r.t. the logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    expo = np.exp(shifted)
    denom = expo.sum(axis=1, keepdims=True)
    probs = expo / denom
    rows = np.arange(logits.shape[0])
    ce = np.log(denom[:, 0]) - shifted[rows, targets]
    loss = float(np.dot(weights, ce))
    dlogits = probs * weights[:, None]
    dlogits[rows, targets] -= weights
    return loss, dlogits, ce


def softmax_confidence(logits):
    """Argmax (lowest index on ties) and max softmax probability per row."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    expo = np.exp(shifted)
    conf = 1.0 / expo.sum(axis=1)
    return np.argmax(logits, axis=1).astype(np.int64), conf
