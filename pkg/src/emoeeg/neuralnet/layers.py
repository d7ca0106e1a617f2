"""Forward/backward kernels for channels-last tensors of shape (N, *spatial, C)."""
from __future__ import annotations

import itertools
import math

import numpy as np


def same_padding(size: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """Output length and (left, right) padding of a 'same' convolution."""
    out = math.ceil(size / stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return out, total // 2, total - total // 2


def conv_output_shape(spatial, kernel: int, stride: int) -> tuple[int, ...]:
    return tuple(same_padding(s, kernel, stride)[0] for s in spatial)


def pool_output_shape(spatial, size: int = 2) -> tuple[int, ...]:
    return tuple(math.ceil(s / size) for s in spatial)


# ---------------------------------------------------------------- convolution

def conv_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray, stride: int = 1):
    """W has shape (k,)*rank + (C_in, C_out)."""
    rank = x.ndim - 2
    k = W.shape[0]
    spatial = x.shape[1:-1]
    geo = [same_padding(s, k, stride) for s in spatial]
    out_shape = tuple(g[0] for g in geo)
    xp = np.pad(x, [(0, 0)] + [(g[1], g[2]) for g in geo] + [(0, 0)])
    offsets = list(itertools.product(range(k), repeat=rank))
    slices = [tuple(slice(o, o + stride * (n - 1) + 1, stride) for o, n in zip(off, out_shape))
              for off in offsets]
    cols = np.stack([xp[(slice(None),) + sl] for sl in slices], axis=-2)
    n_batch, c_in = x.shape[0], x.shape[-1]
    cols2 = cols.reshape(-1, len(offsets) * c_in)
    Wm = W.reshape(-1, W.shape[-1])
    out = (cols2 @ Wm + b).reshape((n_batch,) + out_shape + (W.shape[-1],))
    cache = (x.shape, xp.shape, geo, slices, cols2, W)
    return out, cache


def conv_backward(dout: np.ndarray, cache):
    x_shape, xp_shape, geo, slices, cols2, W = cache
    Wm = W.reshape(-1, W.shape[-1])
    dflat = dout.reshape(-1, dout.shape[-1])
    dW = (cols2.T @ dflat).reshape(W.shape)
    db = dflat.sum(axis=0)
    dcols = (dflat @ Wm.T).reshape(dout.shape[:-1] + (len(slices), x_shape[-1]))
    dxp = np.zeros(xp_shape, dtype=dout.dtype)
    for i, sl in enumerate(slices):
        dxp[(slice(None),) + sl] += dcols[..., i, :]
    crop = tuple(slice(g[1], g[1] + s) for g, s in zip(geo, x_shape[1:-1]))
    return dxp[(slice(None),) + crop + (slice(None),)], dW, db


# ---------------------------------------------------------------- average pooling (ceil mode)

def _pool_counts(spatial, size, dtype):
    ones = np.ones(spatial, dtype=dtype)
    out = pool_output_shape(spatial, size)
    padded = np.pad(ones, [(0, o * size - s) for o, s in zip(out, spatial)])
    shape = []
    for o in out:
        shape += [o, size]
    return padded.reshape(shape).sum(axis=tuple(range(1, 2 * len(out), 2)))


def avgpool_forward(x: np.ndarray, size: int = 2):
    """Partial windows at the far edge average only their valid elements."""
    spatial = x.shape[1:-1]
    out = pool_output_shape(spatial, size)
    xp = np.pad(x, [(0, 0)] + [(0, o * size - s) for o, s in zip(out, spatial)] + [(0, 0)])
    shape = [x.shape[0]]
    for o in out:
        shape += [o, size]
    shape.append(x.shape[-1])
    summed = xp.reshape(shape).sum(axis=tuple(range(2, 2 * len(out) + 1, 2)))
    counts = _pool_counts(spatial, size, x.dtype)
    return summed / counts[..., None], (x.shape, counts, size)


def avgpool_backward(dout: np.ndarray, cache):
    x_shape, counts, size = cache
    g = dout / counts[..., None]
    for axis in range(1, g.ndim - 1):
        g = np.repeat(g, size, axis=axis)
    crop = tuple(slice(0, s) for s in x_shape[1:-1])
    return g[(slice(None),) + crop + (slice(None),)]


# ---------------------------------------------------------------- pointwise / dense

ACTIVATIONS = ("tanh", "elu", "relu")


def activation_forward(x, kind: str = "tanh"):
    """Returns (output, local derivative)."""
    if kind == "elu":
        neg = np.expm1(np.minimum(x, 0))
        return np.where(x > 0, x, neg), np.where(x > 0, 1, neg + 1).astype(x.dtype)
    if kind == "relu":
        return np.maximum(x, 0), (x > 0).astype(x.dtype)
    if kind == "tanh":
        y = np.tanh(x)
        return y, 1 - y * y
    raise ValueError(f"unknown activation {kind!r}")


def activation_backward(dout, deriv):
    return dout * deriv


def dense_forward(x, W, b):
    return x @ W + b, x


def dense_backward(dout, x, W):
    return dout @ W.T, x.T @ dout, dout.sum(axis=0)


BN_EPS = 1e-5


def batchnorm_forward(x, gamma, beta, running_mean, running_var, train: bool):
    if train:
        mu = x.mean(axis=0)
        var = x.var(axis=0)
    else:
        mu, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mu) * inv
    return gamma * xhat + beta, (xhat, inv, gamma, mu, var)


def batchnorm_backward(dout, cache):
    xhat, inv, gamma, _, _ = cache
    n = dout.shape[0]
    dgamma = (dout * xhat).sum(axis=0)
    dbeta = dout.sum(axis=0)
    dxhat = dout * gamma
    dx = (inv / n) * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
    return dx, dgamma, dbeta


def dropout_mask(shape, rate: float, rng: np.random.Generator, dtype) -> np.ndarray:
    """Inverted dropout: kept units are scaled by 1 / (1 - rate)."""
    keep = rng.random(shape) >= rate
    return keep.astype(dtype) / dtype.type(1.0 - rate)


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)
