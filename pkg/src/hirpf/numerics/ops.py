"""Differentiable operations used by the backbone and the identity router."""

from __future__ import annotations

import numpy as np

from . import kernels
from .tensor import DimensionError, Tensor, as_tensor, get_dtype, make_result

LN_EPS = 1e-5


class EmptyActiveError(ValueError):
    """A masked softmax was asked to normalise over zero active entries."""


class EmptyLossError(ValueError):
    """Every position of a loss was masked out."""


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _lift(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=get_dtype()))


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_result(out, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return make_result(out, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.ndim(b) == 0:
        s = float(b)
        a = _lift(a)
        return make_result(a.data * a.data.dtype.type(s), (a,),
                           lambda g: (g * g.dtype.type(s),), "scale")
    a, b = _lift(a), _lift(b)
    out = a.data * b.data

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make_result(out, (a, b), backward, "mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(..., m, k) @ (..., k, n); leading dims broadcast like ``np.matmul``."""
    a, b = _lift(a), _lift(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return make_result(out, (a, b), backward, "matmul")


def transpose(a: Tensor, axes: tuple[int, ...] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(range(a.ndim - 2)) + (a.ndim - 1, a.ndim - 2)
    inv = tuple(np.argsort(axes))
    return make_result(np.transpose(a.data, axes), (a,),
                       lambda g: (np.transpose(g, inv),), "transpose")


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    src = a.shape
    return make_result(a.data.reshape(shape), (a,), lambda g: (g.reshape(src),), "reshape")


def getitem(a: Tensor, idx) -> Tensor:
    out = a.data[idx]

    parts = idx if isinstance(idx, tuple) else (idx,)
    basic = all(isinstance(p, (int, slice, type(Ellipsis), type(None))) for p in parts)

    def backward(g):
        full = np.zeros_like(a.data)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return make_result(np.array(out, copy=True), (a,), backward, "getitem")


def embed(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup ``table[ids]`` with scatter-add backward."""
    ids = np.asarray(ids, dtype=np.int64)
    out = table.data[ids]

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        return (full,)

    return make_result(out, (table,), backward, "embed")


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).astype(a.dtype),)

    return make_result(np.asarray(out), (a,), backward, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def sigmoid(x: Tensor) -> Tensor:
    x = _lift(x)
    # branch-free stable form: exp of a non-positive argument only
    z = np.exp(-np.abs(x.data))
    out = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z)).astype(x.dtype)

    def backward(g):
        return (g * out * (1.0 - out),)

    return make_result(out, (x,), backward, "sigmoid")


def gelu(x: Tensor) -> Tensor:
    flat = np.ascontiguousarray(x.data).reshape(-1)
    y, t = kernels.get("gelu_fwd")(flat)

    def backward(g):
        gf = np.ascontiguousarray(g).reshape(-1)
        return (kernels.get("gelu_bwd")(gf, flat, t).reshape(x.shape),)

    return make_result(y.reshape(x.shape), (x,), backward, "gelu")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LN_EPS) -> Tensor:
    d = x.shape[-1]
    if d < 2:
        raise DimensionError(f"layer_norm needs a feature dimension >= 2, got shape {x.shape}")
    x2 = np.ascontiguousarray(x.data).reshape(-1, d)
    y, xhat, rstd = kernels.get("layer_norm_fwd")(x2, gain.data, bias.data, eps)

    def backward(g):
        g2 = np.ascontiguousarray(g).reshape(-1, d)
        dx, dgain, dbias = kernels.get("layer_norm_bwd")(g2, xhat, rstd, gain.data)
        return dx.reshape(x.shape), dgain, dbias

    return make_result(y.reshape(x.shape), (x, gain, bias), backward, "layer_norm")


def causal_softmax(scores: Tensor) -> Tensor:
    """Row softmax over the last axis keeping only key positions <= query position."""
    shape = scores.shape
    T = shape[-1]
    if shape[-2] != T:
        raise DimensionError(f"causal_softmax needs square trailing dims, got {shape}")
    s3 = np.ascontiguousarray(scores.data).reshape(-1, T, T)
    p = kernels.get("causal_softmax_fwd")(s3)

    def backward(g):
        g3 = np.ascontiguousarray(g).reshape(-1, T, T)
        return (kernels.get("causal_softmax_bwd")(g3, p).reshape(shape),)

    return make_result(p.reshape(shape), (scores,), backward, "causal_softmax")


def masked_softmax(logits: Tensor, active, strict: bool = True) -> Tensor:
    """Softmax over the entries flagged in ``active`` (last axis); others are exactly 0.

    Inactive logits are never read, so their values (even non-finite ones)
    cannot influence the result. With ``strict=False`` an all-inactive mask
    returns all zeros instead of raising.
    """
    logits = _lift(logits)
    active = np.asarray(active, dtype=bool)
    if active.shape != logits.shape[-1:]:
        raise DimensionError(f"mask shape {active.shape} does not match logits {logits.shape}")
    idx = np.flatnonzero(active)
    out = np.zeros_like(logits.data)
    if idx.size == 0:
        if strict:
            raise EmptyActiveError("masked_softmax: no active entries")
        return make_result(out, (logits,), lambda g: (None,), "masked_softmax")
    x = logits.data[..., idx]
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    p = z / z.sum(axis=-1, keepdims=True)
    out[..., idx] = p

    def backward(g):
        ga = g[..., idx]
        full = np.zeros_like(logits.data)
        full[..., idx] = p * (ga - (ga * p).sum(axis=-1, keepdims=True))
        return (full,)

    return make_result(out, (logits,), backward, "masked_softmax")


def cross_entropy(logits: Tensor, targets, loss_mask=None) -> Tensor:
    """Mean next-token negative log-likelihood over positions where ``loss_mask`` holds."""
    V = logits.shape[-1]
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if loss_mask is None:
        loss_mask = np.ones(targets.shape, dtype=bool)
    loss_mask = np.asarray(loss_mask, dtype=bool).reshape(-1)
    flat = logits.data.reshape(-1, V)
    if flat.shape[0] != targets.shape[0] or loss_mask.shape != targets.shape:
        raise DimensionError(
            f"cross_entropy: logits {logits.shape} vs targets {targets.shape} / mask {loss_mask.shape}")
    rows = np.flatnonzero(loss_mask)
    if rows.size == 0:
        raise EmptyLossError("cross_entropy: every position is masked out")
    sel = np.ascontiguousarray(flat[rows])
    tsel = np.ascontiguousarray(targets[rows])
    nll, probs = kernels.get("xent_fwd")(sel, tsel)
    loss = np.asarray(nll.astype(np.float64).sum() / rows.size, dtype=logits.dtype)

    def backward(g):
        w = np.full(rows.size, float(g) / rows.size, dtype=logits.dtype)
        gsel = kernels.get("xent_bwd")(probs, tsel, w)
        full = np.zeros_like(flat)
        full[rows] = gsel
        return (full.reshape(logits.shape),)

    return make_result(loss, (logits,), backward, "cross_entropy")
