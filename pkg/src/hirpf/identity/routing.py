"""Block/category alternation, gate features and masked routing."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .. import numerics as nx
from ..numerics import Tensor


class CoverageError(ValueError):
    pass


def assign_categories(n_blocks: int, categories: Sequence[str]) -> dict[int, str]:
    """Block ``j`` hosts ``categories[j % len(categories)]``."""
    if not categories:
        raise CoverageError("no categories to assign")
    if n_blocks < len(categories):
        raise CoverageError(
            f"{n_blocks} blocks cannot host {len(categories)} categories; every category needs a block")
    return {j: categories[j % len(categories)] for j in range(n_blocks)}


def pooling_weights(T: int, prefix_len, batch: int, dtype) -> np.ndarray:
    """Row-stochastic ``(B, 1, T)`` matrix averaging the first ``prefix_len[b]`` positions."""
    if prefix_len is None:
        prefix_len = np.full(batch, T)
    prefix_len = np.broadcast_to(np.asarray(prefix_len, dtype=np.int64), (batch,))
    if (prefix_len < 1).any():
        raise ValueError("gate pooling needs at least one prefix position")
    P = np.minimum(prefix_len, T)
    w = np.zeros((batch, 1, T), dtype=dtype)
    for b, p in enumerate(P):
        w[b, 0, :p] = 1.0 / p
    return w


def gate_features(h: Tensor, prefix_len=None, mode: str = "prefix") -> Tensor:
    """Mean of block-input rows over the prompt prefix: ``(T, d)`` -> ``(d,)``, ``(B, T, d)`` -> ``(B, d)``.

    ``mode="mean"`` pools over the whole sequence regardless of ``prefix_len``.
    """
    if mode not in ("prefix", "mean"):
        raise ValueError(f"unknown gate feature mode {mode!r}")
    squeeze = h.ndim == 2
    if squeeze:
        h = nx.reshape(h, (1,) + h.shape)
    B, T, d = h.shape
    if T < 1:
        raise ValueError("gate_features needs T >= 1")
    pw = pooling_weights(T, None if mode == "mean" else prefix_len, B, h.dtype)
    pooled = nx.reshape(nx.matmul(Tensor(pw, dtype=h.dtype), h), (B, d))
    if squeeze:
        pooled = nx.reshape(pooled, (d,))
    return pooled


def route(features: Tensor, gate: Tensor, mask) -> Tensor:
    """Mixture weights ``masked_softmax(sigmoid(gate @ features), mask)``.

    ``features`` is ``(d,)`` or ``(B, d)``; ``gate`` is ``(n, d)``. An all-false
    mask yields all-zero weights (pass-through).
    """
    f = features if features.ndim == 2 else nx.reshape(features, (1, features.shape[0]))
    e = nx.matmul(f, nx.transpose(gate))
    w = nx.masked_softmax(nx.sigmoid(e), mask, strict=False)
    if features.ndim == 1:
        w = nx.reshape(w, (gate.shape[0],))
    return w
