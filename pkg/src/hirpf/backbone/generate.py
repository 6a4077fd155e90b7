"""Autoregressive decoding without a KV cache."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..numerics import no_grad
from .tokenizer import EOS


@dataclass(frozen=True)
class Sampling:
    greedy: bool = True
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.greedy and self.temperature <= 0:
            raise ValueError("temperature must be positive when sampling")


def generate(logits_fn: Callable[[np.ndarray], np.ndarray], prompt, max_new: int,
             sampling: Sampling = Sampling(), max_len: int | None = None,
             stop_ids=(EOS,)) -> list[int]:
    """Continue ``prompt`` by up to ``max_new`` tokens.

    ``logits_fn(ids)`` returns the last-position logits for a 1-d id array.
    The stop token, if produced, is included in the returned continuation.
    """
    prompt = [int(t) for t in prompt]
    if not prompt:
        raise ValueError("generate needs a non-empty prompt")
    rng = np.random.default_rng(sampling.seed)
    ids = list(prompt)
    out: list[int] = []
    with no_grad():
        for _ in range(max_new):
            if max_len is not None and len(ids) >= max_len:
                break
            logits = np.asarray(logits_fn(np.asarray(ids, dtype=np.int64)), dtype=np.float64)
            if sampling.greedy:
                nxt = int(np.argmax(logits))
            else:
                z = logits / sampling.temperature
                p = np.exp(z - z.max())
                p /= p.sum()
                nxt = int(rng.choice(p.size, p=p))
            ids.append(nxt)
            out.append(nxt)
            if nxt in stop_ids:
                break
    return out
