"""Small synthetic dialogue sets used by the overfit smoke run and tests."""

from __future__ import annotations

import numpy as np

from .data import DialogueSample, Turn

_ACTIVATIONS = (
    ["high-extraversion", "programmer"],
    ["low-extraversion", "doctor"],
    ["high-openness", "artist"],
    ["doctor"],
)
_TOPICS = ("rain", "tea", "code", "jazz", "chess", "bikes", "maps", "soup")
_REPLIES = ("i love it", "not for me", "every day", "only at night")


def overfit_fixture(n: int = 32, seed: int = 0) -> list[DialogueSample]:
    """``n`` two-turn dialogues (B asks, A answers) with short memorisable replies.

    The reply is a function of the topic and the activation, so a model that
    reads both can drive the loss on A tokens to near zero.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        act = _ACTIVATIONS[i % len(_ACTIVATIONS)]
        topic = _TOPICS[(i // len(_ACTIVATIONS)) % len(_TOPICS)]
        reply = _REPLIES[int(rng.integers(len(_REPLIES)))]
        turns = [Turn("B", f"do you like {topic}?"), Turn("A", f"{topic}? {reply}.")]
        out.append(DialogueSample(f"overfit-{i:03d}", list(act), turns, source="fixture"))
    return out
