"""Offline stand-in for the chat backend.

Every reply is a pure function of ``(seed, messages)``: the messages are
hashed into a seed for a private generator, the task is recognised from the
first user message and answered from a fixed template. Dialogue replies carry
cue phrases for the identities named in the prompt so that the keyword judge
below can recover them.
"""

from __future__ import annotations

import hashlib
import json
import re
from typing import Callable, Sequence

import numpy as np

from ..identity import IdentityRegistry
from .client import check_messages
from .prompts import identity_cues

Handler = Callable[[list[dict], np.random.Generator], "str | None"]

_PLACES = ("a neighbour's birthday barbecue", "a crowded train platform", "the office kitchen",
           "a weekend hiking trip", "a family dinner", "a product launch meeting", "a rainy bus stop",
           "a community garden", "a wedding reception", "a hospital waiting room", "a board game night",
           "a street market")
_TOPICS = {
    "artist": ("choosing pigments for an outdoor mural", "preparing a portfolio for a gallery",
               "restoring a water-damaged canvas", "lighting a sculpture exhibit"),
    "doctor": ("managing a patient's high blood pressure", "reading an abnormal blood test",
               "adjusting a child's antibiotic dosage", "triaging chest pain in the clinic"),
    "programmer": ("tracking down a memory leak in a web server", "designing a database schema",
                   "setting up continuous integration", "reviewing a large refactoring pull request"),
}
_OFF_MARK = "topics outside A's field"


def message_seed(seed: int, messages: Sequence[dict]) -> int:
    blob = json.dumps([seed, list(messages)], sort_keys=True, ensure_ascii=False).encode("utf-8")
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")


def detect_identities(text: str, registry: IdentityRegistry) -> list[str]:
    """Identity keys whose cue phrases occur in ``text`` (case-insensitive), registry order."""
    low = text.lower()
    cues = identity_cues()["identities"]
    return [k for k in registry.keys() if any(c in low for c in cues.get(k, {}).get("cues", ()))]


def named_identities(text: str, registry: IdentityRegistry) -> list[str]:
    """Identity keys whose readable description ("high openness", "doctor") occurs in ``text``."""
    low = text.lower()
    found = []
    for cat in registry.categories:
        for ident in registry.identities(cat):
            if re.search(r"\b" + re.escape(ident.describe().lower()) + r"\b", low):
                found.append(ident.key)
    return found


class DeterministicMock:
    def __init__(self, seed: int = 0, registry: IdentityRegistry | None = None,
                 handlers: Sequence[Handler] = (), malformed_rate: float = 0.0):
        self.seed = seed
        self.registry = registry or IdentityRegistry()
        self.handlers = list(handlers)
        self.malformed_rate = malformed_rate

    def complete(self, messages: Sequence[dict]) -> str:
        msgs = check_messages(messages)
        rng = np.random.default_rng(message_seed(self.seed, msgs))
        for h in self.handlers:
            out = h(msgs, rng)
            if out is not None:
                return out
        task = next((m["content"] for m in msgs if m["role"] == "user"), msgs[-1]["content"])
        if "Occasion number:" in task:
            return f"At {_PLACES[int(rng.integers(len(_PLACES)))]}, plans suddenly change."
        if "Topic number:" in task:
            prof = (named_identities(task, self.registry) or ["programmer"])[0]
            pool = _TOPICS.get(prof, ("a question from work",))
            return pool[int(rng.integers(len(pool)))].capitalize() + "."
        if task.startswith("Design a plot theme"):
            return self._plot(task, rng)
        if "Simulate a realistic" in task:
            if self.malformed_rate and rng.random() < self.malformed_rate:
                return "Sure! Here is the dialogue: {\"dialogue\": [oops"
            return self._dialogue(task, rng)
        if "identify the identities that A displays" in task:
            dialogue = task.split("Dialogue:", 1)[-1]
            a_lines = "\n".join(l for l in dialogue.splitlines() if l.startswith("A:"))
            return json.dumps({"identities": detect_identities(a_lines, self.registry)})
        return "Okay."

    def _plot(self, task: str, rng) -> str:
        head = task.split("(referred to as A)", 1)
        who = head[0].replace("Design a plot theme where a", "").strip() if len(head) > 1 else "someone"
        place = _PLACES[int(rng.integers(len(_PLACES)))]
        text = (f"B starts a conversation with A, {who}, at {place}. "
                f"As the talk goes on, A's reactions make their character obvious, and B responds in kind.")
        if "outside A's professional expertise" in task:
            text += f" B steers toward {_OFF_MARK}, and A admits not knowing much."
        return text

    def _dialogue(self, task: str, rng) -> str:
        header, _, rest = task.partition("Plot Abstract:")
        keys = named_identities(header, self.registry)
        off_topic = _OFF_MARK in rest
        lex = identity_cues()
        cue_lists = [list(lex["identities"][k]["cues"]) for k in keys]
        fillers = lex["fillers"]
        n_rounds = int(rng.integers(3, 6))
        turns = []
        for r in range(n_rounds):
            turns.append({"speaker": "B", "text": f"Hey, {fillers[int(rng.integers(len(fillers)))]}?"})
            parts = []
            if cue_lists:
                # every identity gets a cue in the first round, then one at random per round
                picks = range(len(cue_lists)) if r == 0 else [int(rng.integers(len(cue_lists)))]
                for i in picks:
                    cs = cue_lists[i]
                    parts.append(cs[int(rng.integers(len(cs)))].capitalize() + ".")
            if off_topic and r % 2 == 1:
                ig = lex["ignorance"]
                parts.append(ig[int(rng.integers(len(ig)))].capitalize() + ".")
            parts.append(fillers[int(rng.integers(len(fillers)))].capitalize() + ".")
            turns.append({"speaker": "A", "text": " ".join(parts)})
        return json.dumps({"dialogue": turns})
