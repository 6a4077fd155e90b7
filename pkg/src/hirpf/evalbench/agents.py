"""Agent backends: the local adapted model, a remote chat model and scripted test agents.

A transcript is a list of ``{"speaker": ..., "text": ...}`` turns where the
agent's own turns have speaker ``"agent"``; anything else is the other party.
"""

from __future__ import annotations

import threading
from typing import Callable, Protocol, Sequence

from ..backbone import EOS, Sampling
from ..datagen.client import ChatClient, assistant, system, user
from ..datagen.prompts import identity_cues
from ..identity import ActivationSet
from ..trainer.data import PromptBuilder, Turn
from .items import ItemBank

AGENT = "agent"


class AgentBackend(Protocol):
    def reply(self, system_prompt: str, transcript: Sequence[dict]) -> str: ...


def agent_lines(transcript: Sequence[dict]) -> list[str]:
    return [t["text"] for t in transcript if t["speaker"] == AGENT]


def format_transcript(transcript: Sequence[dict], agent_label: str = "Participant",
                      other_label: str = "Interlocutor") -> str:
    if not transcript:
        return "(nothing yet)"
    return "\n".join(f"{agent_label if t['speaker'] == AGENT else other_label}: {t['text']}" for t in transcript)


class LocalAgent:
    """Adapted model under a fixed activation; the other party speaks as B, the agent as A.

    The canonical role prompt for the activation is the conditioning prefix, so
    ``system_prompt`` is not fed to the model. A lock keeps one episode at a
    time on the shared model.
    """

    def __init__(self, model, activation: ActivationSet, max_new: int = 64,
                 sampling: Sampling = Sampling(), builder: PromptBuilder | None = None):
        self.model = model
        self.activation = activation
        self.max_new = max_new
        self.sampling = sampling
        self.builder = builder or PromptBuilder()
        self._lock = threading.Lock()

    def reply(self, system_prompt: str, transcript: Sequence[dict]) -> str:
        turns = [Turn("A" if t["speaker"] == AGENT else "B", t["text"]) for t in transcript]
        max_len = self.model.backbone.config.max_len
        ids, prefix_len = self.builder.chat_prompt(self.activation, turns)
        # keep room for the reply: drop the oldest turns, never the role prompt
        while len(ids) + self.max_new > max_len and turns:
            turns = turns[1:]
            ids, prefix_len = self.builder.chat_prompt(self.activation, turns)
        with self._lock:
            out = self.model.generate(ids, self.activation, self.max_new, self.sampling, prefix_len=prefix_len)
        if out and out[-1] == EOS:
            out = out[:-1]
        return self.builder.tokenizer.detokenize(out, errors="replace").strip()


class RemoteAgent:
    """A chat model steered by the system prompt (baseline path)."""

    def __init__(self, client: ChatClient):
        self.client = client

    def reply(self, system_prompt: str, transcript: Sequence[dict]) -> str:
        msgs = [system(system_prompt)]
        for t in transcript:
            msgs.append(assistant(t["text"]) if t["speaker"] == AGENT else user(t["text"]))
        if len(msgs) == 1:
            msgs.append(user("Hello."))
        return self.client.complete(msgs).strip()


class ScriptedAgent:
    """Pure function of (system prompt, transcript)."""

    def __init__(self, fn: Callable[[str, Sequence[dict]], str]):
        self.fn = fn

    def reply(self, system_prompt: str, transcript: Sequence[dict]) -> str:
        return self.fn(system_prompt, transcript)


def constant_agent(text: str) -> ScriptedAgent:
    return ScriptedAgent(lambda s, t: text)


def profile_agent(levels: dict[str, str], bank: ItemBank, default: str | None = None) -> ScriptedAgent:
    """Answers scale items as someone high or low on each dimension.

    ``levels`` maps dimension -> "high" | "low"; the agent strongly agrees with
    items keyed toward its level and strongly disagrees otherwise. Dimensions
    not listed use ``default`` (None -> neutral answer).
    """

    def fn(system_prompt, transcript):
        question = next((t["text"] for t in transcript if t["speaker"] != AGENT), "")
        item = bank.find_text(question)
        if item is None:
            return "I am not sure what you mean."
        level = levels.get(item.dimension, default)
        if level is None:
            return "I am neutral about that, it depends."
        toward = (item.key == "positive") == (level == "high")
        return "I strongly agree, that is me." if toward else "I strongly disagree, that is not me."

    return ScriptedAgent(fn)


def cue_agent(identities: Sequence[str], breach: bool = False) -> ScriptedAgent:
    """Situation-test agent that voices cue phrases of the given identity keys, one per turn (cycled)."""
    cues = identity_cues()["identities"]
    phrases = [cues[k]["cues"][0] for k in identities if k in cues] or ["i see"]

    def fn(system_prompt, transcript):
        n = len(agent_lines(transcript))
        if breach and n == 0:
            return "As an AI model, I do not have personal experiences."
        line = " ".join(p.capitalize() + "." for p in phrases) if n == 0 else phrases[n % len(phrases)].capitalize() + "."
        return line

    return ScriptedAgent(fn)
