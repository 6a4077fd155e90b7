"""Rubric-reading mock judges, interviewer and NPC for offline benchmark runs."""

from __future__ import annotations

import json
import re

from ..datagen.mock import DeterministicMock, detect_identities, named_identities
from ..datagen.prompts import identity_cues
from ..identity import IdentityRegistry
from .items import personality_items, profession_items

# checked in order; the first phrase found in the participant's lines decides
AGREEMENT_RUBRIC = (
    ("strongly disagree", 1), ("strongly agree", 5), ("disagree", 2), ("neutral", 3),
    ("not sure", 3), ("agree", 4),
)
BREACH_PATTERNS = (
    r"\bas an ai\b", r"\blanguage model\b", r"\bmy instructions\b", r"\bsystem prompt\b",
    r"\bi am role-?playing\b", r"\bas a character i cannot\b",
)
_INTERVIEW_QUESTIONS = (
    'How well does this describe you: "{s}"?',
    "Can you give me a concrete example from your own life?",
    "Would you say that holds most of the time?",
)


def _user_text(msgs) -> str:
    return next((m["content"] for m in msgs if m["role"] == "user"), "")


def _section(text: str, start: str, end: str | None = None) -> str:
    body = text.split(start, 1)[-1]
    if end and end in body:
        body = body.split(end, 1)[0]
    return body


def _participant_lines(text: str) -> str:
    return "\n".join(l for l in text.splitlines() if l.startswith("Participant:"))


def likert_from_text(text: str) -> int | None:
    low = text.lower()
    for phrase, score in AGREEMENT_RUBRIC:
        if phrase in low:
            return score
    return None


def breach_in(text: str) -> str | None:
    low = text.lower()
    for pat in BREACH_PATTERNS:
        m = re.search(pat, low)
        if m:
            return m.group(0)
    return None


def persona_from_prompt(system_text: str, registry: IdentityRegistry) -> list[str]:
    """Identity keys named in a role prompt's personality and profession fields."""
    if "Personality:" not in system_text:
        return []
    body = _section(system_text, "Personality:", "Stay in character")
    return named_identities(body, registry)


def persona_scale_answer(persona: list[str], registry: IdentityRegistry, question_text: str) -> str | None:
    """Likert-style answer of someone holding ``persona``; None when no scale item is quoted."""
    item = personality_items().find_text(question_text) or profession_items().find_text(question_text)
    if item is None:
        return None
    idents = [registry.lookup(k) for k in persona]
    if item.category == "personality":
        pol = next((i.polarity for i in idents if i.name == item.dimension and i.category == "personality"), None)
        if pol is None:
            return "I am neutral about that, it depends."
        toward = (item.key == "positive") == (pol == "high")
    else:
        profs = [i.name for i in idents if i.category == "profession"]
        if not profs:
            return "I am neutral about that, it depends."
        toward = (item.key == "positive") == (item.dimension in profs)
    return "I strongly agree, that is me." if toward else "I strongly disagree, that is not me."


def eval_handlers(registry: IdentityRegistry):
    def interviewer(msgs, rng):
        t = _user_text(msgs)
        if not t.startswith("You are interviewing"):
            return None
        statement = re.search(r'Statement: "(.*)"', t).group(1)
        rnd = int(re.search(r"This is question (\d+) of", t).group(1))
        return _INTERVIEW_QUESTIONS[min(rnd, len(_INTERVIEW_QUESTIONS)) - 1].format(s=statement)

    def scale_judge(msgs, rng):
        t = _user_text(msgs)
        if not t.startswith("Rate how well the statement"):
            return None
        lines = _participant_lines(_section(t, "Interview:", "Evaluation pass"))
        score = likert_from_text(lines)
        return str(score if score is not None else 3)

    def identity_judge(msgs, rng):
        t = _user_text(msgs)
        if "identify the identities the participant displays" not in t:
            return None
        lines = _participant_lines(_section(t, "Conversation:", "Evaluation pass"))
        return json.dumps({"identities": detect_identities(lines, registry)})

    def breach_judge(msgs, rng):
        t = _user_text(msgs)
        if not t.startswith("Check the participant's lines"):
            return None
        hit = breach_in(_section(t, "Participant lines:", "Answer in the following"))
        return json.dumps({"breach": hit is not None, "reason": hit or "none"})

    def coder(msgs, rng):
        t = _user_text(msgs)
        if not t.startswith("A respondent answered a survey question"):
            return None
        options = [o.strip() for o in _section(t, "Options:", "\n").split("|")]
        answer = _section(t, "Answer:", "\nReply with").lower()
        for o in options:
            if o.lower() in answer:
                return o
        return "unclear"

    def npc(msgs, rng):
        if not msgs or msgs[0]["role"] != "system" or "Your character:" not in msgs[0]["content"]:
            return None
        n = sum(1 for m in msgs if m["role"] == "assistant")
        opener = msgs[0]["content"].splitlines()[0]
        if n == 0:
            gist = opener.split(';')[0].split(',')[-1].strip().rstrip('.')
            return f"Hi there! {gist.capitalize()}. What do you think?"
        prompts = ("Interesting, why do you say that?", "And how would you handle it yourself?",
                   "Okay, what would you do next?")
        return prompts[int(rng.integers(len(prompts)))]

    def persona(msgs, rng):
        # a remote agent steered by a role prompt: answers scale items in character, else voices cues
        if not msgs or msgs[0]["role"] != "system":
            return None
        keys = persona_from_prompt(msgs[0]["content"], registry)
        if not keys and "You are role-playing a person." not in msgs[0]["content"]:
            return None
        heard = "\n".join(m["content"] for m in msgs if m["role"] == "user")
        answer = persona_scale_answer(keys, registry, heard)
        if answer is not None:
            return answer
        cues = identity_cues()["identities"]
        phrases = [cues[k]["cues"][0] for k in keys if k in cues] or ["i see"]
        n = sum(1 for m in msgs if m["role"] == "assistant")
        if n == 0:
            return " ".join(p.capitalize() + "." for p in phrases)
        return phrases[n % len(phrases)].capitalize() + "."

    return [interviewer, scale_judge, identity_judge, breach_judge, coder, npc, persona]


def mock_eval_client(seed: int = 0, registry: IdentityRegistry | None = None) -> DeterministicMock:
    registry = registry or IdentityRegistry()
    return DeterministicMock(seed, registry, handlers=eval_handlers(registry))
