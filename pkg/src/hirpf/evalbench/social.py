"""Social-simulation drivers: a questionnaire over a population and a round-robin debate."""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

from ..datagen.client import ChatClient, user
from ..identity import ActivationSet
from ..trainer.data import role_prompt
from .agents import AGENT, AgentBackend
from .items import render_prompt

AgentFactory = Callable[[ActivationSet], AgentBackend]


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    options: tuple[str, ...] = ()


@dataclass
class Cell:
    signature: str
    question_id: str
    answer: str | None = None
    code: str | None = None
    error: str | None = None


@dataclass
class QuestionnaireTable:
    cells: dict[tuple[str, str], Cell] = field(default_factory=dict)

    def category_counts(self) -> dict[str, dict[str, int]]:
        out: dict[str, Counter] = {}
        for (sig, qid), c in sorted(self.cells.items()):
            if c.code is not None:
                out.setdefault(qid, Counter())[c.code] += 1
        return {q: dict(sorted(cnt.items())) for q, cnt in out.items()}

    def to_dict(self) -> dict:
        return {"cells": [asdict(self.cells[k]) for k in sorted(self.cells)],
                "category_counts": self.category_counts()}


def code_answer(coder: ChatClient, q: Question, answer: str) -> str:
    raw = coder.complete([user(render_prompt("questionnaire_coder", question=q.text,
                                             options=" | ".join(q.options), answer=answer))]).strip()
    for o in q.options:
        if raw.lower() == o.lower():
            return o
    return "unclear"


def run_questionnaire(population: Sequence[ActivationSet], questions: Sequence[Question],
                      agent_factory: AgentFactory, coder: ChatClient | None = None) -> QuestionnaireTable:
    """Every identity configuration answers every question; failures are kept as error cells."""
    if not population:
        raise ValueError("questionnaire needs at least one respondent")
    table = QuestionnaireTable()
    for act in population:
        agent = agent_factory(act)
        prompt = role_prompt(act)
        for q in questions:
            cell = Cell(act.signature, q.id)
            try:
                cell.answer = agent.reply(prompt, [{"speaker": "interviewer", "text": q.text}])
                if coder is not None and q.options:
                    cell.code = code_answer(coder, q, cell.answer)
            except Exception as exc:  # a failed cell must not stop the survey
                cell.error = f"{type(exc).__name__}: {exc}"
            table.cells[(act.signature, q.id)] = cell
    return table


@dataclass
class DebateTurn:
    round: int
    speaker: str
    text: str


TRUNCATED = "<truncated>"


def run_debate(participants: Sequence[ActivationSet], topic: str, rounds: int,
               agent_factory: AgentFactory) -> list[DebateTurn]:
    """Round-robin: each speaker sees the topic and everything said so far."""
    if len(participants) < 2:
        raise ValueError("a debate needs at least two participants")
    agents = [(p.signature, agent_factory(p), role_prompt(p)) for p in participants]
    opener = render_prompt("debate_turn", topic=topic)
    out: list[DebateTurn] = []
    for r in range(rounds):
        for sig, agent, prompt in agents:
            transcript = [{"speaker": "moderator", "text": opener}]
            for t in out:
                transcript.append({"speaker": AGENT if t.speaker == sig else "other",
                                   "text": t.text if t.speaker == sig else f"[{t.speaker}] {t.text}"})
            try:
                text = agent.reply(prompt, transcript)
            except Exception as exc:  # keep what was said, mark the cut
                out.append(DebateTurn(r, TRUNCATED, f"{type(exc).__name__}: {exc}"))
                return out
            out.append(DebateTurn(r, sig, text))
    return out
