"""Interactive scale test: interview rounds, repeated judging, median and keyed scoring."""

from __future__ import annotations

import re
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

from ..datagen.client import ChatClient, assistant, user
from .agents import AGENT, AgentBackend, format_transcript
from .items import ITEMS_PER_DIMENSION, ItemBank, ScaleItem, render_prompt

ROUNDS = 3
REPETITIONS = 5
MAX_ATTEMPTS = 3
NEUTRAL = 3
_LIKERT = re.compile(r"\b([1-5])\b")


class MissingItemsError(ValueError):
    def __init__(self, missing: Sequence[str]):
        self.missing = list(missing)
        super().__init__(f"{len(self.missing)} item(s) not scored: {self.missing}")


@dataclass
class ScaleSession:
    item: ScaleItem
    transcript: list[dict]
    verdicts: list[int]
    final: int
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["item"] = asdict(self.item)
        return d


def parse_likert(raw: str) -> int:
    m = _LIKERT.search(raw)
    if not m:
        raise ValueError(f"no 1-5 rating in {raw[:60]!r}")
    return int(m.group(1))


def median_verdict(verdicts: Sequence[int]) -> int:
    if len(verdicts) % 2 == 0:
        raise ValueError("median aggregation needs an odd number of verdicts")
    return int(statistics.median(verdicts))


def judge_verdict(judge: ChatClient, prompt: str, max_attempts: int = MAX_ATTEMPTS) -> tuple[int, bool]:
    """One repetition; returns (score, parsed). Unusable after retries -> (3, False)."""
    msgs = [user(prompt)]
    for _ in range(max_attempts):
        raw = judge.complete(msgs)
        try:
            return parse_likert(raw), True
        except ValueError:
            msgs = msgs + [assistant(raw), user("Reply with a single number from 1 to 5 only.")]
    return NEUTRAL, False


def run_scale_item(item: ScaleItem, agent: AgentBackend, judge_client: ChatClient,
                   interviewer_client: ChatClient | None = None, system_prompt: str = "",
                   rounds: int = ROUNDS, repetitions: int = REPETITIONS) -> ScaleSession:
    interviewer = interviewer_client or judge_client
    transcript: list[dict] = []
    for r in range(1, rounds + 1):
        prompt = render_prompt("interviewer", statement=item.statement, round=r, rounds=rounds,
                               transcript=format_transcript(transcript, "Interviewee", "Interviewer"))
        question = interviewer.complete([user(prompt)]).strip()
        transcript.append({"speaker": "interviewer", "text": question})
        transcript.append({"speaker": AGENT, "text": agent.reply(system_prompt, transcript)})
    text = format_transcript(transcript, "Participant", "Interviewer")
    verdicts, flags = [], []
    for k in range(1, repetitions + 1):
        prompt = render_prompt("scale_judge", statement=item.statement, transcript=text, repetition=k,
                               repetitions=repetitions)
        score, ok = judge_verdict(judge_client, prompt)
        verdicts.append(score)
        if not ok:
            flags.append(f"repetition {k}: unparseable verdict, recorded as {NEUTRAL}")
    return ScaleSession(item, transcript, verdicts, median_verdict(verdicts), flags)


@dataclass
class TraitScore:
    dimension: str
    mean: float
    magnitude: float
    n_items: int

    def to_dict(self) -> dict:
        return asdict(self)


def _keyed_mean(sessions: Sequence[ScaleSession]) -> float:
    return sum(s.item.reverse(s.final) for s in sessions) / len(sessions)


def _check_complete(sessions: Sequence[ScaleSession], items: Sequence[ScaleItem]) -> None:
    have = {s.item.id for s in sessions}
    missing = [i.id for i in items if i.id not in have]
    if missing:
        raise MissingItemsError(missing)


def score_trait(sessions: Sequence[ScaleSession], bank: ItemBank | None = None,
                dimension: str | None = None) -> TraitScore:
    """Keyed mean over one dimension's items and its distance from the neutral 3."""
    if not sessions:
        raise MissingItemsError(["<all>"])
    dimension = dimension or sessions[0].item.dimension
    own = [s for s in sessions if s.item.dimension == dimension]
    if bank is not None:
        _check_complete(own, bank.for_dimension(dimension))
    elif len({s.item.id for s in own}) < ITEMS_PER_DIMENSION:
        raise MissingItemsError([f"{dimension}: {len(own)} of {ITEMS_PER_DIMENSION} items scored"])
    mean = _keyed_mean(own)
    return TraitScore(dimension, mean, abs(mean - NEUTRAL), len(own))


@dataclass
class ProfessionMatrix:
    dimensions: list[str]
    means: dict[str, dict[str, float]]   # agent profession -> scale dimension -> keyed mean

    def own_vs_off(self) -> dict[str, dict]:
        out = {}
        for agent, row in self.means.items():
            off = [v for d, v in row.items() if d != agent]
            own = row.get(agent)
            out[agent] = {"own": own, "off_mean": sum(off) / len(off) if off else None,
                          "discriminates": own is not None and all(own > v for v in off)}
        return out

    def to_dict(self) -> dict:
        return {"dimensions": self.dimensions, "means": self.means, "own_vs_off": self.own_vs_off()}


def score_profession(sessions: Mapping[str, Sequence[ScaleSession]], bank: ItemBank) -> ProfessionMatrix:
    """``sessions[agent_profession]`` covers every occupation's items; returns the mean matrix."""
    if not sessions:
        raise MissingItemsError(["<no sessions>"])
    dims = bank.dimensions()
    means = {}
    for agent, ss in sessions.items():
        _check_complete(ss, bank.items)
        means[agent] = {d: _keyed_mean([s for s in ss if s.item.dimension == d]) for d in dims}
    return ProfessionMatrix(dims, means)


def run_scale(items: Sequence[ScaleItem], agent: AgentBackend, judge_client: ChatClient,
              interviewer_client: ChatClient | None = None, system_prompt: str = "",
              parallelism: int = 1) -> list[ScaleSession]:
    def one(item):
        return run_scale_item(item, agent, judge_client, interviewer_client, system_prompt)

    if parallelism <= 1:
        return [one(i) for i in items]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, items))
