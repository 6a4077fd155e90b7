"""Open situation test: NPC-led episodes, breach screening, majority detection, accuracy."""

from __future__ import annotations

import json
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

from ..datagen.client import ChatClient, assistant, system, user
from ..datagen.pipelines import parse_verdict
from ..identity import PERSONALITY, PROFESSION, ActivationSet, IdentityRegistry, activate
from ..trainer.data import role_prompt
from .agents import AGENT, AgentBackend, agent_lines, format_transcript
from .items import ScenarioSpec, render_prompt

ROUNDS = 4
REPETITIONS = 5
MAJORITY = 3
MAX_ATTEMPTS = 3


@dataclass
class SituationEpisode:
    assigned: list[str]
    scenario_id: int
    transcript: list[dict] = field(default_factory=list)
    breach: bool = False
    breach_reason: str | None = None
    verdicts: list[list[str]] = field(default_factory=list)
    detected: list[str] = field(default_factory=list)
    valid: bool = True
    invalid_reason: str | None = None
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def majority_detect(verdicts: Sequence[Sequence[str]], threshold: int = MAJORITY) -> list[str]:
    """Identities present in at least ``threshold`` verdicts, sorted."""
    counts = Counter(k for v in verdicts for k in set(v))
    return sorted(k for k, c in counts.items() if c >= threshold)


def parse_breach(raw: str) -> tuple[bool, str]:
    start = raw.find("{")
    if start >= 0:
        try:
            obj, _ = json.JSONDecoder().raw_decode(raw[start:])
            if isinstance(obj, dict) and isinstance(obj.get("breach"), bool):
                return obj["breach"], str(obj.get("reason", ""))
        except json.JSONDecodeError:
            pass
    word = raw.strip().lower().split()[:1]
    if word and word[0].strip(".,!") in ("yes", "true"):
        return True, raw.strip()
    if word and word[0].strip(".,!") in ("no", "false"):
        return False, raw.strip()
    raise ValueError(f"unreadable breach verdict {raw[:60]!r}")


def _ask(client: ChatClient, prompt: str, parse, retry_hint: str):
    msgs = [user(prompt)]
    for _ in range(MAX_ATTEMPTS):
        raw = client.complete(msgs)
        try:
            return parse(raw)
        except ValueError:
            msgs = msgs + [assistant(raw), user(retry_hint)]
    raise ValueError(f"no usable verdict after {MAX_ATTEMPTS} attempts")


def _options(registry: IdentityRegistry, cat: str) -> str:
    return ", ".join(i.key for i in registry.identities(cat)) if cat in registry.categories else "none"


def _npc_turn(npc_client: ChatClient, scenario: ScenarioSpec, transcript) -> str:
    msgs = [system(scenario.npc_system_prompt())]
    for t in transcript:
        # from the NPC's side its own turns are the assistant's
        msgs.append(user(t["text"]) if t["speaker"] == AGENT else assistant(t["text"]))
    if len(msgs) == 1:
        msgs.append(user("(The participant is in front of you. Start the conversation.)"))
    return npc_client.complete(msgs).strip()


def run_situation_episode(identities: ActivationSet | Sequence[str], scenario: ScenarioSpec,
                          agent: AgentBackend, npc_client: ChatClient, judge_client: ChatClient,
                          registry: IdentityRegistry | None = None, rounds: int = ROUNDS,
                          repetitions: int = REPETITIONS) -> SituationEpisode:
    registry = registry or IdentityRegistry()
    act = identities if isinstance(identities, ActivationSet) else activate(registry, list(identities))
    ep = SituationEpisode(list(act.keys), scenario.id)
    sys_prompt = render_prompt("agent_situation", role_prompt=role_prompt(act), background=scenario.background)
    try:
        for _ in range(rounds):
            ep.transcript.append({"speaker": "npc", "text": _npc_turn(npc_client, scenario, ep.transcript)})
            ep.transcript.append({"speaker": AGENT, "text": agent.reply(sys_prompt, ep.transcript)})
        lines = "\n".join(f"- {l}" for l in agent_lines(ep.transcript))
        ep.breach, ep.breach_reason = _ask(judge_client, render_prompt("breach_judge", agent_lines=lines),
                                           parse_breach, 'Answer with {"breach": true} or {"breach": false} only.')
        text = format_transcript(ep.transcript, "Participant", "Other")
        for k in range(1, repetitions + 1):
            prompt = render_prompt("identity_judge", personality_options=_options(registry, PERSONALITY),
                                   profession_options=_options(registry, PROFESSION), transcript=text,
                                   repetition=k, repetitions=repetitions)
            try:
                v = _ask(judge_client, prompt, lambda raw: parse_verdict(raw, registry),
                         'Answer with {"identities": [...]} only.')
            except ValueError:
                v = []
                ep.flags.append(f"repetition {k}: unparseable identity verdict, recorded as empty")
            ep.verdicts.append(sorted(v))
    except Exception as exc:  # any backend failure invalidates the episode
        ep.valid, ep.invalid_reason = False, f"{type(exc).__name__}: {exc}"
        return ep
    ep.detected = majority_detect(ep.verdicts)
    return ep


@dataclass
class AccuracyReport:
    per_dimension: dict[str, float | None]
    counts: dict[str, dict[str, int]]
    by_identity_count: dict[int, float]
    by_identity_count_counts: dict[int, dict[str, int]]
    overall: float | None
    n_episodes: int
    n_invalid: int
    n_breach: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["by_identity_count"] = {str(k): v for k, v in self.by_identity_count.items()}
        d["by_identity_count_counts"] = {str(k): v for k, v in self.by_identity_count_counts.items()}
        return d


def compute_accuracy(episodes: Sequence[SituationEpisode], registry: IdentityRegistry | None = None) -> AccuracyReport:
    """Share of assigned identities detected per dimension; a breach fails every assigned identity.

    Detected identities that were not assigned do not count against the agent.
    """
    if not episodes:
        raise ValueError("no episodes to score")
    registry = registry or IdentityRegistry()
    dims = [t for t in registry.traits] + ([PROFESSION] if PROFESSION in registry.categories else [])
    counts = {d: {"hit": 0, "total": 0} for d in dims}
    buckets: dict[int, dict[str, int]] = {}
    valid = [e for e in episodes if e.valid]
    for e in valid:
        b = buckets.setdefault(len(e.assigned), {"hit": 0, "total": 0})
        detected = set(e.detected)
        for key in e.assigned:
            dim = registry.lookup(key).dimension
            hit = int(not e.breach and key in detected)
            counts[dim]["hit"] += hit
            counts[dim]["total"] += 1
            b["hit"] += hit
            b["total"] += 1
    per_dim = {d: (c["hit"] / c["total"] if c["total"] else None) for d, c in counts.items()}
    hits = sum(c["hit"] for c in counts.values())
    total = sum(c["total"] for c in counts.values())
    by_n = {n: buckets[n]["hit"] / buckets[n]["total"] for n in sorted(buckets) if buckets[n]["total"]}
    return AccuracyReport(per_dim, counts, by_n, {n: buckets[n] for n in sorted(buckets)},
                          hits / total if total else None, len(episodes), len(episodes) - len(valid),
                          sum(1 for e in valid if e.breach))


def default_grid(registry: IdentityRegistry | None = None) -> list[list[str]]:
    """Every single identity, then every trait polarity paired with every profession."""
    registry = registry or IdentityRegistry()
    singles = [[i.key] for i in registry.identities()]
    pairs = []
    if PERSONALITY in registry.categories and PROFESSION in registry.categories:
        pairs = [[p.key, q.key] for p in registry.identities(PERSONALITY) for q in registry.identities(PROFESSION)]
    return singles + pairs


def run_situation_test(grid: Sequence[Sequence[str]], scenarios: Sequence[ScenarioSpec], agent_factory,
                       npc_client: ChatClient, judge_client: ChatClient,
                       registry: IdentityRegistry | None = None, parallelism: int = 1) -> list[SituationEpisode]:
    """One episode per (combination, scenario); results in grid-major order."""
    registry = registry or IdentityRegistry()
    jobs = [(list(c), s) for c in grid for s in scenarios]

    def one(job):
        combo, scen = job
        act = activate(registry, combo)
        return run_situation_episode(act, scen, agent_factory(act), npc_client, judge_client, registry)

    if parallelism <= 1:
        return [one(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, jobs))
