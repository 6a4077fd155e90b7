"""Generation pipelines, re-annotation and the full mock-or-live dataset run."""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from ..identity import PERSONALITY, PROFESSION, IdentityRegistry, activate
from ..trainer.data import DialogueSample, Turn
from .client import ChatClient, ChatClientError, assistant, user
from .prompts import JSON_EXAMPLE, identity_cues, render, template_version
from .stats import compute_stats, stats_report

log = logging.getLogger(__name__)

MAX_ATTEMPTS = 3
PLOT_JSON_EXAMPLE = json.dumps({"plot": "..."})


class DialogueParseError(ValueError):
    pass


class RetryExhausted(RuntimeError):
    def __init__(self, reason: str, raws: list[str]):
        super().__init__(reason)
        self.raws = raws


@dataclass
class GenRecord:
    id: str
    pipeline: str
    identities: list[str]
    stages: dict = field(default_factory=dict)
    status: str = "pending"
    reason: str | None = None
    attempts: int = 0
    sample: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)


class Provenance:
    """Thread-safe collection of stage records, written out sorted by id."""

    def __init__(self):
        self._records: dict[str, GenRecord] = {}
        self._lock = threading.Lock()

    def add(self, rec: GenRecord) -> None:
        with self._lock:
            self._records[rec.id] = rec

    def get(self, rec_id: str) -> GenRecord | None:
        return self._records.get(rec_id)

    @property
    def records(self) -> list[GenRecord]:
        return [self._records[k] for k in sorted(self._records)]

    def with_status(self, status: str) -> list[GenRecord]:
        return [r for r in self.records if r.status == status]

    def write(self, path) -> None:
        _write_jsonl(path, (r.to_dict() for r in self.records))


def _write_jsonl(path, rows) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def _first_json(raw: str):
    start = raw.find("{")
    lstart = raw.find("[")
    if start < 0 and lstart < 0:
        raise DialogueParseError("no json object in reply")
    if start < 0 or (0 <= lstart < start):
        start = lstart
    try:
        obj, _ = json.JSONDecoder().raw_decode(raw[start:])
    except json.JSONDecodeError as exc:
        raise DialogueParseError(f"invalid json: {exc.msg}") from None
    return obj


def parse_dialogue(raw: str) -> list[Turn]:
    """Turns from ``{"dialogue": [{speaker, text}, ...]}`` (or a bare list); B must open, speakers alternate."""
    obj = _first_json(raw)
    turns = obj.get("dialogue") if isinstance(obj, dict) else obj
    if not isinstance(turns, list) or len(turns) < 2:
        raise DialogueParseError("dialogue needs a list of at least 2 turns")
    out = []
    for k, t in enumerate(turns):
        if not isinstance(t, dict) or "speaker" not in t:
            raise DialogueParseError(f"turn {k} has no speaker field")
        sp, text = str(t["speaker"]).strip().upper(), t.get("text")
        if sp not in ("A", "B"):
            raise DialogueParseError(f"turn {k} speaker {t['speaker']!r} is not A or B")
        if not isinstance(text, str) or not text.strip():
            raise DialogueParseError(f"turn {k} has no text")
        out.append(Turn(sp, text.strip()))
    if out[0].speaker != "B":
        raise DialogueParseError("dialogue must be opened by B")
    for k in range(1, len(out)):
        if out[k].speaker == out[k - 1].speaker:
            raise DialogueParseError(f"turns {k - 1} and {k} have the same speaker")
    return out


def _plain(text: str) -> str:
    """Plot replies may come wrapped in ``{"plot": ...}``."""
    try:
        obj = _first_json(text)
    except DialogueParseError:
        return text.strip()
    if isinstance(obj, dict) and isinstance(obj.get("plot"), str):
        return obj["plot"].strip()
    return text.strip()


def ask(client: ChatClient, prompt: str) -> str:
    return client.complete([user(prompt)])


def ask_parsed(client: ChatClient, prompt: str, parse: Callable[[str], object],
               max_attempts: int = MAX_ATTEMPTS):
    """Ask, parse, and on failure re-ask inside the same conversation; returns (value, raws)."""
    messages = [user(prompt)]
    raws = []
    for attempt in range(max_attempts):
        raw = client.complete(messages)
        raws.append(raw)
        try:
            return parse(raw), raws
        except (DialogueParseError, ValueError) as exc:
            reason = str(exc)
            messages = messages + [assistant(raw), user(render("retry", reason=reason))]
    raise RetryExhausted(f"unparseable after {max_attempts} attempts: {reason}", raws)


def _dialogue_stage(client, prompt, rec: GenRecord) -> list[Turn]:
    try:
        turns, raws = ask_parsed(client, prompt, parse_dialogue)
    except RetryExhausted as exc:
        rec.attempts = len(exc.raws)
        raise
    rec.attempts = len(raws)
    rec.stages["raw_dialogue"] = raws[-1]
    return turns


def _run(indices, fn, parallelism: int):
    if parallelism <= 1:
        return [fn(i) for i in indices]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(fn, indices))


def _finish(rec: GenRecord, build: Callable[[GenRecord], list[Turn]], provenance: Provenance,
            source: str) -> DialogueSample | None:
    try:
        turns = build(rec)
    except RetryExhausted as exc:
        rec.status, rec.reason = "rejected", str(exc)
        rec.stages["raw_dialogue_attempts"] = exc.raws
        provenance.add(rec)
        log.warning("%s rejected: %s", rec.id, exc)
        return None
    except ChatClientError as exc:
        rec.status, rec.reason = "rejected", f"backend failure: {exc}"
        provenance.add(rec)
        return None
    sample = DialogueSample(rec.id, list(rec.identities), turns, source=source)
    rec.status, rec.sample = "ok", sample.to_dict()
    provenance.add(rec)
    return sample


def _versions(*names) -> dict:
    return {n: template_version(n) for n in names}


def gen_personality(trait: str, polarity: str, count: int, client: ChatClient,
                    registry: IdentityRegistry | None = None, provenance: Provenance | None = None,
                    parallelism: int = 1, start: int = 0) -> list[DialogueSample]:
    """Occasion -> plot -> dialogue for one trait polarity."""
    registry = registry or IdentityRegistry()
    ident = registry.lookup(f"{polarity}-{trait}")
    if ident.category != PERSONALITY:
        raise ValueError(f"{ident.key} is not a personality identity")
    provenance = provenance if provenance is not None else Provenance()
    desc = identity_cues()["identities"].get(ident.key, {}).get("desc") or "shows this trait clearly"
    fp = ident.describe()

    def one(i):
        rec = GenRecord(f"personality-{ident.key}-{i:04d}", "personality", [ident.key],
                        {"templates": _versions("personality_occasion", "personality_plot",
                                                "personality_dialogue")})

        def build(rec):
            occasion = ask(client, render("personality_occasion", factor_polarity=fp, index=i)).strip()
            rec.stages["occasion"] = occasion
            plot = _plain(ask(client, render("personality_plot", factor_polarity=fp, occasion=occasion,
                                             desc=desc)))
            rec.stages["plot"] = plot
            return _dialogue_stage(client, render("personality_dialogue", factor_polarity=fp, plot=plot,
                                                  json_example=JSON_EXAMPLE), rec)
        return _finish(rec, build, provenance, "personality")

    return [s for s in _run(range(start, start + count), one, parallelism) if s is not None]


def gen_profession(profession: str, count: int, client: ChatClient, off_topic: bool = False,
                   b_profession: str | None = None, registry: IdentityRegistry | None = None,
                   provenance: Provenance | None = None, parallelism: int = 1,
                   start: int = 0) -> list[DialogueSample]:
    """Topic -> plot -> dialogue; ``off_topic`` pairs A with another profession's topic."""
    registry = registry or IdentityRegistry()
    ident = registry.lookup(profession)
    if ident.category != PROFESSION:
        raise ValueError(f"{ident.key} is not a profession")
    others = [p.key for p in registry.identities(PROFESSION) if p.key != ident.key]
    if off_topic:
        if b_profession is not None and registry.lookup(b_profession).key == ident.key:
            raise ValueError("off-topic dialogues need B's profession to differ from A's")
        if b_profession is None and not others:
            raise ValueError("off-topic dialogues need a second profession in the registry")
    provenance = provenance if provenance is not None else Provenance()
    source = "profession_off" if off_topic else "profession_on"

    def one(i):
        b = (b_profession or others[i % len(others)]) if off_topic else None
        rid = f"{source}-{ident.key}-{b}-{i:04d}" if off_topic else f"{source}-{ident.key}-{i:04d}"
        plot_t = "profession_plot_off" if off_topic else "profession_plot_on"
        rec = GenRecord(rid, source, [ident.key],
                        {"templates": _versions("profession_topic", plot_t, "profession_dialogue")})

        def build(rec):
            topic_owner = b if off_topic else ident.key
            topic = ask(client, render("profession_topic", profession=topic_owner, index=i)).strip()
            rec.stages["topic"] = topic
            if off_topic:
                rec.stages["b_profession"] = b
                prompt = render(plot_t, profession=ident.key, b_profession=b, json_example=PLOT_JSON_EXAMPLE)
            else:
                prompt = render(plot_t, profession=ident.key)
            plot = _plain(ask(client, prompt + f"Topic: {topic}\n"))
            rec.stages["plot"] = plot
            return _dialogue_stage(client, render("profession_dialogue", profession=ident.key, plot=plot,
                                                  json_example=JSON_EXAMPLE), rec)
        return _finish(rec, build, provenance, source)

    return [s for s in _run(range(start, start + count), one, parallelism) if s is not None]


def gen_multi(trait_polarity: str, profession: str, count: int, client: ChatClient,
              registry: IdentityRegistry | None = None, provenance: Provenance | None = None,
              parallelism: int = 1, start: int = 0) -> list[DialogueSample]:
    """One personality identity plus one profession per dialogue."""
    registry = registry or IdentityRegistry()
    act = activate(registry, [trait_polarity, profession])
    pers, prof = act.in_category(PERSONALITY), act.in_category(PROFESSION)
    if len(pers) != 1 or len(prof) != 1:
        raise ValueError("multi-identity dialogues pair exactly one trait polarity with one profession")
    p, q = pers[0], prof[0]
    provenance = provenance if provenance is not None else Provenance()
    fp = p.describe()

    def one(i):
        rec = GenRecord(f"multi-{p.key}-{q.key}-{i:04d}", "multi", [p.key, q.key],
                        {"templates": _versions("personality_occasion", "multi_plot", "multi_dialogue")})

        def build(rec):
            occasion = ask(client, render("personality_occasion", factor_polarity=fp, index=i)).strip()
            rec.stages["occasion"] = occasion
            plot = _plain(ask(client, render("multi_plot", factor_polarity=fp, profession=q.key,
                                             occasion=occasion)))
            rec.stages["plot"] = plot
            return _dialogue_stage(client, render("multi_dialogue", factor_polarity=fp, profession=q.key,
                                                  plot=plot, json_example=JSON_EXAMPLE), rec)
        return _finish(rec, build, provenance, "multi")

    return [s for s in _run(range(start, start + count), one, parallelism) if s is not None]


def dialogue_text(sample: DialogueSample) -> str:
    return "\n".join(f"{t.speaker}: {t.text}" for t in sample.turns)


def parse_verdict(raw: str, registry: IdentityRegistry) -> list[str]:
    """Identity keys from ``{"identities": [...]}``; names outside the registry are ignored."""
    try:
        obj = _first_json(raw)
    except DialogueParseError as exc:
        raise ValueError(str(exc)) from None
    names = obj.get("identities") if isinstance(obj, dict) else None
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        raise ValueError("verdict needs an 'identities' list of strings")
    keys = []
    for n in names:
        if n in registry:
            k = registry.lookup(n).key
            if k not in keys:
                keys.append(k)
    return keys


def reannotate(samples: Sequence[DialogueSample], client: ChatClient,
               registry: IdentityRegistry | None = None, parallelism: int = 1,
               max_attempts: int = MAX_ATTEMPTS):
    """Judge each dialogue blind; keep a sample iff its requested identities are all detected."""
    registry = registry or IdentityRegistry()
    pers = ", ".join(i.key for i in registry.identities(PERSONALITY)) if PERSONALITY in registry.categories else ""
    profs = ", ".join(i.key for i in registry.identities(PROFESSION)) if PROFESSION in registry.categories else ""

    def one(s: DialogueSample):
        prompt = render("reannotate", personality_options=pers or "none", profession_options=profs or "none",
                        dialogue=dialogue_text(s))
        try:
            verdict, raws = ask_parsed(client, prompt, lambda raw: parse_verdict(raw, registry), max_attempts)
        except ChatClientError as exc:
            return False, {"verdict": None, "kept": False, "reason": f"backend failure: {exc}", "attempts": 0}
        except RetryExhausted as exc:
            return False, {"verdict": None, "kept": False, "reason": str(exc),
                           "attempts": len(exc.raws), "raw": exc.raws[-1]}
        requested = [registry.lookup(n).key for n in s.active_identities]
        missing = [k for k in requested if k not in verdict]
        ok = not missing
        ann = {"verdict": verdict, "kept": ok, "attempts": len(raws),
               "reason": None if ok else f"not detected: {missing}"}
        return ok, ann

    results = _run(list(samples), one, parallelism)
    kept, dropped = [], []
    for s, (ok, ann) in zip(samples, results):
        s2 = DialogueSample(s.id, list(s.active_identities), list(s.turns), s.source,
                            dict(s.annotation or {}, reannotation=ann))
        (kept if ok else dropped).append(s2)
    return kept, dropped


@dataclass
class DatagenPlan:
    per_personality: int = 1
    per_profession_on: int = 1
    per_profession_off: int = 1
    per_multi: int = 1
    multi_pairs: list[list[str]] | None = None   # None: every trait polarity with every profession
    reannotate: bool = True
    parallelism: int = 1

    @classmethod
    def from_dict(cls, d) -> DatagenPlan:
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown datagen keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def pairs(self, registry: IdentityRegistry) -> list[tuple[str, str]]:
        if self.multi_pairs is not None:
            return [tuple(p) for p in self.multi_pairs]
        return [(p.key, q.key) for p in registry.identities(PERSONALITY) for q in registry.identities(PROFESSION)]


@dataclass
class DatagenResult:
    samples: list[DialogueSample]
    dropped: list[dict]
    provenance: Provenance
    stats: dict


def run_datagen(client: ChatClient, plan: DatagenPlan | None = None, registry: IdentityRegistry | None = None,
                out_dir=None) -> DatagenResult:
    """All three pipelines, then re-annotation; writes dataset/provenance/dropped/stats under ``out_dir``."""
    plan = plan or DatagenPlan()
    registry = registry or IdentityRegistry()
    prov = Provenance()
    par = plan.parallelism
    samples: list[DialogueSample] = []
    for ident in registry.identities(PERSONALITY) if PERSONALITY in registry.categories else ():
        samples += gen_personality(ident.name, ident.polarity, plan.per_personality, client, registry, prov, par)
    for ident in registry.identities(PROFESSION) if PROFESSION in registry.categories else ():
        samples += gen_profession(ident.key, plan.per_profession_on, client, False, None, registry, prov, par)
        if plan.per_profession_off and registry.size(PROFESSION) > 1:
            samples += gen_profession(ident.key, plan.per_profession_off, client, True, None, registry, prov, par)
    for a, b in plan.pairs(registry):
        samples += gen_multi(a, b, plan.per_multi, client, registry, prov, par)

    dropped = [{"id": r.id, "stage": "generation", "reason": r.reason} for r in prov.with_status("rejected")]
    if plan.reannotate:
        kept, lost = reannotate(samples, client, registry, par)
        lost_ids = {s.id for s in lost}
        for s in kept + lost:
            rec = prov.get(s.id)
            rec.stages["annotation"] = s.annotation["reannotation"]
            if s.id in lost_ids:
                rec.status, rec.reason = "dropped", s.annotation["reannotation"]["reason"]
            rec.sample = s.to_dict()
        dropped += [{"id": s.id, "stage": "reannotation", "reason": s.annotation["reannotation"]["reason"]}
                    for s in lost]
        samples = kept
    dropped.sort(key=lambda d: d["id"])
    stats = compute_stats(samples)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_jsonl(out / "dataset.jsonl", (s.to_dict() for s in samples))
        prov.write(out / "provenance.jsonl")
        _write_jsonl(out / "dropped.jsonl", dropped)
        (out / "stats.json").write_text(json.dumps(stats_report(stats), indent=2, sort_keys=True) + "\n",
                                        encoding="utf-8")
    return DatagenResult(samples, dropped, prov, stats)
