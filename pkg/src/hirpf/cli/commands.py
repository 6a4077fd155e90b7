"""Subcommand bodies. Each one validates in ``prepare`` and works in the returned callable.

The split is what decides the exit code: anything raised while preparing is a
validation error, anything raised while running is a runtime failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Callable

from .. import numerics as nx
from ..backbone import Backbone, Sampling
from ..datagen import DatagenPlan, DeterministicMock, HTTPChatClient, compute_stats, format_stats, run_datagen, stats_report
from ..evalbench import (
    ItemBank,
    LocalAgent,
    Question,
    RemoteAgent,
    accuracy_report,
    compute_accuracy,
    default_grid,
    load_scenarios,
    mock_eval_client,
    personality_items,
    profession_items,
    profession_report,
    run_debate,
    run_questionnaire,
    run_scale,
    run_situation_test,
    score_profession,
    score_trait,
    trait_report,
)
from ..identity import ActivationSet, HIRPFModel, activate, model_grad_check
from ..trainer import build_training_example, load_checkpoint, load_dataset, overfit_fixture, role_prompt, train
from . import config as C
from .chat import ChatSession, parse_names, run_repl
from .rundir import RunDir

Job = Callable[[], int]


class ValidationError(ValueError):
    pass


class RuntimeFailure(RuntimeError):
    pass


def run_dir(cfg: dict, command: str) -> RunDir:
    root = cfg["paths"]["run_dir"] or str(Path("runs") / command)
    return RunDir(root, command, cfg)


def echo(text: str) -> None:
    sys.stdout.write(text + "\n")
    sys.stdout.flush()


def make_client(cfg: dict, role: str):
    """Mock clients get a role-specific seed so judge and generator streams differ."""
    b = cfg["backend"]
    reg = C.registry(cfg)
    if b["kind"] == "mock":
        if role == "datagen":
            return DeterministicMock(cfg["seed"], reg, malformed_rate=b["malformed_rate"])
        return mock_eval_client(cfg["seed"], reg)
    return HTTPChatClient(b["endpoint"], b["model"], key_env=b["key_env"], timeout=b["timeout"],
                          max_retries=b["max_retries"], rate_per_min=b["rate_per_min"])


def checkpoint_path(cfg: dict, required: bool = True) -> Path | None:
    p = cfg["paths"]["checkpoint"]
    if p is None:
        if required:
            raise ValidationError("a checkpoint is needed: pass --checkpoint or set paths.checkpoint")
        return None
    p = Path(p)
    if not (p / "manifest.json").is_file():
        raise ValidationError(f"no checkpoint at {p} (manifest.json missing)")
    return p


def activations(reg, combos) -> list[ActivationSet]:
    return [activate(reg, list(c)) for c in combos]


def agent_factory(cfg: dict, model: HIRPFModel | None):
    ev = cfg["eval"]
    sampling = Sampling(seed=ev["sampling_seed"])
    if ev["agent"] == "local":
        return lambda act: LocalAgent(model, act, ev["max_new"], sampling)
    client = make_client(cfg, "agent")
    return lambda act: RemoteAgent(client)


def local_model(cfg: dict) -> HIRPFModel | None:
    if cfg["eval"]["agent"] != "local":
        return None
    return load_checkpoint(checkpoint_path(cfg))


# --- train -----------------------------------------------------------------

def prepare_train(cfg: dict, args) -> Job:
    tcfg = C.train_config(cfg)
    mcfg = C.model_config(cfg)
    acfg = C.adapter_config(cfg)
    reg = C.registry(cfg)
    if args.fixture:
        samples = overfit_fixture(seed=cfg["seed"])
    elif cfg["paths"]["dataset"]:
        samples = load_dataset(cfg["paths"]["dataset"], reg)
    else:
        raise ValidationError("train needs a dataset: pass --dataset, set paths.dataset or use --fixture")
    examples = [build_training_example(s, reg, mcfg.max_len) for s in samples]
    if not examples:
        raise ValidationError("the dataset is empty")

    def job() -> int:
        run = run_dir(cfg, "train")
        with nx.precision(mcfg.precision):
            model = HIRPFModel(Backbone.init(mcfg), reg, acfg)
            result = train(model, examples, tcfg, metrics_path=run.path("metrics.jsonl"),
                           checkpoint_dir=run.root / "checkpoints", log_every=args.log_every)
        run.add("metrics.jsonl")
        run.add("checkpoints")
        summary = {"steps": result.steps, "final_loss": result.final_loss, "n_examples": len(examples),
                   "checkpoint": "checkpoints/final"}
        run.write_json("train_summary.json", summary)
        run.finish(summary=summary)
        echo(f"trained {result.steps} steps, final loss {result.final_loss:.4f}; "
             f"checkpoint {run.root / 'checkpoints' / 'final'}")
        return 0

    return job


# --- chat ------------------------------------------------------------------

def prepare_chat(cfg: dict, args) -> Job:
    names = parse_names(args.activate or "")
    # check the request against the configured registry before touching the checkpoint
    activate(C.registry(cfg), names)
    model = load_checkpoint(checkpoint_path(cfg))
    act = activate(model.registry, names)
    sampling = Sampling(greedy=args.temperature is None, temperature=args.temperature or 1.0, seed=cfg["seed"])
    session = ChatSession(model, act, args.max_new, sampling)
    source = open(args.script, encoding="utf-8") if args.script else sys.stdin

    def job() -> int:
        interactive = source is sys.stdin and sys.stdin.isatty()
        if interactive:
            echo(f"active: {', '.join(act.keys) or '(none)'}  (/quit to leave)")
        try:
            run_repl(session, source, sys.stdout)
        finally:
            if source is not sys.stdin:
                source.close()
        if args.transcript and len(session.turns) >= 2:
            echo(f"saved {session.save(args.transcript)}")
        return 0

    return job


# --- datagen ---------------------------------------------------------------

def prepare_datagen(cfg: dict, args) -> Job:
    d = dict(cfg["datagen"])
    d.setdefault("parallelism", cfg["backend"]["parallelism"])
    plan = DatagenPlan.from_dict(d)
    reg = C.registry(cfg)
    client = make_client(cfg, "datagen")

    def job() -> int:
        run = run_dir(cfg, "datagen")
        res = run_datagen(client, plan, reg, run.root / "data")
        run.add("data")
        summary = {"n_samples": len(res.samples), "n_dropped": len(res.dropped), "dataset": "data/dataset.jsonl"}
        run.write_json("datagen_summary.json", {**summary, "plan": plan.to_dict()})
        run.finish(summary=summary)
        echo(f"{len(res.samples)} samples kept, {len(res.dropped)} dropped -> {run.root / 'data' / 'dataset.jsonl'}")
        echo(format_stats(res.stats))
        return 0

    return job


# --- eval-scale ------------------------------------------------------------

def _scale_items(cfg: dict) -> ItemBank:
    ev = cfg["eval"]
    bank = personality_items() if ev["scale"] == "personality" else profession_items()
    dims = ev["dimensions"] or bank.dimensions()
    unknown = [d for d in dims if d not in bank.dimensions()]
    if unknown:
        raise ValidationError(f"unknown {ev['scale']} dimensions {unknown}; choose from {bank.dimensions()}")
    n = ev["items_per_dimension"]
    items = []
    for d in dims:
        own = bank.for_dimension(d)
        if n is None:
            items += own
            continue
        # keep both keying directions represented when trimming
        pos = [i for i in own if i.key == "positive"]
        neg = [i for i in own if i.key == "negative"]
        items += pos[:(n + 1) // 2] + neg[:n // 2]
    return ItemBank(items)


def prepare_eval_scale(cfg: dict, args) -> Job:
    ev = cfg["eval"]
    reg = C.registry(cfg)
    bank = _scale_items(cfg)
    combos = ev["activations"] or [[i.key] for i in reg.identities()]
    acts = activations(reg, combos)
    model = local_model(cfg)
    factory = agent_factory(cfg, model)
    judge = make_client(cfg, "judge")
    par = cfg["backend"]["parallelism"]

    def job() -> int:
        run = run_dir(cfg, "eval-scale")
        sessions = {}
        for act in acts:
            label = act.signature or "(none)"
            sessions[label] = run_scale(bank.items, factory(act), judge, judge, role_prompt(act), par)
        with open(run.path("sessions.jsonl"), "w", encoding="utf-8") as fh:
            for label, ss in sessions.items():
                for s in ss:
                    fh.write(json.dumps({"agent": label, **s.to_dict()}, sort_keys=True) + "\n")
        run.add("sessions.jsonl")
        if ev["scale"] == "personality":
            scores = {label: [score_trait(ss, bank, d) for d in bank.dimensions()] for label, ss in sessions.items()}
            data, text = trait_report(scores)
        else:
            data, text = profession_report(score_profession(sessions, bank))
        run.write_json("scale_report.json", {"report": data})
        run.write_text("scale_report.txt", text)
        run.finish(summary={"agents": len(acts), "items": len(bank)})
        echo(text)
        return 0

    return job


# --- eval-situation --------------------------------------------------------

def prepare_eval_situation(cfg: dict, args) -> Job:
    ev = cfg["eval"]
    reg = C.registry(cfg)
    scenarios = load_scenarios()
    if ev["scenarios"] is not None:
        by_id = {s.id: s for s in scenarios}
        missing = [s for s in ev["scenarios"] if s not in by_id]
        if missing:
            raise ValidationError(f"unknown scenarios {missing}; choose from {sorted(by_id)}")
        scenarios = [by_id[s] for s in ev["scenarios"]]
    grid = ev["grid"] or default_grid(reg)
    activations(reg, grid)
    model = local_model(cfg)
    factory = agent_factory(cfg, model)
    npc = judge = make_client(cfg, "judge")
    par = cfg["backend"]["parallelism"]

    def job() -> int:
        run = run_dir(cfg, "eval-situation")
        episodes = run_situation_test(grid, scenarios, factory, npc, judge, reg, par)
        with open(run.path("episodes.jsonl"), "w", encoding="utf-8") as fh:
            for ep in episodes:
                fh.write(json.dumps(ep.to_dict(), sort_keys=True) + "\n")
        run.add("episodes.jsonl")
        data, text = accuracy_report(compute_accuracy(episodes, reg))
        run.write_json("situation_report.json", {"report": data})
        run.write_text("situation_report.txt", text)
        run.finish(summary={"episodes": len(episodes), "overall": data.get("overall")})
        echo(text)
        return 0

    return job


# --- simulate --------------------------------------------------------------

def prepare_simulate(cfg: dict, args) -> Job:
    sim = cfg["simulate"]
    reg = C.registry(cfg)
    population = activations(reg, sim["population"])
    if not population:
        raise ValidationError("simulate.population is empty")
    if sim["kind"] == "debate" and len(population) < 2:
        raise ValidationError("a debate needs at least two participants")
    try:
        questions = [Question(q["id"], q["text"], tuple(q.get("options", ()))) for q in sim["questions"]]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"simulate.questions entries need id and text: {exc}") from None
    model = local_model(cfg)
    factory = agent_factory(cfg, model)
    coder = make_client(cfg, "judge")

    def job() -> int:
        run = run_dir(cfg, "simulate")
        if sim["kind"] == "questionnaire":
            table = run_questionnaire(population, questions, factory, coder)
            data = table.to_dict()
            lines = [f"{q}: {counts}" for q, counts in table.category_counts().items()]
        else:
            turns = run_debate(population, sim["topic"], sim["rounds"], factory)
            data = {"topic": sim["topic"], "turns": [t.__dict__ for t in turns]}
            lines = [f"[{t.round}] {t.speaker}: {t.text}" for t in turns]
        run.write_json(f"{sim['kind']}.json", data)
        run.write_text(f"{sim['kind']}.txt", "\n".join(lines) or "(no output)")
        run.finish(summary={"kind": sim["kind"], "participants": len(population)})
        echo("\n".join(lines))
        return 0

    return job


# --- gradcheck -------------------------------------------------------------

def prepare_gradcheck(cfg: dict, args) -> Job:
    names = parse_names(args.identities) if args.identities else None
    if names is not None:
        activate(C.registry(cfg), names)
    if args.threshold <= 0:
        raise ValidationError("--threshold must be positive")

    def job() -> int:
        rep = model_grad_check(seed=cfg["seed"], identities=names, rank=args.rank, eps=args.eps)
        ok = rep.max_rel_error < args.threshold
        echo(f"max relative error {rep.max_rel_error:.3e} over {rep.n_elements} elements "
             f"(worst {rep.worst_param}); threshold {args.threshold:g}: {'ok' if ok else 'FAILED'}")
        if args.output:
            run = RunDir(Path(args.output), "gradcheck", cfg)
            run.write_json("gradcheck.json", {"max_rel_error": rep.max_rel_error, "worst_param": rep.worst_param,
                                              "per_param": rep.per_param, "n_elements": rep.n_elements,
                                              "threshold": args.threshold, "passed": ok})
            run.finish("ok" if ok else "failed", {"max_rel_error": rep.max_rel_error})
        if not ok:
            raise RuntimeFailure(f"gradient check failed: {rep.max_rel_error:.3e} >= {args.threshold:g}")
        return 0

    return job


# --- stats -----------------------------------------------------------------

def prepare_stats(cfg: dict, args) -> Job:
    path = cfg["paths"]["dataset"]
    if not path:
        raise ValidationError("stats needs a dataset: pass --dataset or set paths.dataset")
    if not Path(path).is_file():
        raise ValidationError(f"dataset not found: {path}")
    samples = load_dataset(path, C.registry(cfg))

    def job() -> int:
        stats = compute_stats(samples)
        if args.json:
            echo(json.dumps(stats_report(stats), indent=2, sort_keys=True))
        else:
            echo(format_stats(stats))
        if args.output:
            run = RunDir(Path(args.output), "stats", cfg)
            run.write_json("stats.json", stats_report(stats))
            run.finish(summary=stats)
        return 0

    return job


PREPARE = {
    "train": prepare_train,
    "chat": prepare_chat,
    "datagen": prepare_datagen,
    "eval-scale": prepare_eval_scale,
    "eval-situation": prepare_eval_situation,
    "simulate": prepare_simulate,
    "gradcheck": prepare_gradcheck,
    "stats": prepare_stats,
}
