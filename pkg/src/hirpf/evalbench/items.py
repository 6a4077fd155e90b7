"""Scale item banks, situation scenarios and the benchmark's prompt assets."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from ..datagen.prompts import fill

ITEMS_PER_DIMENSION = 20
N_SCENARIOS = 8


def _asset(*parts: str) -> str:
    return resources.files("hirpf.evalbench").joinpath("assets", *parts).read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def load_prompt(name: str) -> str:
    return _asset(name + ".txt")


def render_prompt(name: str, **values) -> str:
    return fill(load_prompt(name), values, name)


@dataclass(frozen=True)
class ScaleItem:
    id: str
    category: str      # "personality" or "profession"
    dimension: str     # trait name or occupation
    key: str           # "positive" or "negative"
    text: str

    def __post_init__(self):
        if self.key not in ("positive", "negative"):
            raise ValueError(f"item {self.id}: key must be positive or negative")

    def reverse(self, score: float) -> float:
        """Score in the keyed direction: negative-keyed items map x -> 6 - x."""
        return 6 - score if self.key == "negative" else score

    @property
    def statement(self) -> str:
        # bank entries are first-person fragments ("Am the life of the party.")
        t = self.text
        return t if t.startswith(("I ", "I'")) else "I " + t[0].lower() + t[1:]


class ItemBank:
    def __init__(self, items):
        self.items = tuple(items)
        ids = [i.id for i in self.items]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate item ids")
        self._by_id = {i.id: i for i in self.items}

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, item_id: str) -> ScaleItem:
        return self._by_id[item_id]

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._by_id

    def dimensions(self) -> list[str]:
        out = []
        for i in self.items:
            if i.dimension not in out:
                out.append(i.dimension)
        return out

    def for_dimension(self, dimension: str) -> list[ScaleItem]:
        return [i for i in self.items if i.dimension == dimension]

    def find_text(self, text: str) -> ScaleItem | None:
        """The item whose statement (or raw text) occurs in ``text``."""
        for i in self.items:
            if i.statement in text or i.text in text:
                return i
        return None

    def merged(self, other: ItemBank) -> ItemBank:
        return ItemBank(self.items + other.items)


def _bank(name: str) -> ItemBank:
    data = json.loads(_asset(name))
    return ItemBank(ScaleItem(**d) for d in data["items"])


@lru_cache(maxsize=None)
def personality_items() -> ItemBank:
    return _bank("personality_items.json")


@lru_cache(maxsize=None)
def profession_items() -> ItemBank:
    return _bank("profession_items.json")


@dataclass(frozen=True)
class ScenarioSpec:
    id: int
    background: str
    npc_setting: str
    npc_prompt: str

    def npc_system_prompt(self) -> str:
        return render_prompt("npc_system", npc_prompt=self.npc_prompt, background=self.background,
                             npc_setting=self.npc_setting)

    @classmethod
    def from_dict(cls, d) -> ScenarioSpec:
        return cls(int(d["id"]), d["background"], d["npc_setting"], d["npc_prompt"])


@lru_cache(maxsize=None)
def load_scenarios() -> tuple[ScenarioSpec, ...]:
    root = resources.files("hirpf.evalbench").joinpath("assets", "scenarios")
    files = sorted(p.name for p in root.iterdir() if p.name.endswith(".json"))
    return tuple(ScenarioSpec.from_dict(json.loads(_asset("scenarios", f))) for f in files)
