"""Prompt templates shipped as text assets and rendered by placeholder substitution."""

from __future__ import annotations

import hashlib
import json
import re
from functools import lru_cache
from importlib import resources

_PLACEHOLDER = re.compile(r"\{([a-z_]+)\}")

TEMPLATE_NAMES = (
    "personality_occasion", "personality_plot", "personality_dialogue",
    "profession_topic", "profession_plot_on", "profession_plot_off", "profession_dialogue",
    "multi_plot", "multi_dialogue", "reannotate", "retry",
)

JSON_EXAMPLE = json.dumps({"dialogue": [
    {"speaker": "B", "text": "..."},
    {"speaker": "A", "text": "..."},
]})


class TemplateError(KeyError):
    pass


def _asset(name: str) -> str:
    return resources.files("hirpf.datagen").joinpath("assets", name).read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    if name not in TEMPLATE_NAMES:
        raise TemplateError(f"unknown template {name!r}")
    return _asset(name + ".txt")


def template_version(name: str) -> str:
    return hashlib.sha256(load_template(name).encode("utf-8")).hexdigest()[:12]


def placeholders(template: str) -> set[str]:
    # only identifiers count, so a literal json object in a template is left alone
    return set(_PLACEHOLDER.findall(template))


def fill(template: str, values: dict, name: str = "<inline>") -> str:
    missing = placeholders(template) - set(values)
    if missing:
        raise TemplateError(f"template {name!r} needs {sorted(missing)}")
    return _PLACEHOLDER.sub(lambda m: str(values[m.group(1)]), template)


def render(name: str, **values) -> str:
    return fill(load_template(name), values, name)


@lru_cache(maxsize=None)
def identity_cues() -> dict:
    return json.loads(_asset("identity_cues.json"))
