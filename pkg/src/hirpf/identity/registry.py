"""Identity catalog and validated activation sets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

PERSONALITY = "personality"
PROFESSION = "profession"

DEFAULT_TRAITS = ("agreeableness", "conscientiousness", "extraversion", "emotional-stability", "openness")
DEFAULT_PROFESSIONS = ("artist", "doctor", "programmer")
POLARITIES = ("high", "low")

# tables and older item lists label emotional stability as NEU / EMS
TRAIT_ALIASES = {"ems": "emotional-stability", "neu": "emotional-stability",
                 "emotional_stability": "emotional-stability", "emotional stability": "emotional-stability"}


class IdentityLookupError(KeyError):
    pass


class ExclusivityError(ValueError):
    pass


@dataclass(frozen=True)
class Identity:
    category: str
    name: str
    polarity: str
    index: int

    def __post_init__(self):
        if self.category == PERSONALITY and self.polarity not in POLARITIES:
            raise ValueError(f"personality identity {self.name!r} needs a polarity, got {self.polarity!r}")
        if self.category == PROFESSION and self.polarity != "none":
            raise ValueError(f"profession identity {self.name!r} cannot carry a polarity")

    @property
    def key(self) -> str:
        return f"{self.polarity}-{self.name}" if self.category == PERSONALITY else self.name

    @property
    def dimension(self) -> str:
        """The trait for personality identities, ``"profession"`` otherwise."""
        return self.name if self.category == PERSONALITY else PROFESSION

    def describe(self) -> str:
        if self.category == PERSONALITY:
            return f"{self.polarity} {self.name.replace('-', ' ')}"
        return self.name


class IdentityRegistry:
    """Ordered categories, each an ordered list of identities.

    Personality identities are the product of traits and the two polarities,
    trait-major, so ``high-x`` and ``low-x`` sit next to each other.
    """

    def __init__(self, traits: Sequence[str] = DEFAULT_TRAITS,
                 professions: Sequence[str] = DEFAULT_PROFESSIONS):
        if len(set(traits)) != len(traits) or len(set(professions)) != len(professions):
            raise ValueError("identity names must be unique within a category")
        self.traits = tuple(traits)
        self.professions = tuple(professions)
        pers = [Identity(PERSONALITY, t, p, 2 * i + k)
                for i, t in enumerate(self.traits) for k, p in enumerate(POLARITIES)]
        prof = [Identity(PROFESSION, p, "none", i) for i, p in enumerate(self.professions)]
        cats = {}
        if pers:
            cats[PERSONALITY] = tuple(pers)
        if prof:
            cats[PROFESSION] = tuple(prof)
        if not cats:
            raise ValueError("registry needs at least one identity")
        self._cats = cats
        self._by_key = {ident.key: ident for ids in cats.values() for ident in ids}

    @property
    def categories(self) -> tuple[str, ...]:
        return tuple(self._cats)

    def identities(self, category: str | None = None) -> tuple[Identity, ...]:
        if category is None:
            return tuple(i for ids in self._cats.values() for i in ids)
        return self._cats[category]

    def size(self, category: str) -> int:
        return len(self._cats[category])

    def keys(self) -> list[str]:
        return list(self._by_key)

    def lookup(self, name: str) -> Identity:
        key = normalize_name(name)
        try:
            return self._by_key[key]
        except KeyError:
            raise IdentityLookupError(f"unknown identity {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return normalize_name(name) in self._by_key

    def to_dict(self) -> dict:
        return {"traits": list(self.traits), "professions": list(self.professions)}

    @classmethod
    def from_dict(cls, d: Mapping) -> IdentityRegistry:
        unknown = set(d) - {"traits", "professions"}
        if unknown:
            raise ValueError(f"unknown registry keys: {sorted(unknown)}")
        return cls(d.get("traits", DEFAULT_TRAITS), d.get("professions", DEFAULT_PROFESSIONS))

    def __eq__(self, other) -> bool:
        return isinstance(other, IdentityRegistry) and self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return f"IdentityRegistry(traits={self.traits}, professions={self.professions})"


def normalize_name(name: str) -> str:
    s = name.strip().lower().replace("_", "-")
    for pol in POLARITIES:
        for sep in ("-", " "):
            if s.startswith(pol + sep):
                trait = s[len(pol) + 1:]
                trait = TRAIT_ALIASES.get(trait, trait).replace(" ", "-")
                return f"{pol}-{trait}"
    return s


@dataclass(frozen=True)
class ActivationSet:
    """A validated identity combination and its per-category boolean masks."""

    registry: IdentityRegistry = field(compare=False, repr=False)
    identities: tuple[Identity, ...]
    dense: bool = False

    def mask(self, category: str) -> np.ndarray:
        m = np.zeros(self.registry.size(category), dtype=bool)
        for ident in self.identities:
            if ident.category == category:
                m[ident.index] = True
        return m

    def block_masks(self, assignment: Mapping[int, str]) -> dict[int, np.ndarray]:
        return {j: self.mask(c) for j, c in assignment.items()}

    def pass_through_blocks(self, assignment: Mapping[int, str]) -> list[int]:
        return [j for j, c in assignment.items() if not self.mask(c).any()]

    def in_category(self, category: str) -> tuple[Identity, ...]:
        return tuple(i for i in self.identities if i.category == category)

    @property
    def keys(self) -> list[str]:
        return [i.key for i in self.identities]

    @property
    def signature(self) -> str:
        if self.dense:
            return "*dense*"
        return "+".join(self.keys) if self.identities else "*none*"

    def __len__(self) -> int:
        return len(self.identities)


def activate(registry: IdentityRegistry, names: Iterable[str], *, allow_multi_profession: bool = False,
             exclusive: bool = True) -> ActivationSet:
    """Resolve and validate an identity combination.

    With ``exclusive`` (the default) at most one polarity per trait and at most
    one profession (unless ``allow_multi_profession``) may be active.
    """
    idents: list[Identity] = []
    for n in names:
        ident = registry.lookup(n)
        if ident not in idents:
            idents.append(ident)
    if exclusive:
        seen_traits: dict[str, str] = {}
        profs = []
        for ident in idents:
            if ident.category == PERSONALITY:
                if ident.name in seen_traits:
                    raise ExclusivityError(
                        f"both polarities of {ident.name} requested ({seen_traits[ident.name]}, {ident.key})")
                seen_traits[ident.name] = ident.key
            else:
                profs.append(ident.key)
        if len(profs) > 1 and not allow_multi_profession:
            raise ExclusivityError(f"more than one profession requested: {profs}")
    order = {c: k for k, c in enumerate(registry.categories)}
    idents.sort(key=lambda i: (order[i.category], i.index))
    return ActivationSet(registry, tuple(idents))


def dense_mode(registry: IdentityRegistry) -> ActivationSet:
    """Every identity of every category active; routing reduces to soft gating."""
    act = activate(registry, registry.keys(), exclusive=False)
    return ActivationSet(registry, act.identities, dense=True)
