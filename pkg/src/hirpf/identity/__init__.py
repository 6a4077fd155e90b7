"""Identity registry, alternating category placement and explicitly controlled routing."""

from .bank import (
    MODES,
    AdapterConfig,
    AdapterPair,
    BlockRouter,
    HIRPFModel,
    ModeError,
    effective_delta,
)
from .checks import TOY_CHECK, model_grad_check, perturbed_toy_model
from .registry import (
    DEFAULT_PROFESSIONS,
    DEFAULT_TRAITS,
    PERSONALITY,
    POLARITIES,
    PROFESSION,
    ActivationSet,
    ExclusivityError,
    Identity,
    IdentityLookupError,
    IdentityRegistry,
    activate,
    dense_mode,
    normalize_name,
)
from .routing import CoverageError, assign_categories, gate_features, pooling_weights, route

__all__ = [
    "MODES", "AdapterConfig", "AdapterPair", "BlockRouter", "HIRPFModel", "ModeError",
    "effective_delta", "DEFAULT_PROFESSIONS", "DEFAULT_TRAITS", "PERSONALITY", "POLARITIES",
    "PROFESSION", "ActivationSet", "ExclusivityError", "Identity", "IdentityLookupError",
    "IdentityRegistry", "activate", "dense_mode", "normalize_name", "CoverageError",
    "assign_categories", "gate_features", "pooling_weights", "route", "TOY_CHECK",
    "model_grad_check", "perturbed_toy_model",
]
