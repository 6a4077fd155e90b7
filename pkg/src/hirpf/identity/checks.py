"""Finite-difference check of the adapted model on a reduced 64-bit configuration."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .. import numerics as nx
from ..backbone import Backbone, ModelConfig
from .bank import AdapterConfig, HIRPFModel
from .registry import IdentityRegistry, activate, dense_mode

TOY_CHECK = {"d_model": 16, "n_heads": 2, "n_blocks": 2, "d_ff": 32, "max_len": 32}


def perturbed_toy_model(seed: int = 0, rank: int = 4, mode: str = "hirp", scale: float = 0.3,
                        registry: IdentityRegistry | None = None, **overrides) -> HIRPFModel:
    """Float64 toy model with B and gate rows moved off zero so every gradient path is live."""
    mcfg = ModelConfig(**dict(TOY_CHECK, precision="float64", seed=seed, **overrides))
    model = HIRPFModel(Backbone.init(mcfg), registry or IdentityRegistry(),
                       AdapterConfig(rank=rank, alpha=rank, mode=mode, seed=seed))
    rng = np.random.default_rng([seed, 7])
    for name, p in model.adapter_parameters().items():
        if name.endswith(".B") or name.endswith(".gate"):
            p.data[...] = rng.normal(0.0, scale, size=p.shape)
    return model


def model_grad_check(seed: int = 0, identities: Sequence[str] | None = None, rank: int = 4,
                     batch: int = 2, T: int = 10, prefix_len: int = 4, eps: float = 1e-4,
                     mode: str = "hirp") -> nx.GradCheckReport:
    """Check every trainable tensor the activation reaches (all of them for ``identities=None``).

    Gate gradients here are ~1e-4, so steps below ~1e-5 are dominated by round-off.
    """
    with nx.precision("float64"):
        model = perturbed_toy_model(seed, rank, mode)
        reg = model.registry
        act = dense_mode(reg) if identities is None else activate(reg, identities)
        rng = np.random.default_rng([seed, 11])
        ids = rng.integers(0, 256, size=(batch, T + 1))
        mask = rng.random((batch, T)) < 0.7
        mask[:, -1] = True
        reach = model.trainable_for(act)
        params = [p for name, p in model.adapter_parameters().items() if name in reach]

        def loss():
            logits = model.forward(ids[:, :-1], act, prefix_len=prefix_len)
            return nx.cross_entropy(logits, ids[:, 1:], mask)

        return nx.grad_check(loss, params, eps=eps)
