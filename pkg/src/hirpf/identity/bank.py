"""Per-identity low-rank adapter banks, block routers and the routed model."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

from .. import numerics as nx
from ..backbone import Backbone, Sampling, generate
from ..numerics import Tensor, no_grad
from .registry import ActivationSet, IdentityRegistry, dense_mode
from .routing import assign_categories, gate_features, route

MODES = ("hirp", "dense", "monolithic")


class ModeError(RuntimeError):
    pass


@dataclass
class AdapterConfig:
    rank: int = 16
    alpha: float = 16.0
    mode: str = "hirp"
    gate_mode: str = "prefix"
    init_std: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.rank <= 0 or self.alpha <= 0:
            raise ValueError("rank and alpha must be positive")

    @property
    def scale(self) -> float:
        return self.alpha / self.rank

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> AdapterConfig:
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown adapter config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class AdapterPair:
    A: Tensor  # (r, d)
    B: Tensor  # (d, r)
    scale: float

    def delta(self) -> np.ndarray:
        return self.scale * (self.B.data @ self.A.data)


@dataclass
class BlockRouter:
    block: int
    category: str
    keys: tuple[str, ...]
    gate: Tensor  # (n, d), one row per identity in ``keys``
    adapters: dict[str, dict[str, AdapterPair]]  # role -> identity key -> pair


def effective_delta(pairs, weights, path: str = "bypass"):
    """Projector applying ``W0 + sum_k w_k * scale * B_k A_k`` to block inputs.

    ``weights`` holds one ``(B,)`` tensor per pair, or ``None`` for an
    unweighted pair. ``path="bypass"`` keeps the low-rank factors apart
    (``h W0^T + sum_k w_k (h A_k^T) B_k^T scale``); ``path="merge"`` forms the
    dense per-sequence matrix first. An empty ``pairs`` list is an exact
    pass-through.
    """
    if path not in ("bypass", "merge"):
        raise ValueError(f"unknown delta path {path!r}")

    def bypass(h: Tensor, W0: Tensor) -> Tensor:
        out = nx.matmul(h, nx.transpose(W0))
        for pair, w in zip(pairs, weights):
            u = nx.matmul(nx.matmul(h, nx.transpose(pair.A)), nx.transpose(pair.B))
            if pair.scale != 1.0:
                u = nx.mul(u, pair.scale)
            if w is not None:
                u = nx.mul(u, nx.reshape(w, (w.shape[0], 1, 1)))
            out = nx.add(out, u)
        return out

    def merge(h: Tensor, W0: Tensor) -> Tensor:
        W = nx.reshape(W0, (1,) + W0.shape)
        for pair, w in zip(pairs, weights):
            dW = nx.reshape(nx.mul(nx.matmul(pair.B, pair.A), pair.scale), (1,) + W0.shape)
            if w is not None:
                dW = nx.mul(dW, nx.reshape(w, (w.shape[0], 1, 1)))
            W = nx.add(W, dW)
        if W.shape[0] == 1 and h.shape[0] != 1:
            W = nx.add(W, Tensor(np.zeros((h.shape[0],) + W0.shape), dtype=W0.dtype))
        return nx.matmul(h, nx.transpose(W))

    return bypass if path == "bypass" else merge


class _RoutedSites:
    def __init__(self, model: HIRPFModel, activation, prefix_len, routing, path):
        self.model = model
        self.activation = activation
        self.prefix_len = prefix_len
        self.fixed = routing
        self.path = path
        self.record: dict[int, np.ndarray] = {}

    def block_sites(self, j: int, h: Tensor):
        m = self.model
        roles = m.backbone.config.adapt_roles
        B = h.shape[0]
        if m.mode == "monolithic":
            pairs = {r: m.shared[(j, r)] for r in roles}
            return {r: effective_delta([pairs[r]], [None], self.path) for r in roles}
        router = m.routers[j]
        mask = m.block_mask(j, self.activation)
        if not mask.any():
            self.record[j] = np.zeros((B, len(router.keys)), dtype=h.dtype)
            return {}
        if self.fixed is not None and j in self.fixed:
            wdata = np.broadcast_to(np.asarray(self.fixed[j], dtype=h.dtype), (B, len(router.keys)))
            w = Tensor(np.array(wdata), dtype=h.dtype)
        else:
            feats = gate_features(h, self.prefix_len, m.config.gate_mode)
            w = route(feats, router.gate, mask)
        self.record[j] = np.array(w.data)
        active = np.flatnonzero(mask)
        sites = {}
        for r in roles:
            pairs = [router.adapters[r][router.keys[k]] for k in active]
            ws = [nx.getitem(w, (slice(None), int(k))) for k in active]
            sites[r] = effective_delta(pairs, ws, self.path)
        return sites


class HIRPFModel:
    """Frozen backbone plus identity adapters routed under explicit control."""

    def __init__(self, backbone: Backbone, registry: IdentityRegistry, config: AdapterConfig | None = None):
        self.backbone = backbone
        self.registry = registry
        self.config = config or AdapterConfig()
        self.assignment = assign_categories(backbone.config.n_blocks, registry.categories)
        self.trained_steps = 0
        for t in backbone.named_parameters().values():
            t.requires_grad = False
        self.routers: dict[int, BlockRouter] = {}
        self.shared: dict[tuple[int, str], AdapterPair] = {}
        self._build()

    @property
    def mode(self) -> str:
        return self.config.mode

    @property
    def dtype(self):
        return self.backbone.tok_emb.dtype

    def _build(self) -> None:
        cfg = self.config
        d = self.backbone.config.d_model
        roles = self.backbone.config.adapt_roles
        rng = np.random.default_rng([cfg.seed, 0x1D])
        dtype = self.dtype

        def pair(name):
            A = Tensor(rng.normal(0.0, cfg.init_std, size=(cfg.rank, d)), requires_grad=True,
                       name=name + ".A", dtype=dtype)
            B = Tensor(np.zeros((d, cfg.rank)), requires_grad=True, name=name + ".B", dtype=dtype)
            return AdapterPair(A, B, cfg.scale)

        self.routers, self.shared = {}, {}
        for j in range(self.backbone.config.n_blocks):
            if cfg.mode == "monolithic":
                for r in roles:
                    self.shared[(j, r)] = pair(f"blocks.{j}.{r}.shared")
                continue
            cat = self.assignment[j]
            keys = tuple(i.key for i in self.registry.identities(cat))
            adapters = {r: {k: pair(f"blocks.{j}.{r}.{k}") for k in keys} for r in roles}
            gate = Tensor(np.zeros((len(keys), d)), requires_grad=True, name=f"blocks.{j}.router.gate",
                          dtype=dtype)
            self.routers[j] = BlockRouter(j, cat, keys, gate, adapters)

    def set_mode(self, mode: str) -> None:
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        if mode == self.mode:
            return
        if self.trained_steps:
            raise ModeError(f"cannot switch to {mode!r} after {self.trained_steps} training steps")
        rebuild = "monolithic" in (mode, self.mode)
        self.config.mode = mode
        if rebuild:
            self._build()

    # ---- parameters -------------------------------------------------

    def adapter_parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        if self.mode == "monolithic":
            for p in self.shared.values():
                out[p.A.name] = p.A
                out[p.B.name] = p.B
            return out
        for router in self.routers.values():
            for r, bank in router.adapters.items():
                for p in bank.values():
                    out[p.A.name] = p.A
                    out[p.B.name] = p.B
            out[router.gate.name] = router.gate
        return out

    def named_parameters(self) -> dict[str, Tensor]:
        out = {f"backbone.{k}": v for k, v in self.backbone.named_parameters().items()}
        out.update(self.adapter_parameters())
        return out

    def inventory(self) -> list[dict]:
        """One row per adapter pair: block, hosted category, identity key, role, shapes."""
        rows = []
        if self.mode == "monolithic":
            for (j, r), p in self.shared.items():
                rows.append({"block": j, "category": None, "identity": "shared", "role": r,
                             "A": p.A.shape, "B": p.B.shape})
            return rows
        for j, router in self.routers.items():
            for r, bank in router.adapters.items():
                for k, p in bank.items():
                    rows.append({"block": j, "category": router.category, "identity": k, "role": r,
                                 "A": p.A.shape, "B": p.B.shape})
        return rows

    def adapter_parameter_count(self) -> int:
        return int(sum(t.data.size for t in self.adapter_parameters().values()))

    def effective_activation(self, activation: ActivationSet | None) -> ActivationSet | None:
        if self.mode == "dense":
            return dense_mode(self.registry)
        return activation

    def block_mask(self, j: int, activation: ActivationSet | None) -> np.ndarray:
        router = self.routers[j]
        act = self.effective_activation(activation)
        if act is None:
            return np.zeros(len(router.keys), dtype=bool)
        return act.mask(router.category)

    def trainable_for(self, activation: ActivationSet | None) -> dict[str, np.ndarray | None]:
        """Tensors a step under ``activation`` may touch: name -> row mask (``None`` = whole tensor)."""
        if self.mode == "monolithic":
            return {name: None for name in self.adapter_parameters()}
        out: dict[str, np.ndarray | None] = {}
        for j, router in self.routers.items():
            mask = self.block_mask(j, activation)
            if not mask.any():
                continue
            for k in np.flatnonzero(mask):
                key = router.keys[k]
                for r, bank in router.adapters.items():
                    out[bank[key].A.name] = None
                    out[bank[key].B.name] = None
            out[router.gate.name] = mask.copy()
        return out

    # ---- forward / generation ----------------------------------------

    def forward(self, ids, activation: ActivationSet | None = None, prefix_len=None,
                routing: Mapping[int, np.ndarray] | None = None, path: str = "bypass",
                return_routing: bool = False):
        sites = _RoutedSites(self, activation, prefix_len, routing, path)
        logits = self.backbone.forward(ids, sites)
        if return_routing:
            return logits, sites.record
        return logits

    def base_forward(self, ids) -> Tensor:
        return self.backbone.forward(ids)

    def prefill_routing(self, prompt_ids, activation, prefix_len=None) -> dict[int, np.ndarray]:
        ids = np.asarray(prompt_ids, dtype=np.int64)[None, :]
        with no_grad():
            _, rec = self.forward(ids, activation, prefix_len=prefix_len or ids.shape[1],
                                  return_routing=True)
        return rec

    def generate(self, prompt_ids, activation: ActivationSet | None, max_new: int,
                 sampling: Sampling = Sampling(), prefix_len: int | None = None) -> list[int]:
        """Decode with routing weights computed once from the prompt and then held fixed."""
        prompt = [int(t) for t in prompt_ids]
        if max_new <= 0:
            return []
        routing = self.prefill_routing(prompt, activation, prefix_len)

        def last_logits(ids):
            out = self.forward(ids[None, :], activation, routing=routing)
            return out.data[0, -1]

        return generate(last_logits, prompt, max_new, sampling, max_len=self.backbone.config.max_len)
