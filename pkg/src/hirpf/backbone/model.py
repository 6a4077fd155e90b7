"""A small causal decoder whose attention projections accept external deltas.

Adaptation works through a *site provider*: for every block the model hands
the provider the normalised block input and gets back, per projection role,
a callable ``project(h, W0) -> Tensor`` that replaces the plain ``h @ W0.T``.
Roles without an entry use the frozen weight unchanged.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Mapping, Protocol

import numpy as np

from .. import numerics as nx
from ..numerics import Tensor
from .tokenizer import PAD, VOCAB_SIZE

ROLES = ("q", "k", "v", "o")

Projector = Callable[[Tensor, Tensor], Tensor]


class SequenceLengthError(ValueError):
    pass


@dataclass
class ModelConfig:
    d_model: int = 64
    n_heads: int = 4
    n_blocks: int = 4
    d_ff: int = 256
    max_len: int = 512
    vocab_size: int = VOCAB_SIZE
    precision: str = "float32"
    seed: int = 0
    adapt_roles: tuple[str, ...] = ("q", "v")
    emb_std: float = 1.0
    # the output head sits behind a frozen final norm, so its scale bounds the logits
    head_std: float = 0.5

    def __post_init__(self):
        self.adapt_roles = tuple(self.adapt_roles)
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model {self.d_model} is not divisible by n_heads {self.n_heads}")
        bad = [r for r in self.adapt_roles if r not in ROLES]
        if bad:
            raise ValueError(f"unknown adaptation roles {bad}; choose from {ROLES}")
        for name in ("d_model", "n_heads", "n_blocks", "d_ff", "max_len", "vocab_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["adapt_roles"] = list(self.adapt_roles)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> ModelConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


class SiteProvider(Protocol):
    def block_sites(self, block: int, h: Tensor) -> Mapping[str, Projector]: ...


class _StaticSites:
    def __init__(self, table: Mapping[tuple[int, str], Projector]):
        self.table = table

    def block_sites(self, block, h):
        return {role: fn for (j, role), fn in self.table.items() if j == block}


@dataclass
class Block:
    ln1_g: Tensor
    ln1_b: Tensor
    w: dict[str, Tensor]
    ln2_g: Tensor
    ln2_b: Tensor
    ff_in: Tensor
    ff_out: Tensor


@dataclass
class Backbone:
    config: ModelConfig
    tok_emb: Tensor
    pos_emb: Tensor
    blocks: list[Block]
    lnf_g: Tensor
    lnf_b: Tensor
    head: Tensor

    @classmethod
    def init(cls, config: ModelConfig) -> Backbone:
        rng = np.random.default_rng(config.seed)
        dtype = np.float64 if config.precision == "float64" else np.float32
        d = config.d_model
        s = 1.0 / math.sqrt(d)

        def normal(*shape, std=s):
            return Tensor(rng.normal(0.0, std, size=shape), dtype=dtype)

        def const(v, n):
            return Tensor(np.full(n, v), dtype=dtype)

        tok_emb = normal(config.vocab_size, d, std=config.emb_std)
        pos_emb = normal(config.max_len, d, std=config.emb_std)
        blocks = []
        for _ in range(config.n_blocks):
            w = {r: normal(d, d) for r in ("q", "k", "v")}
            w["o"] = normal(d, d)
            blocks.append(Block(const(1.0, d), const(0.0, d), w, const(1.0, d), const(0.0, d),
                                normal(config.d_ff, d), normal(d, config.d_ff, std=1.0 / math.sqrt(config.d_ff))))
        head = normal(config.vocab_size, d, std=config.head_std)
        model = cls(config, tok_emb, pos_emb, blocks, const(1.0, d), const(0.0, d), head)
        for name, t in model.named_parameters().items():
            t.name = name
        return model

    def named_parameters(self) -> dict[str, Tensor]:
        out = {"tok_emb": self.tok_emb, "pos_emb": self.pos_emb}
        for j, b in enumerate(self.blocks):
            p = f"blocks.{j}."
            out[p + "ln1.gain"] = b.ln1_g
            out[p + "ln1.bias"] = b.ln1_b
            for r in ROLES:
                out[p + f"attn.{r}"] = b.w[r]
            out[p + "ln2.gain"] = b.ln2_g
            out[p + "ln2.bias"] = b.ln2_b
            out[p + "ff.in"] = b.ff_in
            out[p + "ff.out"] = b.ff_out
        out["lnf.gain"] = self.lnf_g
        out["lnf.bias"] = self.lnf_b
        out["head"] = self.head
        return out

    def forward(self, ids, site_deltas: SiteProvider | Mapping | None = None) -> Tensor:
        """Logits ``(B, T, V)`` for right-padded ids ``(B, T)`` (a 1-d input gives ``(T, V)``)."""
        ids = np.asarray(ids, dtype=np.int64)
        squeeze = ids.ndim == 1
        if squeeze:
            ids = ids[None, :]
        B, T = ids.shape
        cfg = self.config
        if T > cfg.max_len:
            raise SequenceLengthError(f"sequence length {T} exceeds max_len {cfg.max_len}")
        if T == 0:
            raise SequenceLengthError("empty sequence")
        if isinstance(site_deltas, Mapping):
            site_deltas = _StaticSites(site_deltas)

        H = cfg.n_heads
        dh = cfg.d_model // H
        x = nx.add(nx.embed(self.tok_emb, ids), nx.getitem(self.pos_emb, slice(0, T)))
        for j, blk in enumerate(self.blocks):
            h = nx.layer_norm(x, blk.ln1_g, blk.ln1_b)
            sites = site_deltas.block_sites(j, h) if site_deltas is not None else {}

            def proj(role, inp):
                fn = sites.get(role)
                if fn is None:
                    return nx.matmul(inp, nx.transpose(blk.w[role]))
                return fn(inp, blk.w[role])

            q, k, v = (nx.transpose(nx.reshape(proj(r, h), (B, T, H, dh)), (0, 2, 1, 3))
                       for r in ("q", "k", "v"))
            scores = nx.mul(nx.matmul(q, nx.transpose(k)), 1.0 / math.sqrt(dh))
            att = nx.matmul(nx.causal_softmax(scores), v)
            att = nx.reshape(nx.transpose(att, (0, 2, 1, 3)), (B, T, cfg.d_model))
            x = nx.add(x, proj("o", att))
            h2 = nx.layer_norm(x, blk.ln2_g, blk.ln2_b)
            ff = nx.gelu(nx.matmul(h2, nx.transpose(blk.ff_in)))
            x = nx.add(x, nx.matmul(ff, nx.transpose(blk.ff_out)))
        x = nx.layer_norm(x, self.lnf_g, self.lnf_b)
        logits = nx.matmul(x, nx.transpose(self.head))
        if squeeze:
            logits = nx.reshape(logits, logits.shape[1:])
        return logits


def pad_batch(seqs, pad: int = PAD) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad token lists; returns ids ``(B, T)`` and lengths ``(B,)``."""
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    out = np.full((len(seqs), int(lengths.max())), pad, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out, lengths
