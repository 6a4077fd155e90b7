"""Selective fine-tuning: only the active identities' adapters and router rows move."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .. import numerics as nx
from ..backbone import pad_batch
from ..identity import HIRPFModel
from .data import TrainingExample
from .optim import AdamW

log = logging.getLogger(__name__)


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 8
    grad_accum: int = 4
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.01
    adam_eps: float = 1e-8
    epochs: int = 5
    seed: int = 0
    precision: str = "float32"
    mode: str = "hirp"
    max_steps: int | None = None
    checkpoint_every: int = 0
    lr_schedule: str = "constant"

    def __post_init__(self):
        if self.lr < 0 or self.batch_size <= 0 or self.grad_accum <= 0 or self.epochs < 0:
            raise ValueError("learning rate, batch size, accumulation and epochs must be non-negative/positive")
        if self.lr_schedule != "constant":
            raise ValueError("only the constant learning-rate schedule is implemented")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> TrainConfig:
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class StepReport:
    step: int
    loss: float
    lr: float
    updated: list[str]
    changed: list[str]
    n_tokens: int

    @property
    def changed_tensor_count(self) -> int:
        return len(self.changed)

    def metrics_row(self) -> dict:
        return {"step": self.step, "loss": self.loss, "lr": self.lr,
                "changed_tensor_count": self.changed_tensor_count}


def _row_label(name: str, key: str) -> str:
    return f"{name}[{key}]"


def ablation_mode(model: HIRPFModel, mode: str) -> None:
    """Switch between ``hirp``, ``dense`` and ``monolithic``; refused once training started."""
    model.set_mode(mode)


def micro_batches(examples: Sequence[TrainingExample], batch_size: int, rng: np.random.Generator):
    """Shuffle within activation-signature groups, chunk, then shuffle the chunks."""
    groups: dict[str, list[int]] = {}
    for i, ex in enumerate(examples):
        groups.setdefault(ex.signature, []).append(i)
    batches = []
    for sig in sorted(groups):
        idx = np.array(groups[sig])
        idx = idx[rng.permutation(len(idx))]
        for k in range(0, len(idx), batch_size):
            batches.append([examples[i] for i in idx[k:k + batch_size]])
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


class Trainer:
    def __init__(self, model: HIRPFModel, config: TrainConfig | None = None):
        self.model = model
        self.config = config or TrainConfig()
        if self.config.mode != model.mode:
            ablation_mode(model, self.config.mode)
        c = self.config
        self.optim = AdamW(c.lr, c.beta1, c.beta2, c.adam_eps, c.weight_decay)
        self.step_count = 0

    def micro_batch_loss(self, batch: Sequence[TrainingExample]) -> tuple[nx.Tensor, int]:
        sig = {ex.signature for ex in batch}
        if len(sig) != 1:
            raise ValueError(f"micro-batch mixes activation signatures: {sorted(sig)}")
        ids, lengths = pad_batch([ex.ids for ex in batch])
        mask = np.zeros(ids.shape, dtype=bool)
        for b, ex in enumerate(batch):
            mask[b, : len(ex.ids)] = ex.loss_mask
        prefix = np.array([ex.prefix_len for ex in batch])
        logits = self.model.forward(ids[:, :-1], batch[0].activation, prefix_len=prefix)
        lm = mask[:, 1:]
        return nx.cross_entropy(logits, ids[:, 1:], lm), int(lm.sum())

    def train_step(self, batches: Sequence[Sequence[TrainingExample]] | Sequence[TrainingExample]) -> StepReport:
        """One optimizer step over one or more micro-batches (gradient accumulation)."""
        if batches and isinstance(batches[0], TrainingExample):
            batches = [batches]
        params = self.model.adapter_parameters()
        for p in params.values():
            p.grad = None

        rows: dict[str, np.ndarray | None] = {}
        losses, tokens = [], 0
        for batch in batches:
            loss, n = self.micro_batch_loss(batch)
            if not np.isfinite(loss.data):
                self._rollback(params)
                raise NonFiniteLossError(f"non-finite loss at step {self.step_count + 1}; step aborted")
            nx.mul(loss, 1.0 / len(batches)).backward()
            losses.append(float(loss.data))
            tokens += n
            for name, m in self.model.trainable_for(batch[0].activation).items():
                if name in rows and rows[name] is not None and m is not None:
                    rows[name] = rows[name] | m
                elif name not in rows or m is None:
                    rows[name] = None if m is None else m.copy()

        # only the predicted set may move: drop stray gradient everywhere else
        for name, p in params.items():
            if p.grad is None:
                continue
            if name not in rows:
                p.grad = None
            elif rows[name] is not None:
                p.grad[~rows[name]] = 0
            if p.grad is not None and not np.isfinite(p.grad).all():
                self._rollback(params)
                raise NonFiniteLossError(f"non-finite gradient in {name} at step {self.step_count + 1}")

        before = {name: params[name].data.copy() for name in rows}
        self.optim.step(params, rows)
        self.step_count += 1
        self.model.trained_steps += 1
        changed = self._diff(params, rows, before)
        for p in params.values():
            p.grad = None
        return StepReport(self.step_count, float(np.mean(losses)), self.optim.lr,
                          self._labels(rows), changed, tokens)

    def _rollback(self, params):
        for p in params.values():
            p.grad = None
        log.error("step %d aborted: non-finite values, parameters left untouched", self.step_count + 1)

    def _gate_keys(self, name: str):
        for router in self.model.routers.values():
            if router.gate.name == name:
                return router.keys
        return None

    def _labels(self, rows) -> list[str]:
        out = []
        for name, m in rows.items():
            if m is None:
                out.append(name)
            else:
                keys = self._gate_keys(name)
                out += [_row_label(name, keys[r]) for r in np.flatnonzero(m)]
        return sorted(out)

    def _diff(self, params, rows, before) -> list[str]:
        out = []
        for name, old in before.items():
            new = params[name].data
            if rows[name] is None:
                if not np.array_equal(old, new):
                    out.append(name)
            else:
                keys = self._gate_keys(name)
                for r in range(new.shape[0]):
                    if not np.array_equal(old[r], new[r]):
                        out.append(_row_label(name, keys[r]))
        return sorted(out)


@dataclass
class TrainResult:
    metrics: list[dict] = field(default_factory=list)
    steps: int = 0
    checkpoint: object = None

    @property
    def final_loss(self) -> float | None:
        return self.metrics[-1]["loss"] if self.metrics else None


def train(model: HIRPFModel, examples: Sequence[TrainingExample], config: TrainConfig,
          metrics_path=None, checkpoint_dir=None, log_every: int = 0) -> TrainResult:
    """Epoch loop: deterministic given ``config.seed``; returns metrics and the final checkpoint."""
    from .checkpoint import Checkpoint, save_checkpoint

    if not examples and config.epochs > 0:
        raise ValueError("cannot train on an empty dataset")
    trainer = Trainer(model, config)
    result = TrainResult()
    fh = None
    if metrics_path is not None:
        Path(metrics_path).parent.mkdir(parents=True, exist_ok=True)
        fh = open(metrics_path, "w", encoding="utf-8")
    try:
        done = False
        for epoch in range(config.epochs):
            rng = np.random.default_rng([config.seed, epoch])
            batches = micro_batches(examples, config.batch_size, rng)
            for k in range(0, len(batches), config.grad_accum):
                rep = trainer.train_step(batches[k:k + config.grad_accum])
                row = dict(rep.metrics_row(), epoch=epoch)
                result.metrics.append(row)
                if fh:
                    fh.write(json.dumps(row) + "\n")
                if log_every and rep.step % log_every == 0:
                    log.info("step %d epoch %d loss %.4f", rep.step, epoch, rep.loss)
                if checkpoint_dir and config.checkpoint_every and rep.step % config.checkpoint_every == 0:
                    save_checkpoint(model, Path(checkpoint_dir) / f"step-{rep.step:06d}", config)
                if config.max_steps is not None and rep.step >= config.max_steps:
                    done = True
                    break
            if done:
                break
    finally:
        if fh:
            fh.close()
    result.steps = trainer.step_count
    result.checkpoint = Checkpoint.from_model(model, config)
    if checkpoint_dir:
        result.checkpoint.save(Path(checkpoint_dir) / "final")
    return result
