"""Checkpoint directory: ``manifest.json`` plus a raw little-endian ``tensors.bin``."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..backbone import Backbone, ByteTokenizer, ModelConfig
from ..identity import AdapterConfig, HIRPFModel, IdentityRegistry
from .loop import TrainConfig

FORMAT = "hirpf-checkpoint"
VERSION = 1
_LE = {"float32": "<f4", "float64": "<f8"}


class CheckpointError(RuntimeError):
    pass


@dataclass
class Checkpoint:
    manifest: dict
    blob: bytes

    @classmethod
    def from_model(cls, model: HIRPFModel, train_config: TrainConfig | None = None) -> Checkpoint:
        dtype = "float64" if model.dtype == np.float64 else "float32"
        params = model.named_parameters()
        directory, chunks, offset = [], [], 0
        for name in sorted(params):
            arr = np.ascontiguousarray(params[name].data, dtype=_LE[dtype])
            raw = arr.tobytes()
            directory.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
            chunks.append(raw)
            offset += len(raw)
        blob = b"".join(chunks)
        manifest = {
            "format": FORMAT,
            "version": VERSION,
            "dtype": dtype,
            "model_config": model.backbone.config.to_dict(),
            "adapter_config": model.config.to_dict(),
            "registry": model.registry.to_dict(),
            "tokenizer": ByteTokenizer(model.backbone.config.vocab_size).to_dict(),
            "train_config": train_config.to_dict() if train_config else None,
            "trained_steps": model.trained_steps,
            "tensors": directory,
            "sha256": hashlib.sha256(blob).hexdigest(),
        }
        return cls(manifest, blob)

    def manifest_bytes(self) -> bytes:
        return (json.dumps(self.manifest, indent=2, sort_keys=True) + "\n").encode("utf-8")

    def save(self, path) -> Path:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        (path / "tensors.bin").write_bytes(self.blob)
        (path / "manifest.json").write_bytes(self.manifest_bytes())
        return path

    @classmethod
    def read(cls, path) -> Checkpoint:
        path = Path(path)
        try:
            manifest = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
            blob = (path / "tensors.bin").read_bytes()
        except FileNotFoundError as exc:
            raise CheckpointError(f"incomplete checkpoint at {path}: {exc}") from exc
        if manifest.get("format") != FORMAT:
            raise CheckpointError(f"{path} is not a {FORMAT} directory")
        if manifest.get("version") != VERSION:
            raise CheckpointError(f"checkpoint version {manifest.get('version')} is not supported (expected {VERSION})")
        digest = hashlib.sha256(blob).hexdigest()
        if digest != manifest.get("sha256"):
            raise CheckpointError(f"tensor blob hash mismatch: manifest {manifest.get('sha256')}, file {digest}")
        return cls(manifest, blob)

    def arrays(self) -> dict[str, np.ndarray]:
        dt = np.dtype(_LE[self.manifest["dtype"]])
        out = {}
        for entry in self.manifest["tensors"]:
            start, n = entry["offset"], entry["nbytes"]
            if start + n > len(self.blob):
                raise CheckpointError(f"tensor {entry['name']} runs past the end of the blob")
            arr = np.frombuffer(self.blob[start:start + n], dtype=dt).reshape(entry["shape"])
            out[entry["name"]] = arr.astype(dt.newbyteorder("="))
        return out

    def build_model(self) -> HIRPFModel:
        m = self.manifest
        mcfg = ModelConfig.from_dict(m["model_config"])
        backbone = Backbone.init(mcfg)
        model = HIRPFModel(backbone, IdentityRegistry.from_dict(m["registry"]),
                           AdapterConfig.from_dict(m["adapter_config"]))
        params = model.named_parameters()
        arrays = self.arrays()
        if set(arrays) != set(params):
            missing = sorted(set(params) - set(arrays))
            extra = sorted(set(arrays) - set(params))
            raise CheckpointError(f"tensor set mismatch; missing {missing[:5]}, unexpected {extra[:5]}")
        for name, arr in arrays.items():
            if params[name].shape != arr.shape:
                raise CheckpointError(f"{name}: shape {arr.shape} does not match model {params[name].shape}")
            params[name].data[...] = arr
        model.trained_steps = int(m.get("trained_steps", 0))
        return model

    @property
    def train_config(self) -> TrainConfig | None:
        tc = self.manifest.get("train_config")
        return TrainConfig.from_dict(tc) if tc else None


def save_checkpoint(model: HIRPFModel, path, train_config: TrainConfig | None = None) -> Checkpoint:
    ck = Checkpoint.from_model(model, train_config)
    ck.save(path)
    return ck


def load_checkpoint(path) -> HIRPFModel:
    return Checkpoint.read(path).build_model()
