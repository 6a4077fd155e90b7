"""A run directory: every artifact of one subcommand plus a manifest that hashes them."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .. import __version__

MANIFEST = "manifest.json"


def _dump(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


class RunDir:
    """Artifacts are recorded relative to the run root; no timestamps, so reruns compare equal."""

    def __init__(self, root, command: str, config: dict):
        self.root = Path(root)
        self.command = command
        self.config = config
        self.root.mkdir(parents=True, exist_ok=True)
        self._artifacts: set[str] = set()

    def path(self, rel: str) -> Path:
        p = self.root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def add(self, rel) -> Path:
        """Record a file or directory that some module wrote under the root."""
        rel = Path(rel)
        if rel.is_absolute():
            rel = rel.relative_to(self.root)
        target = self.root / rel
        files = sorted(p for p in target.rglob("*") if p.is_file()) if target.is_dir() else [target]
        for f in files:
            self._artifacts.add(f.relative_to(self.root).as_posix())
        return target

    def write_json(self, rel: str, data: dict) -> Path:
        """JSON report with the resolved config echoed next to the payload."""
        p = self.path(rel)
        p.write_text(_dump({"config": self.config, "command": self.command, **data}), encoding="utf-8")
        return self.add(rel)

    def write_text(self, rel: str, text: str) -> Path:
        p = self.path(rel)
        p.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
        return self.add(rel)

    def manifest(self, status: str = "ok", summary: dict | None = None) -> dict:
        artifacts = []
        for rel in sorted(self._artifacts):
            raw = (self.root / rel).read_bytes()
            artifacts.append({"path": rel, "bytes": len(raw), "sha256": hashlib.sha256(raw).hexdigest()})
        return {"command": self.command, "version": __version__, "status": status,
                "config": self.config, "summary": summary or {}, "artifacts": artifacts}

    def finish(self, status: str = "ok", summary: dict | None = None) -> Path:
        (self.root / "config.json").write_text(_dump(self.config), encoding="utf-8")
        p = self.root / MANIFEST
        p.write_text(_dump(self.manifest(status, summary)), encoding="utf-8")
        return p
