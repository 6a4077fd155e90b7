"""JSON and aligned-text renderings of benchmark results."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

from .scale import ProfessionMatrix, TraitScore
from .situation import AccuracyReport


def _fmt(v, pct: bool = False) -> str:
    if v is None:
        return "-"
    return f"{100 * v:.2f}" if pct else f"{v:.2f}"


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(c)) for c in col) for col in zip(header, *rows)]
    line = lambda cells: "  ".join(str(c).rjust(w) if i else str(c).ljust(w)
                                   for i, (c, w) in enumerate(zip(cells, widths)))
    return "\n".join([line(header), "  ".join("-" * w for w in widths)] + [line(r) for r in rows])


def trait_report(scores: Mapping[str, Sequence[TraitScore]]) -> tuple[dict, str]:
    """``scores[agent_label]`` -> per-trait scores; one row per agent."""
    data = {agent: [s.to_dict() for s in ss] for agent, ss in scores.items()}
    dims = [s.dimension for s in next(iter(scores.values()))] if scores else []
    rows = []
    for agent, ss in scores.items():
        by = {s.dimension: s for s in ss}
        rows.append([agent] + [f"{_fmt(by[d].mean)} ({_fmt(by[d].magnitude)})" if d in by else "-" for d in dims])
    return data, _table(["agent"] + dims, rows)


def profession_report(matrix: ProfessionMatrix) -> tuple[dict, str]:
    rows = [[agent] + [_fmt(row[d]) for d in matrix.dimensions] for agent, row in matrix.means.items()]
    return matrix.to_dict(), _table(["agent \\ scale"] + matrix.dimensions, rows)


def accuracy_report(rep: AccuracyReport) -> tuple[dict, str]:
    dims = list(rep.per_dimension)
    table = _table(dims + ["overall"], [[_fmt(rep.per_dimension[d], True) for d in dims] + [_fmt(rep.overall, True)]])
    curve = _table(["# identities", "accuracy", "identities scored"],
                   [[str(n), _fmt(a, True), str(rep.by_identity_count_counts[n]["total"])]
                    for n, a in rep.by_identity_count.items()])
    foot = f"episodes {rep.n_episodes}, invalid (excluded) {rep.n_invalid}, breaches {rep.n_breach}"
    return rep.to_dict(), table + "\n\n" + curve + "\n" + foot


def write_report(out_dir, name: str, data: dict, text: str) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jp, tp = out / f"{name}.json", out / f"{name}.txt"
    jp.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    tp.write_text(text + "\n", encoding="utf-8")
    return jp, tp
