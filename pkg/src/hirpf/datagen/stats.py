"""Dataset statistics in the shape of the corpus summary table."""

from __future__ import annotations

from typing import Sequence

from ..trainer.data import DialogueSample

# (key, label, definition)
TABLE1_METRICS = (
    ("num_samples", "# of samples", "number of dialogues"),
    ("avg_turns", "Avg. # of turns", "turns per dialogue, averaged over dialogues"),
    ("avg_words_per_response", "Avg. # of words per response",
     "whitespace-separated words per turn, pooled over all turns of all dialogues"),
    ("avg_words_per_dialogue", "Avg. # of words per dialogue", "words summed over a dialogue, averaged over dialogues"),
    ("avg_active_identities", "Avg. # of active identities", "size of active_identities, averaged over dialogues"),
)

# corpus-scale reference values; documentation only, never asserted at desk scale
TABLE1_REFERENCE = {
    "num_samples": 20685,
    "avg_turns": 9.52,
    "avg_words_per_response": 11.59,
    "avg_words_per_dialogue": 220.67,
    "avg_active_identities": 1.67,
}


def word_count(text: str) -> int:
    return len(text.split())


def compute_stats(samples: Sequence[DialogueSample]) -> dict:
    n = len(samples)
    if n == 0:
        return {k: 0 if k == "num_samples" else 0.0 for k, _, _ in TABLE1_METRICS}
    turns = sum(len(s.turns) for s in samples)
    words = sum(word_count(t.text) for s in samples for t in s.turns)
    active = sum(len(s.active_identities) for s in samples)
    return {
        "num_samples": n,
        "avg_turns": turns / n,
        "avg_words_per_response": words / turns if turns else 0.0,
        "avg_words_per_dialogue": words / n,
        "avg_active_identities": active / n,
    }


def stats_report(stats: dict) -> dict:
    """Values plus the metric labels and definitions, ready for ``stats.json``."""
    return {
        "metrics": [{"key": k, "label": label, "definition": d, "value": stats[k]}
                    for k, label, d in TABLE1_METRICS],
        "reference": dict(TABLE1_REFERENCE),
    }


def format_stats(stats: dict) -> str:
    width = max(len(label) for _, label, _ in TABLE1_METRICS)
    lines = []
    for k, label, _ in TABLE1_METRICS:
        v = stats[k]
        lines.append(f"{label:<{width}}  {v:,}" if k == "num_samples" else f"{label:<{width}}  {v:.2f}")
    return "\n".join(lines)
