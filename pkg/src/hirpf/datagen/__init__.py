from .client import (
    ChatClient,
    ChatClientError,
    HTTPChatClient,
    ScriptedClient,
    TokenBucket,
    assistant,
    check_messages,
    system,
    user,
)
from .mock import DeterministicMock, detect_identities, message_seed, named_identities
from .pipelines import (
    DatagenPlan,
    DatagenResult,
    DialogueParseError,
    GenRecord,
    Provenance,
    RetryExhausted,
    dialogue_text,
    gen_multi,
    gen_personality,
    gen_profession,
    parse_dialogue,
    parse_verdict,
    reannotate,
    run_datagen,
)
from .prompts import JSON_EXAMPLE, TEMPLATE_NAMES, TemplateError, fill, load_template, render, template_version
from .stats import TABLE1_METRICS, TABLE1_REFERENCE, compute_stats, format_stats, stats_report, word_count

__all__ = [
    "ChatClient", "ChatClientError", "DatagenPlan", "DatagenResult", "DeterministicMock", "DialogueParseError",
    "GenRecord", "HTTPChatClient", "JSON_EXAMPLE", "Provenance", "RetryExhausted", "ScriptedClient",
    "TABLE1_METRICS", "TABLE1_REFERENCE", "TEMPLATE_NAMES", "TemplateError", "TokenBucket", "assistant",
    "check_messages", "compute_stats", "detect_identities", "dialogue_text", "fill", "format_stats", "gen_multi",
    "gen_personality", "gen_profession", "load_template", "message_seed", "named_identities",
    "parse_dialogue", "parse_verdict", "reannotate", "render", "run_datagen", "stats_report", "system",
    "template_version", "user", "word_count",
]
