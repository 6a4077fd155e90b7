from .agents import (
    AGENT,
    AgentBackend,
    LocalAgent,
    RemoteAgent,
    ScriptedAgent,
    agent_lines,
    constant_agent,
    cue_agent,
    format_transcript,
    profile_agent,
)
from .items import (
    ITEMS_PER_DIMENSION,
    N_SCENARIOS,
    ItemBank,
    ScaleItem,
    ScenarioSpec,
    load_scenarios,
    personality_items,
    profession_items,
    render_prompt,
)
from .mocks import breach_in, eval_handlers, likert_from_text, mock_eval_client
from .reports import accuracy_report, profession_report, trait_report, write_report
from .scale import (
    MissingItemsError,
    ProfessionMatrix,
    ScaleSession,
    TraitScore,
    median_verdict,
    parse_likert,
    run_scale,
    run_scale_item,
    score_profession,
    score_trait,
)
from .situation import (
    AccuracyReport,
    SituationEpisode,
    compute_accuracy,
    default_grid,
    majority_detect,
    parse_breach,
    run_situation_episode,
    run_situation_test,
)
from .social import Cell, DebateTurn, Question, QuestionnaireTable, run_debate, run_questionnaire

__all__ = [
    "AGENT", "AccuracyReport", "AgentBackend", "Cell", "DebateTurn", "ITEMS_PER_DIMENSION", "ItemBank",
    "LocalAgent", "MissingItemsError", "N_SCENARIOS", "ProfessionMatrix", "Question", "QuestionnaireTable",
    "RemoteAgent", "ScaleItem", "ScaleSession", "ScenarioSpec", "ScriptedAgent", "SituationEpisode",
    "TraitScore", "accuracy_report", "agent_lines", "breach_in", "compute_accuracy", "constant_agent",
    "cue_agent", "default_grid", "eval_handlers", "format_transcript", "likert_from_text", "load_scenarios",
    "majority_detect", "median_verdict", "mock_eval_client", "parse_breach", "parse_likert",
    "personality_items", "profession_items", "profession_report", "profile_agent", "render_prompt",
    "run_debate", "run_questionnaire", "run_scale", "run_scale_item", "run_situation_episode",
    "run_situation_test", "score_profession", "score_trait", "trait_report", "write_report",
]
