from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .data import (
    ROLE_PROMPT_TEMPLATE,
    DatasetValidationError,
    DialogueSample,
    PromptBuilder,
    TrainingExample,
    Turn,
    build_training_example,
    load_dataset,
    read_dataset,
    role_prompt,
    write_dataset,
)
from .fixtures import overfit_fixture
from .loop import (
    NonFiniteLossError,
    StepReport,
    TrainConfig,
    Trainer,
    TrainResult,
    ablation_mode,
    micro_batches,
    train,
)
from .optim import AdamW

__all__ = [
    "AdamW", "Checkpoint", "CheckpointError", "DatasetValidationError", "DialogueSample",
    "NonFiniteLossError", "PromptBuilder", "ROLE_PROMPT_TEMPLATE", "StepReport", "TrainConfig",
    "TrainResult", "Trainer", "TrainingExample", "Turn", "ablation_mode", "build_training_example",
    "load_checkpoint", "load_dataset", "micro_batches", "overfit_fixture", "read_dataset",
    "role_prompt", "save_checkpoint", "train", "write_dataset",
]
