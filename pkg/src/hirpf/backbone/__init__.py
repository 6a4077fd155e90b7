from .generate import Sampling, generate
from .model import ROLES, Backbone, ModelConfig, SequenceLengthError, pad_batch
from .tokenizer import (
    BOS,
    EOS,
    PAD,
    SPECIALS,
    SPK_A,
    SPK_B,
    SYS,
    VOCAB_SIZE,
    ByteTokenizer,
    DecodeError,
    detokenize,
    tokenize,
)

__all__ = [
    "BOS", "EOS", "PAD", "SPECIALS", "SPK_A", "SPK_B", "SYS", "VOCAB_SIZE", "ROLES",
    "Backbone", "ByteTokenizer", "DecodeError", "ModelConfig", "Sampling",
    "SequenceLengthError", "detokenize", "generate", "pad_batch", "tokenize",
]
