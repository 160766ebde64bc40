"""Lexically informed BERT pretraining and lexical simplification on numpy."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ContractError,
    DataError,
    FormatError,
    IntegrityError,
    LexbertError,
    NumericError,
    ShapeError,
    TrainingDiverged,
)
from .model import Model, ModelConfig
from .tensor import Tensor, backward, no_grad
from .tokenizer import Vocab, encode_pair, load_vocab, tokenize

__all__ = [
    "ConfigError", "ContractError", "DataError", "FormatError", "IntegrityError", "LexbertError",
    "NumericError", "ShapeError", "TrainingDiverged", "Model", "ModelConfig", "Tensor", "backward",
    "no_grad", "Vocab", "encode_pair", "load_vocab", "tokenize",
]
