import sys

import numpy as np
import pytest

from lexbert.model import ModelConfig
from lexbert.tokenizer import SPECIAL_TOKENS, Vocab
from lexbert.toy import make_toy_world


def numeric_grad(f, arr: np.ndarray, eps: float = 1e-6, indices=None) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``arr`` (modified in place, then restored)."""
    grad = np.zeros_like(arr)
    it = indices if indices is not None else np.ndindex(arr.shape)
    for idx in it:
        old = arr[idx]
        arr[idx] = old + eps
        up = f()
        arr[idx] = old - eps
        down = f()
        arr[idx] = old
        grad[idx] = (up - down) / (2 * eps)
    return grad


@pytest.fixture(scope="session")
def toy_world():
    return make_toy_world(seed=0)


@pytest.fixture
def small_vocab() -> Vocab:
    words = ["the", "cat", "sat", "on", "mat", "men", "##ded", "reg", "##ener", "##ated", "un", "##lock", "##ed",
             "a", "dog", "ran", ".", ","]
    return Vocab.from_pieces(list(SPECIAL_TOKENS) + words)


@pytest.fixture
def tiny_config() -> ModelConfig:
    return ModelConfig(vocab_size=23, hidden=8, layers=1, heads=2, intermediate=16, max_positions=16)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
