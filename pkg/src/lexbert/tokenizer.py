"""WordPiece vocabulary, subword segmentation, and pair encoding."""

from __future__ import annotations

import logging
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import ConfigError, ContractError, FormatError

log = logging.getLogger(__name__)

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP, MASK)
CONTINUATION = "##"
MAX_WORD_CHARS = 100


@dataclass(frozen=True)
class Vocab:
    pieces: tuple[str, ...]
    index: dict[str, int] = field(repr=False, compare=False)

    @classmethod
    def from_pieces(cls, pieces: Sequence[str]) -> Vocab:
        index: dict[str, int] = {}
        for i, piece in enumerate(pieces):
            if piece in index:
                raise FormatError(f"duplicate piece {piece!r} at positions {index[piece]} and {i}")
            index[piece] = i
        missing = [tok for tok in SPECIAL_TOKENS if tok not in index]
        if missing:
            raise ConfigError(f"missing special tokens: {', '.join(missing)}")
        return cls(tuple(pieces), index)

    def __len__(self) -> int:
        return len(self.pieces)

    def __contains__(self, piece: str) -> bool:
        return piece in self.index

    def id_of(self, piece: str) -> int:
        return self.index.get(piece, self.index[UNK])

    def piece_of(self, token_id: int) -> str:
        if not 0 <= token_id < len(self.pieces):
            raise ContractError(f"token id {token_id} outside vocabulary of size {len(self.pieces)}")
        return self.pieces[token_id]

    @property
    def pad_id(self) -> int:
        return self.index[PAD]

    @property
    def unk_id(self) -> int:
        return self.index[UNK]

    @property
    def cls_id(self) -> int:
        return self.index[CLS]

    @property
    def sep_id(self) -> int:
        return self.index[SEP]

    @property
    def mask_id(self) -> int:
        return self.index[MASK]

    @property
    def special_ids(self) -> frozenset[int]:
        return frozenset(self.index[tok] for tok in SPECIAL_TOKENS)

    def save(self, path) -> None:
        Path(path).write_text("".join(p + "\n" for p in self.pieces), encoding="utf-8")


def load_vocab(path) -> Vocab:
    """Read a vocabulary file: one piece per line, line number (from 0) is the id."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    index: dict[str, int] = {}
    for i, raw in enumerate(lines):
        piece = raw.rstrip("\r")
        if not piece:
            raise FormatError(f"{path}: line {i + 1}: empty piece")
        if piece in index:
            raise FormatError(f"{path}: line {i + 1}: duplicate piece {piece!r} (first on line {index[piece] + 1})")
        index[piece] = i
    missing = [tok for tok in SPECIAL_TOKENS if tok not in index]
    if missing:
        raise ConfigError(f"{path}: missing special tokens: {', '.join(missing)}")
    return Vocab(tuple(index), index)


def normalize(text: str) -> str:
    """NFC + lowercase. Accents are kept."""
    return unicodedata.normalize("NFC", text).lower()


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P") or (ch.isascii() and not ch.isalnum() and not ch.isspace())


def basic_tokenize(text: str) -> list[str]:
    """Normalise, split on whitespace, and isolate punctuation characters."""
    words: list[str] = []
    for chunk in normalize(text).split():
        current = []
        for ch in chunk:
            if _is_punct(ch):
                if current:
                    words.append("".join(current))
                    current = []
                words.append(ch)
            else:
                current.append(ch)
        if current:
            words.append("".join(current))
    return words


def wordpiece_tokenize(word: str, vocab: Vocab) -> list[str]:
    """Greedy longest-match-first segmentation of a single word.

    Falls back to ``[UNK]`` when any suffix of the word cannot be matched.
    """
    if not word:
        raise ContractError("wordpiece_tokenize needs a non-empty word")
    if len(word) > MAX_WORD_CHARS:
        return [UNK]
    pieces = []
    start = 0
    while start < len(word):
        end = len(word)
        match = None
        while start < end:
            candidate = word[start:end]
            if start > 0:
                candidate = CONTINUATION + candidate
            if candidate in vocab.index:
                match = candidate
                break
            end -= 1
        if match is None:
            return [UNK]
        pieces.append(match)
        start = end
    return pieces


def tokenize(text: str, vocab: Vocab) -> list[str]:
    return [p for w in basic_tokenize(text) for p in wordpiece_tokenize(w, vocab)]


@dataclass
class TokenSequence:
    token_ids: list[int]
    segment_ids: list[int]
    attention_mask: list[int]

    def __post_init__(self):
        n = len(self.token_ids)
        if len(self.segment_ids) != n or len(self.attention_mask) != n:
            raise ContractError("token, segment, and mask lists must have equal length")

    def __len__(self) -> int:
        return len(self.token_ids)

    @property
    def length(self) -> int:
        """Number of non-padding positions."""
        return sum(self.attention_mask)

    def pieces(self, vocab: Vocab, with_padding: bool = False) -> list[str]:
        n = len(self) if with_padding else self.length
        return [vocab.piece_of(t) for t in self.token_ids[:n]]


def _truncate_pair(a: list[int], b: list[int], budget: int) -> bool:
    truncated = False
    while len(a) + len(b) > budget:
        truncated = True
        if len(a) > len(b):
            a.pop()
        else:
            b.pop()
    return truncated


def encode_id_pair(a_ids: Sequence[int], b_ids: Sequence[int], vocab: Vocab, max_len: int) -> TokenSequence:
    """``[CLS] a [SEP] b [SEP]`` (or ``[CLS] a [SEP]`` if ``b`` is empty), padded to ``max_len``."""
    a, b = list(a_ids), list(b_ids)
    n_special = 3 if b else 2
    if max_len < n_special + (2 if b else 1):
        raise ContractError(f"max_len {max_len} leaves no room for content")
    if _truncate_pair(a, b, max_len - n_special):
        log.warning("pair of lengths %d+%d truncated to fit max_len=%d", len(a_ids), len(b_ids), max_len)
    tokens = [vocab.cls_id, *a, vocab.sep_id]
    segments = [0] * len(tokens)
    if b:
        tokens += [*b, vocab.sep_id]
        segments += [1] * (len(b) + 1)
    n = len(tokens)
    pad = max_len - n
    # padding repeats the last segment id so segment ids stay non-decreasing
    return TokenSequence(
        tokens + [vocab.pad_id] * pad,
        segments + [segments[-1]] * pad,
        [1] * n + [0] * pad,
    )


def encode_pair(a_pieces: Sequence[str], b_pieces: Sequence[str], vocab: Vocab, max_len: int) -> TokenSequence:
    return encode_id_pair(
        [vocab.id_of(p) for p in a_pieces], [vocab.id_of(p) for p in b_pieces], vocab, max_len
    )


def decode(ids: Sequence[int], vocab: Vocab) -> str:
    """Join pieces into text, merging ``##`` continuations and dropping specials."""
    words: list[str] = []
    specials = vocab.special_ids
    for token_id in ids:
        piece = vocab.piece_of(int(token_id))
        if token_id in specials:
            continue
        if piece.startswith(CONTINUATION) and words:
            words[-1] += piece[len(CONTINUATION):]
        else:
            words.append(piece)
    return " ".join(words)
