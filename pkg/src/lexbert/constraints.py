"""Lexical constraints, in-batch negative mining, and relation-classifier batches.

Each positive word pair (w1, w2) yields two negatives, (u, w2) and (w1, v),
where u is the batch word closest to w2 and v the batch word closest to w1
by cosine in an auxiliary static embedding space.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import ContractError, FormatError
from .tokenizer import TokenSequence, Vocab, encode_pair, normalize, wordpiece_tokenize

log = logging.getLogger(__name__)

SYNONYM = "synonym"
HYPONYM_HYPERNYM = "hyponym-hypernym"
POSITIVE = "positive"
NEGATIVE = "negative"

_RELATION_CODES = {"syn": SYNONYM, "hyp": HYPONYM_HYPERNYM}

# one-hot label convention
POSITIVE_LABEL = (1.0, 0.0)
NEGATIVE_LABEL = (0.0, 1.0)


@dataclass(frozen=True)
class ConstraintPair:
    w1: str
    w2: str
    relation_source: str = SYNONYM
    label: str = POSITIVE
    # provenance of mined negatives; not part of pair identity
    source: int = field(default=-1, compare=False)
    slot: int = field(default=0, compare=False)
    cosine: float | None = field(default=None, compare=False)

    @property
    def words(self) -> tuple[str, str]:
        return (self.w1, self.w2)

    @property
    def one_hot(self) -> tuple[float, float]:
        return POSITIVE_LABEL if self.label == POSITIVE else NEGATIVE_LABEL


def _dedup_key(pair: ConstraintPair):
    if pair.relation_source == SYNONYM:
        return (SYNONYM, frozenset(pair.words))
    return (pair.relation_source, pair.words)


def load_constraints(path) -> list[ConstraintPair]:
    """Read ``w1 TAB w2 TAB {syn|hyp}`` lines.

    Synonyms are deduplicated as unordered pairs, hyponym-hypernym pairs as
    ordered ones. Both kinds load as positives.
    """
    pairs: list[ConstraintPair] = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise FormatError(f"{path}: line {lineno}: expected 3 tab-separated fields, got {len(fields)}")
            w1, w2, code = (f.strip() for f in fields)
            if code not in _RELATION_CODES:
                raise FormatError(f"{path}: line {lineno}: relation must be 'syn' or 'hyp', got {code!r}")
            if not w1 or not w2 or any(ch.isspace() for ch in w1 + w2):
                raise FormatError(f"{path}: line {lineno}: words must be non-empty and contain no whitespace")
            w1, w2 = normalize(w1), normalize(w2)
            if w1 == w2:
                log.warning("%s: line %d: identical words %r skipped", path, lineno, w1)
                continue
            pair = ConstraintPair(w1, w2, _RELATION_CODES[code], POSITIVE)
            key = _dedup_key(pair)
            if key in seen:
                continue
            seen.add(key)
            pairs.append(pair)
    return pairs


@dataclass
class AuxEmbeddingSpace:
    """Static word vectors stored at unit norm, so cosine is a dot product."""

    dim: int
    vectors: dict[str, np.ndarray]

    def __contains__(self, word: str) -> bool:
        return word in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def cosine(self, a: str, b: str) -> float:
        return float(self.vectors[a] @ self.vectors[b])

    @classmethod
    def from_dict(cls, raw: dict[str, Sequence[float]]) -> AuxEmbeddingSpace:
        vectors = {}
        dim = None
        for word, vec in raw.items():
            arr = np.asarray(vec, dtype=np.float64)
            dim = dim or arr.shape[0]
            if arr.shape != (dim,):
                raise FormatError(f"vector for {word!r} has dimension {arr.shape[0]}, expected {dim}")
            norm = np.linalg.norm(arr)
            if norm == 0.0:
                raise FormatError(f"zero-norm vector for word {word!r}")
            vectors[normalize(word)] = arr / norm
        return cls(dim or 0, vectors)


def load_embeddings(path) -> AuxEmbeddingSpace:
    """Read word vectors in the ``count dim`` header text format."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise FormatError(f"{path}: line 1: expected header 'count dim'")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError:
            raise FormatError(f"{path}: line 1: header values must be integers") from None
        vectors: dict[str, np.ndarray] = {}
        n_lines = 0
        for lineno, raw in enumerate(fh, start=2):
            parts = raw.rstrip("\r\n").split(" ")
            if not raw.strip():
                continue
            n_lines += 1
            word, values = parts[0], [p for p in parts[1:] if p]
            if len(values) != dim:
                raise FormatError(f"{path}: line {lineno}: {len(values)} values for dimension {dim}")
            try:
                vec = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError:
                raise FormatError(f"{path}: line {lineno}: non-numeric vector component") from None
            norm = np.linalg.norm(vec)
            if norm == 0.0:
                raise FormatError(f"{path}: line {lineno}: zero-norm vector for word {word!r}")
            vectors.setdefault(normalize(word), vec / norm)
    if n_lines != count:
        raise FormatError(f"{path}: header declares {count} vectors, file holds {n_lines}")
    return AuxEmbeddingSpace(dim, vectors)


def candidate_pool(batch_p: Sequence[ConstraintPair]) -> list[str]:
    """All distinct words of the batch, both slots, in sorted order."""
    return sorted({w for pair in batch_p for w in pair.words})


def _closest(
    anchor: str,
    exclude: set[str],
    pool: Sequence[str],
    space: AuxEmbeddingSpace,
    rng: np.random.Generator,
) -> tuple[str, float | None]:
    allowed = [w for w in pool if w not in exclude]
    if not allowed:
        raise ContractError(f"no candidate left in the batch pool to pair with {anchor!r}")
    in_space = [w for w in allowed if w in space]
    if anchor not in space or not in_space:
        choice = allowed[int(rng.integers(len(allowed)))]
        log.info("no embedding to mine a negative for %r; picked %r at random", anchor, choice)
        return choice, None
    anchor_vec = space.vectors[anchor]
    sims = np.array([space.vectors[w] @ anchor_vec for w in in_space])
    # pool is sorted, so argmax picks the lexicographically smallest among ties
    best = int(np.argmax(sims))
    return in_space[best], float(sims[best])


def sample_negatives(
    batch_p: Sequence[ConstraintPair],
    space: AuxEmbeddingSpace,
    rng: np.random.Generator | int | None = None,
) -> list[ConstraintPair]:
    """Mine two negatives per positive from within the batch.

    For a positive (w1, w2) the first negative replaces w1 by the pool word
    with the highest cosine to w2, the second replaces w2 by the pool word
    closest to w1. The pool is every word of the batch except the pair's own
    two words and any word that would recreate a positive of this batch.
    Ties go to the lexicographically smallest word.
    """
    if len(batch_p) < 2:
        raise ContractError(f"negative mining needs at least 2 positives, got {len(batch_p)}")
    rng = np.random.default_rng(rng)
    pool = candidate_pool(batch_p)
    positives = {frozenset(p.words) for p in batch_p}
    negatives = []
    for i, pair in enumerate(batch_p):
        w1, w2 = pair.words
        blocked = {w for w in pool if frozenset((w, w2)) in positives}
        u, cos_u = _closest(w2, {w1, w2} | blocked, pool, space, rng)
        negatives.append(ConstraintPair(u, w2, pair.relation_source, NEGATIVE, source=i, slot=1, cosine=cos_u))
        blocked = {w for w in pool if frozenset((w1, w)) in positives}
        v, cos_v = _closest(w1, {w1, w2} | blocked, pool, space, rng)
        negatives.append(ConstraintPair(w1, v, pair.relation_source, NEGATIVE, source=i, slot=2, cosine=cos_v))
    return negatives


@dataclass
class LrcBatch:
    positives: list[ConstraintPair]
    negatives: list[ConstraintPair]
    pairs: list[ConstraintPair]
    instances: list[TokenSequence]
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.instances)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Token ids, segment ids, and attention mask as ``(n, max_len)`` int arrays."""
        return (
            np.array([s.token_ids for s in self.instances], dtype=np.int64),
            np.array([s.segment_ids for s in self.instances], dtype=np.int64),
            np.array([s.attention_mask for s in self.instances], dtype=np.int64),
        )


def encode_constraint(pair: ConstraintPair, vocab: Vocab, max_len: int) -> TokenSequence:
    a = wordpiece_tokenize(pair.w1, vocab)
    b = wordpiece_tokenize(pair.w2, vocab)
    if len(a) + len(b) + 3 > max_len:
        raise ContractError(f"pair {pair.words} needs {len(a) + len(b) + 3} positions, max_len is {max_len}")
    return encode_pair(a, b, vocab, max_len)


def build_lrc_batch(
    batch_p: Sequence[ConstraintPair],
    negatives: Sequence[ConstraintPair],
    vocab: Vocab,
    max_len: int,
    rng: np.random.Generator | int | None = None,
) -> LrcBatch:
    """Encode k positives and 2k negatives, then shuffle them together."""
    if not negatives:
        raise ContractError("an LRC batch needs its mined negatives")
    if len(negatives) != 2 * len(batch_p):
        raise ContractError(f"expected {2 * len(batch_p)} negatives, got {len(negatives)}")
    rng = np.random.default_rng(rng)
    ordered = list(batch_p) + list(negatives)
    order = rng.permutation(len(ordered))
    pairs = [ordered[i] for i in order]
    return LrcBatch(
        positives=list(batch_p),
        negatives=list(negatives),
        pairs=pairs,
        instances=[encode_constraint(p, vocab, max_len) for p in pairs],
        labels=np.array([p.one_hot for p in pairs], dtype=np.float64),
    )


class PositiveBatcher:
    """Epoch-wise shuffled mini-batches of k positives; the ragged tail is dropped.

    The permutation for epoch ``e`` is derived from ``(seed, e)``, so the
    whole position in the stream is captured by ``(epoch, cursor)``.
    """

    def __init__(self, constraints: Sequence[ConstraintPair], k: int, seed: int):
        if k < 2:
            raise ContractError(f"batch_k must be >= 2, got {k}")
        if len(constraints) < k:
            raise ContractError(f"{len(constraints)} constraints cannot fill a batch of {k}")
        self.constraints = list(constraints)
        self.k = k
        self.seed = seed
        self.epoch = 0
        self.cursor = 0
        self._order = self._permutation(0)

    def _permutation(self, epoch: int) -> np.ndarray:
        return np.random.default_rng([self.seed, 3, epoch]).permutation(len(self.constraints))

    def next_batch(self) -> list[ConstraintPair]:
        if self.cursor + self.k > len(self.constraints):
            self.epoch += 1
            self.cursor = 0
            self._order = self._permutation(self.epoch)
        idx = self._order[self.cursor:self.cursor + self.k]
        self.cursor += self.k
        return [self.constraints[i] for i in idx]

    def __iter__(self) -> Iterator[list[ConstraintPair]]:
        while True:
            yield self.next_batch()

    def state(self) -> dict:
        return {"epoch": self.epoch, "cursor": self.cursor}

    def restore(self, state: dict) -> None:
        self.epoch = int(state["epoch"])
        self.cursor = int(state["cursor"])
        self._order = self._permutation(self.epoch)


class LrcBatchStream:
    """Positive batching, negative mining, and encoding chained into one stream."""

    def __init__(
        self,
        constraints: Sequence[ConstraintPair],
        space: AuxEmbeddingSpace,
        vocab: Vocab,
        k: int,
        max_len: int,
        seed: int,
    ):
        self.batcher = PositiveBatcher(constraints, k, seed)
        self.space = space
        self.vocab = vocab
        self.max_len = max_len
        self.rng = np.random.default_rng([seed, 2])

    def next_batch(self) -> LrcBatch:
        positives = self.batcher.next_batch()
        negatives = sample_negatives(positives, self.space, self.rng)
        return build_lrc_batch(positives, negatives, self.vocab, self.max_len, self.rng)

    def state(self) -> dict:
        return {"batcher": self.batcher.state(), "rng": self.rng.bit_generator.state}

    def restore(self, state: dict) -> None:
        self.batcher.restore(state["batcher"])
        self.rng.bit_generator.state = state["rng"]
