"""Masked-LM and next-sentence instances from a plain-text corpus."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import ContractError, DataError
from .tokenizer import TokenSequence, Vocab, encode_id_pair, tokenize

log = logging.getLogger(__name__)

MASK_RATE = 0.15
MASK_TOKEN_FRAC = 0.8
RANDOM_TOKEN_FRAC = 0.1

# one-hot NSP label: index 0 = adjacent, index 1 = random
IS_NEXT_LABEL = (1.0, 0.0)
NOT_NEXT_LABEL = (0.0, 1.0)


@dataclass
class Document:
    sentences: list[list[int]]


@dataclass
class MlmNspInstance:
    sequence: TokenSequence
    is_next: bool
    mlm_positions: list[int]
    mlm_labels: list[int]

    def restored_ids(self) -> list[int]:
        ids = list(self.sequence.token_ids)
        for pos, label in zip(self.mlm_positions, self.mlm_labels):
            ids[pos] = label
        return ids


@dataclass
class MlmNspBatch:
    input_ids: np.ndarray
    segment_ids: np.ndarray
    attention_mask: np.ndarray
    nsp_labels: np.ndarray
    mlm_positions: np.ndarray  # flat indices into batch * seq
    mlm_labels: np.ndarray

    def __len__(self) -> int:
        return self.input_ids.shape[0]


def load_corpus(path, vocab: Vocab) -> list[Document]:
    """One sentence per line; blank lines separate documents."""
    docs: list[Document] = []
    current: list[list[int]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                if current:
                    docs.append(Document(current))
                    current = []
                continue
            ids = [vocab.id_of(p) for p in tokenize(line, vocab)]
            if all(i == vocab.unk_id for i in ids):
                log.warning("%s: line %d tokenizes entirely to [UNK]", path, lineno)
            current.append(ids)
    if current:
        docs.append(Document(current))
    if not docs:
        raise DataError(f"{path}: corpus holds no documents")
    return docs


def make_nsp_pairs(
    docs: Sequence[Document], seed: np.random.Generator | int | None
) -> Iterator[tuple[list[int], list[int], bool]]:
    """Endless stream of ``(sentence_a, sentence_b, is_next)``.

    Half the pairs are adjacent sentences of one document; the other half take
    ``sentence_b`` uniformly from a different document.
    """
    if len(docs) < 2:
        raise ContractError("next-sentence negatives need at least 2 documents")
    multi = [i for i, d in enumerate(docs) if len(d.sentences) >= 2]
    if not multi:
        raise ContractError("next-sentence positives need a document with at least 2 sentences")
    return _nsp_pairs(docs, multi, np.random.default_rng(seed))


def _nsp_pairs(docs, multi, rng):
    while True:
        if rng.random() < 0.5:
            doc = docs[multi[int(rng.integers(len(multi)))]]
            j = int(rng.integers(len(doc.sentences) - 1))
            yield doc.sentences[j], doc.sentences[j + 1], True
        else:
            di = int(rng.integers(len(docs)))
            a_doc = docs[di]
            other = int(rng.integers(len(docs) - 1))
            if other >= di:
                other += 1
            b_doc = docs[other]
            a = a_doc.sentences[int(rng.integers(len(a_doc.sentences)))]
            b = b_doc.sentences[int(rng.integers(len(b_doc.sentences)))]
            yield a, b, False


def masked_count(n_maskable: int, rate: float = MASK_RATE) -> int:
    return max(1, math.floor(rate * n_maskable))


def mask_tokens(
    sequence: TokenSequence,
    vocab: Vocab,
    seed: np.random.Generator | int | None,
    is_next: bool = True,
    rate: float = MASK_RATE,
) -> MlmNspInstance:
    """Select 15% of content positions (at least one) and corrupt them 80/10/10."""
    rng = np.random.default_rng(seed)
    never = {vocab.cls_id, vocab.sep_id, vocab.pad_id, vocab.mask_id}
    maskable = [
        i for i, (tok, keep) in enumerate(zip(sequence.token_ids, sequence.attention_mask))
        if keep and tok not in never
    ]
    if not maskable:
        raise ContractError("sequence has no maskable position")
    n = masked_count(len(maskable), rate)
    positions = sorted(int(p) for p in rng.choice(maskable, size=n, replace=False))
    replacements = [i for i in range(len(vocab)) if i not in vocab.special_ids]
    ids = list(sequence.token_ids)
    labels = []
    for pos in positions:
        labels.append(ids[pos])
        r = rng.random()
        if r < MASK_TOKEN_FRAC:
            ids[pos] = vocab.mask_id
        elif r < MASK_TOKEN_FRAC + RANDOM_TOKEN_FRAC:
            ids[pos] = replacements[int(rng.integers(len(replacements)))]
    masked = TokenSequence(ids, list(sequence.segment_ids), list(sequence.attention_mask))
    return MlmNspInstance(masked, is_next, positions, labels)


def collate(instances: Sequence[MlmNspInstance]) -> MlmNspBatch:
    seq_len = len(instances[0].sequence)
    flat_pos, labels = [], []
    for b, inst in enumerate(instances):
        flat_pos.extend(b * seq_len + p for p in inst.mlm_positions)
        labels.extend(inst.mlm_labels)
    return MlmNspBatch(
        input_ids=np.array([i.sequence.token_ids for i in instances], dtype=np.int64),
        segment_ids=np.array([i.sequence.segment_ids for i in instances], dtype=np.int64),
        attention_mask=np.array([i.sequence.attention_mask for i in instances], dtype=np.int64),
        nsp_labels=np.array([IS_NEXT_LABEL if i.is_next else NOT_NEXT_LABEL for i in instances]),
        mlm_positions=np.array(flat_pos, dtype=np.int64),
        mlm_labels=np.array(labels, dtype=np.int64),
    )


class PretrainingStream:
    """Seeded source of collated MLM+NSP batches."""

    def __init__(self, docs: Sequence[Document], vocab: Vocab, max_len: int, seed: int):
        self.vocab = vocab
        self.max_len = max_len
        self.rng = np.random.default_rng([seed, 1])
        self._pairs = make_nsp_pairs(docs, self.rng)

    def next_instances(self, k: int) -> list[MlmNspInstance]:
        out = []
        for _ in range(k):
            a, b, is_next = next(self._pairs)
            seq = encode_id_pair(a, b, self.vocab, self.max_len)
            out.append(mask_tokens(seq, self.vocab, self.rng, is_next))
        return out

    def next_batch(self, k: int) -> MlmNspBatch:
        return collate(self.next_instances(k))

    def state(self) -> dict:
        return {"rng": self.rng.bit_generator.state}

    def restore(self, state: dict) -> None:
        self.rng.bit_generator.state = state["rng"]
