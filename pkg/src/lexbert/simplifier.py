"""Lexical simplification with a masked language model.

Candidates come from the MLM distribution at the target slot when the
sentence is paired with a copy of itself whose target word is masked.
Candidates are then ranked on four features (MLM probability, substituted
sentence loss, static-vector similarity, corpus frequency) and the best
average rank wins.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .constraints import AuxEmbeddingSpace
from .errors import ContractError, FormatError
from .model import Model
from .tokenizer import CONTINUATION, TokenSequence, Vocab, encode_id_pair, normalize, wordpiece_tokenize

log = logging.getLogger(__name__)

DEFAULT_K = 6
STEM_PREFIX = 4
SUFFIXES = ("ing", "est", "es", "ed", "er", "s")
FEATURES = ("probability", "lm_loss", "similarity", "frequency")
LM_LOSS_MODES = ("sequence", "single")


@dataclass
class SimplificationInstance:
    tokens: list[str]
    target_index: int
    gold: frozenset[str] = frozenset()

    def __post_init__(self):
        if not 0 <= self.target_index < len(self.tokens):
            raise ContractError(f"target index {self.target_index} outside sentence of {len(self.tokens)} words")

    @property
    def target(self) -> str:
        return self.tokens[self.target_index]


@dataclass
class RankedCandidate:
    word: str
    probability: float
    lm_loss: float
    similarity: float
    frequency: float
    ranks: tuple[int, ...] = ()
    avg_rank: float = 0.0

    def feature(self, name: str) -> float:
        return getattr(self, name)


@dataclass
class SimplificationResult:
    instance: SimplificationInstance
    candidates: list[RankedCandidate] = field(default_factory=list)
    selection: str | None = None
    skipped: str | None = None

    @property
    def words(self) -> list[str]:
        return [c.word for c in self.candidates]


def load_benchmark(path) -> list[SimplificationInstance]:
    """``sentence TAB target-index TAB gold1;gold2;...`` per line."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise FormatError(f"{path}: line {lineno}: expected 3 tab-separated fields, got {len(fields)}")
            tokens = normalize(fields[0]).split()
            try:
                index = int(fields[1])
            except ValueError:
                raise FormatError(f"{path}: line {lineno}: target index {fields[1]!r} is not an integer") from None
            if not 0 <= index < len(tokens):
                raise FormatError(f"{path}: line {lineno}: target index {index} outside sentence of {len(tokens)} words")
            gold = frozenset(normalize(g.strip()) for g in fields[2].split(";") if g.strip())
            if not gold:
                raise FormatError(f"{path}: line {lineno}: empty gold substitute set")
            out.append(SimplificationInstance(tokens, index, gold))
    return out


def load_frequencies(path) -> dict[str, int]:
    """``word TAB count`` per line."""
    table: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise FormatError(f"{path}: line {lineno}: expected 'word TAB count'")
            try:
                table[normalize(fields[0].strip())] = int(fields[1])
            except ValueError:
                raise FormatError(f"{path}: line {lineno}: count {fields[1]!r} is not an integer") from None
    return table


def light_stem(word: str) -> str:
    for suffix in SUFFIXES:
        if word.endswith(suffix) and len(word) - len(suffix) >= 2:
            return word[: -len(suffix)]
    return word


def is_morphological_variant(candidate: str, target: str) -> bool:
    """Same word, a shared prefix of at least four letters, or equal light stems."""
    c, t = normalize(candidate), normalize(target)
    if c == t:
        return True
    if len(c) >= STEM_PREFIX and len(t) >= STEM_PREFIX and c[:STEM_PREFIX] == t[:STEM_PREFIX]:
        return True
    return light_stem(c) == light_stem(t)


def assign_ranks(candidates: Sequence[RankedCandidate]) -> None:
    """Ordinal rank per feature (1 = best), ties broken by list position."""
    n = len(candidates)
    per_feature = []
    for name in FEATURES:
        values = [c.feature(name) for c in candidates]
        if name == "lm_loss":
            order = sorted(range(n), key=lambda i: (values[i], i))
        else:
            order = sorted(range(n), key=lambda i: (-values[i], i))
        ranks = [0] * n
        for r, i in enumerate(order, start=1):
            ranks[i] = r
        per_feature.append(ranks)
    for i, c in enumerate(candidates):
        c.ranks = tuple(ranks[i] for ranks in per_feature)
        c.avg_rank = sum(c.ranks) / len(FEATURES)


def rank_and_select(candidates: Sequence[RankedCandidate]) -> RankedCandidate:
    """Lowest average rank; ties go to higher MLM probability, then the smaller word."""
    if not candidates:
        raise ContractError("rank_and_select needs at least one candidate")
    assign_ranks(candidates)
    return min(candidates, key=lambda c: (c.avg_rank, -c.probability, c.word))


def evaluate_generation(candidate_lists: Sequence[Sequence[str]], gold_sets: Sequence[frozenset[str]]) -> dict[str, float]:
    """Micro-averaged precision, recall, and F1 of candidate lists against gold sets."""
    if len(candidate_lists) != len(gold_sets):
        raise ContractError("candidate lists and gold sets must be aligned")
    hits = n_cand = n_gold = 0
    for cands, gold in zip(candidate_lists, gold_sets):
        cands = set(cands)
        hits += len(cands & set(gold))
        n_cand += len(cands)
        n_gold += len(gold)
    p = hits / n_cand if n_cand else 0.0
    r = hits / n_gold if n_gold else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return {"precision": p, "recall": r, "f1": f1}


def evaluate_pipeline(selections: Sequence[str | None], gold_sets: Sequence[frozenset[str]]) -> float:
    """Fraction of instances whose selection is a gold substitute; ``None`` counts as wrong."""
    if len(selections) != len(gold_sets):
        raise ContractError("selections and gold sets must be aligned")
    if not selections:
        return 0.0
    correct = sum(1 for s, g in zip(selections, gold_sets) if s is not None and s in g)
    return correct / len(selections)


class Simplifier:
    def __init__(
        self,
        model: Model,
        vocab: Vocab,
        aux_space: AuxEmbeddingSpace | None = None,
        frequencies: dict[str, int] | None = None,
        max_seq_len: int = 128,
        k: int = DEFAULT_K,
        lm_loss_mode: str = "sequence",
    ):
        if k < 1:
            raise ContractError(f"k must be >= 1, got {k}")
        if lm_loss_mode not in LM_LOSS_MODES:
            raise ContractError(f"lm_loss_mode must be one of {LM_LOSS_MODES}, got {lm_loss_mode!r}")
        self.model = model
        self.vocab = vocab
        self.aux_space = aux_space
        self.frequencies = frequencies or {}
        self.max_seq_len = max_seq_len
        self.k = k
        self.lm_loss_mode = lm_loss_mode

    # candidate generation ----------------------------------------------

    def _word_ids(self, words: Sequence[str]) -> list[list[int]]:
        return [[self.vocab.id_of(p) for p in wordpiece_tokenize(w, self.vocab)] for w in words]

    def masked_pair(self, instance: SimplificationInstance) -> tuple[TokenSequence, int | None]:
        """Encode (S, S') with the target masked in S'; also return the mask position."""
        pieces = self._word_ids(instance.tokens)
        a = [i for word in pieces for i in word]
        b = [i for j, word in enumerate(pieces) for i in (
            [self.vocab.mask_id] if j == instance.target_index else word)]
        seq = encode_id_pair(a, b, self.vocab, self.max_seq_len)
        for pos, (tok, seg) in enumerate(zip(seq.token_ids, seq.segment_ids)):
            if tok == self.vocab.mask_id and seg == 1 and seq.attention_mask[pos]:
                return seq, pos
        return seq, None

    def mlm_distribution(self, instance: SimplificationInstance) -> np.ndarray | None:
        seq, pos = self.masked_pair(instance)
        if pos is None:
            return None
        with T.no_grad():
            out = self.model.forward([seq.token_ids], [seq.segment_ids], [seq.attention_mask])
            probs = self.model.mlm_head(out.hidden, [pos])
        return probs.data[0]

    def eligible(self, token_id: int, target: str) -> bool:
        if token_id in self.vocab.special_ids:
            return False
        piece = self.vocab.piece_of(token_id)
        if piece.startswith(CONTINUATION):
            return False
        return not is_morphological_variant(piece, target)

    def generate_candidates(self, instance: SimplificationInstance, k: int | None = None,
                            probs: np.ndarray | None = None) -> list[str]:
        """Top-k eligible single-piece words by MLM probability at the masked slot."""
        k = self.k if k is None else k
        if k < 1:
            raise ContractError(f"k must be >= 1, got {k}")
        if probs is None:
            probs = self.mlm_distribution(instance)
            if probs is None:
                return []
        out = []
        for token_id in np.argsort(-probs, kind="stable"):
            if self.eligible(int(token_id), instance.target):
                out.append(self.vocab.piece_of(int(token_id)))
                if len(out) == k:
                    break
        return out

    # features ----------------------------------------------------------

    def sentence_loss(self, words: Sequence[str], position: int) -> float:
        """Mean masked NLL of the sentence, masking one piece at a time.

        In ``single`` mode only the pieces of the word at ``position`` are scored.
        """
        pieces = self._word_ids(words)
        ids = [i for word in pieces for i in word]
        seq = encode_id_pair(ids, [], self.vocab, self.max_seq_len)
        n = seq.length - 2
        if self.lm_loss_mode == "single":
            start = 1 + sum(len(w) for w in pieces[:position])
            targets = [p for p in range(start, start + len(pieces[position])) if p <= n]
        else:
            targets = list(range(1, n + 1))
        batch = np.array([seq.token_ids] * len(targets))
        for row, p in enumerate(targets):
            batch[row, p] = self.vocab.mask_id
        S = batch.shape[1]
        flat = [row * S + p for row, p in enumerate(targets)]
        with T.no_grad():
            out = self.model.forward(batch, [seq.segment_ids] * len(targets), [seq.attention_mask] * len(targets))
            probs = self.model.mlm_head(out.hidden, flat).data
        gold = np.array([seq.token_ids[p] for p in targets])
        picked = np.maximum(probs[np.arange(len(targets)), gold], T.PROB_FLOOR)
        return float(np.mean(-np.log(picked)))

    def feature_scores(self, instance: SimplificationInstance, candidate: str,
                       probs: np.ndarray | None = None) -> RankedCandidate:
        if candidate not in self.vocab:
            raise ContractError(f"candidate {candidate!r} is not a single vocabulary piece")
        if probs is None:
            probs = self.mlm_distribution(instance)
            if probs is None:
                raise ContractError("masked position lost to truncation")
        words = list(instance.tokens)
        words[instance.target_index] = candidate
        target = normalize(instance.target)
        similarity = 0.0
        if self.aux_space is not None and target in self.aux_space and candidate in self.aux_space:
            similarity = self.aux_space.cosine(target, candidate)
        return RankedCandidate(
            word=candidate,
            probability=float(probs[self.vocab.id_of(candidate)]),
            lm_loss=self.sentence_loss(words, instance.target_index),
            similarity=similarity,
            frequency=float(self.frequencies.get(candidate, 0)),
        )

    # pipeline ----------------------------------------------------------

    def simplify(self, instance: SimplificationInstance) -> SimplificationResult:
        probs = self.mlm_distribution(instance)
        if probs is None:
            log.warning("instance %r skipped: masked position truncated away", " ".join(instance.tokens))
            return SimplificationResult(instance, skipped="masked position beyond max_seq_len")
        words = self.generate_candidates(instance, probs=probs)
        ranked = [self.feature_scores(instance, w, probs) for w in words]
        result = SimplificationResult(instance, ranked)
        if ranked:
            result.selection = rank_and_select(ranked).word
        return result


def report(results: Sequence[SimplificationResult], which: str = "both") -> dict:
    """JSON-ready summary with per-instance candidates and selections."""
    gold = [r.instance.gold for r in results]
    out: dict = {"instances": len(results), "skipped": sum(1 for r in results if r.skipped)}
    if which in ("generation", "both"):
        out["generation"] = evaluate_generation([r.words for r in results], gold)
    if which in ("pipeline", "both"):
        out["pipeline"] = {"accuracy": evaluate_pipeline([r.selection for r in results], gold)}
    out["per_instance"] = [
        {
            "sentence": " ".join(r.instance.tokens),
            "target": r.instance.target,
            "candidates": [
                {"word": c.word, "probability": c.probability, "lm_loss": c.lm_loss,
                 "similarity": c.similarity, "frequency": c.frequency,
                 "ranks": list(c.ranks), "avg_rank": c.avg_rank}
                for c in r.candidates
            ],
            "selection": r.selection,
            "skipped": r.skipped,
        }
        for r in results
    ]
    return out
