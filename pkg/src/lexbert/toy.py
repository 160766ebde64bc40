"""Synthetic toy resources for smoke runs and tests.

Every content word is a three-letter stem followed by a one-letter
continuation piece (``bak`` + ``##o`` spells ``bako``). A constraint pair joins
two words sharing a stem, and each stem backs exactly one pair, so a mined
negative always crosses stems. Static vectors are a per-stem direction plus
small per-word noise, which makes positives and mined negatives separable by
cosine alone.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .constraints import HYPONYM_HYPERNYM, POSITIVE, SYNONYM, AuxEmbeddingSpace, ConstraintPair
from .pretraining_data import Document
from .tokenizer import SPECIAL_TOKENS, Vocab, tokenize

FUNCTION_WORDS = ("the", "a", "of", "and", "to", "in", "is", "was", "with", "on", "it", "that", ".", ",")
VERBS = ("saw", "took", "made", "found", "gave", "kept", "held", "left")
SUFFIXES = ("a", "e", "i", "o", "u")
_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"

TEMPLATES = (
    "the {0} {v} the {1} .",
    "a {0} was with the {1} .",
    "it is {0} and {1} .",
    "the {0} of the {1} {v} a {2} .",
    "that {0} {v} it on the {1} .",
)


@dataclass
class ToyWorld:
    vocab: Vocab
    documents: list[list[str]]
    train_constraints: list[ConstraintPair]
    heldout_constraints: list[ConstraintPair]
    vectors: dict[str, np.ndarray]
    frequencies: dict[str, int]
    simplification: list[tuple[str, int, list[str]]]

    @property
    def space(self) -> AuxEmbeddingSpace:
        return AuxEmbeddingSpace.from_dict(self.vectors)

    def corpus(self) -> list[Document]:
        return [
            Document([[self.vocab.id_of(p) for p in tokenize(s, self.vocab)] for s in doc])
            for doc in self.documents
        ]

    @property
    def n_sentences(self) -> int:
        return sum(len(d) for d in self.documents)


def _stems(n: int, rng: np.random.Generator) -> list[str]:
    every = ["".join(t) for t in itertools.product(_CONSONANTS, _VOWELS, _CONSONANTS)]
    taken = set(FUNCTION_WORDS) | set(VERBS)
    every = [s for s in every if s not in taken]
    if n > len(every):
        raise ValueError(f"at most {len(every)} stems available")
    idx = rng.choice(len(every), size=n, replace=False)
    return [every[i] for i in idx]


def make_toy_world(
    seed: int = 0,
    n_train: int = 200,
    n_heldout: int = 40,
    n_docs: int = 50,
    sentences_per_doc: int = 10,
    dim: int = 32,
    noise: float = 0.2,
    stems_per_doc: int = 8,
) -> ToyWorld:
    rng = np.random.default_rng(seed)
    stems = _stems(n_train + n_heldout, rng)

    pairs = []
    for i, stem in enumerate(stems):
        a, b = rng.choice(len(SUFFIXES), size=2, replace=False)
        relation = HYPONYM_HYPERNYM if i % 5 == 4 else SYNONYM
        pairs.append(ConstraintPair(stem + SUFFIXES[a], stem + SUFFIXES[b], relation, POSITIVE))

    vectors: dict[str, np.ndarray] = {}
    for stem in stems:
        base = rng.normal(size=dim)
        base /= np.linalg.norm(base)
        for suf in SUFFIXES:
            vectors[stem + suf] = base + noise * rng.normal(size=dim) / np.sqrt(dim)

    # every stem appears in the corpus; documents draw from a small topic set
    order = rng.permutation(len(stems))
    documents = []
    for d in range(n_docs):
        topic = [stems[order[(d * stems_per_doc + j) % len(stems)]] for j in range(stems_per_doc)]
        sentences = []
        for _ in range(sentences_per_doc):
            template = TEMPLATES[int(rng.integers(len(TEMPLATES)))]
            words = [topic[int(rng.integers(len(topic)))] + SUFFIXES[int(rng.integers(len(SUFFIXES)))] for _ in range(3)]
            sentences.append(template.format(*words, v=VERBS[int(rng.integers(len(VERBS)))]))
        documents.append(sentences)

    frequencies: dict[str, int] = {}
    for sentence in itertools.chain.from_iterable(documents):
        for word in sentence.split():
            frequencies[word] = frequencies.get(word, 0) + 1

    # single-piece words for simplification targets: stems and verbs
    simplification = []
    for sentence in itertools.chain.from_iterable(documents[:5]):
        tokens = sentence.split()
        for i, tok in enumerate(tokens):
            if tok in VERBS:
                gold = [v for v in VERBS if v != tok][:3]
                simplification.append((sentence, i, gold))
                break

    pieces = list(SPECIAL_TOKENS) + sorted(set(FUNCTION_WORDS) | set(VERBS) | set(stems))
    pieces += ["##" + s for s in SUFFIXES]
    return ToyWorld(
        vocab=Vocab.from_pieces(pieces),
        documents=documents,
        train_constraints=pairs[:n_train],
        heldout_constraints=pairs[n_train:],
        vectors=vectors,
        frequencies=frequencies,
        simplification=simplification,
    )


def write_toy_files(world: ToyWorld, directory) -> dict[str, Path]:
    """Write the world in the on-disk formats the loaders and CLI read."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "vocab": out / "vocab.txt",
        "corpus": out / "corpus.txt",
        "constraints": out / "constraints.tsv",
        "heldout": out / "heldout.tsv",
        "aux": out / "aux.vec",
        "freq": out / "freq.tsv",
        "simplify": out / "simplify.tsv",
    }
    world.vocab.save(paths["vocab"])
    paths["corpus"].write_text("\n\n".join("\n".join(doc) for doc in world.documents) + "\n", encoding="utf-8")

    def constraint_lines(pairs):
        code = {SYNONYM: "syn", HYPONYM_HYPERNYM: "hyp"}
        return "".join(f"{p.w1}\t{p.w2}\t{code[p.relation_source]}\n" for p in pairs)

    paths["constraints"].write_text(constraint_lines(world.train_constraints), encoding="utf-8")
    paths["heldout"].write_text(constraint_lines(world.heldout_constraints), encoding="utf-8")
    dim = len(next(iter(world.vectors.values())))
    lines = [f"{len(world.vectors)} {dim}"]
    lines += [w + " " + " ".join(repr(float(x)) for x in vec) for w, vec in sorted(world.vectors.items())]
    paths["aux"].write_text("\n".join(lines) + "\n", encoding="utf-8")
    paths["freq"].write_text("".join(f"{w}\t{c}\n" for w, c in sorted(world.frequencies.items())), encoding="utf-8")
    paths["simplify"].write_text(
        "".join(f"{s}\t{i}\t{';'.join(g)}\n" for s, i, g in world.simplification), encoding="utf-8"
    )
    return paths
