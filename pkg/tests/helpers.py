"""Shared oracles for the test suite."""

import math

import numpy as np

from lexbert import tensor as T
from lexbert.model import Model, ModelConfig
from lexbert.pretraining_data import MlmNspBatch


def random_mlm_batch(rng, vocab_size, batch=4, seq=16, n_special=5) -> MlmNspBatch:
    ids = rng.integers(n_special, vocab_size, size=(batch, seq))
    ids[:, 0] = 2
    mask = np.ones((batch, seq), dtype=np.int64)
    mask[0, -3:] = 0  # some padding
    ids[0, -3:] = 0
    segs = np.zeros((batch, seq), dtype=np.int64)
    segs[:, seq // 2:] = 1
    pos = np.array([b * seq + p for b in range(batch) for p in (1, 3, 5)])
    labels = rng.integers(n_special, vocab_size, size=pos.size)
    nsp = np.eye(2)[rng.integers(0, 2, size=batch)]
    return MlmNspBatch(ids, segs, mask, nsp, pos, labels)


def joint_loss(model: Model, mlm_batch, lrc_arrays):
    total, _, _ = model.mlm_nsp_loss(mlm_batch)
    ids, segs, mask, labels = lrc_arrays
    lrc, _ = model.lrc_loss(ids, segs, mask, labels)
    return total + lrc


def gradient_check(model: Model, loss_fn, rng, max_entries=24, eps=1e-5):
    """Per-tensor relative error between autodiff and central differences.

    Tensors with at most ``max_entries`` elements are checked in full; larger
    ones at ``max_entries`` random positions.
    """
    loss = loss_fn()
    grads = T.backward(loss, model.params)
    errors = {}
    for name, p in model.params.items():
        flat = p.data.reshape(-1)
        if flat.size <= max_entries:
            idx = np.arange(flat.size)
        else:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        analytic = grads[name].reshape(-1)[idx]
        numeric = np.empty(idx.size)
        for j, i in enumerate(idx):
            old = flat[i]
            flat[i] = old + eps
            with T.no_grad():
                up = loss_fn().item()
            flat[i] = old - eps
            with T.no_grad():
                down = loss_fn().item()
            flat[i] = old
            numeric[j] = (up - down) / (2 * eps)
        scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-8)
        errors[name] = float(np.linalg.norm(analytic - numeric) / scale)
    return errors


def gradcheck_config(vocab_size=200) -> ModelConfig:
    return ModelConfig(vocab_size=vocab_size, hidden=32, layers=2, heads=2, max_positions=16, dropout=0.1)


def brute_force_negatives(batch, raw_vectors):
    """Exhaustive cosine scan written without the library's unit-norm cache."""
    def cos(a, b):
        va, vb = raw_vectors[a], raw_vectors[b]
        dot = sum(x * y for x, y in zip(va, vb))
        return dot / (math.sqrt(sum(x * x for x in va)) * math.sqrt(sum(y * y for y in vb)))

    words = sorted({w for p in batch for w in (p.w1, p.w2)})
    positives = {frozenset((p.w1, p.w2)) for p in batch}
    out = []
    for p in batch:
        for slot, anchor in ((1, p.w2), (2, p.w1)):
            best, best_cos = None, -math.inf
            for w in words:
                if w in (p.w1, p.w2) or frozenset((w, anchor)) in positives:
                    continue
                c = cos(anchor, w)
                if c > best_cos + 1e-12:  # strict: earlier (smaller) word wins ties
                    best, best_cos = w, c
            out.append((best, p.w2) if slot == 1 else (p.w1, best))
    return out
