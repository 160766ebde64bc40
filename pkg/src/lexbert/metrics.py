"""Downstream evaluation metrics."""

from __future__ import annotations

import logging
import math
from typing import Sequence

import numpy as np

from .errors import ContractError

log = logging.getLogger(__name__)

CLASSIFICATION_METRICS = ("accuracy", "f1", "mcc")
REGRESSION_METRICS = ("pearson",)


def _pair(predictions, golds) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(predictions)
    g = np.asarray(golds)
    if p.ndim != 1 or p.shape != g.shape:
        raise ContractError(f"predictions and golds must be equal-length vectors, got {p.shape} and {g.shape}")
    if p.size < 2:
        raise ContractError(f"need at least 2 examples, got {p.size}")
    return p, g


def accuracy(predictions, golds) -> float:
    p, g = _pair(predictions, golds)
    return float(np.mean(p == g))


def f1_binary(predictions, golds, positive=1) -> float:
    """F1 of the ``positive`` class; 0.0 when that class is never predicted nor gold."""
    p, g = _pair(predictions, golds)
    tp = int(np.sum((p == positive) & (g == positive)))
    fp = int(np.sum((p == positive) & (g != positive)))
    fn = int(np.sum((p != positive) & (g == positive)))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def mcc(predictions, golds) -> float:
    """Matthews correlation; binary labels use the 2x2 confusion formula.

    Any other label set uses the multi-class generalisation over the K x K
    confusion matrix. A zero denominator yields 0.0.
    """
    p, g = _pair(predictions, golds)
    labels = np.union1d(p, g)
    if set(labels.tolist()) <= {0, 1}:
        tp = float(np.sum((p == 1) & (g == 1)))
        tn = float(np.sum((p == 0) & (g == 0)))
        fp = float(np.sum((p == 1) & (g == 0)))
        fn = float(np.sum((p == 0) & (g == 1)))
        denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
        if denom == 0:
            log.info("MCC denominator is zero; returning 0.0")
            return 0.0
        return (tp * tn - fp * fn) / math.sqrt(denom)
    index = {lab: i for i, lab in enumerate(labels.tolist())}
    conf = np.zeros((len(labels), len(labels)))
    for pi, gi in zip(p.tolist(), g.tolist()):
        conf[index[gi], index[pi]] += 1
    t = conf.sum(axis=1)
    q = conf.sum(axis=0)
    c = np.trace(conf)
    s = conf.sum()
    denom = (s * s - q @ q) * (s * s - t @ t)
    if denom == 0:
        log.info("MCC denominator is zero; returning 0.0")
        return 0.0
    return float((c * s - t @ q) / math.sqrt(denom))


def pearson(predictions, golds) -> float:
    p, g = _pair(predictions, golds)
    p = p.astype(np.float64)
    g = g.astype(np.float64)
    dp = p - p.mean()
    dg = g - g.mean()
    denom = math.sqrt(float(dp @ dp) * float(dg @ dg))
    if denom == 0:
        log.info("Pearson denominator is zero; returning 0.0")
        return 0.0
    return float(dp @ dg) / denom


_FUNCS = {"accuracy": accuracy, "f1": f1_binary, "mcc": mcc, "pearson": pearson}


def metrics(predictions: Sequence, golds: Sequence, kind: str) -> dict[str, float]:
    """Named scores for a task kind: ``cls1``/``cls2`` (classification) or ``reg``."""
    if kind in ("cls1", "cls2", "classification"):
        names = CLASSIFICATION_METRICS
        if len(np.union1d(np.asarray(predictions), np.asarray(golds))) > 2:
            names = ("accuracy", "mcc")
    elif kind in ("reg", "regression"):
        names = REGRESSION_METRICS
    else:
        raise ContractError(f"unknown task kind {kind!r}")
    return {name: _FUNCS[name](predictions, golds) for name in names}
