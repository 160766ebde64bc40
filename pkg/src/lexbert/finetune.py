"""Fine-tuning harness: a fresh dense head on the pooled [CLS] vector."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, DataError, FormatError
from .metrics import CLASSIFICATION_METRICS, REGRESSION_METRICS, metrics
from .model import Model, mean_nll, one_hot
from .optim import AdamState, adam_step
from .tokenizer import TokenSequence, Vocab, encode_pair, tokenize

log = logging.getLogger(__name__)

KINDS = {
    "cls1": "single-sentence classification",
    "cls2": "sentence-pair classification",
    "reg": "sentence-pair regression",
}


@dataclass(frozen=True)
class FineTuneTask:
    kind: str
    num_labels: int = 2
    metric_names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"task kind must be one of {sorted(KINDS)}, got {self.kind!r}")
        if self.is_regression:
            object.__setattr__(self, "num_labels", 1)
            allowed = REGRESSION_METRICS
        else:
            if self.num_labels < 2:
                raise ConfigError(f"classification needs at least 2 labels, got {self.num_labels}")
            allowed = CLASSIFICATION_METRICS if self.num_labels == 2 else ("accuracy", "mcc")
        if not self.metric_names:
            object.__setattr__(self, "metric_names", allowed)
        bad = [m for m in self.metric_names if m not in allowed]
        if bad:
            raise ConfigError(f"metric {bad[0]!r} does not apply to {KINDS[self.kind]}")

    @property
    def is_regression(self) -> bool:
        return self.kind == "reg"

    @property
    def n_outputs(self) -> int:
        return 1 if self.is_regression else self.num_labels

    @property
    def selection_metric(self) -> str:
        return self.metric_names[0]


@dataclass
class Example:
    sequence: TokenSequence
    label: float


def load_examples(path, task: FineTuneTask, vocab: Vocab, max_len: int) -> list[Example]:
    """TSV rows: ``sentence TAB label`` (cls1) or ``sentence TAB sentence TAB label``."""
    n_fields = 2 if task.kind == "cls1" else 3
    out = []
    with open(path, encoding="utf-8") as fh:
        for row, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != n_fields:
                raise FormatError(f"{path}: row {row}: expected {n_fields} tab-separated fields, got {len(fields)}")
            label = _parse_label(fields[-1].strip(), task, path, row)
            a = tokenize(fields[0], vocab)
            b = tokenize(fields[1], vocab) if n_fields == 3 else []
            out.append(Example(encode_pair(a, b, vocab, max_len), label))
    return out


def _parse_label(text: str, task: FineTuneTask, path, row: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{path}: row {row}: label {text!r} is not a number") from None
    if task.is_regression:
        if not math.isfinite(value):
            raise DataError(f"{path}: row {row}: label {text!r} is not finite")
        return value
    if value != int(value) or not 0 <= value < task.num_labels:
        raise DataError(f"{path}: row {row}: label {text!r} outside 0..{task.num_labels - 1}")
    return int(value)


@dataclass
class FineTuneConfig:
    lr: float = 2e-5
    epochs: int = 3
    batch_size: int = 16
    freeze_encoder: bool = False
    seed: int = 0


@dataclass
class FineTuneResult:
    head: dict[str, np.ndarray]
    best_epoch: int
    dev_metrics: dict[str, float]
    history: list[dict] = field(default_factory=list)


def _arrays(examples: list[Example]):
    return (
        np.array([e.sequence.token_ids for e in examples], dtype=np.int64),
        np.array([e.sequence.segment_ids for e in examples], dtype=np.int64),
        np.array([e.sequence.attention_mask for e in examples], dtype=np.int64),
    )


def encoder_params(model: Model) -> dict[str, T.Tensor]:
    """Parameters the pooled vector depends on."""
    return {k: v for k, v in model.params.items() if k.startswith(("embeddings.", "layer.", "pooler."))}


def head_output(pooled: T.Tensor, head: dict[str, T.Tensor]) -> T.Tensor:
    return pooled @ head["task.w"] + head["task.b"]


def task_loss(outputs: T.Tensor, labels: np.ndarray, task: FineTuneTask) -> T.Tensor:
    if task.is_regression:
        diff = outputs.reshape(-1) - T.Tensor(labels.astype(np.float64))
        return T.mean(diff * diff)
    probs = T.softmax(outputs, axis=-1)
    return mean_nll(probs, one_hot(labels.astype(np.int64), task.n_outputs))


def predict(model: Model, head: dict[str, T.Tensor], examples: list[Example], task: FineTuneTask,
            batch_size: int = 64) -> np.ndarray:
    preds = []
    with T.no_grad():
        for i in range(0, len(examples), batch_size):
            ids, segs, mask = _arrays(examples[i:i + batch_size])
            out = head_output(model.forward(ids, segs, mask).pooled, head).data
            preds.append(out[:, 0] if task.is_regression else out.argmax(axis=1))
    return np.concatenate(preds)


def fine_tune(
    model: Model,
    task: FineTuneTask,
    train: list[Example],
    dev: list[Example],
    config: FineTuneConfig,
) -> FineTuneResult:
    """Train a task head (and optionally the encoder); keep the best dev epoch.

    On return ``model`` holds the encoder weights of the best epoch.
    """
    if not train:
        raise DataError("fine-tuning needs at least one training example")
    if len(dev) < 2:
        raise DataError("fine-tuning needs at least two dev examples")
    rng = np.random.default_rng([config.seed, 5])
    H = model.config.hidden
    head = {
        "task.w": T.Tensor(rng.normal(0.0, model.config.init_std, size=(H, task.n_outputs)), requires_grad=True),
        "task.b": T.Tensor(np.zeros(task.n_outputs), requires_grad=True),
    }
    trainable = dict(head)
    if not config.freeze_encoder:
        trainable.update(encoder_params(model))
    labels = np.array([e.label for e in train])
    dev_gold = np.array([e.label for e in dev])
    opt = AdamState(base_lr=config.lr)
    best_score, best_epoch, best_metrics, best_state = -math.inf, 0, {}, None
    history = []

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train))
        losses = []
        for i in range(0, len(order), config.batch_size):
            idx = order[i:i + config.batch_size]
            ids, segs, mask = _arrays([train[j] for j in idx])
            if config.freeze_encoder:
                with T.no_grad():
                    pooled = model.forward(ids, segs, mask).pooled
                pooled = T.Tensor(pooled.data)
            else:
                pooled = model.forward(ids, segs, mask, training=True, rng=rng).pooled
            loss = task_loss(head_output(pooled, head), labels[idx], task)
            grads = T.backward(loss, trainable)
            adam_step(opt, trainable, grads, config.lr)
            losses.append(loss.item())
        scores = metrics(predict(model, head, dev, task), dev_gold, task.kind)
        scores = {k: scores[k] for k in task.metric_names if k in scores}
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)), **scores})
        log.info("epoch %d: %s", epoch, history[-1])
        if scores[task.selection_metric] > best_score:
            best_score, best_epoch, best_metrics = scores[task.selection_metric], epoch, scores
            best_state = {k: v.data.copy() for k, v in trainable.items()}

    for k, v in trainable.items():
        v.data = best_state[k]
    return FineTuneResult(
        head={k: v.data.copy() for k, v in head.items()},
        best_epoch=best_epoch,
        dev_metrics=best_metrics,
        history=history,
    )
