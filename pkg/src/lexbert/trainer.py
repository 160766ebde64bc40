"""Balanced alternating multi-task pretraining.

Each call to :meth:`Trainer.alternating_step` performs one optimizer update on
the masked-LM + next-sentence objective and then (unless running as the
baseline) one update on the lexical-relation objective. The step counter
counts MLM+NSP updates only.

By default each objective keeps its own Adam moments. With shared moments the
much larger masked-LM gradients set the second-moment scale of every encoder
weight and the relation objective barely moves them; ``shared_moments=True``
restores a single state.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .constraints import AuxEmbeddingSpace, ConstraintPair, LrcBatch, LrcBatchStream
from .errors import ConfigError, NumericError, TrainingDiverged
from .model import Model, ModelConfig
from .optim import AdamState, adam_step, lr_at
from .pretraining_data import Document, MlmNspBatch, PretrainingStream
from .tokenizer import Vocab

log = logging.getLogger(__name__)

__all__ = ["TrainConfig", "StepResult", "Trainer", "lr_at"]


@dataclass
class TrainConfig:
    base_lr: float = 2e-5
    warmup_steps: int = 1000
    batch_k: int = 16
    max_seq_len: int = 128
    lrc_max_len: int = 0  # 0 means max_seq_len
    total_steps: int = 1000
    seed: int = 0
    lrc_enabled: bool = True
    lrc_ratio: int = 1
    log_every: int = 10
    shared_moments: bool = False

    def __post_init__(self):
        if self.warmup_steps < 1:
            raise ConfigError("warmup_steps must be >= 1")
        if self.batch_k < 2:
            raise ConfigError("batch_k must be >= 2")
        if self.lrc_ratio < 1:
            raise ConfigError("lrc_ratio must be >= 1")
        if self.lrc_max_len <= 0:
            self.lrc_max_len = self.max_seq_len


@dataclass
class StepResult:
    step: int
    lr: float
    loss_mlm: float
    loss_nsp: float
    loss_lrc: float | None = None
    lrc_accuracy: float | None = None

    @property
    def loss_mlm_nsp(self) -> float:
        return self.loss_mlm + self.loss_nsp


def _check_finite(value: float, objective: str, step: int) -> None:
    if not math.isfinite(value):
        raise TrainingDiverged(f"{objective} objective diverged at step {step}: loss = {value}")


def lrc_arrays(batch: LrcBatch):
    ids, segs, mask = batch.arrays()
    return ids, segs, mask, batch.labels


class Trainer:
    def __init__(
        self,
        model: Model,
        config: TrainConfig,
        pretraining: PretrainingStream,
        lrc: LrcBatchStream | None = None,
        optimizers: dict[str, AdamState] | None = None,
    ):
        if config.lrc_enabled and lrc is None:
            raise ConfigError("LRC objective enabled but no constraint stream supplied")
        self.model = model
        self.config = config
        self.pretraining = pretraining
        self.lrc = lrc if config.lrc_enabled else None
        if optimizers is None:
            optimizers = {"mlm_nsp": AdamState(base_lr=config.base_lr)}
            if self.lrc is not None and not config.shared_moments:
                optimizers["lrc"] = AdamState(base_lr=config.base_lr)
        self.optimizers = optimizers
        self.dropout_rng = np.random.default_rng([config.seed, 4])
        self.step = 0

    @classmethod
    def build(
        cls,
        model_config: ModelConfig,
        config: TrainConfig,
        docs: Sequence[Document],
        vocab: Vocab,
        constraints: Sequence[ConstraintPair] | None = None,
        space: AuxEmbeddingSpace | None = None,
    ) -> Trainer:
        model = Model(model_config, seed=[config.seed, 0])
        stream = PretrainingStream(docs, vocab, config.max_seq_len, config.seed)
        lrc = None
        if config.lrc_enabled:
            if constraints is None or space is None:
                raise ConfigError("LRC objective needs constraints and an auxiliary embedding space")
            lrc = LrcBatchStream(constraints, space, vocab, config.batch_k, config.lrc_max_len, config.seed)
        return cls(model, config, stream, lrc)

    def optimizer_for(self, objective: str) -> AdamState:
        if objective == "lrc" and not self.config.shared_moments:
            return self.optimizers["lrc"]
        return self.optimizers["mlm_nsp"]

    # updates -----------------------------------------------------------

    def mlm_nsp_update(self, batch: MlmNspBatch, lr: float) -> tuple[float, float]:
        try:
            loss, loss_mlm, loss_nsp = self.model.mlm_nsp_loss(batch, training=True, rng=self.dropout_rng)
        except NumericError as exc:
            raise TrainingDiverged(f"MLM+NSP objective diverged at step {self.step}: {exc}") from exc
        _check_finite(loss.item(), "MLM+NSP", self.step)
        group = self.model.group("mlm_nsp")
        grads = T.backward(loss, group)
        adam_step(self.optimizer_for("mlm_nsp"), group, grads, lr)
        return loss_mlm.item(), loss_nsp.item()

    def lrc_update(self, batch: LrcBatch, lr: float) -> tuple[float, float]:
        ids, segs, mask, labels = lrc_arrays(batch)
        try:
            loss, probs = self.model.lrc_loss(ids, segs, mask, labels, training=True, rng=self.dropout_rng)
        except NumericError as exc:
            raise TrainingDiverged(f"LRC objective diverged at step {self.step}: {exc}") from exc
        _check_finite(loss.item(), "LRC", self.step)
        group = self.model.group("lrc")
        grads = T.backward(loss, group)
        adam_step(self.optimizer_for("lrc"), group, grads, lr)
        accuracy = float(np.mean(probs.data.argmax(axis=1) == labels.argmax(axis=1)))
        return loss.item(), accuracy

    def alternating_step(
        self, mlm_nsp_batch: MlmNspBatch | None = None, lrc_batch: LrcBatch | None = None
    ) -> StepResult:
        """One MLM+NSP update followed by ``lrc_ratio`` LRC updates.

        Batches are drawn from the trainer's streams when not supplied.
        """
        if mlm_nsp_batch is None:
            mlm_nsp_batch = self.pretraining.next_batch(self.config.batch_k)
        lr = lr_at(self.step + 1, self.config)
        loss_mlm, loss_nsp = self.mlm_nsp_update(mlm_nsp_batch, lr)
        result = StepResult(self.step + 1, lr, loss_mlm, loss_nsp)
        if self.lrc is not None:
            losses, accs = [], []
            for i in range(self.config.lrc_ratio):
                batch = lrc_batch if (lrc_batch is not None and i == 0) else self.lrc.next_batch()
                loss, acc = self.lrc_update(batch, lr)
                losses.append(loss)
                accs.append(acc)
            result.loss_lrc = float(np.mean(losses))
            result.lrc_accuracy = float(np.mean(accs))
        self.step += 1
        return result

    def train(
        self,
        steps: int | None = None,
        log_file=None,
        callback: Callable[[StepResult], None] | None = None,
    ) -> list[StepResult]:
        """Run ``steps`` alternating steps, writing one JSON line per ``log_every`` steps."""
        steps = self.config.total_steps if steps is None else steps
        history: list[StepResult] = []
        window: list[StepResult] = []
        for _ in range(steps):
            result = self.alternating_step()
            history.append(result)
            window.append(result)
            if callback is not None:
                callback(result)
            if result.step % self.config.log_every == 0:
                record = {
                    "step": result.step,
                    "lr": result.lr,
                    "loss_mlm": float(np.mean([r.loss_mlm for r in window])),
                    "loss_nsp": float(np.mean([r.loss_nsp for r in window])),
                    "loss_lrc": (
                        float(np.mean([r.loss_lrc for r in window])) if self.lrc is not None else None
                    ),
                }
                window = []
                line = json.dumps(record)
                log.info(line)
                if log_file is not None:
                    log_file.write(line + "\n")
        return history

    # checkpoints -------------------------------------------------------

    def state(self) -> dict:
        return {
            "step": self.step,
            "train_config": asdict(self.config),
            "pretraining": self.pretraining.state(),
            "lrc": self.lrc.state() if self.lrc is not None else None,
            "dropout_rng": self.dropout_rng.bit_generator.state,
        }

    def save(self, path, precision: str = "float32") -> None:
        """Write parameters, optimizer moments, and stream positions.

        Only ``precision="float64"`` checkpoints resume bit-exactly; float32
        storage rounds the parameters.
        """
        save_checkpoint(path, self.model, self.optimizers, {"trainer": self.state()}, precision)

    @classmethod
    def resume(
        cls,
        path,
        docs: Sequence[Document],
        vocab: Vocab,
        constraints: Sequence[ConstraintPair] | None = None,
        space: AuxEmbeddingSpace | None = None,
    ) -> Trainer:
        ckpt = load_checkpoint(path)
        if ckpt.dtype != "float64":
            log.warning("%s stores %s parameters; the resumed run will not match bit-exactly", path, ckpt.dtype)
        saved = ckpt.state["trainer"]
        config = TrainConfig(**saved["train_config"])
        trainer = cls.build(ckpt.model_config, config, docs, vocab, constraints, space)
        trainer.model = ckpt.build_model()
        trainer.optimizers.update(ckpt.adam_states())
        trainer.step = int(saved["step"])
        trainer.pretraining.restore(saved["pretraining"])
        if trainer.lrc is not None and saved["lrc"] is not None:
            trainer.lrc.restore(saved["lrc"])
        trainer.dropout_rng.bit_generator.state = saved["dropout_rng"]
        return trainer
