"""Transformer encoder with masked-LM, next-sentence, and lexical-relation heads."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, ShapeError
from .tensor import Tensor

LRC_INPUTS = ("pooled", "cls")


@dataclass
class ModelConfig:
    vocab_size: int
    hidden: int = 768
    layers: int = 12
    heads: int = 12
    intermediate: int = 0  # 0 means 4 * hidden
    max_positions: int = 512
    type_vocab: int = 2
    dropout: float = 0.1
    init_std: float = 0.02
    lrc_input: str = "pooled"

    def __post_init__(self):
        if self.intermediate <= 0:
            self.intermediate = 4 * self.hidden
        if self.hidden % self.heads:
            raise ConfigError(f"hidden size {self.hidden} is not divisible by {self.heads} heads")
        if self.lrc_input not in LRC_INPUTS:
            raise ConfigError(f"lrc_input must be one of {LRC_INPUTS}, got {self.lrc_input!r}")
        if self.vocab_size < 1 or self.max_positions < 1 or self.layers < 0:
            raise ConfigError("vocab_size and max_positions must be positive, layers non-negative")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EncoderOutput:
    hidden: Tensor  # batch x seq x H
    pooled: Tensor  # batch x H, tanh(dense(hidden[:, 0]))
    cls: Tensor  # batch x H, raw hidden[:, 0]


def _param_shapes(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...], str]]:
    H, I = cfg.hidden, cfg.intermediate
    spec = [
        ("embeddings.word", (cfg.vocab_size, H), "normal"),
        ("embeddings.position", (cfg.max_positions, H), "normal"),
        ("embeddings.segment", (cfg.type_vocab, H), "normal"),
        ("embeddings.ln.gamma", (H,), "ones"),
        ("embeddings.ln.beta", (H,), "zeros"),
    ]
    for i in range(cfg.layers):
        p = f"layer.{i}."
        for proj in ("query", "key", "value", "output"):
            spec += [(f"{p}attn.{proj}.w", (H, H), "normal"), (f"{p}attn.{proj}.b", (H,), "zeros")]
        spec += [
            (f"{p}attn.ln.gamma", (H,), "ones"),
            (f"{p}attn.ln.beta", (H,), "zeros"),
            (f"{p}ffn.in.w", (H, I), "normal"),
            (f"{p}ffn.in.b", (I,), "zeros"),
            (f"{p}ffn.out.w", (I, H), "normal"),
            (f"{p}ffn.out.b", (H,), "zeros"),
            (f"{p}ffn.ln.gamma", (H,), "ones"),
            (f"{p}ffn.ln.beta", (H,), "zeros"),
        ]
    spec += [
        ("pooler.w", (H, H), "normal"),
        ("pooler.b", (H,), "zeros"),
        ("mlm.transform.w", (H, H), "normal"),
        ("mlm.transform.b", (H,), "zeros"),
        ("mlm.ln.gamma", (H,), "ones"),
        ("mlm.ln.beta", (H,), "zeros"),
        ("mlm.bias", (cfg.vocab_size,), "zeros"),
        ("nsp.w", (H, 2), "normal"),
        ("nsp.b", (2,), "zeros"),
        ("lrc.w", (H, 2), "normal"),
        ("lrc.b", (2,), "zeros"),
    ]
    return spec


def init_params(cfg: ModelConfig, seed) -> dict[str, Tensor]:
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape, kind in _param_shapes(cfg):
        if kind == "normal":
            data = rng.normal(0.0, cfg.init_std, size=shape)
        elif kind == "ones":
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        params[name] = Tensor(data, requires_grad=True)
    return params


class Model:
    """Parameters plus the forward computations that use them.

    The masked-LM output projection is tied to ``embeddings.word``.
    """

    def __init__(self, config: ModelConfig, seed=0, params: dict[str, Tensor] | None = None):
        self.config = config
        self.params = params if params is not None else init_params(config, seed)

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        expected = _param_shapes(self.config)
        for name, shape, _ in expected:
            if name not in state:
                raise ConfigError(f"missing parameter {name!r}")
            if tuple(state[name].shape) != shape:
                raise ConfigError(f"parameter {name!r} has shape {tuple(state[name].shape)}, model expects {shape}")
        for name, _, _ in expected:
            self.params[name].data = np.array(state[name], dtype=np.float64)

    # parameter groups per objective ------------------------------------

    def group(self, objective: str) -> dict[str, Tensor]:
        """Parameters an objective's loss depends on.

        ``"mlm_nsp"`` excludes the relation head; ``"lrc"`` excludes the
        masked-LM and next-sentence heads (and the pooler when the relation
        head reads the raw [CLS] state).
        """
        if objective == "mlm_nsp":
            return {k: v for k, v in self.params.items() if not k.startswith("lrc.")}
        if objective == "lrc":
            skip = ("mlm.", "nsp.") + (("pooler.",) if self.config.lrc_input == "cls" else ())
            return {k: v for k, v in self.params.items() if not k.startswith(skip)}
        raise ContractError(f"unknown objective {objective!r}")

    # forward -----------------------------------------------------------

    def embed(self, input_ids, segment_ids, training: bool = False, rng=None) -> Tensor:
        """Sum of wordpiece, segment, and position embeddings, then layer norm and dropout."""
        input_ids = np.asarray(input_ids, dtype=np.int64)
        segment_ids = np.asarray(segment_ids, dtype=np.int64)
        if input_ids.ndim != 2 or segment_ids.shape != input_ids.shape:
            raise ShapeError(f"ids must be batch x seq, got {input_ids.shape} and {segment_ids.shape}")
        seq = input_ids.shape[1]
        if seq > self.config.max_positions:
            raise ContractError(f"sequence length {seq} exceeds max positions {self.config.max_positions}")
        p = self.params
        words = T.embedding(p["embeddings.word"], input_ids)
        segments = T.embedding(p["embeddings.segment"], segment_ids)
        positions = T.embedding(p["embeddings.position"], np.arange(seq))
        summed = words + segments + positions
        normed = T.layer_norm(summed, p["embeddings.ln.gamma"], p["embeddings.ln.beta"])
        return T.dropout(normed, self.config.dropout, rng, training)

    def _attention(self, x: Tensor, mask_bias: Tensor, i: int, training: bool, rng) -> Tensor:
        cfg, p = self.config, self.params
        B, S, H = x.shape
        A, d = cfg.heads, cfg.head_dim
        pre = f"layer.{i}.attn."

        def project(name: str) -> Tensor:
            return (x @ p[pre + name + ".w"] + p[pre + name + ".b"]).reshape(B, S, A, d)

        q = T.transpose(project("query"), (0, 2, 1, 3))
        k = T.transpose(project("key"), (0, 2, 3, 1))
        v = T.transpose(project("value"), (0, 2, 1, 3))
        scores = (q @ k) * (1.0 / math.sqrt(d)) + mask_bias
        probs = T.dropout(T.softmax(scores, axis=-1), cfg.dropout, rng, training)
        context = T.transpose(probs @ v, (0, 2, 1, 3)).reshape(B, S, H)
        out = context @ p[pre + "output.w"] + p[pre + "output.b"]
        out = T.dropout(out, cfg.dropout, rng, training)
        return T.layer_norm(x + out, p[pre + "ln.gamma"], p[pre + "ln.beta"])

    def _feed_forward(self, x: Tensor, i: int, training: bool, rng) -> Tensor:
        p = self.params
        pre = f"layer.{i}.ffn."
        h = T.gelu(x @ p[pre + "in.w"] + p[pre + "in.b"])
        out = T.dropout(h @ p[pre + "out.w"] + p[pre + "out.b"], self.config.dropout, rng, training)
        return T.layer_norm(x + out, p[pre + "ln.gamma"], p[pre + "ln.beta"])

    def encode(self, embedded: Tensor, attention_mask, training: bool = False, rng=None) -> EncoderOutput:
        """Stacked self-attention layers; masked positions get -inf attention logits."""
        mask = np.asarray(attention_mask)
        if mask.shape != embedded.shape[:2]:
            raise ShapeError(f"attention mask {mask.shape} does not match input {embedded.shape[:2]}")
        bias = np.where(mask.astype(bool), 0.0, -np.inf)[:, None, None, :]
        mask_bias = Tensor(bias)
        x = embedded
        for i in range(self.config.layers):
            x = self._attention(x, mask_bias, i, training, rng)
            x = self._feed_forward(x, i, training, rng)
        cls = x[:, 0, :]
        pooled = T.tanh(cls @ self.params["pooler.w"] + self.params["pooler.b"])
        return EncoderOutput(hidden=x, pooled=pooled, cls=cls)

    def forward(self, input_ids, segment_ids, attention_mask, training: bool = False, rng=None) -> EncoderOutput:
        return self.encode(self.embed(input_ids, segment_ids, training, rng), attention_mask, training, rng)

    # heads -------------------------------------------------------------

    def lrc_features(self, out: EncoderOutput) -> Tensor:
        return out.pooled if self.config.lrc_input == "pooled" else out.cls

    def lrc_head(self, features: Tensor) -> Tensor:
        """softmax(x W + b) with W of shape H x 2."""
        return T.softmax(features @ self.params["lrc.w"] + self.params["lrc.b"], axis=-1)

    def nsp_head(self, pooled: Tensor) -> Tensor:
        return T.softmax(pooled @ self.params["nsp.w"] + self.params["nsp.b"], axis=-1)

    def mlm_logits(self, hidden: Tensor, positions) -> Tensor:
        positions = np.asarray(positions, dtype=np.int64)
        B, S, H = hidden.shape
        if positions.size and (positions.min() < 0 or positions.max() >= B * S):
            raise ContractError(f"masked positions must lie in [0, {B * S})")
        p = self.params
        picked = T.embedding(hidden.reshape(B * S, H), positions)
        h = T.gelu(picked @ p["mlm.transform.w"] + p["mlm.transform.b"])
        h = T.layer_norm(h, p["mlm.ln.gamma"], p["mlm.ln.beta"])
        return h @ T.transpose(p["embeddings.word"]) + p["mlm.bias"]

    def mlm_head(self, hidden: Tensor, positions) -> Tensor:
        """Vocabulary distribution at flat ``positions`` (indices into batch * seq)."""
        return T.softmax(self.mlm_logits(hidden, positions), axis=-1)

    # losses ------------------------------------------------------------

    def mlm_nsp_loss(self, batch, training: bool = False, rng=None) -> tuple[Tensor, Tensor, Tensor]:
        """Returns ``(mlm + nsp, mlm, nsp)``, each averaged over its instances."""
        out = self.forward(batch.input_ids, batch.segment_ids, batch.attention_mask, training, rng)
        mlm_probs = self.mlm_head(out.hidden, batch.mlm_positions)
        loss_mlm = mean_nll(mlm_probs, one_hot(batch.mlm_labels, self.config.vocab_size))
        loss_nsp = mean_nll(self.nsp_head(out.pooled), batch.nsp_labels)
        return loss_mlm + loss_nsp, loss_mlm, loss_nsp

    def lrc_loss(self, input_ids, segment_ids, attention_mask, labels, training: bool = False, rng=None):
        """Returns ``(mean relation-classification loss, probabilities)``."""
        out = self.forward(input_ids, segment_ids, attention_mask, training, rng)
        probs = self.lrc_head(self.lrc_features(out))
        return mean_nll(probs, labels), probs


def one_hot(labels, n: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, n))
    out[np.arange(labels.size), labels] = 1.0
    return out


def mean_nll(probs: Tensor, labels) -> Tensor:
    return T.cross_entropy_nll(probs, labels) * (1.0 / probs.shape[0])


def parameter_names(config: ModelConfig) -> Iterable[str]:
    return [name for name, _, _ in _param_shapes(config)]
