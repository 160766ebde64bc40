"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"LXB1" | u32 version | u32 header_len | header JSON | payload | u32 crc32

The JSON header carries the model config, the storage dtype, every tensor's
name/shape/offset, and free-form trainer state (step counters, optimizer
scalars, RNG states). The payload is the concatenated raw tensors. The
trailing CRC covers every preceding byte.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, IntegrityError
from .model import Model, ModelConfig
from .optim import AdamState

MAGIC = b"LXB1"
VERSION = 1
DTYPES = {"float32": "<f4", "float64": "<f8"}
ADAM = "adam."


@dataclass
class Checkpoint:
    version: int
    config: dict
    dtype: str
    tensors: dict[str, np.ndarray]
    state: dict

    @property
    def model_config(self) -> ModelConfig:
        return ModelConfig(**self.config)

    def params(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.tensors.items() if not k.startswith(ADAM)}

    def build_model(self) -> Model:
        model = Model(self.model_config, seed=0)
        load_into(self, model)
        return model

    def adam_states(self) -> dict[str, AdamState]:
        """Optimizer states keyed by the label they were saved under."""
        out = {}
        for label, spec in self.state.get("adam", {}).items():
            opt = AdamState(
                beta1=spec["beta1"], beta2=spec["beta2"], epsilon=spec["epsilon"],
                base_lr=spec["base_lr"], step=spec["step"],
            )
            for name, t in spec["updates"].items():
                opt.updates[name] = int(t)
                opt.m[name] = self.tensors[f"{ADAM}{label}.m/{name}"].astype(np.float64)
                opt.v[name] = self.tensors[f"{ADAM}{label}.v/{name}"].astype(np.float64)
            out[label] = opt
        return out


def save_checkpoint(
    path,
    model: Model,
    optimizers: dict[str, AdamState] | None = None,
    state: dict | None = None,
    precision: str = "float32",
) -> None:
    """Write ``model`` (and optionally labelled optimizer states) atomically."""
    if precision not in DTYPES:
        raise ConfigError(f"precision must be one of {sorted(DTYPES)}, got {precision!r}")
    dt = np.dtype(DTYPES[precision])
    arrays: list[tuple[str, np.ndarray]] = [(k, v.data) for k, v in model.params.items()]
    full_state = dict(state or {})
    if optimizers:
        full_state["adam"] = {}
        for label in sorted(optimizers):
            opt = optimizers[label]
            names = sorted(opt.m)
            full_state["adam"][label] = {
                "beta1": opt.beta1, "beta2": opt.beta2, "epsilon": opt.epsilon,
                "base_lr": opt.base_lr, "step": opt.step,
                "updates": {n: opt.updates[n] for n in names},
            }
            arrays += [(f"{ADAM}{label}.m/{n}", opt.m[n]) for n in names]
            arrays += [(f"{ADAM}{label}.v/{n}", opt.v[n]) for n in names]

    entries, chunks, offset = [], [], 0
    for name, arr in arrays:
        raw = np.ascontiguousarray(arr, dtype=dt).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = {
        "config": model.config.to_dict(),
        "dtype": precision,
        "tensors": entries,
        "payload_bytes": offset,
        "state": full_state,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = MAGIC + struct.pack("<II", VERSION, len(header_bytes)) + header_bytes + b"".join(chunks)
    blob = body + struct.pack("<I", zlib.crc32(body))
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)


def load_checkpoint(path, model: Model | None = None) -> Checkpoint:
    """Read and verify a checkpoint; if ``model`` is given, load parameters into it."""
    blob = Path(path).read_bytes()
    if len(blob) < 16:
        raise IntegrityError(f"{path}: file too short ({len(blob)} bytes)")
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    version, header_len = struct.unpack("<II", blob[4:12])
    if version != VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    if 12 + header_len + 4 > len(blob):
        raise IntegrityError(f"{path}: header length {header_len} runs past end of file")
    (crc,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(blob[:-4]) != crc:
        raise IntegrityError(f"{path}: checksum mismatch")
    try:
        header = json.loads(blob[12:12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IntegrityError(f"{path}: unreadable header ({exc})") from None
    payload = blob[12 + header_len:-4]
    if len(payload) != header.get("payload_bytes"):
        raise IntegrityError(f"{path}: payload holds {len(payload)} bytes, header declares {header.get('payload_bytes')}")
    dtype = header["dtype"]
    if dtype not in DTYPES:
        raise FormatError(f"{path}: unknown dtype {dtype!r}")
    dt = np.dtype(DTYPES[dtype])
    tensors = {}
    for entry in header["tensors"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        if start + nbytes > len(payload) or nbytes != count * dt.itemsize:
            raise IntegrityError(f"{path}: tensor {entry['name']!r} has inconsistent extent")
        arr = np.frombuffer(payload, dtype=dt, count=count, offset=start)
        tensors[entry["name"]] = arr.reshape(entry["shape"]).copy()
    ckpt = Checkpoint(version, header["config"], dtype, tensors, header["state"])
    if model is not None:
        load_into(ckpt, model)
    return ckpt


def load_into(ckpt: Checkpoint, model: Model) -> None:
    """Copy checkpoint parameters into ``model``; nothing is written unless all match."""
    stored = ckpt.params()
    for name, tensor in model.params.items():
        if name not in stored:
            raise ConfigError(f"checkpoint lacks tensor {name!r}")
        if tuple(stored[name].shape) != tensor.shape:
            raise ConfigError(
                f"tensor {name!r}: checkpoint shape {tuple(stored[name].shape)} vs model shape {tensor.shape}"
            )
    extra = [n for n in stored if n not in model.params]
    if extra:
        raise ConfigError(f"checkpoint tensor {extra[0]!r} has no counterpart in the model")
    for name, tensor in model.params.items():
        tensor.data = stored[name].astype(np.float64)
