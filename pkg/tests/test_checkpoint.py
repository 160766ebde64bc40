import struct

import numpy as np
import pytest

from lexbert.checkpoint import load_checkpoint, save_checkpoint
from lexbert.errors import ConfigError, FormatError, IntegrityError
from lexbert.model import Model, ModelConfig
from lexbert.optim import AdamState, adam_step


@pytest.fixture
def model(tiny_config):
    return Model(tiny_config, seed=4)


class TestRoundTrip:
    def test_float32_storage_rounds_once(self, tmp_path, model):
        path = tmp_path / "m.lxb"
        save_checkpoint(path, model)
        ckpt = load_checkpoint(path)
        assert ckpt.dtype == "float32"
        for name, p in model.params.items():
            np.testing.assert_array_equal(ckpt.tensors[name], p.data.astype(np.float32).astype(np.float64))

    def test_float64_is_bit_exact(self, tmp_path, model):
        path = tmp_path / "m.lxb"
        save_checkpoint(path, model, precision="float64")
        restored = load_checkpoint(path).build_model()
        for name, p in model.params.items():
            assert restored[name].data.tobytes() == p.data.tobytes()

    def test_save_load_save_identical_bytes(self, tmp_path, model):
        opt = AdamState()
        grads = {k: np.ones_like(v.data) for k, v in model.params.items()}
        adam_step(opt, model.params, grads, 1e-3)
        a, b = tmp_path / "a.lxb", tmp_path / "b.lxb"
        save_checkpoint(a, model, {"main": opt}, {"step": 1})
        ckpt = load_checkpoint(a)
        save_checkpoint(b, ckpt.build_model(), ckpt.adam_states(), {"step": 1})
        assert a.read_bytes() == b.read_bytes()

    def test_optimizer_state_restored(self, tmp_path, model):
        opt = AdamState()
        grads = {k: np.full_like(v.data, 0.5) for k, v in model.params.items()}
        adam_step(opt, model.params, grads, 1e-3)
        path = tmp_path / "m.lxb"
        save_checkpoint(path, model, {"mlm_nsp": opt}, precision="float64")
        back = load_checkpoint(path).adam_states()["mlm_nsp"]
        assert back.step == 1 and back.updates == opt.updates
        for name in opt.m:
            np.testing.assert_array_equal(back.m[name], opt.m[name])
            np.testing.assert_array_equal(back.v[name], opt.v[name])

    def test_unknown_precision(self, tmp_path, model):
        with pytest.raises(ConfigError):
            save_checkpoint(tmp_path / "m.lxb", model, precision="float16")


class TestCorruption:
    def _saved(self, tmp_path, model):
        path = tmp_path / "m.lxb"
        save_checkpoint(path, model)
        return path, bytearray(path.read_bytes())

    def test_bad_magic(self, tmp_path, model):
        path, blob = self._saved(tmp_path, model)
        blob[:4] = b"NOPE"
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError, match="magic"):
            load_checkpoint(path)

    def test_bad_version(self, tmp_path, model):
        path, blob = self._saved(tmp_path, model)
        blob[4:8] = struct.pack("<I", 99)
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError, match="version"):
            load_checkpoint(path)

    def test_corrupted_length_field(self, tmp_path, model):
        path, blob = self._saved(tmp_path, model)
        blob[8:12] = struct.pack("<I", 10**9)
        path.write_bytes(bytes(blob))
        target = Model(model.config, seed=99)
        before = {k: v.data.copy() for k, v in target.params.items()}
        with pytest.raises(IntegrityError):
            load_checkpoint(path, target)
        for k, v in target.params.items():
            np.testing.assert_array_equal(v.data, before[k])

    def test_truncated_file(self, tmp_path, model):
        path, blob = self._saved(tmp_path, model)
        path.write_bytes(bytes(blob[: len(blob) // 2]))
        with pytest.raises(IntegrityError):
            load_checkpoint(path)

    def test_flipped_payload_byte(self, tmp_path, model):
        path, blob = self._saved(tmp_path, model)
        blob[-20] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(IntegrityError, match="checksum"):
            load_checkpoint(path)

    def test_tiny_file(self, tmp_path):
        path = tmp_path / "m.lxb"
        path.write_bytes(b"LXB1")
        with pytest.raises(IntegrityError):
            load_checkpoint(path)


class TestMismatch:
    def test_names_first_mismatched_tensor(self, tmp_path, model):
        path = tmp_path / "m.lxb"
        save_checkpoint(path, model)
        other = Model(ModelConfig(vocab_size=30, hidden=8, layers=1, heads=2, intermediate=16, max_positions=16))
        with pytest.raises(ConfigError, match="embeddings.word"):
            load_checkpoint(path, other)

    def test_missing_layer_named(self, tmp_path, model):
        path = tmp_path / "m.lxb"
        save_checkpoint(path, model)
        cfg = ModelConfig(vocab_size=23, hidden=8, layers=2, heads=2, intermediate=16, max_positions=16)
        with pytest.raises(ConfigError, match="layer.1.attn.query.w"):
            load_checkpoint(path, Model(cfg))
