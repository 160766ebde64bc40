import numpy as np
import pytest

from lexbert import tensor as T
from lexbert.errors import ConfigError, DataError, FormatError
from lexbert.finetune import (Example, FineTuneConfig, FineTuneTask, encoder_params, fine_tune, head_output,
                              load_examples, task_loss)
from lexbert.model import Model
from lexbert.tokenizer import encode_pair, tokenize

from conftest import numeric_grad


def examples(vocab, rows, pair=False):
    out = []
    for row in rows:
        a = tokenize(row[0], vocab)
        b = tokenize(row[1], vocab) if pair else []
        out.append(Example(encode_pair(a, b, vocab, 12), row[-1]))
    return out


CLS_ROWS = [("the cat sat", 1), ("a cat ran", 1), ("the dog sat", 0), ("a dog ran", 0),
            ("cat on mat", 1), ("dog on mat", 0), ("the cat", 1), ("the dog", 0)]


class TestTask:
    def test_kinds(self):
        assert FineTuneTask("cls2").metric_names == ("accuracy", "f1", "mcc")
        assert FineTuneTask("reg").n_outputs == 1
        assert FineTuneTask("cls1", num_labels=3).metric_names == ("accuracy", "mcc")
        assert FineTuneTask("cls1", metric_names=("mcc",)).selection_metric == "mcc"

    def test_incompatible(self):
        with pytest.raises(ConfigError):
            FineTuneTask("reg", metric_names=("mcc",))
        with pytest.raises(ConfigError):
            FineTuneTask("cls1", num_labels=3, metric_names=("f1",))
        with pytest.raises(ConfigError):
            FineTuneTask("ner")


class TestLoading:
    def test_label_out_of_range_names_row(self, small_vocab, tmp_path):
        path = tmp_path / "train.tsv"
        path.write_text("the cat\t1\nthe dog\t0\nthe mat\t2\n")
        with pytest.raises(DataError, match="row 3"):
            load_examples(path, FineTuneTask("cls1"), small_vocab, 12)

    def test_field_count(self, small_vocab, tmp_path):
        path = tmp_path / "train.tsv"
        path.write_text("the cat\tthe dog\t1\n")
        with pytest.raises(FormatError, match="row 1"):
            load_examples(path, FineTuneTask("cls1"), small_vocab, 12)

    def test_pair_rows(self, small_vocab, tmp_path):
        path = tmp_path / "train.tsv"
        path.write_text("the cat\ta dog\t0.5\n\n")
        ex = load_examples(path, FineTuneTask("reg"), small_vocab, 12)
        assert len(ex) == 1 and ex[0].label == 0.5
        assert 1 in ex[0].sequence.segment_ids


class TestHeadGradients:
    @pytest.mark.parametrize("kind", ["cls2", "reg"])
    def test_head_loss_matches_finite_differences(self, kind, tiny_config, small_vocab):
        model = Model(tiny_config, seed=0)
        task = FineTuneTask(kind)
        rng = np.random.default_rng(0)
        head = {"task.w": T.Tensor(rng.normal(size=(8, task.n_outputs)), requires_grad=True),
                "task.b": T.Tensor(rng.normal(size=task.n_outputs), requires_grad=True)}
        ex = examples(small_vocab, CLS_ROWS[:4])
        ids = np.array([e.sequence.token_ids for e in ex])
        segs = np.array([e.sequence.segment_ids for e in ex])
        mask = np.array([e.sequence.attention_mask for e in ex])
        labels = np.array([1, 0, 1, 0]) if kind == "cls2" else np.array([0.1, -0.3, 0.7, 0.2])

        def f():
            return task_loss(head_output(model.forward(ids, segs, mask).pooled, head), labels, task)

        grads = T.backward(f(), {**head, "pooler.w": model["pooler.w"]})
        for name, tensor in [("task.w", head["task.w"]), ("pooler.w", model["pooler.w"])]:
            with T.no_grad():
                num = numeric_grad(lambda: f().item(), tensor.data)
            np.testing.assert_allclose(grads[name], num, rtol=1e-5, atol=1e-8)


class TestFineTune:
    def test_separable_classification(self, tiny_config, small_vocab):
        model = Model(tiny_config, seed=0)
        ex = examples(small_vocab, CLS_ROWS)
        res = fine_tune(model, FineTuneTask("cls1"), ex, ex, FineTuneConfig(lr=1e-2, epochs=40, batch_size=4))
        assert res.dev_metrics["accuracy"] == 1.0
        assert 1 <= res.best_epoch <= 40 and len(res.history) == 40

    def test_regression_pearson(self, tiny_config, small_vocab):
        model = Model(tiny_config, seed=0)
        rows = [("the cat", "a cat", 0.9), ("the dog", "a cat", 0.1), ("the cat", "the cat", 1.0),
                ("the dog", "the dog", 0.8), ("a mat", "the cat", 0.2), ("cat sat", "dog ran", 0.0)]
        ex = examples(small_vocab, rows, pair=True)
        res = fine_tune(model, FineTuneTask("reg"), ex, ex, FineTuneConfig(lr=1e-2, epochs=60, batch_size=6))
        assert res.dev_metrics["pearson"] > 0.95

    def test_frozen_encoder_untouched(self, tiny_config, small_vocab):
        model = Model(tiny_config, seed=0)
        before = {k: v.data.copy() for k, v in encoder_params(model).items()}
        ex = examples(small_vocab, CLS_ROWS)
        fine_tune(model, FineTuneTask("cls1"), ex, ex, FineTuneConfig(lr=1e-2, epochs=3, freeze_encoder=True))
        for k, v in encoder_params(model).items():
            np.testing.assert_array_equal(v.data, before[k])

    def test_deterministic(self, tiny_config, small_vocab):
        ex = examples(small_vocab, CLS_ROWS)
        runs = [fine_tune(Model(tiny_config, seed=0), FineTuneTask("cls1"), ex, ex,
                          FineTuneConfig(lr=1e-2, epochs=3, seed=7)) for _ in range(2)]
        np.testing.assert_array_equal(runs[0].head["task.w"], runs[1].head["task.w"])

    def test_empty_inputs(self, tiny_config, small_vocab):
        model = Model(tiny_config, seed=0)
        ex = examples(small_vocab, CLS_ROWS)
        with pytest.raises(DataError):
            fine_tune(model, FineTuneTask("cls1"), [], ex, FineTuneConfig())
        with pytest.raises(DataError):
            fine_tune(model, FineTuneTask("cls1"), ex, ex[:1], FineTuneConfig())
