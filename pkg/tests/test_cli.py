import json

import pytest

from lexbert.cli import dispatch
from lexbert.toy import write_toy_files

FIXTURE_LAYOUT = "[CLS] men ##ded [SEP] reg ##ener ##ated [SEP]"


@pytest.fixture
def mended_files(tmp_path, small_vocab):
    cons = tmp_path / "toy.tsv"
    cons.write_text("mended\tregenerated\tsyn\ncat\tdog\thyp\n")
    vec = tmp_path / "toy.vec"
    vec.write_text("4 3\nmended 1 0 0\nregenerated 0.9 0.1 0\ncat 0 1 0.2\ndog 0.1 1 0\n")
    vocab = tmp_path / "vocab.txt"
    small_vocab.save(vocab)
    return cons, vec, vocab


@pytest.fixture(scope="module")
def toy_files(tmp_path_factory, toy_world):
    return write_toy_files(toy_world, tmp_path_factory.mktemp("toy"))


def tiny_model_flags():
    return ["--layers", "1", "--hidden", "16", "--heads", "2", "--max-seq-len", "24", "--lrc-max-len", "8",
            "--batch-k", "4", "--lr", "1e-3", "--warmup", "5", "--dropout", "0"]


class TestUsage:
    def test_no_args(self, capsys):
        assert dispatch([]) == 2
        assert "usage" in capsys.readouterr().err

    def test_unknown_flag(self, capsys):
        assert dispatch(["eval-metrics", "--bogus", "1"]) == 2

    def test_missing_required(self, capsys):
        assert dispatch(["simplify", "--vocab", "v.txt"]) == 2
        assert "--checkpoint" in capsys.readouterr().err

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("bogus = 1\n")
        assert dispatch(["eval-metrics", "--config", str(cfg)]) == 2


class TestEvalMetrics:
    def test_scores_and_config_override(self, tmp_path, capsys):
        pred, gold = tmp_path / "p.txt", tmp_path / "g.txt"
        pred.write_text("1\n0\n1\n1\n")
        gold.write_text("1\n0\n0\n1\n")
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"pred = {pred}\ngold = {gold}\nkind = reg\n")
        assert dispatch(["eval-metrics", "--config", str(cfg), "--kind", "cls2"]) == 0
        got = json.loads(capsys.readouterr().out)
        assert got["accuracy"] == 0.75 and got["f1"] == pytest.approx(0.8)

    def test_data_error_exit_1(self, tmp_path):
        pred, gold = tmp_path / "p.txt", tmp_path / "g.txt"
        pred.write_text("1\nx\n")
        gold.write_text("1\n0\n")
        assert dispatch(["eval-metrics", "--pred", str(pred), "--gold", str(gold), "--kind", "cls2"]) == 1

    def test_missing_file_exit_1(self, tmp_path):
        assert dispatch(["eval-metrics", "--pred", str(tmp_path / "no"), "--gold", str(tmp_path / "no"),
                         "--kind", "reg"]) == 1


class TestInspectBatch:
    def test_mended_layout(self, mended_files, capsys):
        cons, vec, vocab = mended_files
        argv = ["inspect-batch", "--constraints", str(cons), "--aux-embeddings", str(vec), "--batch-k", "2",
                "--seed", "7", "--vocab", str(vocab)]
        assert dispatch(argv) == 0
        out = capsys.readouterr().out
        lines = out.splitlines()
        assert sum(1 for x in lines if x.startswith("  #")) == 6
        assert sum(1 for x in lines if "cosine=" in x) == 4
        i = lines.index("    " + FIXTURE_LAYOUT)
        assert lines[i + 1] == "    0 0 0 0 1 1 1 1"
        assert dispatch(argv) == 0
        assert capsys.readouterr().out == out

    def test_toy_k2_without_vocab(self, toy_files, capsys):
        argv = ["inspect-batch", "--constraints", str(toy_files["constraints"]),
                "--aux-embeddings", str(toy_files["aux"]), "--batch-k", "2", "--seed", "7"]
        assert dispatch(argv) == 0
        out = capsys.readouterr().out
        assert "positives (2)" in out and "negatives (4)" in out
        assert sum(1 for x in out.splitlines() if x.startswith("  #")) == 6

    def test_malformed_constraints_exit_1(self, tmp_path, mended_files):
        _, vec, _ = mended_files
        bad = tmp_path / "bad.tsv"
        bad.write_text("only-one-field\n")
        assert dispatch(["inspect-batch", "--constraints", str(bad), "--aux-embeddings", str(vec)]) == 1


class TestPipeline:
    def test_pretrain_finetune_simplify(self, toy_files, tmp_path, capsys):
        f = toy_files
        common = ["--corpus", str(f["corpus"]), "--vocab", str(f["vocab"]), "--constraints", str(f["constraints"]),
                  "--aux-embeddings", str(f["aux"]), "--steps", "4", "--log-every", "2"] + tiny_model_flags()
        out = tmp_path / "run"
        assert dispatch(["pretrain", *common, "--out", str(out)]) == 0
        lrc = json.loads((out / "manifest.json").read_text())
        assert len((out / "train_log.jsonl").read_text().splitlines()) == 2
        assert dispatch(["pretrain", *common, "--out", str(out), "--baseline"]) == 0
        base = json.loads((out / "manifest.json").read_text())
        diff = {k for k in lrc["flags"] if lrc["flags"][k] != base["flags"][k]}
        assert diff == {"baseline"}
        assert lrc["seed"] == base["seed"] and lrc["versions"] == base["versions"]
        assert set(lrc) == {"command", "flags", "seed", "start", "end", "checkpoint_hashes", "versions"}

        ckpt = out / "checkpoint.lxb"
        train = tmp_path / "train.tsv"
        train.write_text("".join(f"{s}\t{i % 2}\n" for i, s in enumerate(["the man", "a man", "the", "a"])))
        ft = tmp_path / "ft"
        assert dispatch(["finetune", "--checkpoint", str(ckpt), "--vocab", str(f["vocab"]), "--task", "cls1",
                         "--train", str(train), "--dev", str(train), "--epochs", "2", "--max-seq-len", "24",
                         "--out", str(ft)]) == 0
        assert {p.name for p in ft.iterdir()} == {"encoder.lxb", "head.npz", "result.json", "manifest.json"}

        sim = tmp_path / "sim"
        argv = ["simplify", "--checkpoint", str(ckpt), "--vocab", str(f["vocab"]), "--dataset", str(f["simplify"]),
                "--aux-embeddings", str(f["aux"]), "--freq", str(f["freq"]), "--max-seq-len", "24",
                "--out", str(sim)]
        assert dispatch(argv) == 0
        rep = json.loads((sim / "simplify_report.json").read_text())
        assert set(rep) >= {"generation", "pipeline", "per_instance"}
        assert all(len(r["candidates"]) <= 6 for r in rep["per_instance"])

    def test_finetune_bad_label_exit_1(self, toy_files, tmp_path, capsys):
        f = toy_files
        out = tmp_path / "run"
        assert dispatch(["pretrain", "--corpus", str(f["corpus"]), "--vocab", str(f["vocab"]), "--baseline",
                         "--steps", "1", "--out", str(out)] + tiny_model_flags()) == 0
        train = tmp_path / "train.tsv"
        train.write_text("the man\t0\na man\t3\n")
        assert dispatch(["finetune", "--checkpoint", str(out / "checkpoint.lxb"), "--vocab", str(f["vocab"]),
                         "--task", "cls1", "--train", str(train), "--dev", str(train), "--max-seq-len", "24",
                         "--out", str(tmp_path / "ft")]) == 1
        assert "row 2" in capsys.readouterr().err

    def test_pretrain_lrc_without_constraints_is_usage_error(self, toy_files, tmp_path):
        f = toy_files
        assert dispatch(["pretrain", "--corpus", str(f["corpus"]), "--vocab", str(f["vocab"]), "--steps", "1",
                         "--out", str(tmp_path / "r")] + tiny_model_flags()) == 2
