import numpy as np
import pytest

from lexbert.constraints import (
    HYPONYM_HYPERNYM,
    NEGATIVE,
    NEGATIVE_LABEL,
    POSITIVE,
    POSITIVE_LABEL,
    SYNONYM,
    AuxEmbeddingSpace,
    ConstraintPair,
    LrcBatchStream,
    PositiveBatcher,
    build_lrc_batch,
    candidate_pool,
    load_constraints,
    load_embeddings,
    sample_negatives,
)
from lexbert.errors import ContractError, FormatError

from helpers import brute_force_negatives


def pos(w1, w2, rel=SYNONYM):
    return ConstraintPair(w1, w2, rel, POSITIVE)


class TestLoadConstraints:
    def test_parse_and_dedup(self, tmp_path, caplog):
        path = tmp_path / "c.tsv"
        path.write_text(
            "mended\tregenerated\tsyn\n"
            "regenerated\tmended\tsyn\n"  # unordered duplicate
            "dog\tanimal\thyp\n"
            "animal\tdog\thyp\n"  # ordered pair differs: kept
            "Same\tsame\tsyn\n"  # identical after normalising: skipped
            "\n"
        )
        pairs = load_constraints(path)
        assert [(p.w1, p.w2, p.relation_source) for p in pairs] == [
            ("mended", "regenerated", SYNONYM),
            ("dog", "animal", HYPONYM_HYPERNYM),
            ("animal", "dog", HYPONYM_HYPERNYM),
        ]
        assert all(p.label == POSITIVE and p.one_hot == POSITIVE_LABEL for p in pairs)
        assert "identical words" in caplog.text

    def test_whitespace_in_word_names_line(self, tmp_path):
        path = tmp_path / "c.tsv"
        path.write_text("a\tb\tsyn\nice cream\tdessert\tsyn\n")
        with pytest.raises(FormatError, match="line 2"):
            load_constraints(path)

    def test_bad_relation(self, tmp_path):
        path = tmp_path / "c.tsv"
        path.write_text("a\tb\tant\n")
        with pytest.raises(FormatError, match="line 1"):
            load_constraints(path)


class TestEmbeddings:
    def test_load_normalises(self, tmp_path):
        path = tmp_path / "v.vec"
        path.write_text("2 3\ncat 3 0 4\ndog 0 2 0\n")
        space = load_embeddings(path)
        np.testing.assert_allclose(space.vectors["cat"], [0.6, 0.0, 0.8])
        assert space.cosine("cat", "dog") == pytest.approx(0.0)
        assert space.cosine("cat", "cat") == pytest.approx(1.0)

    def test_dimension_mismatch_names_line(self, tmp_path):
        path = tmp_path / "v.vec"
        path.write_text("2 3\ncat 1 0 0\ndog 1 0\n")
        with pytest.raises(FormatError, match="line 3"):
            load_embeddings(path)

    def test_zero_vector_rejected(self, tmp_path):
        path = tmp_path / "v.vec"
        path.write_text("1 2\ncat 0 0\n")
        with pytest.raises(FormatError, match="zero-norm"):
            load_embeddings(path)

    def test_count_mismatch(self, tmp_path):
        path = tmp_path / "v.vec"
        path.write_text("3 2\ncat 1 0\n")
        with pytest.raises(FormatError, match="declares 3"):
            load_embeddings(path)


class TestNegativeMining:
    def test_small_hand_example(self):
        space = AuxEmbeddingSpace.from_dict({
            "a1": [1.0, 0.0], "a2": [0.9, 0.1],
            "b1": [0.0, 1.0], "b2": [0.1, 0.9],
            "c1": [0.7, 0.7], "c2": [0.6, 0.8],
        })
        batch = [pos("a1", "a2"), pos("b1", "b2"), pos("c1", "c2")]
        negs = sample_negatives(batch, space, 0)
        assert len(negs) == 6
        # closest to a2 among {b1, b2, c1, c2} is c1; closest to a1 is c1 too
        assert (negs[0].w1, negs[0].w2) == ("c1", "a2")
        assert (negs[1].w1, negs[1].w2) == ("a1", "c1")
        assert all(n.label == NEGATIVE and n.one_hot == NEGATIVE_LABEL for n in negs)
        assert [n.slot for n in negs] == [1, 2] * 3
        assert negs[0].cosine == pytest.approx(space.cosine("c1", "a2"))

    def test_matches_brute_force_on_random_batches(self):
        rng = np.random.default_rng(0)
        words = [f"w{i:02d}" for i in range(50)]
        raw = {w: rng.normal(size=8).tolist() for w in words}
        space = AuxEmbeddingSpace.from_dict(raw)
        for trial in range(40):
            k = [2, 4, 8, 16][trial % 4]
            batch = []
            seen = set()
            while len(batch) < k:
                a, b = rng.choice(50, size=2, replace=False)
                key = frozenset((words[a], words[b]))
                if key not in seen:
                    seen.add(key)
                    batch.append(pos(words[a], words[b]))
            negs = sample_negatives(batch, space, trial)
            assert len(negs) == 2 * len(batch)
            assert [(n.w1, n.w2) for n in negs] == brute_force_negatives(batch, raw)

    def test_never_recreates_a_batch_positive(self):
        space = AuxEmbeddingSpace.from_dict({"x": [1, 0], "y": [1, 0.01], "z": [0, 1], "u": [1, 0.02]})
        # (x, y) and (y, u) are both positives; for (x, y) slot 1 the anchor is y and u is blocked
        batch = [pos("x", "y"), pos("y", "u"), pos("z", "u")]
        negs = sample_negatives(batch, space, 0)
        positives = {frozenset(p.words) for p in batch}
        for n in negs:
            assert frozenset(n.words) not in positives
            assert n.w1 != n.w2

    def test_needs_two_positives(self):
        space = AuxEmbeddingSpace.from_dict({"a": [1, 0], "b": [0, 1]})
        with pytest.raises(ContractError):
            sample_negatives([pos("a", "b")], space)

    def test_missing_anchor_falls_back_to_seeded_pick(self):
        space = AuxEmbeddingSpace.from_dict({"a": [1, 0], "b": [0, 1], "c": [1, 1]})
        batch = [pos("a", "zz"), pos("b", "c")]
        first = sample_negatives(batch, space, 3)
        again = sample_negatives(batch, space, 3)
        assert [(n.w1, n.w2) for n in first] == [(n.w1, n.w2) for n in again]
        assert first[0].cosine is None

    def test_pool_is_sorted_union(self):
        assert candidate_pool([pos("b", "a"), pos("c", "a")]) == ["a", "b", "c"]


class TestBatches:
    def test_build_batch_shapes_and_labels(self, toy_world):
        batch_p = toy_world.train_constraints[:4]
        negs = sample_negatives(batch_p, toy_world.space, 0)
        batch = build_lrc_batch(batch_p, negs, toy_world.vocab, 8, 0)
        assert len(batch) == 12
        ids, segs, mask = batch.arrays()
        assert ids.shape == segs.shape == mask.shape == (12, 8)
        assert batch.labels.sum(axis=0).tolist() == [4.0, 8.0]
        for pair, label in zip(batch.pairs, batch.labels):
            assert tuple(label) == pair.one_hot

    def test_empty_negatives_rejected(self, toy_world):
        with pytest.raises(ContractError):
            build_lrc_batch(toy_world.train_constraints[:2], [], toy_world.vocab, 8)

    def test_batcher_covers_epoch_without_repeats(self):
        pairs = [pos(f"a{i}", f"b{i}") for i in range(10)]
        batcher = PositiveBatcher(pairs, 3, seed=1)
        epoch = [p for _ in range(3) for p in batcher.next_batch()]
        assert len(set(epoch)) == 9  # tail of one dropped
        assert batcher.next_batch() is not None and batcher.epoch == 1

    def test_batcher_needs_k_ge_2(self):
        with pytest.raises(ContractError):
            PositiveBatcher([pos("a", "b")] * 3, 1, 0)

    def test_stream_restore_reproduces(self, toy_world):
        stream = LrcBatchStream(toy_world.train_constraints, toy_world.space, toy_world.vocab, 4, 8, seed=5)
        for _ in range(3):
            stream.next_batch()
        saved = stream.state()
        a = [stream.next_batch() for _ in range(60)]
        stream.restore(saved)
        b = [stream.next_batch() for _ in range(60)]
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.arrays()[0], y.arrays()[0])
            np.testing.assert_array_equal(x.labels, y.labels)
