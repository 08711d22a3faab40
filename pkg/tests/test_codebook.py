import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import brute_resolve, brute_trigram_embed
from motionloop.codebook import (
    IndexOutOfRange,
    MotionCodebook,
    TrigramEmbedder,
    ZeroVector,
    apply_row_grad,
    init_codebook,
    init_frozen_codebook,
    load_codebook,
    lookup,
    mean_offdiagonal,
    resolve,
    save_codebook,
    similarity_matrix,
)


class _ConstantEmbedder:
    """Maps every text to the same unit vector, forcing cosine ties."""

    dim = 4

    def embed(self, text):
        v = np.zeros(4)
        v[0] = 1.0
        return v


class TestInit:
    def test_shape_and_dtype(self, vocab):
        cb = init_codebook(vocab, dim=32, seed=0)
        assert cb.entries.shape == (37, 32)
        assert cb.entries.dtype == np.float64
        assert cb.trainable

    def test_bounds(self, vocab):
        cb = init_codebook(vocab, dim=32, seed=5)
        bound = 1.0 / np.sqrt(32)
        assert np.all(np.abs(cb.entries) <= bound)

    def test_seed_determinism(self, vocab):
        a = init_codebook(vocab, dim=16, seed=9)
        b = init_codebook(vocab, dim=16, seed=9)
        assert np.array_equal(a.entries, b.entries)

    def test_seeds_differ(self, vocab):
        a = init_codebook(vocab, dim=16, seed=1)
        b = init_codebook(vocab, dim=16, seed=2)
        assert not np.array_equal(a.entries, b.entries)

    def test_tiny_dim_rejected(self, vocab):
        with pytest.raises(ValueError):
            init_codebook(vocab, dim=1)

    def test_frozen_init_is_text_features(self, vocab):
        emb = TrigramEmbedder(dim=64)
        cb = init_frozen_codebook(vocab, emb)
        assert not cb.trainable
        assert cb.dim == 64
        for i, e in enumerate(vocab.entries):
            assert np.allclose(cb.entries[i], emb.embed(e.text))


class TestLookupAndUpdate:
    def test_lookup_returns_copy(self, vocab):
        cb = init_codebook(vocab, dim=8, seed=0)
        row = lookup(cb, 3)
        row[:] = 99.0
        assert np.all(np.abs(cb.entries[3]) <= 1.0)

    def test_lookup_out_of_range(self, vocab):
        cb = init_codebook(vocab, dim=8, seed=0)
        with pytest.raises(IndexOutOfRange):
            lookup(cb, 37)
        with pytest.raises(IndexOutOfRange):
            lookup(cb, -1)

    def test_update_is_sparse(self, vocab):
        cb = init_codebook(vocab, dim=8, seed=0)
        before = cb.entries.copy()
        grad = np.ones(8)
        apply_row_grad(cb, 5, grad, lr=0.1)
        assert np.allclose(cb.entries[5], before[5] - 0.1)
        others = [i for i in range(cb.n) if i != 5]
        assert np.array_equal(cb.entries[others], before[others])

    def test_frozen_rows_never_move(self, vocab):
        cb = init_frozen_codebook(vocab, TrigramEmbedder(dim=32))
        before = cb.entries.copy()
        apply_row_grad(cb, 0, np.ones(32), lr=1.0)
        assert np.array_equal(cb.entries, before)

    def test_update_out_of_range(self, vocab):
        cb = init_codebook(vocab, dim=8, seed=0)
        with pytest.raises(IndexOutOfRange):
            apply_row_grad(cb, 99, np.ones(8), lr=0.1)


class TestEmbedder:
    def test_unit_norm(self):
        emb = TrigramEmbedder(dim=256)
        for text in ("move arm right with gripper open", "x", "lift the block"):
            assert np.linalg.norm(emb.embed(text)) == pytest.approx(1.0)

    def test_deterministic(self):
        emb = TrigramEmbedder(dim=256)
        a = emb.embed("move arm up with gripper closed")
        b = emb.embed("move arm up with gripper closed")
        assert np.array_equal(a, b)

    def test_matches_independent_implementation(self):
        emb = TrigramEmbedder(dim=256)
        texts = [
            "move arm right with gripper open",
            "move arm left and up with gripper closed",
            "make slight adjustments to gripper position",
            "grab the red block",
        ]
        for t in texts:
            assert np.allclose(emb.embed(t), brute_trigram_embed(t, 256))

    def test_case_insensitive(self):
        emb = TrigramEmbedder(dim=128)
        assert np.allclose(emb.embed("Move Arm Up"), emb.embed("move arm up"))


class TestResolve:
    def test_canonical_texts_resolve_to_own_id(self, vocab):
        cb = init_codebook(vocab)
        emb = TrigramEmbedder(dim=256)
        for e in vocab.entries:
            assert resolve(cb, vocab, e.text, emb) == e.instr_id

    def test_paraphrases_match_brute_force(self, vocab):
        cb = init_codebook(vocab)
        emb = TrigramEmbedder(dim=256)
        paraphrases = [
            "move arm right with gripper open ",
            "MOVE ARM RIGHT WITH GRIPPER OPEN",
            "move arm right gripper open",
            "please move the arm right with the gripper open",
            "arm left gripper closed",
            "move arm up and right with gripper open",
            "make small adjustments to gripper position",
            "move arm forwards with gripper closed",
            "shift the gripper slightly",
            "qwertyuiop",
        ]
        for text in paraphrases:
            assert resolve(cb, vocab, text, emb) == brute_resolve(text, vocab, 256)

    def test_near_canonical_paraphrase_lands_on_neighbour(self, vocab):
        cb = init_codebook(vocab)
        emb = TrigramEmbedder(dim=256)
        got = resolve(cb, vocab, "move arm right with gripper open!", emb)
        assert vocab.text_of(got) == "move arm right with gripper open"

    def test_tie_breaks_to_lowest_id(self, vocab):
        cb = init_codebook(vocab, dim=4)
        got = resolve(cb, vocab, "utterly unrelated text", _ConstantEmbedder())
        assert got == 0

    def test_empty_text_rejected(self, vocab):
        cb = init_codebook(vocab)
        with pytest.raises(ValueError):
            resolve(cb, vocab, "", TrigramEmbedder())

    @given(st.text(alphabet="abcdefghijklmnopqrstuvwxyz ", min_size=1, max_size=40))
    @settings(max_examples=100, deadline=None)
    def test_total_and_deterministic(self, vocab, text):
        cb = init_codebook(vocab)
        emb = TrigramEmbedder(dim=64)
        a = resolve(cb, vocab, text, emb)
        b = resolve(cb, vocab, text, emb)
        assert a == b
        assert 0 <= a < len(vocab)


class TestSimilarity:
    def test_identical_rows_give_ones(self):
        v = np.tile(np.array([1.0, 2.0, 3.0]), (4, 1))
        assert np.allclose(similarity_matrix(v), np.ones((4, 4)))

    def test_orthogonal_rows_give_identity(self):
        assert np.allclose(similarity_matrix(np.eye(3)), np.eye(3))

    def test_scale_invariance(self):
        rng = np.random.default_rng(0)
        v = rng.normal(size=(5, 7))
        scaled = v * rng.uniform(0.1, 10.0, size=(5, 1))
        assert np.allclose(similarity_matrix(v), similarity_matrix(scaled))

    def test_zero_vector_rejected(self):
        v = np.zeros((2, 3))
        v[0, 0] = 1.0
        with pytest.raises(ZeroVector):
            similarity_matrix(v)

    def test_symmetric_unit_diagonal_bounded(self):
        rng = np.random.default_rng(3)
        v = rng.normal(size=(10, 6))
        sim = similarity_matrix(v)
        assert np.array_equal(sim, sim.T)
        assert np.allclose(np.diag(sim), 1.0)
        assert np.all(sim >= -1.0) and np.all(sim <= 1.0)

    def test_mean_offdiagonal_hand_case(self):
        sim = np.array([[1.0, 0.5], [0.5, 1.0]])
        assert mean_offdiagonal(sim) == pytest.approx(0.5)

    def test_mean_offdiagonal_single_row(self):
        assert mean_offdiagonal(np.array([[1.0]])) == 0.0


class TestPersistence:
    def test_round_trip(self, vocab, tmp_path):
        cb = init_codebook(vocab, dim=32, seed=4)
        apply_row_grad(cb, 2, np.full(32, 0.01), lr=1.0)
        p = str(tmp_path / "cb.npz")
        save_codebook(cb, p)
        back = load_codebook(p)
        assert back.vocab_id == cb.vocab_id
        assert back.dim == 32
        assert back.trainable
        assert np.array_equal(back.entries, cb.entries)

    def test_round_trip_frozen(self, vocab, tmp_path):
        cb = init_frozen_codebook(vocab, TrigramEmbedder(dim=16))
        p = str(tmp_path / "frozen.npz")
        save_codebook(cb, p)
        back = load_codebook(p)
        assert not back.trainable
        assert np.array_equal(back.entries, cb.entries)
