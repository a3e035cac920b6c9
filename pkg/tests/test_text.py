import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vtqa import autodiff as ad
from vtqa import text
from vtqa.autodiff import Tape, Tensor
from vtqa.text import (
    GruParams,
    Vocabulary,
    encode_question,
    encode_sentence,
    encode_sentences,
    gru_step,
    make_property_sentence,
    tokenize,
)

D_EMB, D_H = 3, 4


def zero_gru(d_emb=D_EMB, d_h=D_H):
    z = lambda *s: Tensor(np.zeros(s))
    return GruParams(
        w_z=z(d_emb, d_h), u_z=z(d_h, d_h), b_z=z(1, d_h),
        w_r=z(d_emb, d_h), u_r=z(d_h, d_h), b_r=z(1, d_h),
        w_h=z(d_emb, d_h), u_h=z(d_h, d_h), b_h=z(1, d_h),
    )


def random_gru(rng, d_emb=D_EMB, d_h=D_H, tape=None):
    mk = (lambda *s: tape.leaf(rng.uniform(-1, 1, s))) if tape else (
        lambda *s: Tensor(rng.uniform(-1, 1, s))
    )
    return GruParams(
        w_z=mk(d_emb, d_h), u_z=mk(d_h, d_h), b_z=mk(1, d_h),
        w_r=mk(d_emb, d_h), u_r=mk(d_h, d_h), b_r=mk(1, d_h),
        w_h=mk(d_emb, d_h), u_h=mk(d_h, d_h), b_h=mk(1, d_h),
    )


class TestVocabularyAndTokenize:
    def test_reserved_indices(self):
        v = Vocabulary()
        assert v.index(text.PAD_TOKEN) == 0
        assert v.index(text.UNK_TOKEN) == 1

    def test_known_tokens(self):
        v = Vocabulary(["two", "cows"])
        assert tokenize("Two cows.", v) == [v.index("two"), v.index("cows")]

    def test_empty_text_is_unk(self):
        assert tokenize("", Vocabulary()) == [text.UNK_INDEX]
        assert tokenize("  !!  ", Vocabulary()) == [text.UNK_INDEX]

    def test_unseen_token_is_unk(self):
        assert tokenize("XYZZY", Vocabulary(["two"])) == [text.UNK_INDEX]

    def test_punctuation_stripped(self):
        v = Vocabulary(["what", "color", "is", "it"])
        assert tokenize("What color, is it?", v) == [v.index(t) for t in ("what", "color", "is", "it")]

    @given(st.text())
    def test_tokenize_never_empty(self, s):
        assert len(tokenize(s, Vocabulary())) >= 1


class TestPropertySentence:
    def test_template(self):
        assert make_property_sentence("cow", ["brown", "large"]) == "cow is brown large"

    def test_empty_attributes_keep_copula(self):
        assert make_property_sentence("sky", []) == "sky is"

    def test_multiword_name(self):
        assert make_property_sentence("tennis racket", ["black"]) == "tennis racket is black"

    def test_empty_name_rejected(self):
        with pytest.raises(ValueError):
            make_property_sentence("", ["blue"])


class TestGruStep:
    def test_zero_params_halve_state(self):
        # z = sigmoid(0) = 0.5 and the candidate is 0, so h' = 0.5 h
        h = np.array([[1.0, -2.0, 0.5, 4.0]])
        out = gru_step(Tensor(h), Tensor(np.zeros((1, D_EMB))), zero_gru())
        assert np.allclose(out.data, 0.5 * h)

    def test_zero_state_zero_params(self):
        out = gru_step(Tensor(np.zeros((1, D_H))), Tensor(np.ones((1, D_EMB))), zero_gru())
        assert np.array_equal(out.data, np.zeros((1, D_H)))

    def test_grad_check_over_all_params(self):
        rng = np.random.default_rng(3)
        h0 = rng.uniform(-1, 1, (1, D_H))
        x0 = rng.uniform(-1, 1, (1, D_EMB))
        weights = random_gru(rng)

        names = ["w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h"]
        for name in names:
            base = getattr(weights, name).data

            def f(t, name=name):
                params = GruParams(**{
                    n: (t if n == name else Tensor(getattr(weights, n).data)) for n in names
                })
                return ad.sum_all(gru_step(Tensor(h0), Tensor(x0), params))

            assert ad.grad_check(f, base) < 1e-4, name


class TestEncoders:
    def test_pad_token_zero_params_gives_zero(self):
        table = Tensor(np.zeros((5, D_EMB)))
        out = encode_sentence([text.PAD_INDEX], table, zero_gru())
        assert np.array_equal(out.data, np.zeros((1, D_H)))

    def test_token_order_matters(self):
        rng = np.random.default_rng(0)
        table = Tensor(rng.uniform(-1, 1, (5, D_EMB)))
        params = random_gru(rng)
        fwd = encode_sentence([2, 3, 4], table, params).data
        rev = encode_sentence([4, 3, 2], table, params).data
        assert not np.allclose(fwd, rev)

    def test_output_width_independent_of_length(self):
        rng = np.random.default_rng(1)
        table = Tensor(rng.uniform(-1, 1, (5, D_EMB)))
        params = random_gru(rng)
        for toks in ([2], [2, 3], [2, 3, 4, 2, 3]):
            assert encode_sentence(toks, table, params).shape == (1, D_H)

    def test_empty_sentence_rejected(self):
        with pytest.raises(ValueError):
            encode_sentence([], Tensor(np.zeros((5, D_EMB))), zero_gru())
        with pytest.raises(ValueError):
            encode_sentences([], Tensor(np.zeros((5, D_EMB))), zero_gru())

    def test_stacked_rows_match_single_encodings(self):
        rng = np.random.default_rng(2)
        table = Tensor(rng.uniform(-1, 1, (6, D_EMB)))
        params = random_gru(rng)
        sentences = [[2, 3], [4], [5, 2, 3], [3, 4]]  # mixed lengths
        stacked = encode_sentences(sentences, table, params).data
        assert stacked.shape == (4, D_H)
        for i, s in enumerate(sentences):
            assert np.allclose(stacked[i], encode_sentence(s, table, params).data, atol=1e-12)

    def test_identical_sentences_identical_rows(self):
        rng = np.random.default_rng(4)
        table = Tensor(rng.uniform(-1, 1, (6, D_EMB)))
        params = random_gru(rng)
        stacked = encode_sentences([[2, 3], [2, 3], [2, 3]], table, params).data
        assert np.array_equal(stacked[0], stacked[1])
        assert np.array_equal(stacked[1], stacked[2])

    def test_determinism(self):
        rng = np.random.default_rng(5)
        table_data = rng.uniform(-1, 1, (6, D_EMB))
        gru_rng = np.random.default_rng(6)
        a = encode_sentence([2, 3, 4], Tensor(table_data), random_gru(gru_rng))
        gru_rng = np.random.default_rng(6)
        b = encode_sentence([2, 3, 4], Tensor(table_data), random_gru(gru_rng))
        assert np.array_equal(a.data, b.data)

    def test_property_count_must_match_objects(self):
        table = Tensor(np.zeros((5, D_EMB)))
        with pytest.raises(text.AlignmentError):
            text.encode_properties([[2], [3]], 3, table, zero_gru())

    def test_property_matrix_shape(self):
        rng = np.random.default_rng(7)
        table = Tensor(rng.uniform(-1, 1, (5, D_EMB)))
        out = text.encode_properties([[2], [3]], 2, table, random_gru(rng))
        assert out.shape == (2, D_H)

    def test_grad_check_through_sentence_encoder(self):
        rng = np.random.default_rng(8)
        params = random_gru(rng)
        tokens = [1, 2, 3]

        def f(table):
            return ad.sum_all(encode_sentence(tokens, table, params))

        assert ad.grad_check(f, rng.uniform(-1, 1, (4, D_EMB))) < 1e-4

    def test_question_encoder_uses_own_width(self):
        rng = np.random.default_rng(9)
        table = Tensor(rng.uniform(-1, 1, (5, D_EMB)))
        q_params = random_gru(rng, d_h=2)
        assert encode_question([2, 3], table, q_params).shape == (1, 2)


class TestEmbeddingFile:
    def test_load_overwrites_matching_rows(self, tmp_path):
        vocab = Vocabulary(["cow", "dog"])
        table = np.zeros((len(vocab), 2))
        path = tmp_path / "emb.txt"
        path.write_text("cow 1.5 -2.0\nhorse 9 9\n<pad> 3 3\n")
        loaded = text.load_embedding_file(str(path), vocab, table)
        assert loaded == 1
        assert np.array_equal(table[vocab.index("cow")], [1.5, -2.0])
        assert np.array_equal(table[text.PAD_INDEX], [0.0, 0.0])  # PAD never overwritten
        assert np.array_equal(table[vocab.index("dog")], [0.0, 0.0])

    def test_wrong_width_rejected(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("cow 1.0\n")
        with pytest.raises(ValueError, match="expected 2"):
            text.load_embedding_file(str(path), Vocabulary(["cow"]), np.zeros((3, 2)))
