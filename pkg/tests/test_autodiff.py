import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vtqa import autodiff as ad
from vtqa.autodiff import ShapeError, Tape, Tensor


def leaf_pair(a, b):
    tape = Tape()
    return tape, tape.leaf(a), tape.leaf(b)


small_matrices = arrays(
    np.float64,
    st.tuples(st.integers(1, 5), st.integers(1, 5)),
    elements=st.floats(-10, 10, allow_nan=False),
)


class TestMatmul:
    def test_identity(self):
        eye = Tensor(np.eye(2))
        m = Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(ad.matmul(eye, m).data, m.data)

    def test_hand_case(self):
        out = ad.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
        assert np.array_equal(out.data, [[11.0]])

    def test_grad_wrt_left(self):
        # d sum(a @ b) / da at a=[[1,1]], b=[[2],[5]] is [[2, 5]]
        tape, a, b = leaf_pair([[1.0, 1.0]], [[2.0], [5.0]])
        grads = tape.backward(ad.sum_all(ad.matmul(a, b)))
        assert np.allclose(tape.grad(grads, a), [[2.0, 5.0]])

    def test_grad_check(self):
        b = np.array([[2.0], [5.0]])
        err = ad.grad_check(lambda x: ad.sum_all(ad.matmul(x, Tensor(b))), [[1.0, 1.0]])
        assert err < 1e-4

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(1, 2\).*\(3, 1\)"):
            ad.matmul(Tensor([[1.0, 2.0]]), Tensor([[1.0], [2.0], [3.0]]))


class TestElementwise:
    def test_mul_zero_annihilator(self):
        out = ad.mul(Tensor([[1.0, 2.0, 3.0]]), Tensor([[0.0, 0.0, 0.0]]))
        assert np.array_equal(out.data, [[0.0, 0.0, 0.0]])

    def test_mul_hand_case(self):
        assert np.array_equal(ad.mul(Tensor([[1.0, 2.0]]), Tensor([[3.0, 4.0]])).data, [[3.0, 8.0]])

    def test_add_identity(self):
        x = np.array([[1.5, -2.0, 0.25]])
        assert np.array_equal(ad.add(Tensor(x), Tensor(np.zeros((1, 3)))).data, x)

    def test_mul_gradients(self):
        tape, a, b = leaf_pair([[1.0, 2.0]], [[3.0, 4.0]])
        grads = tape.backward(ad.sum_all(ad.mul(a, b)))
        assert np.array_equal(tape.grad(grads, a), [[3.0, 4.0]])
        assert np.array_equal(tape.grad(grads, b), [[1.0, 2.0]])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ad.add(Tensor([[1.0]]), Tensor([[1.0, 2.0]]))


class TestConcat:
    def test_scalar_blocks(self):
        assert np.array_equal(ad.concat_cols(Tensor([[1.0]]), Tensor([[2.0]])).data, [[1.0, 2.0]])

    def test_uneven_blocks(self):
        out = ad.concat_cols(Tensor([[1.0, 2.0]]), Tensor([[3.0]]))
        assert np.array_equal(out.data, [[1.0, 2.0, 3.0]])

    def test_gradient_splits_by_column(self):
        tape, a, b = leaf_pair([[1.0, 2.0]], [[3.0]])
        grads = tape.backward(ad.sum_all(ad.concat_cols(a, b)))
        assert np.array_equal(tape.grad(grads, a), [[1.0, 1.0]])
        assert np.array_equal(tape.grad(grads, b), [[1.0]])

    def test_row_mismatch(self):
        with pytest.raises(ShapeError):
            ad.concat_cols(Tensor([[1.0]]), Tensor([[1.0], [2.0]]))

    @given(small_matrices)
    def test_concat_split_roundtrip_bit_exact(self, x):
        cols = x.shape[1]
        joined = ad.concat_cols(Tensor(x), Tensor(x + 1.0))
        left = ad.slice_cols(joined, 0, cols)
        right = ad.slice_cols(joined, cols, 2 * cols)
        assert np.array_equal(left.data, x)
        assert np.array_equal(right.data, x + 1.0)


class TestRelu:
    def test_examples(self):
        assert np.array_equal(ad.relu(Tensor([[-1.0, 0.0, 2.0]])).data, [[0.0, 0.0, 2.0]])
        assert np.array_equal(ad.relu(Tensor([[-3.0, -0.5]])).data, [[0.0, 0.0]])

    def test_gradient_is_indicator(self):
        tape = Tape()
        x = tape.leaf([[-1.0, 2.0]])
        grads = tape.backward(ad.sum_all(ad.relu(x)))
        assert np.array_equal(tape.grad(grads, x), [[0.0, 1.0]])


class TestSoftmax:
    def test_symmetry(self):
        assert np.allclose(ad.softmax_rows(Tensor([[0.0, 0.0]])).data, [[0.5, 0.5]])

    def test_stability_with_huge_inputs(self):
        out = ad.softmax_rows(Tensor([[1000.0, 1000.0 + np.log(3)]]))
        assert np.allclose(out.data, [[0.25, 0.75]], atol=1e-12)

    def test_log_ratio(self):
        out = ad.softmax_rows(Tensor([[np.log(1.0), np.log(2.0)]]))
        assert np.allclose(out.data, [[1 / 3, 2 / 3]], atol=1e-12)

    @settings(max_examples=50)
    @given(small_matrices)
    def test_rows_normalized(self, x):
        s = ad.softmax_rows(Tensor(x)).data
        assert np.all(s >= 0) and np.all(s <= 1)
        assert np.allclose(s.sum(axis=1), 1.0, atol=1e-9)

    @settings(max_examples=50)
    @given(small_matrices, st.floats(-50, 50, allow_nan=False))
    def test_shift_invariance(self, x, c):
        assert np.allclose(
            ad.softmax_rows(Tensor(x + c)).data, ad.softmax_rows(Tensor(x)).data, atol=1e-9
        )


class TestReductions:
    def test_max_over_list(self):
        out = ad.max_over_list([Tensor([[1.0, 3.0]]), Tensor([[3.0, 1.0]])])
        assert np.array_equal(out.data, [[3.0, 3.0]])

    def test_mean_over_singleton_is_identity(self):
        x = np.array([[1.0, -2.0, 4.0]])
        assert np.allclose(ad.mean_over_list([Tensor(x)]).data, x)

    def test_sum_all(self):
        assert ad.sum_all(Tensor([[1.0, 2.0, 3.0]])).data.item() == 6.0

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError):
            ad.max_over_list([])
        with pytest.raises(ValueError):
            ad.mean_over_list([])

    def test_max_tie_routes_to_first(self):
        tape = Tape()
        a = tape.leaf([[2.0]])
        b = tape.leaf([[2.0]])
        grads = tape.backward(ad.sum_all(ad.max_over_list([a, b])))
        assert np.array_equal(tape.grad(grads, a), [[1.0]])
        assert np.array_equal(tape.grad(grads, b), [[0.0]])


class TestActivations:
    def test_sigmoid_zero(self):
        assert ad.sigmoid(Tensor([[0.0]])).data.item() == 0.5

    def test_tanh_zero(self):
        assert ad.tanh(Tensor([[0.0]])).data.item() == 0.0

    def test_sigmoid_grad_at_zero(self):
        tape = Tape()
        x = tape.leaf([[0.0]])
        grads = tape.backward(ad.sum_all(ad.sigmoid(x)))
        assert np.allclose(tape.grad(grads, x), [[0.25]])


class TestGradCheck:
    def test_sum_is_exact(self):
        rng = np.random.default_rng(0)
        assert ad.grad_check(ad.sum_all, rng.uniform(-1, 1, (3, 4))) < 1e-10

    def test_sum_of_softmax_gradient_vanishes(self):
        # rows of softmax sum to a constant, so the true gradient is zero;
        # both sides should be numerically negligible
        rng = np.random.default_rng(1)
        x = rng.uniform(-1, 1, (2, 3))
        tape = Tape()
        xt = tape.leaf(x)
        grads = tape.backward(ad.sum_all(ad.softmax_rows(xt)))
        assert np.max(np.abs(tape.grad(grads, xt))) < 1e-12

    @pytest.mark.parametrize(
        "op",
        [
            ad.relu,
            ad.sigmoid,
            ad.tanh,
            ad.softmax_rows,
            ad.transpose,
            lambda t: ad.scale(t, -1.7),
            lambda t: ad.slice_cols(t, 1, 3),
        ],
    )
    def test_unary_ops_random_instances(self, op):
        rng = np.random.default_rng(42)
        for _ in range(20):
            x = rng.uniform(-1, 1, (rng.integers(1, 5), rng.integers(3, 5)))
            w = rng.standard_normal((1, 1))  # non-degenerate scalarization
            err = ad.grad_check(
                lambda t: ad.sum_all(ad.mul(op(t), ad.scale(op(Tensor(x)), w.item()))), x
            )
            assert err < 1e-4


class TestBackwardContract:
    def test_zero_upstream_gives_zero_gradients(self):
        tape = Tape()
        a = tape.leaf([[1.0, 2.0]])
        b = tape.leaf([[3.0], [4.0]])
        loss = ad.sum_all(ad.relu(ad.matmul(a, b)))
        grads = tape.backward(loss, seed=0.0)
        assert np.array_equal(tape.grad(grads, a), [[0.0, 0.0]])
        assert np.array_equal(tape.grad(grads, b), [[0.0], [0.0]])

    def test_unreached_leaf_gets_zeros(self):
        tape = Tape()
        a = tape.leaf([[1.0]])
        unused = tape.leaf([[5.0]])
        grads = tape.backward(ad.sum_all(a))
        assert np.array_equal(tape.grad(grads, unused), [[0.0]])

    def test_mixed_tapes_rejected(self):
        t1, t2 = Tape(), Tape()
        with pytest.raises(ValueError):
            ad.add(t1.leaf([[1.0]]), t2.leaf([[1.0]]))

    @given(small_matrices)
    def test_finite_inputs_give_finite_outputs(self, x):
        for out in (ad.relu(Tensor(x)), ad.sigmoid(Tensor(x)), ad.tanh(Tensor(x)),
                    ad.softmax_rows(Tensor(x)), ad.scale(Tensor(x), 3.0)):
            assert np.all(np.isfinite(out.data))
