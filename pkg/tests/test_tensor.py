import numpy as np
import pytest

from cumamba.gradcheck import check_gradients
from cumamba.tensor import (ShapeError, Tensor, cat, elementwise, layer_norm,
                            no_grad, reshape_permute)


def t64(data, requires_grad=False):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=requires_grad)


class TestElementwise:
    def test_silu_at_zero(self):
        assert elementwise("silu", t64([0.0])).item() == 0.0

    def test_softplus_at_zero(self):
        assert elementwise("softplus", t64([0.0])).item() == pytest.approx(np.log(2.0), abs=1e-12)

    def test_add(self):
        out = elementwise("add", t64([1.0, 2.0]), t64([3.0, 4.0]))
        np.testing.assert_array_equal(out.data, [4.0, 6.0])

    def test_sub_mul(self):
        a, b = t64([5.0, 1.0]), t64([2.0, 3.0])
        np.testing.assert_array_equal(elementwise("sub", a, b).data, [3.0, -2.0])
        np.testing.assert_array_equal(elementwise("mul", a, b).data, [10.0, 3.0])

    def test_leaky_relu_slope(self):
        out = elementwise("leaky_relu", t64([-2.0, 3.0]), slope=0.01)
        np.testing.assert_allclose(out.data, [-0.02, 3.0])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4,\)"):
            t64(np.zeros((2, 3))) + t64(np.zeros(4))

    def test_broadcasting_keeps_non_broadcast_extents(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a_shape = tuple(rng.integers(1, 5, size=3))
            b_shape = tuple(1 if rng.random() < 0.5 else s for s in a_shape)
            out = t64(rng.standard_normal(a_shape)) * t64(rng.standard_normal(b_shape))
            assert out.shape == a_shape

    def test_unknown_tag(self):
        with pytest.raises(ValueError, match="unknown elementwise tag"):
            elementwise("cosh", t64([1.0]))


class TestMatmul:
    def test_identity(self):
        eye = t64(np.eye(2))
        m = t64([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal((eye @ m).data, m.data)

    def test_row_times_column(self):
        out = t64([[1.0, 0.0]]) @ t64([[5.0], [7.0]])
        np.testing.assert_array_equal(out.data, [[5.0]])

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            t64(np.zeros((2, 3))) @ t64(np.zeros((4, 2)))

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(1)
        a = Tensor(rng.standard_normal((3, 4)), requires_grad=True, dtype=np.float64)
        b = Tensor(rng.standard_normal((4, 2)), requires_grad=True, dtype=np.float64)
        r = Tensor(rng.standard_normal((3, 2)), dtype=np.float64)
        errs = check_gradients(lambda: ((a @ b) * r).sum(), [("a", a), ("b", b)])
        assert max(errs.values()) < 1e-6


class TestLayerNorm:
    def test_constant_input_gives_zeros(self):
        x = t64(np.full((2, 3, 5), 3.7))
        out = layer_norm(x, t64(np.ones(5)), t64(np.zeros(5)))
        np.testing.assert_array_equal(out.data, np.zeros((2, 3, 5)))

    def test_two_point_input(self):
        out = layer_norm(t64([1.0, -1.0]), t64(np.ones(2)), t64(np.zeros(2)))
        np.testing.assert_allclose(out.data, [1.0, -1.0], atol=1e-3)

    def test_normalized_moments(self):
        rng = np.random.default_rng(2)
        x = t64(rng.standard_normal((4, 6, 8)))
        out = layer_norm(x, t64(np.ones(8)), t64(np.zeros(8)))
        means = out.data.mean(axis=-1)
        assert np.max(np.abs(means)) < 1e-6
        variances = out.data.var(axis=-1)
        np.testing.assert_allclose(variances, 1.0, atol=1e-3)

    def test_affine_shape_check(self):
        with pytest.raises(ShapeError):
            layer_norm(t64(np.zeros((2, 5))), t64(np.ones(4)), t64(np.zeros(4)))


class TestLayout:
    def test_flatten_is_raster_order(self):
        grid = t64(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(2, 2, 1))
        flat = reshape_permute(grid, ("reshape", (4,)))
        np.testing.assert_array_equal(flat.data, [1.0, 2.0, 3.0, 4.0])

    def test_double_transpose_is_identity(self):
        rng = np.random.default_rng(3)
        x = t64(rng.standard_normal((3, 5)))
        out = reshape_permute(reshape_permute(x, ("permute", (1, 0))), ("permute", (1, 0)))
        np.testing.assert_array_equal(out.data, x.data)

    def test_permute_backward_is_inverse_permutation(self):
        rng = np.random.default_rng(4)
        x = Tensor(rng.standard_normal((2, 3, 4)), requires_grad=True, dtype=np.float64)
        r = Tensor(rng.standard_normal((4, 2, 3)), dtype=np.float64)
        errs = check_gradients(lambda: (x.permute(2, 0, 1) * r).sum(), [("x", x)])
        assert max(errs.values()) < 1e-8

    def test_reshape_element_count_mismatch(self):
        with pytest.raises(ShapeError):
            t64(np.zeros((2, 3))).reshape(7)

    def test_getitem_backward_scatters(self):
        x = Tensor(np.arange(6, dtype=np.float64).reshape(2, 3), requires_grad=True)
        out = x[0].sum()
        out.backward()
        np.testing.assert_array_equal(x.grad, [[1.0, 1.0, 1.0], [0.0, 0.0, 0.0]])

    def test_cat_backward_splits(self):
        a = Tensor(np.ones((2, 2)), requires_grad=True, dtype=np.float64)
        b = Tensor(np.ones((2, 3)), requires_grad=True, dtype=np.float64)
        w = Tensor(np.arange(10, dtype=np.float64).reshape(2, 5))
        (cat([a, b], axis=1) * w).sum().backward()
        np.testing.assert_array_equal(a.grad, [[0.0, 1.0], [5.0, 6.0]])
        np.testing.assert_array_equal(b.grad, [[2.0, 3.0, 4.0], [7.0, 8.0, 9.0]])


class TestBackward:
    def test_sum_gradient_is_ones(self):
        x = Tensor(np.random.default_rng(5).standard_normal((3, 4)), requires_grad=True)
        x.sum().backward()
        np.testing.assert_array_equal(x.grad, np.ones((3, 4), dtype=np.float32))

    def test_quadratic_gradient(self):
        x = t64([1.0, 2.0])
        x.requires_grad = True
        (x * x).sum().backward()
        np.testing.assert_allclose(x.grad, [2.0, 4.0])

    def test_non_scalar_loss_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            (x * x).backward()

    def test_repeated_backward_accumulates(self):
        x = t64([1.0, 2.0])
        x.requires_grad = True
        loss = (x * x).sum()
        loss.backward()
        loss.backward()
        np.testing.assert_allclose(x.grad, [4.0, 8.0])

    def test_shared_subexpression(self):
        x = t64([2.0])
        x.requires_grad = True
        y = x * x          # reused twice below
        (y + y).sum().backward()
        np.testing.assert_allclose(x.grad, [8.0])

    def test_no_grad_suppresses_tape(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with no_grad():
            y = (x * x).sum()
        assert not y.requires_grad and y._prev == ()

    def test_no_inplace_mutation_of_taped_tensors(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True, dtype=np.float64)
        before = x.data.copy()
        y = (x * 3.0 + 1.0).sum()
        y.backward()
        np.testing.assert_array_equal(x.data, before)


class TestDeterminism:
    def test_bit_identical_forward_backward(self):
        def run():
            rng = np.random.default_rng(123)
            x = Tensor(rng.standard_normal((8, 8)).astype(np.float32), requires_grad=True)
            w = Tensor(rng.standard_normal((8, 8)).astype(np.float32), requires_grad=True)
            y = ((x @ w).silu() * x).sum()
            y.backward()
            return y.item(), x.grad.copy(), w.grad.copy()

        v1, gx1, gw1 = run()
        v2, gx2, gw2 = run()
        assert v1 == v2
        np.testing.assert_array_equal(gx1, gx2)
        np.testing.assert_array_equal(gw1, gw2)
