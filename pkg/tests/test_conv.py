import numpy as np
import pytest

from cumamba.conv import causal_conv1d, conv2d
from cumamba.gradcheck import check_gradients
from cumamba.tensor import ShapeError, Tensor


def t(data, requires_grad=False):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=requires_grad)


def rand(rng, shape, requires_grad=False, scale=1.0):
    return Tensor(scale * rng.standard_normal(shape), requires_grad=requires_grad,
                  dtype=np.float64)


def test_pointwise_identity_weights_pass_input_through():
    rng = np.random.default_rng(0)
    x = rand(rng, (2, 3, 5, 5))
    w = t(np.eye(3).reshape(3, 3, 1, 1))
    out = conv2d(x, w, None, "pointwise1x1")
    np.testing.assert_allclose(out.data, x.data, atol=1e-12)


def test_depthwise_zero_kernel_gives_zero():
    rng = np.random.default_rng(1)
    x = rand(rng, (1, 4, 6, 6))
    out = conv2d(x, t(np.zeros((4, 1, 3, 3))), None, "depthwise3x3")
    np.testing.assert_array_equal(out.data, np.zeros_like(x.data))


def test_plain3x3_matches_direct_convolution():
    # Independent oracle: explicit loop over output positions.
    rng = np.random.default_rng(2)
    x = rand(rng, (1, 2, 5, 4))
    w = rand(rng, (3, 2, 3, 3))
    out = conv2d(x, w, None, "plain3x3").data
    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    for o in range(3):
        for i in range(5):
            for j in range(4):
                ref = np.sum(w.data[o] * xp[0, :, i:i + 3, j:j + 3])
                assert out[0, o, i, j] == pytest.approx(ref, rel=1e-12)


def test_strided_halves_and_transposed_doubles():
    rng = np.random.default_rng(3)
    x = rand(rng, (2, 3, 8, 12))
    down = conv2d(x, rand(rng, (5, 3, 2, 2)), None, "strided2x2")
    assert down.shape == (2, 5, 4, 6)
    up = conv2d(down, rand(rng, (5, 3, 2, 2)), None, "transposed2x2")
    assert up.shape == (2, 3, 8, 12)


def test_transposed_is_adjoint_of_strided():
    # <strided(x), y> == <x, transposed(y)>; the (C_out, C_in, kh, kw) strided
    # weight reads directly as a (C_in, C_out, kh, kw) transposed weight.
    rng = np.random.default_rng(4)
    x = rand(rng, (1, 2, 8, 8))
    y = rand(rng, (1, 3, 4, 4))
    w = rand(rng, (3, 2, 2, 2))
    down = conv2d(x, w, None, "strided2x2").data
    up = conv2d(y, w, None, "transposed2x2").data
    assert np.sum(down * y.data) == pytest.approx(np.sum(x.data * up), rel=1e-10)


def test_channel_mismatch_errors():
    rng = np.random.default_rng(5)
    x = rand(rng, (1, 3, 4, 4))
    with pytest.raises(ShapeError, match="channels"):
        conv2d(x, rand(rng, (2, 4, 3, 3)), None, "plain3x3")
    with pytest.raises(ShapeError, match="channels"):
        conv2d(x, rand(rng, (4, 1, 3, 3)), None, "depthwise3x3")


def test_odd_extent_rejected_for_resampling_kinds():
    rng = np.random.default_rng(6)
    x = rand(rng, (1, 2, 5, 6))
    with pytest.raises(ShapeError, match="even"):
        conv2d(x, rand(rng, (2, 2, 2, 2)), None, "strided2x2")
    with pytest.raises(ShapeError, match="even"):
        conv2d(x, rand(rng, (2, 2, 2, 2)), None, "transposed2x2")


def test_unknown_kind():
    with pytest.raises(ValueError, match="unknown conv kind"):
        conv2d(t(np.zeros((1, 1, 2, 2))), t(np.zeros((1, 1, 1, 1))), None, "dilated5x5")


@pytest.mark.parametrize("kind,cin,cout,wshape", [
    ("pointwise1x1", 3, 2, (2, 3, 1, 1)),
    ("plain3x3", 2, 3, (3, 2, 3, 3)),
    ("depthwise3x3", 3, 3, (3, 1, 3, 3)),
    ("strided2x2", 2, 4, (4, 2, 2, 2)),
    ("transposed2x2", 3, 2, (3, 2, 2, 2)),
])
def test_gradients_per_kind(kind, cin, cout, wshape):
    rng = np.random.default_rng(7)
    x = rand(rng, (2, cin, 4, 4), requires_grad=True)
    w = rand(rng, wshape, requires_grad=True, scale=0.5)
    b = rand(rng, (cout,), requires_grad=True, scale=0.2)
    out_shape = conv2d(x, w, b, kind).shape
    r = rand(rng, out_shape)
    errs = check_gradients(lambda: (conv2d(x, w, b, kind) * r).sum(),
                           [("x", x), ("w", w), ("b", b)])
    assert max(errs.values()) < 1e-5


def test_causal_conv_is_causal_and_correct():
    rng = np.random.default_rng(8)
    B, L, C, K = 2, 9, 3, 4
    x = rand(rng, (B, L, C))
    w = rand(rng, (C, K))
    out = causal_conv1d(x, w, None).data
    xp = np.pad(x.data, ((0, 0), (K - 1, 0), (0, 0)))
    for l in range(L):
        ref = sum(w.data[:, k] * xp[:, l + k, :] for k in range(K))
        np.testing.assert_allclose(out[:, l], ref, atol=1e-12)
    # Future positions cannot influence the present.
    bumped = x.data.copy()
    bumped[:, 5] += 1.0
    out2 = causal_conv1d(t(bumped), w, None).data
    np.testing.assert_array_equal(out2[:, :5], out[:, :5])
    assert np.any(out2[:, 5:] != out[:, 5:])


def test_causal_conv_gradients():
    rng = np.random.default_rng(9)
    x = rand(rng, (2, 6, 3), requires_grad=True)
    w = rand(rng, (3, 4), requires_grad=True, scale=0.5)
    b = rand(rng, (3,), requires_grad=True, scale=0.2)
    r = rand(rng, (2, 6, 3))
    errs = check_gradients(lambda: (causal_conv1d(x, w, b) * r).sum(),
                           [("x", x), ("w", w), ("b", b)])
    assert max(errs.values()) < 1e-6
