import numpy as np
import pytest

from cumamba.fft import dft2, dft2_raw, idft2_raw
from cumamba.gradcheck import check_gradients
from cumamba.tensor import Tensor


def dense_dft2(x):
    """Independent oracle: dense transform matrices, no shared code path."""
    h, w = x.shape[-2:]
    ah = np.exp(-2j * np.pi * np.outer(np.arange(h), np.arange(h)) / h)
    aw = np.exp(-2j * np.pi * np.outer(np.arange(w), np.arange(w)) / w)
    return np.einsum("uh,...hw,wv->...uv", ah, x.astype(np.complex128), aw)


def test_constant_image_is_dc_only():
    c = 0.7
    spec = dft2_raw(np.full((4, 4), c))
    assert spec[0, 0] == pytest.approx(16 * c, abs=1e-10)
    rest = spec.copy()
    rest[0, 0] = 0
    assert np.max(np.abs(rest)) < 1e-10


def test_delta_image_is_flat_spectrum():
    img = np.zeros((8, 8))
    img[0, 0] = 1.0
    spec = dft2_raw(img)
    np.testing.assert_allclose(spec, np.ones((8, 8)), atol=1e-10)


def test_radix2_matches_dense_oracle():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 16, 8))
    np.testing.assert_allclose(dft2_raw(x), dense_dft2(x), atol=1e-9)


def test_non_power_of_two_fallback_matches_oracle():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((6, 10))
    np.testing.assert_allclose(dft2_raw(x), dense_dft2(x), atol=1e-9)


def test_hermitian_symmetry_for_real_input():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((8, 8))
    spec = dft2_raw(x)
    h, w = spec.shape
    for u in range(h):
        for v in range(w):
            assert spec[u, v] == pytest.approx(np.conj(spec[-u % h, -v % w]), abs=1e-9)


def test_inverse_round_trip():
    rng = np.random.default_rng(3)
    for shape in ((16, 16), (12, 20), (8, 6)):
        x = rng.standard_normal(shape)
        np.testing.assert_allclose(idft2_raw(dft2_raw(x)).real, x, atol=1e-5)


def test_parseval_relation():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((16, 16))
    spatial = np.sum(x * x)
    spectral = np.sum(np.abs(dft2_raw(x)) ** 2) / x.size
    assert spectral == pytest.approx(spatial, rel=1e-9)


def test_dft2_gradients():
    rng = np.random.default_rng(5)
    x = Tensor(rng.standard_normal((4, 4)), requires_grad=True, dtype=np.float64)
    rr = Tensor(rng.standard_normal((4, 4)), dtype=np.float64)
    ri = Tensor(rng.standard_normal((4, 4)), dtype=np.float64)

    def f():
        grid = dft2(x)
        return (grid.real * rr).sum() + (grid.imag * ri).sum()

    errs = check_gradients(f, [("x", x)])
    assert max(errs.values()) < 1e-7


def test_dft2_batched_channels():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((2, 3, 8, 8))
    spec = dft2_raw(x)
    for b in range(2):
        for c in range(3):
            np.testing.assert_allclose(spec[b, c], dense_dft2(x[b, c]), atol=1e-9)
