"""2-D discrete Fourier transform with a radix-2 fast path.

Power-of-two extents take the iterative Cooley-Tukey route; anything else
falls back to the dense transform matrix. The unnormalized forward transform
is linear, so the tape backward just applies the same transform to the
(conjugated) upstream gradient and keeps the real part.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def _fft_pow2_last(a: np.ndarray) -> np.ndarray:
    """Radix-2 along the last axis (length 2^k), vectorized over the rest."""
    n = a.shape[-1]
    a = a[..., _bit_reverse(n)]
    m = 1
    while m < n:
        half = m
        m *= 2
        tw = np.exp(-2j * np.pi * np.arange(half) / m).astype(a.dtype)
        a = a.reshape(*a.shape[:-1], n // m, m)
        even = a[..., :half]
        odd = a[..., half:] * tw
        a = np.concatenate([even + odd, even - odd], axis=-1)
        a = a.reshape(*a.shape[:-2], n)
    return a


def _dft_last(a: np.ndarray) -> np.ndarray:
    n = a.shape[-1]
    if n == 1:
        return a.copy()
    if _is_pow2(n):
        return _fft_pow2_last(a)
    k = np.arange(n)
    mat = np.exp(-2j * np.pi * np.outer(k, k) / n).astype(a.dtype)
    return a @ mat


def dft2_raw(x: np.ndarray) -> np.ndarray:
    """Unnormalized forward transform over the last two axes."""
    cplx = np.complex128 if x.dtype == np.float64 or x.dtype == np.complex128 else np.complex64
    a = x.astype(cplx)
    a = _dft_last(a)
    a = np.swapaxes(_dft_last(np.swapaxes(a, -1, -2)), -1, -2)
    return a


def idft2_raw(x: np.ndarray) -> np.ndarray:
    """Inverse of dft2_raw via the conjugation identity."""
    h, w = x.shape[-2:]
    return np.conj(dft2_raw(np.conj(x))) / (h * w)


@dataclass
class ComplexGrid:
    """Frequency-domain planes of a real image, per channel."""

    real: Tensor
    imag: Tensor


def dft2(x: Tensor) -> ComplexGrid:
    """Differentiable forward transform of a real tensor over its last two axes."""
    spec = dft2_raw(x.data)
    real_part = np.ascontiguousarray(spec.real).astype(x.dtype)
    imag_part = np.ascontiguousarray(spec.imag).astype(x.dtype)

    def bwd_real(g):
        x._accumulate(dft2_raw(g).real.astype(x.dtype))

    def bwd_imag(g):
        # conj(i*g) transformed = -i * F(g); taking Re gives Im(F(g)).
        x._accumulate(dft2_raw(g).imag.astype(x.dtype))

    return ComplexGrid(
        real=Tensor._result(real_part, (x,), bwd_real),
        imag=Tensor._result(imag_part, (x,), bwd_imag),
    )
