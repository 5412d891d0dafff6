"""2-D convolution kinds and the causal depthwise 1-D convolution.

Each kind is a single tape primitive with a hand-written backward, so the tape
stays short and every heavy op maps onto one or two BLAS calls. Feature maps
here are channels-first (B, C, H, W); the network layers permute around these.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor

KINDS = ("pointwise1x1", "depthwise3x3", "plain3x3", "strided2x2", "transposed2x2")


def _bias_bwd(b: Tensor, g: np.ndarray) -> None:
    if b is not None and b.requires_grad:
        b._accumulate(g.sum(axis=(0, 2, 3)), own=True)


def _check_input(x: Tensor) -> tuple[int, int, int, int]:
    if x.ndim != 4:
        raise ShapeError(f"conv2d expects (B, C, H, W), got {x.shape}")
    return x.shape


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, kind: str = "plain3x3") -> Tensor:
    if kind == "pointwise1x1":
        return _pointwise1x1(x, w, b)
    if kind == "depthwise3x3":
        return _depthwise3x3(x, w, b)
    if kind == "plain3x3":
        return _plain3x3(x, w, b)
    if kind == "strided2x2":
        return _strided2x2(x, w, b)
    if kind == "transposed2x2":
        return _transposed2x2(x, w, b)
    raise ValueError(f"unknown conv kind '{kind}', expected one of {KINDS}")


def _pointwise1x1(x: Tensor, w: Tensor, b: Tensor | None) -> Tensor:
    B, C, H, W = _check_input(x)
    cout, cin = w.shape[0], w.shape[1]
    if cin != C:
        raise ShapeError(f"pointwise1x1 kernel expects {cin} input channels, input has {C}")
    w2 = w.data.reshape(cout, cin)
    x2 = x.data.reshape(B, C, H * W)
    y = np.matmul(w2, x2)  # (B, cout, HW)
    if b is not None:
        y = y + b.data[:, None]
    out = y.reshape(B, cout, H, W)

    def bwd(g):
        g2 = g.reshape(B, cout, H * W)
        if x.requires_grad:
            x._accumulate(np.matmul(w2.T, g2).reshape(B, C, H, W), own=True)
        if w.requires_grad:
            dw = np.tensordot(g2, x2, axes=([0, 2], [0, 2]))
            w._accumulate(dw.reshape(w.shape), own=True)
        _bias_bwd(b, g)

    return Tensor._result(out, _inputs(x, w, b), bwd)


def _plain3x3_raw(x: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Same-padding 3x3 convolution; returns (output, im2col matrix)."""
    B, C, H, W = x.shape
    cout = w.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = sliding_window_view(xp, (3, 3), axis=(2, 3))  # (B, C, H, W, 3, 3)
    cols2 = cols.transpose(0, 2, 3, 1, 4, 5).reshape(B * H * W, C * 9)
    y2 = cols2 @ w.reshape(cout, C * 9).T
    return y2.reshape(B, H, W, cout).transpose(0, 3, 1, 2), cols2


def _plain3x3(x: Tensor, w: Tensor, b: Tensor | None) -> Tensor:
    B, C, H, W = _check_input(x)
    cout, cin = w.shape[0], w.shape[1]
    if cin != C:
        raise ShapeError(f"plain3x3 kernel expects {cin} input channels, input has {C}")
    out, cols2 = _plain3x3_raw(x.data, w.data)
    if b is not None:
        out = out + b.data[None, :, None, None]

    def bwd(g):
        if w.requires_grad:
            g2 = g.transpose(0, 2, 3, 1).reshape(B * H * W, cout)
            w._accumulate((g2.T @ cols2).reshape(w.shape), own=True)
        if x.requires_grad:
            w_flip = w.data.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]
            dx, _ = _plain3x3_raw(g, np.ascontiguousarray(w_flip))
            x._accumulate(dx, own=True)
        _bias_bwd(b, g)

    return Tensor._result(out, _inputs(x, w, b), bwd)


def _depthwise3x3(x: Tensor, w: Tensor, b: Tensor | None) -> Tensor:
    B, C, H, W = _check_input(x)
    if w.shape[0] != C:
        raise ShapeError(f"depthwise3x3 kernel has {w.shape[0]} channels, input has {C}")
    wk = w.data.reshape(C, 3, 3)
    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    out = np.zeros((B, C, H, W), dtype=x.data.dtype)
    for i in range(3):
        for j in range(3):
            out += wk[:, i, j][None, :, None, None] * xp[:, :, i:i + H, j:j + W]
    if b is not None:
        out = out + b.data[None, :, None, None]

    def bwd(g):
        if w.requires_grad:
            dw = np.empty((C, 3, 3), dtype=g.dtype)
            for i in range(3):
                for j in range(3):
                    dw[:, i, j] = np.einsum("bchw,bchw->c", g, xp[:, :, i:i + H, j:j + W])
            w._accumulate(dw.reshape(w.shape), own=True)
        if x.requires_grad:
            dxp = np.zeros_like(xp)
            for i in range(3):
                for j in range(3):
                    dxp[:, :, i:i + H, j:j + W] += wk[:, i, j][None, :, None, None] * g
            x._accumulate(np.ascontiguousarray(dxp[:, :, 1:1 + H, 1:1 + W]), own=True)
        _bias_bwd(b, g)

    return Tensor._result(out, _inputs(x, w, b), bwd)


def _strided2x2(x: Tensor, w: Tensor, b: Tensor | None) -> Tensor:
    B, C, H, W = _check_input(x)
    cout, cin = w.shape[0], w.shape[1]
    if cin != C:
        raise ShapeError(f"strided2x2 kernel expects {cin} input channels, input has {C}")
    if H % 2 or W % 2:
        raise ShapeError(f"strided2x2 needs even spatial extents, got {H}x{W}")
    ho, wo = H // 2, W // 2
    x2 = x.data.reshape(B, C, ho, 2, wo, 2).transpose(0, 2, 4, 1, 3, 5).reshape(B * ho * wo, C * 4)
    w2 = w.data.reshape(cout, C * 4)
    y = (x2 @ w2.T).reshape(B, ho, wo, cout).transpose(0, 3, 1, 2)
    if b is not None:
        y = y + b.data[None, :, None, None]

    def bwd(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(B * ho * wo, cout)
        if x.requires_grad:
            dx = (g2 @ w2).reshape(B, ho, wo, C, 2, 2).transpose(0, 3, 1, 4, 2, 5).reshape(B, C, H, W)
            x._accumulate(dx, own=True)
        if w.requires_grad:
            w._accumulate((g2.T @ x2).reshape(w.shape), own=True)
        _bias_bwd(b, g)

    return Tensor._result(y, _inputs(x, w, b), bwd)


def _transposed2x2(x: Tensor, w: Tensor, b: Tensor | None) -> Tensor:
    # Weight layout (C_in, C_out, 2, 2); exact inverse geometry of strided2x2.
    B, C, H, W = _check_input(x)
    cin, cout = w.shape[0], w.shape[1]
    if cin != C:
        raise ShapeError(f"transposed2x2 kernel expects {cin} input channels, input has {C}")
    if H % 2 or W % 2:
        raise ShapeError(f"transposed2x2 needs even spatial extents, got {H}x{W}")
    x2 = x.data.transpose(0, 2, 3, 1).reshape(B * H * W, C)
    w2 = w.data.reshape(C, cout * 4)
    y = (x2 @ w2).reshape(B, H, W, cout, 2, 2).transpose(0, 3, 1, 4, 2, 5).reshape(B, cout, 2 * H, 2 * W)
    if b is not None:
        y = y + b.data[None, :, None, None]

    def bwd(g):
        g2 = g.reshape(B, cout, H, 2, W, 2).transpose(0, 2, 4, 1, 3, 5).reshape(B * H * W, cout * 4)
        if x.requires_grad:
            x._accumulate(np.ascontiguousarray((g2 @ w2.T).reshape(B, H, W, C).transpose(0, 3, 1, 2)), own=True)
        if w.requires_grad:
            w._accumulate((x2.T @ g2).reshape(w.shape), own=True)
        _bias_bwd(b, g)

    return Tensor._result(y, _inputs(x, w, b), bwd)


def causal_conv1d(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Depthwise causal convolution along the sequence axis.

    x: (B, L, C), w: (C, K). Position l sees x[l-K+1 .. l]; the front is
    zero-padded, so output length equals input length.
    """
    if x.ndim != 3:
        raise ShapeError(f"causal_conv1d expects (B, L, C), got {x.shape}")
    B, L, C = x.shape
    if w.shape[0] != C:
        raise ShapeError(f"causal_conv1d kernel has {w.shape[0]} channels, input has {C}")
    K = w.shape[1]
    xp = np.pad(x.data, ((0, 0), (K - 1, 0), (0, 0)))
    out = np.zeros((B, L, C), dtype=x.data.dtype)
    for k in range(K):
        out += w.data[:, k][None, None, :] * xp[:, k:k + L, :]
    if b is not None:
        out = out + b.data[None, None, :]

    def bwd(g):
        if w.requires_grad:
            dw = np.empty((C, K), dtype=g.dtype)
            for k in range(K):
                dw[:, k] = np.einsum("blc,blc->c", g, xp[:, k:k + L, :])
            w._accumulate(dw, own=True)
        if x.requires_grad:
            dxp = np.zeros_like(xp)
            for k in range(K):
                dxp[:, k:k + L, :] += w.data[:, k][None, None, :] * g
            x._accumulate(np.ascontiguousarray(dxp[:, K - 1:, :]), own=True)
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=(0, 1)), own=True)

    return Tensor._result(out, _inputs(x, w, b), bwd)


def _inputs(x: Tensor, w: Tensor, b: Tensor | None) -> tuple[Tensor, ...]:
    return (x, w) if b is None else (x, w, b)
