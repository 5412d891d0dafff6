"""Dense n-dimensional arrays with reverse-mode differentiation.

A Tensor wraps a numpy array and, when gradients are requested, records the
operations that produced it on a dynamic tape (define-by-run). backward() on a
scalar replays the tape in reverse topological order and accumulates dLoss/dLeaf
into every reachable leaf that requires grad.

Computation defaults to float32; gradient-check tests build float64 graphs by
constructing inputs with dtype=np.float64. Tensors on a tape are never mutated
in place, so replaying the tape is always valid.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


_grad_enabled = True


class no_grad:
    """Context manager that suspends tape recording."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if grad.shape[axis] != extent:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_prev", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None, _prev: tuple = ()):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad) and _grad_enabled
        self.grad: np.ndarray | None = None
        self._prev = _prev
        self._backward = None

    # ------------------------------------------------------------------ basics

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def is_leaf(self) -> bool:
        return not self._prev

    # ------------------------------------------------------------- tape plumbing

    @staticmethod
    def _result(data: np.ndarray, inputs: tuple["Tensor", ...], backward) -> "Tensor":
        """Create an op output, attaching tape bookkeeping when needed."""
        needs = _grad_enabled and any(t.requires_grad for t in inputs)
        out = Tensor(data)
        if needs:
            out.requires_grad = True
            out._prev = inputs
            out._backward = backward
        return out

    def _accumulate(self, grad: np.ndarray, own: bool = False) -> None:
        """Add a gradient contribution. ``own=True`` is a caller promise that
        ``grad`` is freshly computed and not aliased anywhere else, which lets
        the first contribution be adopted without a defensive copy."""
        if self.grad is None:
            if own and grad.dtype == self.data.dtype:
                self.grad = grad
            else:
                self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self.grad += grad

    def backward(self) -> None:
        """Populate leaf gradients for a scalar output.

        Repeated calls without zero_grad() keep accumulating into leaf grads;
        interior node grads are transient per call.
        """
        if self.size != 1:
            raise ValueError(f"backward() requires a scalar, got shape {self.shape}")
        if not self.requires_grad:
            raise ValueError("backward() on a tensor that does not require grad")

        # Iterative post-order DFS. _prev tuples give a deterministic visit
        # order, which keeps accumulation order (and hence float rounding)
        # identical across runs.
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for child in reversed(node._prev):
                if id(child) not in visited:
                    stack.append((child, False))

        for node in topo:
            if not node.is_leaf():
                node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # --------------------------------------------------------------- arithmetic

    def _coerce(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    @staticmethod
    def _check_broadcast(a: "Tensor", b: "Tensor") -> None:
        try:
            np.broadcast_shapes(a.shape, b.shape)
        except ValueError:
            raise ShapeError(f"shapes {a.shape} and {b.shape} are not broadcast-compatible") from None

    def __add__(self, other) -> "Tensor":
        other = self._coerce(other)
        self._check_broadcast(self, other)
        a, b = self, other

        def bwd(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.shape))

        return Tensor._result(a.data + b.data, (a, b), bwd)

    def __sub__(self, other) -> "Tensor":
        other = self._coerce(other)
        self._check_broadcast(self, other)
        a, b = self, other

        def bwd(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g, b.shape))

        return Tensor._result(a.data - b.data, (a, b), bwd)

    def __mul__(self, other) -> "Tensor":
        other = self._coerce(other)
        self._check_broadcast(self, other)
        a, b = self, other

        def bwd(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.shape), own=True)
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.shape), own=True)

        return Tensor._result(a.data * b.data, (a, b), bwd)

    def __neg__(self) -> "Tensor":
        a = self

        def bwd(g):
            a._accumulate(-g, own=True)

        return Tensor._result(-a.data, (a,), bwd)

    __radd__ = __add__
    __rmul__ = __mul__

    def __rsub__(self, other) -> "Tensor":
        return self._coerce(other) - self

    def __matmul__(self, other) -> "Tensor":
        other = self._coerce(other)
        a, b = self, other
        if a.ndim < 1 or b.ndim < 1 or a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
            raise ShapeError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
        out_data = a.data @ b.data

        def bwd(g):
            # Batched-times-2D (the Linear layer case) folds the batch axes
            # into rows: one flat GEMM instead of a batched GEMM plus a
            # reduction over the broadcast axes.
            folded = b.ndim == 2 and a.ndim >= 2
            if a.requires_grad:
                if folded:
                    g2 = g.reshape(-1, b.shape[1])
                    a._accumulate((g2 @ b.data.T).reshape(a.shape), own=True)
                else:
                    ga = g @ np.swapaxes(b.data, -1, -2)
                    a._accumulate(_unbroadcast(ga, a.shape), own=True)
            if b.requires_grad:
                if folded:
                    a2 = a.data.reshape(-1, a.shape[-1])
                    g2 = g.reshape(-1, b.shape[1])
                    b._accumulate(a2.T @ g2, own=True)
                else:
                    gb = np.swapaxes(a.data, -1, -2) @ g
                    b._accumulate(_unbroadcast(gb, b.shape), own=True)

        return Tensor._result(out_data, (a, b), bwd)

    # --------------------------------------------------------------- elementwise

    def exp(self) -> "Tensor":
        a = self
        out_data = np.exp(a.data)

        def bwd(g):
            a._accumulate(g * out_data, own=True)

        return Tensor._result(out_data, (a,), bwd)

    def sqrt(self) -> "Tensor":
        a = self
        out_data = np.sqrt(a.data)

        def bwd(g):
            a._accumulate(g * (0.5 / out_data), own=True)

        return Tensor._result(out_data, (a,), bwd)

    def abs(self) -> "Tensor":
        # Subgradient 0 at 0.
        a = self
        sign = np.sign(a.data)

        def bwd(g):
            a._accumulate(g * sign, own=True)

        return Tensor._result(np.abs(a.data), (a,), bwd)

    def sigmoid(self) -> "Tensor":
        a = self
        out_data = _sigmoid(a.data)

        def bwd(g):
            a._accumulate(g * out_data * (1.0 - out_data), own=True)

        return Tensor._result(out_data, (a,), bwd)

    def softplus(self) -> "Tensor":
        a = self
        out_data = _softplus(a.data)

        def bwd(g):
            a._accumulate(g * _sigmoid(a.data), own=True)

        return Tensor._result(out_data, (a,), bwd)

    def silu(self) -> "Tensor":
        # x * sigmoid(x); d/dx = s(x) * (1 + x * (1 - s(x)))
        a = self
        s = _sigmoid(a.data)
        out_data = a.data * s

        def bwd(g):
            a._accumulate(g * (s * (1.0 + a.data * (1.0 - s))), own=True)

        return Tensor._result(out_data, (a,), bwd)

    def leaky_relu(self, slope: float = 0.01) -> "Tensor":
        a = self
        mask = a.data > 0
        scale = np.where(mask, 1.0, slope).astype(a.data.dtype)

        def bwd(g):
            a._accumulate(g * scale, own=True)

        return Tensor._result(a.data * scale, (a,), bwd)

    # ---------------------------------------------------------------- reductions

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        a = self
        out_data = a.data.sum(axis=axis, keepdims=keepdims)

        def bwd(g):
            if axis is None:
                a._accumulate(np.broadcast_to(g, a.shape))
                return
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            if not keepdims:
                for ax in sorted(ax % a.ndim for ax in axes):
                    g = np.expand_dims(g, ax)
            a._accumulate(np.broadcast_to(g, a.shape))

        return Tensor._result(out_data, (a,), bwd)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            count = 1
            for ax in axes:
                count *= self.shape[ax]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -------------------------------------------------------------------- layout

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        try:
            out_data = a.data.reshape(shape)
        except ValueError:
            raise ShapeError(f"cannot reshape {a.shape} ({a.size} elements) to {shape}") from None

        def bwd(g):
            a._accumulate(g.reshape(a.shape))

        return Tensor._result(out_data, (a,), bwd)

    def permute(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        a = self
        inverse = np.argsort(axes)

        def bwd(g):
            a._accumulate(g.transpose(inverse))

        return Tensor._result(a.data.transpose(axes), (a,), bwd)

    def swapaxes(self, ax0: int, ax1: int) -> "Tensor":
        axes = list(range(self.ndim))
        axes[ax0], axes[ax1] = axes[ax1], axes[ax0]
        return self.permute(*axes)

    def __getitem__(self, idx) -> "Tensor":
        a = self
        out_data = a.data[idx]

        def bwd(g):
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            a._accumulate(full, own=True)

        return Tensor._result(out_data, (a,), bwd)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp overflow for very negative x saturates to the correct limit 0.
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def _softplus(x: np.ndarray) -> np.ndarray:
    # log(1 + e^x) = max(x, 0) + log1p(e^{-|x|})
    return np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))


def cat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]

    def bwd(g):
        start = 0
        for t, size in zip(tensors, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(start, start + size)
            if t.requires_grad:
                t._accumulate(g[tuple(sl)])
            start += size

    return Tensor._result(out_data, tensors, bwd)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize over the last (channel) axis, then apply the affine pair."""
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise ShapeError(f"layer_norm affine shapes {gamma.shape}/{beta.shape} do not match channels {x.shape[-1]}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = gamma.data * xhat + beta.data

    def bwd(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).reshape(-1, x.shape[-1]).sum(axis=0), own=True)
        if beta.requires_grad:
            beta._accumulate(g.reshape(-1, x.shape[-1]).sum(axis=0), own=True)
        if x.requires_grad:
            gx = g * gamma.data
            m1 = gx.mean(axis=-1, keepdims=True)
            m2 = (gx * xhat).mean(axis=-1, keepdims=True)
            x._accumulate(inv * (gx - m1 - xhat * m2), own=True)

    return Tensor._result(out_data, (x, gamma, beta), bwd)


_UNARY_TAGS = {"exp", "softplus", "silu", "leaky_relu"}
_BINARY_TAGS = {"add", "sub", "mul"}


def elementwise(tag: str, a: Tensor, b: Tensor | None = None, slope: float = 0.01) -> Tensor:
    """Tag-dispatched elementwise op (trailing-dimension broadcasting)."""
    if tag in _BINARY_TAGS:
        if b is None:
            raise ValueError(f"elementwise '{tag}' needs two operands")
        return {"add": Tensor.__add__, "sub": Tensor.__sub__, "mul": Tensor.__mul__}[tag](a, b)
    if tag in _UNARY_TAGS:
        if b is not None:
            raise ValueError(f"elementwise '{tag}' takes one operand")
        if tag == "leaky_relu":
            return a.leaky_relu(slope)
        return getattr(a, tag)()
    raise ValueError(f"unknown elementwise tag '{tag}'")


def reshape_permute(x: Tensor, spec: tuple) -> Tensor:
    """Layout change: spec is ('reshape', dims) or ('permute', axes)."""
    kind, arg = spec
    if kind == "reshape":
        return x.reshape(tuple(arg))
    if kind == "permute":
        return x.permute(tuple(arg))
    raise ValueError(f"unknown layout spec '{kind}'")


def zeros(shape, dtype=np.float32, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def ones(shape, dtype=np.float32, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=requires_grad)
