"""Selective state-space kernel.

The recurrence h_t = a_t * h_{t-1} + s_t is a composition of affine maps
(a, b): h -> a*h + b, which is associative:

    (a2, b2) after (a1, b1) = (a1*a2, a2*b1 + b2)

so all prefixes can be computed either by the plain sequential loop or by a
work-efficient up-sweep/down-sweep over chunks. Both paths share one autodiff
primitive whose backward runs the adjoint recurrence as a reverse-direction
scan, so no per-step tape is kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conv import causal_conv1d
from .nn import CausalConv1d, Linear, Module, Parameter
from .tensor import ShapeError, Tensor


@dataclass
class ScanElement:
    """Affine carry (a, b): h -> a*h + b."""

    a: np.ndarray
    b: np.ndarray

    def after(self, earlier: "ScanElement") -> "ScanElement":
        """Composition: apply ``earlier`` first, then this element."""
        return ScanElement(earlier.a * self.a, self.a * earlier.b + self.b)

    @staticmethod
    def identity(shape, dtype=np.float64) -> "ScanElement":
        return ScanElement(np.ones(shape, dtype=dtype), np.zeros(shape, dtype=dtype))


# --------------------------------------------------------------------- raw scans


def _scan_core_sequential(a: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Inclusive prefixes of the affine recurrence; a, s: (B, L, M)."""
    h = np.empty_like(s)
    carry = np.zeros_like(s[:, 0])
    for t in range(a.shape[1]):
        carry = a[:, t] * carry + s[:, t]
        h[:, t] = carry
    return h


def _blelloch_exclusive(a: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """In-place exclusive scan along axis 2 (power-of-two length).

    Returns the per-chunk totals (composition of the whole axis) captured at
    the root of the up-sweep; a and s end up holding the exclusive prefixes.
    """
    n = a.shape[2]
    d = 1
    while d < n:
        left = slice(d - 1, n, 2 * d)
        right = slice(2 * d - 1, n, 2 * d)
        s[:, :, right] = a[:, :, right] * s[:, :, left] + s[:, :, right]
        a[:, :, right] = a[:, :, left] * a[:, :, right]
        d *= 2
    total_a = a[:, :, -1].copy()
    total_s = s[:, :, -1].copy()
    a[:, :, -1] = 1
    s[:, :, -1] = 0
    d = n // 2
    while d >= 1:
        left = slice(d - 1, n, 2 * d)
        right = slice(2 * d - 1, n, 2 * d)
        keep_a = a[:, :, left].copy()
        keep_s = s[:, :, left].copy()
        a[:, :, left] = a[:, :, right]
        s[:, :, left] = s[:, :, right]
        s[:, :, right] = keep_a * s[:, :, right] + keep_s
        a[:, :, right] = a[:, :, right] * keep_a
        d //= 2
    return total_a, total_s


def _scan_core_parallel(a: np.ndarray, s: np.ndarray, chunk: int) -> np.ndarray:
    """Chunked Blelloch scan; same contract as the sequential core."""
    B, L, M = a.shape
    ck = 1 << max(0, int(np.ceil(np.log2(min(chunk, L)))))
    nc = (L + ck - 1) // ck
    pad = nc * ck - L
    if pad:
        a = np.concatenate([a, np.ones((B, pad, M), dtype=a.dtype)], axis=1)
        s = np.concatenate([s, np.zeros((B, pad, M), dtype=s.dtype)], axis=1)
    ac = a.reshape(B, nc, ck, M)
    sc = s.reshape(B, nc, ck, M)
    ea, es = ac.copy(), sc.copy()
    total_a, total_s = _blelloch_exclusive(ea, es)
    # Inclusive prefixes within each chunk, written over the exclusive ones.
    np.multiply(ac, es, out=es)
    es += sc
    np.multiply(ac, ea, out=ea)
    # Carry the running composition across chunks, then push it into each chunk.
    h = es
    inc_a = ea
    carry = np.zeros((B, M), dtype=s.dtype)
    for j in range(nc):
        if j:
            h[:, j] += inc_a[:, j] * carry[:, None, :]
        carry = total_a[:, j] * carry + total_s[:, j]
    h = h.reshape(B, nc * ck, M)
    return h[:, :L] if pad else h


# ------------------------------------------------------------ autodiff primitive


def _normalize_scan_inputs(a_bar, b_bar, x, c_t, d):
    batched = a_bar.ndim == 4
    if a_bar.ndim not in (3, 4):
        raise ShapeError(f"scan expects (L,C,N) or (B,L,C,N) carries, got {a_bar.shape}")
    shape = a_bar.shape if batched else (1,) + a_bar.shape
    B, L, C, N = shape
    checks = [
        (b_bar.shape, a_bar.shape, "discrete input carry"),
        (x.shape, a_bar.shape[:-1], "sequence"),
        (c_t.shape, a_bar.shape[:-2] + (N,), "readout projection"),
        (d.shape, (C,), "skip coefficients"),
    ]
    for got, want, what in checks:
        if tuple(got) != tuple(want):
            raise ShapeError(f"{what} shape {tuple(got)} does not match expected {tuple(want)}")
    return batched, B, L, C, N


def ssm_scan(a_bar: Tensor, b_bar: Tensor, x: Tensor, c_t: Tensor, d: Tensor,
             mode: str = "parallel", chunk: int = 64) -> Tensor:
    """Run the selective recurrence and readout.

    h[t] = a_bar[t] * h[t-1] + b_bar[t] * x[t]   (per channel, N-dim state)
    y[t, c] = sum_n c_t[t, n] * h[t, c, n] + d[c] * x[t, c]

    Shapes: a_bar/b_bar (B, L, C, N), x (B, L, C), c_t (B, L, N), d (C,);
    the batch axis is optional. ``mode`` picks the sequential loop or the
    chunked work-efficient scan; both produce the same contract.
    """
    if mode not in ("parallel", "sequential"):
        raise ValueError(f"unknown scan mode '{mode}'")
    if mode == "parallel" and chunk <= 0:
        raise ValueError(f"chunk must be positive, got {chunk}")
    batched, B, L, C, N = _normalize_scan_inputs(a_bar, b_bar, x, c_t, d)

    av = a_bar.data.reshape(B, L, C, N)
    bv = b_bar.data.reshape(B, L, C, N)
    xv = x.data.reshape(B, L, C)
    cv = c_t.data.reshape(B, L, N)
    dv = d.data

    sv = bv * xv[..., None]
    core = _scan_core_parallel if mode == "parallel" else _scan_core_sequential
    args = (chunk,) if mode == "parallel" else ()
    h = core(av.reshape(B, L, C * N), sv.reshape(B, L, C * N), *args).reshape(B, L, C, N)

    y = np.matmul(h, cv[..., None])[..., 0] + dv * xv
    out = y if batched else y[0]

    def bwd(grad):
        g = grad.reshape(B, L, C)
        if d.requires_grad:
            d._accumulate(np.einsum("blc,blc->c", g, xv, optimize=True), own=True)
        if c_t.requires_grad:
            gc = np.matmul(g[:, :, None, :], h)[:, :, 0, :]
            c_t._accumulate(gc if batched else gc[0], own=True)
        # Adjoint recurrence lam[t] = ghat[t] + a[t+1] * lam[t+1], run as a
        # reverse-direction scan with the multipliers shifted by one step.
        ghat = (g[..., None] * cv[:, :, None, :]).reshape(B, L, C * N)
        ar = av.reshape(B, L, C * N)[:, ::-1]
        a_shift = np.concatenate([np.ones_like(ar[:, :1]), ar[:, :-1]], axis=1)
        lam = core(np.ascontiguousarray(a_shift), np.ascontiguousarray(ghat[:, ::-1]), *args)
        lam = lam[:, ::-1].reshape(B, L, C, N)
        if a_bar.requires_grad:
            h_prev = np.concatenate([np.zeros_like(h[:, :1]), h[:, :-1]], axis=1)
            ga = lam * h_prev
            a_bar._accumulate(ga if batched else ga[0], own=True)
        if b_bar.requires_grad:
            gb = lam * xv[..., None]
            b_bar._accumulate(gb if batched else gb[0], own=True)
        if x.requires_grad:
            gx = (lam * bv).sum(axis=-1) + g * dv
            x._accumulate(gx if batched else gx[0], own=True)

    return Tensor._result(out, (a_bar, b_bar, x, c_t, d), bwd)


def scan_sequential(a_bar: Tensor, b_bar: Tensor, x: Tensor, c_t: Tensor, d: Tensor) -> Tensor:
    return ssm_scan(a_bar, b_bar, x, c_t, d, mode="sequential")


def scan_parallel(a_bar: Tensor, b_bar: Tensor, x: Tensor, c_t: Tensor, d: Tensor,
                  chunk: int = 64) -> Tensor:
    return ssm_scan(a_bar, b_bar, x, c_t, d, mode="parallel", chunk=chunk)


# ----------------------------------------------------------------- selection ops


def discretize(delta: Tensor, a: Tensor, b_t: Tensor) -> tuple[Tensor, Tensor]:
    """Zero-order hold for the state matrix, Euler step for the input map.

    delta (..., L, C) > 0, a (C, N) < 0, b_t (..., L, N):
    a_bar = exp(delta * a) in (0, 1), b_bar = delta * b_t, both (..., L, C, N).
    """
    if np.any(delta.data <= 0):
        raise ValueError("discretize requires strictly positive step sizes")
    dl = delta.reshape(*delta.shape, 1)                       # (..., L, C, 1)
    a_bar = (dl * a).exp()
    b_bar = dl * b_t.reshape(*b_t.shape[:-1], 1, b_t.shape[-1])
    return a_bar, b_bar


class SsmParams(Module):
    """Per-layer scan parameters: the decay matrix, the three data-dependent
    projections, and the per-channel skip coefficient.

    The decay matrix is stored in log space (a = -exp(a_log)) so its entries
    stay strictly negative no matter what the optimizer does.
    """

    def __init__(self, feature_width: int, channels: int, state_size: int,
                 rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.feature_width = feature_width
        self.channels = channels
        self.state_size = state_size
        init = np.log(np.arange(1, state_size + 1, dtype=np.float64))
        self.a_log = Parameter(np.broadcast_to(init, (channels, state_size)).astype(dtype), decay=False)
        self.proj_delta = Linear(feature_width, channels, rng, dtype)
        self.proj_b = Linear(feature_width, state_size, rng, dtype)
        self.proj_c = Linear(feature_width, state_size, rng, dtype)
        self.d = Parameter(np.ones(channels, dtype=dtype), decay=False)

    def a(self) -> Tensor:
        return -self.a_log.exp()


def select_params(xhat: Tensor, params: SsmParams) -> tuple[Tensor, Tensor, Tensor]:
    """Data-dependent (delta, b_t, c_t) from the token sequence (..., L, F)."""
    if xhat.shape[-1] != params.feature_width:
        raise ShapeError(
            f"token width {xhat.shape[-1]} does not match projection input width {params.feature_width}")
    # SoftPlus is mathematically positive but underflows to 0.0 for very
    # negative inputs; the floor keeps the step size strictly positive.
    delta = params.proj_delta(xhat).softplus() + 1e-20
    return delta, params.proj_b(xhat), params.proj_c(xhat)


class SelectiveSSM(Module):
    """Gated scan block over a token sequence (B, L, F) -> (B, L, F).

    Main branch: linear expansion, causal depthwise conv, SiLU, then the
    selective scan with parameters projected from the activations. The gate
    branch (linear + SiLU) multiplies the scan output before the contraction
    back to width F.
    """

    def __init__(self, width: int, rng: np.random.Generator, state_size: int = 16,
                 expansion: int = 2, conv_width: int = 4, scan_mode: str = "parallel",
                 scan_chunk: int = 64, dtype=np.float32):
        super().__init__()
        self.width = width
        self.inner = expansion * width
        self.scan_mode = scan_mode
        self.scan_chunk = scan_chunk
        self.in_proj = Linear(width, self.inner, rng, dtype)
        self.gate_proj = Linear(width, self.inner, rng, dtype)
        self.conv = CausalConv1d(self.inner, conv_width, rng, dtype)
        self.ssm = SsmParams(self.inner, self.inner, state_size, rng, dtype)
        self.out_proj = Linear(self.inner, width, rng, dtype)

    def __call__(self, xhat: Tensor) -> Tensor:
        squeeze = xhat.ndim == 2
        if squeeze:
            xhat = xhat.reshape(1, *xhat.shape)
        u = self.conv(self.in_proj(xhat)).silu()
        delta, b_t, c_t = select_params(u, self.ssm)
        a_bar, b_bar = discretize(delta, self.ssm.a(), b_t)
        y = ssm_scan(a_bar, b_bar, u, c_t, self.ssm.d,
                     mode=self.scan_mode, chunk=self.scan_chunk)
        out = self.out_proj(y * self.gate_proj(xhat).silu())
        return out.reshape(*out.shape[1:]) if squeeze else out
