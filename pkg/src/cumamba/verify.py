"""The finite-difference verification suite behind `cumamba gradcheck`.

Builds small double-precision instances of every primitive, the gated scan
block, both restoration blocks, a tiny full network, and the training loss,
and compares backward() against central differences.
"""

from __future__ import annotations

import numpy as np

from .blocks import ChannelSsmBlock, CuMambaBlock, SpatialSsmBlock
from .config import CuMambaConfig, RunConfig, TrainConfig, DataConfig
from .conv import causal_conv1d, conv2d
from .gradcheck import check_gradients
from .losses import LossConfig, restoration_loss
from .nn import Parameter
from .ssm import SelectiveSSM, discretize, select_params, ssm_scan, SsmParams
from .tensor import Tensor, layer_norm
from .unet import CuMambaNet


def _t(rng, shape, scale=1.0):
    return Tensor(scale * rng.standard_normal(shape), requires_grad=True, dtype=np.float64)


def _named(**tensors):
    return list(tensors.items())


def _randomize(module, rng, scale=0.4):
    """Move every parameter to a generic point so no gradient path is
    vanishingly small (default init leaves some paths near-degenerate, which
    drowns central differences in roundoff)."""
    for _, p in module.named_parameters():
        p.data = p.data + scale * rng.standard_normal(p.shape)


def _probe(rng, shape):
    """Fixed random projection; keeps the scalar small and well conditioned."""
    r = Tensor(rng.choice([-1.0, 1.0], size=shape), dtype=np.float64)
    return lambda y: (y * r).sum()


def gradient_suite(seed: int = 0, max_components: int = 24):
    """Yield (check_name, max_relative_error) pairs, double precision."""
    rng = np.random.default_rng(seed)
    f64 = np.float64

    # Elementwise and matmul primitives.
    a = _t(rng, (3, 4))
    b = _t(rng, (3, 4))
    yield "elementwise add/mul/sub", max(check_gradients(
        lambda: ((a + b) * (a - b) + a * b).sum(), _named(a=a, b=b)).values())

    x = _t(rng, (3, 4), 0.7)
    yield "exp/softplus/silu/leaky_relu", max(check_gradients(
        lambda: (x.exp().softplus() + x.silu() + x.leaky_relu(0.01)).sum(),
        _named(x=x)).values())

    m1 = _t(rng, (3, 4))
    m2 = _t(rng, (4, 2))
    yield "matmul 3x4 by 4x2", max(check_gradients(
        lambda: (m1 @ m2).sum() + ((m1 @ m2) * (m1 @ m2)).sum(), _named(a=m1, b=m2)).values())

    xb = _t(rng, (2, 5, 4))
    wb = _t(rng, (4, 3))
    yield "batched matmul", max(check_gradients(
        lambda: ((xb @ wb) * (xb @ wb)).sum(), _named(x=xb, w=wb)).values())

    # Layout ops.
    p = _t(rng, (2, 3, 4))
    yield "reshape/permute", max(check_gradients(
        lambda: (p.permute(2, 0, 1).reshape(4, 6) * p.permute(2, 0, 1).reshape(4, 6)).sum(),
        _named(p=p)).values())

    # Normalization.
    ln_x = _t(rng, (2, 5, 6))
    ln_g = Parameter(rng.standard_normal(6), dtype=f64)
    ln_b = Parameter(rng.standard_normal(6), dtype=f64)
    yield "layer_norm", max(check_gradients(
        lambda: (layer_norm(ln_x, ln_g, ln_b) * layer_norm(ln_x, ln_g, ln_b)).sum(),
        _named(x=ln_x, gamma=ln_g, beta=ln_b)).values())

    # Convolutions.
    for kind, cin, cout, hw in (("pointwise1x1", 3, 5, 4), ("plain3x3", 2, 3, 4),
                                ("depthwise3x3", 3, 3, 4), ("strided2x2", 2, 4, 4),
                                ("transposed2x2", 4, 2, 4)):
        shaped = {
            "pointwise1x1": (cout, cin, 1, 1),
            "plain3x3": (cout, cin, 3, 3),
            "depthwise3x3": (cin, 1, 3, 3),
            "strided2x2": (cout, cin, 2, 2),
            "transposed2x2": (cin, cout, 2, 2),
        }[kind]
        cx = _t(rng, (2, cin, hw, hw))
        cw = _t(rng, shaped, 0.5)
        cb = _t(rng, (cout,), 0.2)
        yield f"conv2d {kind}", max(check_gradients(
            lambda: (conv2d(cx, cw, cb, kind) * conv2d(cx, cw, cb, kind)).sum(),
            _named(x=cx, w=cw, b=cb)).values())

    c1x = _t(rng, (2, 6, 3))
    c1w = _t(rng, (3, 4), 0.5)
    c1b = _t(rng, (3,), 0.2)
    yield "causal_conv1d", max(check_gradients(
        lambda: (causal_conv1d(c1x, c1w, c1b) * causal_conv1d(c1x, c1w, c1b)).sum(),
        _named(x=c1x, w=c1w, b=c1b)).values())

    # Scan primitive, both execution modes.
    L, C, N = 9, 3, 4
    sa = Tensor(np.exp(-rng.uniform(0.05, 1.5, (L, C, N))), requires_grad=True, dtype=f64)
    sb = _t(rng, (L, C, N), 0.5)
    sx = _t(rng, (L, C))
    sc = _t(rng, (L, N), 0.5)
    sd = _t(rng, (C,), 0.5)
    for mode in ("sequential", "parallel"):
        yield f"ssm_scan {mode}", max(check_gradients(
            lambda m=mode: (ssm_scan(sa, sb, sx, sc, sd, mode=m, chunk=4)
                            * ssm_scan(sa, sb, sx, sc, sd, mode=m, chunk=4)).sum(),
            _named(a_bar=sa, b_bar=sb, x=sx, c_t=sc, d=sd)).values())

    # Parameter selection + discretization through softplus.
    sel = SsmParams(4, 3, 2, rng, dtype=f64)
    sel_x = _t(rng, (6, 4))

    def sel_loss():
        delta, b_t, c_t = select_params(sel_x, sel)
        a_bar, b_bar = discretize(delta, sel.a(), b_t)
        return (a_bar * a_bar).sum() + (b_bar * c_t.reshape(6, 1, 2)).sum()

    yield "select_params + discretize", max(check_gradients(
        sel_loss, [("x", sel_x)] + list(sel.named_parameters())).values())

    # Full gated block.
    blk = SelectiveSSM(4, rng, state_size=3, expansion=2, conv_width=4, dtype=f64)
    _randomize(blk, rng)
    blk_x = _t(rng, (7, 4))
    blk_p = _probe(rng, (7, 4))
    yield "selective_ssm_block", max(check_gradients(
        lambda: blk_p(blk(blk_x)),
        [("x", blk_x)] + list(blk.named_parameters()), max_components=max_components).values())

    # Both restoration blocks and their composition.
    sp = SpatialSsmBlock(3, rng, state_size=2, dtype=f64)
    _randomize(sp, rng)
    sp_x = _t(rng, (1, 4, 4, 3))
    sp_p = _probe(rng, (1, 4, 4, 3))
    yield "spatial block", max(check_gradients(
        lambda: sp_p(sp(sp_x)),
        [("x", sp_x)] + list(sp.named_parameters()), max_components=max_components).values())

    ch = ChannelSsmBlock(3, (4, 4), rng, state_size=2, dtype=f64)
    _randomize(ch, rng)
    ch_x = _t(rng, (1, 4, 4, 3))
    ch_p = _probe(rng, (1, 4, 4, 3))
    yield "channel block", max(check_gradients(
        lambda: ch_p(ch(ch_x)),
        [("x", ch_x)] + list(ch.named_parameters()), max_components=max_components).values())

    both = CuMambaBlock(3, (4, 4), rng, state_size=2, dtype=f64)
    _randomize(both, rng)
    both_x = _t(rng, (1, 4, 4, 3))
    both_p = _probe(rng, (1, 4, 4, 3))
    yield "combined block", max(check_gradients(
        lambda: both_p(both(both_x)),
        [("x", both_x)] + list(both.named_parameters()), max_components=max_components).values())

    # Tiny full network with the training loss on top.
    cfg = CuMambaConfig(levels=2, blocks_per_level=(1, 1), base_width=4, state_size=2,
                        expansion=2, patch_size=(8, 8), scan_chunk=16)
    net = CuMambaNet(cfg, rng, dtype=f64)
    _randomize(net, rng, scale=0.25)
    img = Tensor(rng.uniform(0.1, 0.9, (1, 8, 8, 3)), requires_grad=True, dtype=f64)
    target = Tensor(rng.uniform(0.1, 0.9, (1, 8, 8, 3)), dtype=f64)
    loss_cfg = LossConfig()

    def unet_loss():
        return restoration_loss(net(img), target, loss_cfg)

    yield "toy network + training loss", max(check_gradients(
        unet_loss, [("input", img)] + list(net.named_parameters()),
        max_components=8, rng=np.random.default_rng(seed + 1)).values())

    # Loss terms alone.
    lp = Tensor(rng.uniform(0.2, 0.8, (1, 8, 8, 3)), requires_grad=True, dtype=f64)
    lt = Tensor(rng.uniform(0.2, 0.8, (1, 8, 8, 3)), dtype=f64)
    yield "restoration loss", max(check_gradients(
        lambda: restoration_loss(lp, lt, loss_cfg), _named(pred=lp)).values())
