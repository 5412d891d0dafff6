"""Central finite-difference gradient verification.

Used by the test suite and the `gradcheck` CLI subcommand. Checks run in
double precision with step 1e-5; large tensors are probed at a deterministic
random sample of components so whole networks stay tractable.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray,
                   scale_hint: float = 0.0) -> float:
    """max|a-n| scaled by the larger magnitude, floored so zero grads compare absolutely.

    ``scale_hint`` lets callers normalize by the full tensor's gradient scale
    when only a sample of components was probed.
    """
    diff = np.max(np.abs(analytic - numeric))
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), scale_hint, 1e-6)
    return float(diff / scale)


def check_gradients(
    f: Callable[[], Tensor],
    params: Sequence[tuple[str, Tensor]],
    step: float = 1e-5,
    max_components: int | None = None,
    rng: np.random.Generator | None = None,
) -> dict[str, float]:
    """Compare backward() grads of the scalar f() against central differences.

    Returns {param_name: relative_error}. ``max_components`` caps the probed
    components per tensor (all components when None).
    """
    params = list(params)
    for _, p in params:
        p.zero_grad()
    out = f()
    out.backward()
    analytic = {}
    for name, p in params:
        if p.grad is None:
            analytic[name] = np.zeros_like(p.data)
        else:
            analytic[name] = p.grad.copy()

    if rng is None:
        rng = np.random.default_rng(0)

    errors: dict[str, float] = {}
    for name, p in params:
        n = p.size
        if max_components is not None and n > max_components:
            idx = rng.choice(n, size=max_components, replace=False)
        else:
            idx = np.arange(n)
        numeric = np.empty(len(idx), dtype=np.float64)
        for k, i in enumerate(idx):
            loc = np.unravel_index(i, p.shape)
            keep = p.data[loc]
            p.data[loc] = keep + step
            with no_grad():
                hi = f().item()
            p.data[loc] = keep - step
            with no_grad():
                lo = f().item()
            p.data[loc] = keep
            numeric[k] = (hi - lo) / (2.0 * step)
        errors[name] = relative_error(analytic[name].reshape(-1)[idx], numeric,
                                      scale_hint=float(np.max(np.abs(analytic[name]))))
    return errors


def max_gradient_error(
    f: Callable[[], Tensor],
    params: Sequence[tuple[str, Tensor]],
    step: float = 1e-5,
    max_components: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    errs = check_gradients(f, params, step=step, max_components=max_components, rng=rng)
    return max(errs.values()) if errs else 0.0
