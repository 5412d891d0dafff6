"""AdamW with decoupled decay and the cosine learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Parameter

try:
    import numba

    # One pass over the flat arrays. Elementwise with a fixed instruction
    # sequence and no cross-element reductions, so results are deterministic
    # run to run regardless of the thread split; the fastmath flags permit
    # fused/approximate sqrt+div, not reassociation. The parallel variant is
    # only worth its thread wake-up for large tensors.

    def _adamw_body(prange):
        def body(p, g, m, v, beta1, beta2, eps, lr_m, inv_sqrt_bc2, decay_mul):
            one = beta1 - beta1 + 1.0
            for i in prange(p.size):
                gi = g[i]
                mi = beta1 * m[i] + (one - beta1) * gi
                vi = beta2 * v[i] + (one - beta2) * gi * gi
                m[i] = mi
                v[i] = vi
                p[i] = decay_mul * p[i] - lr_m * (mi / (np.sqrt(vi) * inv_sqrt_bc2 + eps))
        return body

    _flags = {"nsz", "arcp", "contract", "afn"}
    _adamw_serial = numba.njit(cache=True, fastmath=_flags)(_adamw_body(range))
    _adamw_parallel = numba.njit(cache=True, parallel=True, fastmath=_flags)(_adamw_body(numba.prange))
    _PARALLEL_CUTOFF = 1 << 18

    def _fused_adamw(p, g, m, v, *scalars):
        kern = _adamw_parallel if p.size >= _PARALLEL_CUTOFF else _adamw_serial
        kern(p, g, m, v, *scalars)
except ImportError:  # pragma: no cover
    _fused_adamw = None


@dataclass
class CosineSchedule:
    lr_start: float = 5e-5
    lr_end: float = 1e-6
    total_steps: int = 5000


def cosine_lr(step: int, schedule: CosineSchedule) -> float:
    """Anneal from lr_start at step 0 down to lr_end at total_steps."""
    if step < 0 or step > schedule.total_steps:
        raise ValueError(f"step {step} outside [0, {schedule.total_steps}]")
    span = schedule.lr_start - schedule.lr_end
    # Plain float: a numpy scalar here would promote float32 params to
    # float64 in every downstream update.
    return float(schedule.lr_end + 0.5 * span * (1.0 + np.cos(np.pi * step / schedule.total_steps)))


class AdamW:
    """Decoupled weight decay; decay is skipped for params flagged decay=False
    (biases, norm gains, scan coefficients)."""

    def __init__(self, params: list[tuple[str, Parameter]], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 1e-4):
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params}
        # Reused per-parameter work buffer; avoids re-faulting fresh pages
        # on every step for the large tensors.
        self._scratch = {name: np.empty_like(p.data) for name, p in self.params}

    def grad_norm(self) -> float:
        total = 0.0
        for _, p in self.params:
            if p.grad is not None:
                flat = p.grad.reshape(-1)
                total += float(flat @ flat)
        return float(np.sqrt(total))

    def clip_gradients(self, max_norm: float) -> float:
        norm = self.grad_norm()
        if max_norm > 0 and norm > max_norm:
            scale = max_norm / (norm + 1e-12)
            for _, p in self.params:
                if p.grad is not None:
                    p.grad *= scale
        return norm

    def step(self, lr: float) -> None:
        """One decoupled-decay update. The decay applies as p *= (1 - lr*wd)
        before the moment step; all arithmetic stays in the parameter dtype.
        Parameters are leaves and the tape of the finished step is spent, so
        in-place updates are safe here."""
        self.step_count += 1
        t = self.step_count
        inv_bc1 = 1.0 / (1.0 - self.beta1 ** t)
        inv_sqrt_bc2 = 1.0 / np.sqrt(1.0 - self.beta2 ** t)
        for name, p in self.params:
            if p.grad is None:
                raise RuntimeError(f"parameter '{name}' has no gradient; run backward() first")
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            decay_mul = 1.0 - lr * self.weight_decay if (self.weight_decay > 0 and p.decay) else 1.0
            if _fused_adamw is not None:
                # Scalars in the array dtype keep the kernel in vectorized
                # single-precision math for float32 parameters.
                dt = p.data.dtype.type
                _fused_adamw(p.data.reshape(-1), np.ascontiguousarray(g).reshape(-1),
                             m.reshape(-1), v.reshape(-1), dt(self.beta1), dt(self.beta2),
                             dt(self.eps), dt(lr * inv_bc1), dt(inv_sqrt_bc2), dt(decay_mul))
                continue
            w = self._scratch[name]
            m *= self.beta1
            np.multiply(g, 1.0 - self.beta1, out=w)
            m += w
            v *= self.beta2
            np.multiply(g, g, out=w)
            w *= 1.0 - self.beta2
            v += w
            np.sqrt(v, out=w)
            w *= inv_sqrt_bc2
            w += self.eps
            np.divide(m, w, out=w)
            w *= lr * inv_bc1
            if decay_mul != 1.0:
                p.data *= decay_mul
            p.data -= w

    def state(self) -> dict:
        return {
            "step": self.step_count,
            "m": {k: a.copy() for k, a in self.m.items()},
            "v": {k: a.copy() for k, a in self.v.items()},
        }

    def load_state(self, state: dict) -> None:
        self.step_count = int(state["step"])
        for k in self.m:
            if k not in state["m"]:
                raise KeyError(f"optimizer state missing moments for '{k}'")
            self.m[k] = state["m"][k].copy()
            self.v[k] = state["v"][k].copy()
