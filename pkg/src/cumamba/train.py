"""Training loop, evaluation, and the architecture-ablation harness."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig
from .data import ImageSample, build_dataset, sample_batch
from .losses import restoration_loss
from .metrics import psnr, ssim
from .optim import AdamW, CosineSchedule, cosine_lr
from .tensor import Tensor, no_grad
from .unet import CuMambaNet, count_params_flops


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, lr: float, grad_norm: float):
        super().__init__(
            f"non-finite loss at step {step} (lr={lr:.3e}, grad_norm={grad_norm:.3e})")
        self.step = step
        self.lr = lr
        self.grad_norm = grad_norm


def build_model(cfg: RunConfig, dtype=np.float32) -> CuMambaNet:
    rng = np.random.default_rng(cfg.train.seed)
    return CuMambaNet(cfg.model, rng, dtype)


def evaluate(net: CuMambaNet, samples: list[ImageSample]) -> dict[str, float]:
    """Mean PSNR/SSIM of restored vs clean, plus the degraded baseline."""
    ps, ss, base = [], [], []
    with no_grad():
        for s in samples:
            restored = net(Tensor(s.degraded[None].astype(net.dtype))).data[0]
            restored = np.clip(restored, 0.0, 1.0)
            ps.append(psnr(restored, s.clean))
            ss.append(ssim(restored, s.clean))
            base.append(psnr(s.degraded, s.clean))
    return {
        "psnr": float(np.mean(ps)),
        "ssim": float(np.mean(ss)),
        "psnr_degraded": float(np.mean(base)),
    }


def _snapshot(net: CuMambaNet, cfg: RunConfig, step: int, rng: np.random.Generator,
              opt: AdamW) -> Checkpoint:
    return Checkpoint(
        config=cfg.to_dict(),
        params=net.state(),
        step=step,
        rng_state=rng.bit_generator.state,
        optimizer=opt.state(),
    )


def train_loop(cfg: RunConfig, dataset: list[ImageSample] | None = None,
               out_dir=None, resume: Checkpoint | None = None,
               log=None) -> tuple[Checkpoint, list[dict]]:
    """Run cfg.train.steps optimizer steps; returns the final checkpoint and
    the metrics log rows. Deterministic given the config seed.

    ``resume`` continues a run: weights, optimizer moments, RNG state and the
    step counter are restored, so the tail of the run is identical to an
    uninterrupted one.
    """
    cfg.validate()
    if dataset is None:
        dataset = build_dataset(cfg.data, "train")
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    net = build_model(cfg)
    rng = np.random.default_rng(cfg.train.seed + 1)
    opt = AdamW(list(net.named_parameters()), beta1=cfg.train.beta1, beta2=cfg.train.beta2,
                weight_decay=cfg.train.weight_decay)
    schedule = CosineSchedule(cfg.train.lr_start, cfg.train.lr_end, max(cfg.train.steps, 1))
    start_step = 0
    if resume is not None:
        net.load_state(resume.params)
        if resume.optimizer is not None:
            opt.load_state(resume.optimizer)
        if resume.rng_state is not None:
            rng.bit_generator.state = resume.rng_state
        start_step = resume.step

    rows: list[dict] = []
    log_path = out_dir / "metrics.csv" if out_dir is not None else None
    if log_path is not None and start_step == 0 and log_path.exists():
        log_path.unlink()

    patch = cfg.model.patch_size
    for step in range(start_step, cfg.train.steps):
        degraded, clean = sample_batch(dataset, cfg.train.batch_size, rng,
                                       do_augment=cfg.train.augment)
        if degraded.shape[1:3] != patch:
            raise ValueError(f"dataset images {degraded.shape[1:3]} do not match patch {patch}")
        lr = cosine_lr(step, schedule)
        with np.errstate(over="ignore", invalid="ignore", under="ignore"):
            pred = net(Tensor(degraded))
            loss = restoration_loss(pred, Tensor(clean), cfg.loss)
            loss_value = loss.item()
            net.zero_grad()
            loss.backward()
            if cfg.train.clip_norm > 0:
                grad_norm = opt.clip_gradients(cfg.train.clip_norm)
                if not np.isfinite(grad_norm):
                    raise TrainingDiverged(step, lr, grad_norm)
            if not np.isfinite(loss_value):
                raise TrainingDiverged(step, lr, opt.grad_norm())
            opt.step(lr)

        if (step + 1) % cfg.train.log_interval == 0 or step + 1 == cfg.train.steps:
            out = np.clip(pred.data, 0.0, 1.0)
            row = {
                "step": step + 1,
                "lr": lr,
                "loss": loss_value,
                "psnr": psnr(out, clean),
                "ssim": ssim(out[0], clean[0]),
            }
            rows.append(row)
            if log is not None:
                log(row)
            if log_path is not None:
                _append_csv(log_path, row)
        if (out_dir is not None and cfg.train.checkpoint_interval > 0
                and (step + 1) % cfg.train.checkpoint_interval == 0
                and step + 1 < cfg.train.steps):
            save_checkpoint(_snapshot(net, cfg, step + 1, rng, opt),
                            out_dir / f"step-{step + 1:07d}.ckpt")

    final = _snapshot(net, cfg, cfg.train.steps, rng, opt)
    if out_dir is not None:
        save_checkpoint(final, out_dir / "final.ckpt")
    return final, rows


def _append_csv(path: Path, row: dict) -> None:
    new = not path.exists()
    with open(path, "a", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(row.keys()))
        if new:
            writer.writeheader()
        writer.writerow(row)


def restore_model(ckpt: Checkpoint) -> CuMambaNet:
    cfg = RunConfig.from_dict(ckpt.config)
    net = build_model(cfg)
    net.load_state(ckpt.params)
    return net


def load_model(path) -> tuple[CuMambaNet, RunConfig]:
    ckpt = load_checkpoint(path)
    cfg = RunConfig.from_dict(ckpt.config)
    net = build_model(cfg)
    net.load_state(ckpt.params)
    return net, cfg


ABLATION_VARIANTS = (
    ("resconv-baseline", False, False),
    ("spatial", True, False),
    ("channel", False, True),
    ("spatial+channel", True, True),
)


def ablation_harness(base_cfg: RunConfig, seeds=(0, 1, 2), log=None) -> list[dict]:
    """Train the four architecture variants under identical seeds/budget/data
    and report parameter counts plus seed-mean restoration metrics."""
    if len(seeds) < 3:
        raise ValueError("ablation needs at least 3 seeds")
    results = []
    for name, use_spatial, use_channel in ABLATION_VARIANTS:
        import copy

        cfg = copy.deepcopy(base_cfg)
        cfg.model.use_spatial_ssm = use_spatial
        cfg.model.use_channel_ssm = use_channel
        cfg.validate()
        params, _ = count_params_flops(cfg.model)
        psnrs, ssims = [], []
        for seed in seeds:
            run = copy.deepcopy(cfg)
            run.train.seed = int(seed)
            final, _ = train_loop(run)
            net = restore_model(final)
            test = build_dataset(run.data, "test")
            metrics = evaluate(net, test)
            psnrs.append(metrics["psnr"])
            ssims.append(metrics["ssim"])
            if log is not None:
                log({"variant": name, "seed": seed, **metrics})
        results.append({
            "variant": name,
            "params": params,
            "psnr_mean": float(np.mean(psnrs)),
            "psnr_spread": float(np.max(psnrs) - np.min(psnrs)),
            "ssim_mean": float(np.mean(ssims)),
            "psnr_per_seed": psnrs,
        })
    return results


def format_ablation_table(rows: list[dict]) -> str:
    lines = [f"{'variant':<20} {'params':>10} {'PSNR (mean+/-spread)':>24} {'SSIM':>8}"]
    for r in rows:
        lines.append(
            f"{r['variant']:<20} {r['params']:>10,} "
            f"{r['psnr_mean']:>16.2f} +/- {r['psnr_spread']:<5.2f} {r['ssim_mean']:>8.4f}")
    return "\n".join(lines)
