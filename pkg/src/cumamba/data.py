"""Synthetic restoration data: procedural clean images, degradations, and the
flip/rotate augmentation group.

Everything is driven by explicit numpy Generators so a (spec, seed) pair
always produces the same pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DataConfig


@dataclass
class ImageSample:
    degraded: np.ndarray  # (H, W, 3) float32 in [0, 1]
    clean: np.ndarray
    tag: str
    seed: int


def random_clean_image(rng: np.random.Generator, size: int) -> np.ndarray:
    """Piecewise-smooth color image: ramps, soft shapes, and mild texture."""
    yy, xx = np.meshgrid(np.linspace(0, 1, size), np.linspace(0, 1, size), indexing="ij")
    img = np.empty((size, size, 3), dtype=np.float64)
    for c in range(3):
        gx, gy = rng.uniform(-0.5, 0.5, size=2)
        img[:, :, c] = 0.5 + gx * (xx - 0.5) + gy * (yy - 0.5)
    for _ in range(rng.integers(3, 7)):
        cy, cx = rng.uniform(0.1, 0.9, size=2)
        ry, rx = rng.uniform(0.05, 0.35, size=2)
        soft = rng.uniform(20, 120)
        dist = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2
        mask = 1.0 / (1.0 + np.exp(np.clip(soft * (dist - 1.0), -40, 40)))
        color = rng.uniform(0.05, 0.95, size=3)
        img = img * (1 - mask[:, :, None]) + color * mask[:, :, None]
    fy, fx = rng.uniform(2, 8, size=2)
    phase = rng.uniform(0, 2 * np.pi)
    texture = 0.03 * np.sin(2 * np.pi * (fy * yy + fx * xx) + phase)
    img += texture[:, :, None]
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def motion_blur_kernel(length: int, angle_deg: float) -> np.ndarray:
    """Normalized linear motion kernel; length 1 degenerates to the identity."""
    if length < 1:
        raise ValueError("blur length must be >= 1")
    if length == 1:
        return np.ones((1, 1), dtype=np.float64)
    size = length if length % 2 else length + 1
    k = np.zeros((size, size), dtype=np.float64)
    center = (size - 1) / 2.0
    theta = np.deg2rad(angle_deg)
    dy, dx = np.sin(theta), np.cos(theta)
    # Bilinear splat of points along the segment.
    for t in np.linspace(-(length - 1) / 2.0, (length - 1) / 2.0, 4 * length):
        y, x = center + t * dy, center + t * dx
        y0, x0 = int(np.floor(y)), int(np.floor(x))
        fy, fx = y - y0, x - x0
        for oy, wy in ((0, 1 - fy), (1, fy)):
            for ox, wx in ((0, 1 - fx), (1, fx)):
                if 0 <= y0 + oy < size and 0 <= x0 + ox < size:
                    k[y0 + oy, x0 + ox] += wy * wx
    return k / k.sum()


def _convolve_same(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    kh, kw = kernel.shape
    py, px = kh // 2, kw // 2
    padded = np.pad(img, ((py, kh - 1 - py), (px, kw - 1 - px), (0, 0)), mode="reflect")
    from numpy.lib.stride_tricks import sliding_window_view
    windows = sliding_window_view(padded, (kh, kw), axis=(0, 1))
    return np.einsum("hwcij,ij->hwc", windows, kernel)


def synthesize_pair(clean: np.ndarray, spec: tuple, seed: int) -> ImageSample:
    """Degrade a clean image; spec is ('gaussian', sigma) or
    ('motion_blur', length, angle_deg)."""
    rng = np.random.default_rng(seed)
    kind = spec[0]
    if kind == "gaussian":
        sigma = float(spec[1])
        if not 0 <= sigma <= 1:
            raise ValueError(f"gaussian sigma {sigma} outside [0, 1]")
        noisy = clean.astype(np.float64) + sigma * rng.standard_normal(clean.shape)
        degraded = np.clip(noisy, 0.0, 1.0).astype(np.float32)
        tag = f"gaussian-{sigma:.4f}"
    elif kind == "motion_blur":
        length = int(spec[1])
        angle = float(spec[2]) if len(spec) > 2 else 0.0
        if not 1 <= length <= 31:
            raise ValueError(f"blur length {length} outside [1, 31]")
        blurred = _convolve_same(clean.astype(np.float64), motion_blur_kernel(length, angle))
        degraded = np.clip(blurred, 0.0, 1.0).astype(np.float32)
        tag = f"motion-blur-{length}px"
    else:
        raise ValueError(f"unsupported degradation spec '{kind}'")
    return ImageSample(degraded=degraded, clean=clean.astype(np.float32), tag=tag, seed=seed)


def augment(degraded: np.ndarray, clean: np.ndarray, rng: np.random.Generator,
            rotate: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Apply one random flip/rotation element to both images identically."""
    if rotate and degraded.shape[0] != degraded.shape[1]:
        raise ValueError(f"rotation needs square patches, got {degraded.shape[:2]}")
    flip = bool(rng.integers(2))
    k = int(rng.integers(4)) if rotate else 0
    out = []
    for img in (degraded, clean):
        if flip:
            img = img[:, ::-1]
        if k:
            img = np.rot90(img, k, axes=(0, 1))
        out.append(np.ascontiguousarray(img))
    return out[0], out[1]


def build_dataset(cfg: DataConfig, split: str = "train") -> list[ImageSample]:
    """Deterministic list of degraded/clean pairs for one split."""
    cfg.validate()
    n = cfg.n_train if split == "train" else cfg.n_test
    base = cfg.seed if split == "train" else cfg.seed + 1_000_003
    if cfg.kind == "gaussian":
        spec = ("gaussian", cfg.sigma)
    else:
        spec = ("motion_blur", cfg.blur_length, cfg.blur_angle)
    samples = []
    for i in range(n):
        rng = np.random.default_rng(base + 2 * i)
        clean = random_clean_image(rng, cfg.image_size)
        samples.append(synthesize_pair(clean, spec, seed=base + 2 * i + 1))
    return samples


def sample_batch(samples: list[ImageSample], batch_size: int, rng: np.random.Generator,
                 do_augment: bool = True) -> tuple[np.ndarray, np.ndarray]:
    idx = rng.integers(len(samples), size=batch_size)
    degraded, clean = [], []
    for i in idx:
        d, c = samples[i].degraded, samples[i].clean
        if do_augment:
            d, c = augment(d, c, rng)
        degraded.append(d)
        clean.append(c)
    return np.stack(degraded), np.stack(clean)
