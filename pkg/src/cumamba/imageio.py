"""Image I/O: binary PPM (P6) read/write by hand, PNG via Pillow.

Decoding maps 8-bit values to [0, 1] by v/255; encoding rounds v*255 after
clamping, so a round trip moves any value by at most 1/510.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


class ImageFormatError(IOError):
    pass


def encode_u8(img: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def decode_u8(raw: np.ndarray) -> np.ndarray:
    return raw.astype(np.float32) / 255.0


def _read_ppm(path: Path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    # Header: magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments allowed; pixel data starts after the single whitespace
    # byte following maxval.
    pos = 0
    tokens = []
    while len(tokens) < 4:
        if pos >= len(data):
            raise ImageFormatError(f"{path}: truncated PPM header")
        ch = data[pos:pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos:pos + 1].isspace():
                pos += 1
            tokens.append(data[start:pos])
    if tokens[0] != b"P6":
        raise ImageFormatError(f"{path}: unsupported PPM magic {tokens[0]!r} (only binary P6)")
    width, height, maxval = (int(t) for t in tokens[1:4])
    if maxval != 255:
        raise ImageFormatError(f"{path}: only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace after maxval
    need = width * height * 3
    pixels = data[pos:pos + need]
    if len(pixels) != need:
        raise ImageFormatError(f"{path}: truncated PPM pixel data ({len(pixels)}/{need} bytes)")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, 3)


def _write_ppm(path: Path, raw: np.ndarray) -> None:
    h, w = raw.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(raw.tobytes())


def read_image(path) -> np.ndarray:
    """Load an 8-bit RGB image as (H, W, 3) float32 in [0, 1]."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".ppm":
        raw = _read_ppm(path)
    elif suffix == ".png":
        from PIL import Image
        with Image.open(path) as im:
            raw = np.asarray(im.convert("RGB"), dtype=np.uint8)
    else:
        raise ImageFormatError(f"{path}: unsupported format '{suffix}' (use .ppm or .png)")
    return decode_u8(raw)


def write_image(path, img: np.ndarray) -> None:
    """Save an (H, W, 3) float image in [0, 1] as PPM or PNG."""
    path = Path(path)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got {img.shape}")
    raw = encode_u8(img)
    suffix = path.suffix.lower()
    if suffix == ".ppm":
        _write_ppm(path, raw)
    elif suffix == ".png":
        from PIL import Image
        Image.fromarray(raw, mode="RGB").save(path)
    else:
        raise ImageFormatError(f"{path}: unsupported format '{suffix}' (use .ppm or .png)")
