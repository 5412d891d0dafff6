"""Single-file checkpoint format.

Little-endian throughout: magic, version, step, JSON config blob, JSON RNG
state blob, then length-prefixed (name, dtype, shape, raw data) records for
parameters, followed by optimizer moment records. Self-describing enough to
inspect with describe().
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"CUMB"
VERSION = 1

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


class CheckpointError(IOError):
    pass


@dataclass
class Checkpoint:
    config: dict
    params: dict[str, np.ndarray]
    step: int = 0
    rng_state: dict | None = None
    optimizer: dict | None = None  # {"step": int, "m": {...}, "v": {...}}
    extra: dict = field(default_factory=dict)


def _write_blob(f, payload: bytes) -> None:
    f.write(struct.pack("<I", len(payload)))
    f.write(payload)


def _read_blob(f) -> bytes:
    raw = f.read(4)
    if len(raw) != 4:
        raise CheckpointError("truncated checkpoint: missing length prefix")
    (n,) = struct.unpack("<I", raw)
    payload = f.read(n)
    if len(payload) != n:
        raise CheckpointError("truncated checkpoint: short blob")
    return payload


def _write_array(f, name: str, arr: np.ndarray) -> None:
    code = _DTYPE_CODES.get(np.dtype(arr.dtype))
    if code is None:
        raise CheckpointError(f"unsupported dtype {arr.dtype} for '{name}'")
    nm = name.encode("utf-8")
    f.write(struct.pack("<H", len(nm)))
    f.write(nm)
    f.write(struct.pack("<BB", code, arr.ndim))
    for d in arr.shape:
        f.write(struct.pack("<I", d))
    f.write(np.ascontiguousarray(arr).astype(_DTYPES[code]).tobytes())


def _read_array(f) -> tuple[str, np.ndarray]:
    raw = f.read(2)
    if len(raw) != 2:
        raise CheckpointError("truncated checkpoint: missing record header")
    (nlen,) = struct.unpack("<H", raw)
    name = f.read(nlen).decode("utf-8")
    code, ndim = struct.unpack("<BB", f.read(2))
    if code not in _DTYPES:
        raise CheckpointError(f"unknown dtype code {code} in record '{name}'")
    shape = tuple(struct.unpack("<I", f.read(4))[0] for _ in range(ndim))
    count = int(np.prod(shape)) if shape else 1
    raw = f.read(count * _DTYPES[code].itemsize)
    if len(raw) != count * _DTYPES[code].itemsize:
        raise CheckpointError(f"truncated checkpoint: short data for '{name}'")
    return name, np.frombuffer(raw, dtype=_DTYPES[code]).reshape(shape).copy()


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        flags = 1 if ckpt.optimizer is not None else 0
        f.write(struct.pack("<IIQ", VERSION, flags, ckpt.step))
        _write_blob(f, json.dumps(ckpt.config, sort_keys=True).encode("utf-8"))
        _write_blob(f, json.dumps(ckpt.rng_state).encode("utf-8"))
        f.write(struct.pack("<I", len(ckpt.params)))
        for name, arr in ckpt.params.items():
            _write_array(f, name, arr)
        if ckpt.optimizer is not None:
            f.write(struct.pack("<Q", int(ckpt.optimizer["step"])))
            moments = list(ckpt.optimizer["m"].items()) + [
                (k + ".__v__", v) for k, v in ckpt.optimizer["v"].items()]
            f.write(struct.pack("<I", len(moments)))
            for name, arr in moments:
                _write_array(f, name, arr)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
        version, flags, step = struct.unpack("<IIQ", f.read(16))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        config = json.loads(_read_blob(f).decode("utf-8"))
        rng_state = json.loads(_read_blob(f).decode("utf-8"))
        (n_params,) = struct.unpack("<I", f.read(4))
        params = {}
        for _ in range(n_params):
            name, arr = _read_array(f)
            params[name] = arr
        optimizer = None
        if flags & 1:
            (opt_step,) = struct.unpack("<Q", f.read(8))
            (n_moments,) = struct.unpack("<I", f.read(4))
            m, v = {}, {}
            for _ in range(n_moments):
                name, arr = _read_array(f)
                if name.endswith(".__v__"):
                    v[name[:-len(".__v__")]] = arr
                else:
                    m[name] = arr
            optimizer = {"step": opt_step, "m": m, "v": v}
        return Checkpoint(config=config, params=params, step=int(step),
                          rng_state=rng_state, optimizer=optimizer)


def describe(path) -> str:
    """Human-readable dump of a checkpoint's header and tensor table."""
    ckpt = load_checkpoint(path)
    lines = [
        f"checkpoint v{VERSION}  step={ckpt.step}  params={len(ckpt.params)}"
        f"  optimizer={'yes' if ckpt.optimizer else 'no'}",
    ]
    for name, arr in ckpt.params.items():
        lines.append(f"  {name:60s} {str(arr.dtype):8s} {arr.shape}")
    return "\n".join(lines)
