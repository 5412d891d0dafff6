"""Configuration dataclasses and the flat key=value config-file format.

File keys are dotted: ``model.base_width=8``, ``loss.fourier_weight=0.1``,
``train.steps=5000``, ``data.sigma=0.098``. Unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

from .losses import LossConfig


@dataclass
class CuMambaConfig:
    levels: int = 4
    blocks_per_level: tuple[int, ...] = (1, 1, 1, 1)
    base_width: int = 32
    state_size: int = 16
    expansion: int = 2
    patch_size: tuple[int, int] = (64, 64)
    conv_width: int = 4
    scan_chunk: int = 64
    use_spatial_ssm: bool = True
    use_channel_ssm: bool = True
    leaky_slope: float = 0.01

    def validate(self) -> "CuMambaConfig":
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if len(self.blocks_per_level) != self.levels:
            raise ValueError(f"blocks_per_level has {len(self.blocks_per_level)} entries for {self.levels} levels")
        if any(n < 1 for n in self.blocks_per_level):
            raise ValueError("every level needs at least one block")
        h, w = self.patch_size
        div = 1 << self.levels
        if h % div or w % div:
            raise ValueError(f"patch {h}x{w} must be divisible by 2^levels = {div}")
        if self.base_width < 1 or self.state_size < 1 or self.expansion < 1:
            raise ValueError("base_width, state_size and expansion must be >= 1")
        if self.scan_chunk < 1:
            raise ValueError("scan_chunk must be >= 1")
        return self

    def variant_name(self) -> str:
        if self.use_spatial_ssm and self.use_channel_ssm:
            return "spatial+channel"
        if self.use_spatial_ssm:
            return "spatial"
        if self.use_channel_ssm:
            return "channel"
        return "resconv-baseline"


@dataclass
class TrainConfig:
    steps: int = 5000
    batch_size: int = 4
    lr_start: float = 5e-5
    lr_end: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-4
    clip_norm: float = 0.0  # 0 disables clipping
    log_interval: int = 100
    checkpoint_interval: int = 0  # 0 disables periodic checkpoints
    seed: int = 0
    augment: bool = True

    def validate(self) -> "TrainConfig":
        if self.steps < 0 or self.batch_size < 1:
            raise ValueError("steps must be >= 0 and batch_size >= 1")
        if self.lr_start <= 0 or self.lr_end <= 0:
            raise ValueError("learning rates must be positive")
        if self.clip_norm < 0 or self.weight_decay < 0:
            raise ValueError("clip_norm and weight_decay must be >= 0")
        return self


@dataclass
class DataConfig:
    kind: str = "gaussian"      # gaussian | motion_blur
    sigma: float = 25.0 / 255.0
    blur_length: int = 9
    blur_angle: float = 0.0
    image_size: int = 64
    n_train: int = 64
    n_test: int = 8
    seed: int = 1234

    def validate(self) -> "DataConfig":
        if self.kind not in ("gaussian", "motion_blur"):
            raise ValueError(f"unsupported degradation kind '{self.kind}'")
        if not 0 <= self.sigma <= 1:
            raise ValueError("sigma must lie in [0, 1]")
        if self.n_train < 1 or self.n_test < 0 or self.image_size < 1:
            raise ValueError("dataset sizes must be positive")
        return self


@dataclass
class RunConfig:
    model: CuMambaConfig = field(default_factory=CuMambaConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def validate(self) -> "RunConfig":
        self.model.validate()
        self.loss.validate()
        self.train.validate()
        self.data.validate()
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"]["blocks_per_level"] = list(self.model.blocks_per_level)
        d["model"]["patch_size"] = list(self.model.patch_size)
        return d

    @staticmethod
    def from_dict(d: dict) -> "RunConfig":
        model = CuMambaConfig(**d.get("model", {}))
        model.blocks_per_level = tuple(model.blocks_per_level)
        model.patch_size = tuple(model.patch_size)
        return RunConfig(
            model=model,
            loss=LossConfig(**d.get("loss", {})),
            train=TrainConfig(**d.get("train", {})),
            data=DataConfig(**d.get("data", {})),
        ).validate()


class ConfigError(ValueError):
    pass


def _coerce(raw: str, target_type, key: str):
    raw = raw.strip()
    if target_type is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"key '{key}': expected a boolean, got '{raw}'")
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    if target_type is str:
        return raw
    # tuple-of-int fields, comma separated
    parts = [p for p in raw.replace("(", "").replace(")", "").split(",") if p.strip()]
    return tuple(int(p) for p in parts)


def parse_config_text(text: str) -> RunConfig:
    cfg = RunConfig()
    sections = {"model": cfg.model, "loss": cfg.loss, "train": cfg.train, "data": cfg.data}
    field_types = {
        name: {f.name: f.type for f in fields(type(obj))} for name, obj in sections.items()
    }
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got '{line}'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if "." not in key:
            raise ConfigError(f"line {lineno}: key '{key}' must be '<section>.<field>'")
        section, name = key.split(".", 1)
        if section not in sections:
            raise ConfigError(f"line {lineno}: unknown section '{section}'")
        obj = sections[section]
        if name not in field_types[section]:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        ftype = type(getattr(obj, name))
        setattr(obj, name, _coerce(raw, ftype, key))
    return cfg.validate()


def parse_config_file(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config_text(f.read())


def format_config(cfg: RunConfig) -> str:
    lines = []
    for section, obj in (("model", cfg.model), ("loss", cfg.loss), ("train", cfg.train), ("data", cfg.data)):
        for f in fields(type(obj)):
            value = getattr(obj, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{section}.{f.name}={value}")
    return "\n".join(lines) + "\n"
