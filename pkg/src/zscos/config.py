"""Run configuration: ``key = value`` text files with ``#`` comments."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError
from .model import ModelConfig

PROFILES = {
    # (epochs, warm-up epochs) per loss profile
    "zeroshot": (20, 6),
    "supervised": (50, 10),
}


@dataclass(frozen=True)
class RunConfig:
    mode: str = "zeroshot"
    # model
    image_size: int = 64
    patch_size: int = 4
    depth: int = 4
    d_v: int = 96
    heads: int = 4
    d_lr: int = 16
    mlp_ratio: int = 4
    caption_len: int = 16
    caption_dim: int = 48
    d: int = 64
    peft: bool = True
    # optimisation
    lr: float = 1.5e-4
    weight_decay: float = 0.05
    epochs: int = 0            # 0: profile default
    warmup_epochs: int = -1    # -1: profile default
    max_steps: int = 0         # 0: epochs x steps-per-epoch
    batch_size: int = 4
    hflip: bool = True
    seed: int = 0
    # data and outputs
    dataset: str = ""
    caption_mode: str = "file"
    caption_seed: int = 0
    prompt: str = "Describe the image."
    checkpoint: str = "model.ckpt"
    checkpoint_every: int = 0
    log: str = ""

    def __post_init__(self):
        if self.mode not in PROFILES:
            raise ConfigError(f"mode must be one of {sorted(PROFILES)}, got {self.mode!r}")
        if self.caption_mode not in ("file", "synthetic"):
            raise ConfigError(f"caption_mode must be 'file' or 'synthetic', got {self.caption_mode!r}")
        if self.caption_len % 2:
            raise ConfigError(f"caption_len must be even, got {self.caption_len}")
        if self.lr <= 0 or self.batch_size < 1 or self.weight_decay < 0:
            raise ConfigError("lr and batch_size must be positive, weight_decay non-negative")
        if self.epochs < 0 or self.max_steps < 0 or self.checkpoint_every < 0:
            raise ConfigError("epochs, max_steps and checkpoint_every must be non-negative")
        m = self.model()
        m.encoder(), m.mfa()  # validate the architecture dimensions

    def model(self) -> ModelConfig:
        names = {f.name for f in fields(ModelConfig)} - {"seed"}
        return ModelConfig(seed=self.seed, **{n: getattr(self, n) for n in names})

    @property
    def total_epochs(self) -> int:
        return self.epochs or PROFILES[self.mode][0]

    @property
    def total_warmup_epochs(self) -> int:
        return PROFILES[self.mode][1] if self.warmup_epochs < 0 else self.warmup_epochs

    def steps_per_epoch(self, n_samples: int) -> int:
        return math.ceil(n_samples / self.batch_size)

    def schedule(self, n_samples: int) -> tuple:
        """(total_steps, warmup_steps) with warm-up converted from epochs to steps."""
        per = self.steps_per_epoch(n_samples)
        total = self.max_steps or self.total_epochs * per
        warmup = min(self.total_warmup_epochs * per, total - 1)
        return total, max(warmup, 0)


_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _convert(key: str, raw: str, kind):
    kind = {"int": int, "float": float, "bool": bool, "str": str}.get(kind, kind)
    try:
        if kind is bool:
            low = raw.lower()
            if low not in _TRUE | _FALSE:
                raise ValueError(raw)
            return low in _TRUE
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind.__name__}") from None
    return raw


def parse_config(text: str, base_dir=None) -> RunConfig:
    """Parse config text; relative ``dataset``/``checkpoint``/``log`` paths resolve against ``base_dir``."""
    types = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw.strip().strip('"'), types[key])
    if base_dir is not None:
        for key in ("dataset", "checkpoint", "log"):
            if values.get(key) and not Path(values[key]).is_absolute():
                values[key] = str(Path(base_dir) / values[key])
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    return parse_config(text, base_dir=path.parent)


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    return replace(cfg, **changes)
