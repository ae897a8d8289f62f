"""The assembled segmenter: encoder + SFP -> alignment -> mask decoder."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import NamedTuple

import numpy as np

from . import tensor as T
from .decoder import MaskDecoder
from .encoder import EncoderConfig, ImageEncoder
from .errors import ConfigError, FormatError, ModeError
from .io import read_checkpoint, write_checkpoint
from .mfa import MFA, GroupedTokens, MFAConfig
from .nn import Module, ParamFactory

MODES = ("train", "caption", "codebook")


@dataclass(frozen=True)
class ModelConfig:
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
    seed: int = 0
    peft: bool = True

    def encoder(self) -> EncoderConfig:
        return EncoderConfig(self.image_size, self.patch_size, self.depth, self.d_v, self.heads,
                             self.d_lr, self.mlp_ratio)

    def mfa(self) -> MFAConfig:
        return MFAConfig(self.caption_len, self.caption_dim, self.d)


class Output(NamedTuple):
    logits: T.Tensor
    features: dict
    caption_set: GroupedTokens | None
    query_set: GroupedTokens


class Segmenter(Module):
    def __init__(self, cfg: ModelConfig, dtype=np.float64):
        super().__init__()
        self.cfg = cfg
        enc_cfg, mfa_cfg = cfg.encoder(), cfg.mfa()
        pf = ParamFactory(np.random.default_rng(cfg.seed), dtype=dtype)
        self.encoder = ImageEncoder(enc_cfg, pf, peft=cfg.peft)
        self.mfa = MFA(pf, mfa_cfg, cfg.d_v)
        self.decoder = MaskDecoder(pf, cfg.d_v, cfg.d, cfg.image_size)

    def forward(self, image: np.ndarray, caption=None, mode: str = "train") -> Output:
        if mode not in MODES:
            raise ModeError(f"mode must be one of {MODES}, got {mode!r}")
        if mode in ("train", "caption") and caption is None:
            raise ModeError(f"{mode} mode needs a caption embedding")
        if mode == "codebook":
            caption = None
        feats = self.encoder(image)
        caption_set, query_set = self.mfa.align_all(feats, caption, training=mode == "train")
        grouped = query_set if mode == "codebook" else caption_set
        return Output(self.decoder(feats, grouped), feats, caption_set, query_set)

    __call__ = forward

    # -- checkpoint conversion ---------------------------------------------
    def entries(self) -> list:
        meta = [(f"meta.{f.name}", np.array([float(getattr(self.cfg, f.name))]), False)
                for f in fields(ModelConfig)]
        params = [(p.name, p.data, p.trainable) for p in self.parameters()]
        return meta + params

    def save(self, path) -> None:
        write_checkpoint(path, self.entries())

    def load_arrays(self, entries) -> None:
        params = self.named_parameters()
        seen = set()
        for name, array, trainable in entries:
            if name.startswith("meta.") or name not in params:
                continue
            p = params[name]
            if array.shape != p.shape:
                raise FormatError(f"{name}: checkpoint shape {array.shape} != model {p.shape}")
            p.data = array.astype(p.dtype, copy=True)
            p.trainable = trainable
            p.requires_grad = trainable
            seen.add(name)
        missing = sorted(set(params) - seen)
        if missing:
            raise FormatError(f"checkpoint lacks parameters: {missing[:5]}")

    @classmethod
    def from_entries(cls, entries) -> "Segmenter":
        meta = {name[5:]: float(arr.reshape(-1)[0]) for name, arr, _ in entries
                if name.startswith("meta.")}
        kwargs = {}
        for f in fields(ModelConfig):
            if f.name not in meta:
                raise FormatError(f"checkpoint lacks meta.{f.name}")
            kwargs[f.name] = bool(meta[f.name]) if f.type in (bool, "bool") else int(meta[f.name])
        dtypes = {arr.dtype for name, arr, _ in entries if not name.startswith("meta.")}
        model = cls(ModelConfig(**kwargs), dtype=np.float32 if dtypes == {np.dtype("float32")}
                    else np.float64)
        model.load_arrays(entries)
        return model

    @classmethod
    def load(cls, path) -> "Segmenter":
        return cls.from_entries(read_checkpoint(path))


def model_config_from(mapping: dict) -> ModelConfig:
    known = {f.name for f in fields(ModelConfig)}
    unknown = set(mapping) - known
    if unknown:
        raise ConfigError(f"unknown model settings: {sorted(unknown)}")
    return ModelConfig(**mapping)


def config_dict(cfg: ModelConfig) -> dict:
    return asdict(cfg)
