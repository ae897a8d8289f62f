"""Frozen ViT backbone with parallel bottleneck adapters and a simple feature pyramid."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .nn import MLP, LayerNorm, Linear, Module, ParamFactory

SCALES = (4, 8, 16, 32)
# fixed pixel standardization ahead of the patch embedding
PIXEL_MEAN = 0.5
PIXEL_STD = 0.25


@dataclass(frozen=True)
class EncoderConfig:
    image_size: int = 64
    patch_size: int = 8
    depth: int = 4
    d_v: int = 96
    heads: int = 4
    d_lr: int = 16
    mlp_ratio: int = 4

    def __post_init__(self):
        if self.image_size <= 0 or self.patch_size <= 0 or self.image_size % self.patch_size:
            raise ConfigError(f"image_size {self.image_size} must be a positive multiple of "
                              f"patch_size {self.patch_size}")
        if self.image_size % max(SCALES):
            raise ConfigError(f"image_size {self.image_size} must be divisible by {max(SCALES)}")
        if self.heads <= 0 or self.d_v % self.heads:
            raise ConfigError(f"d_v {self.d_v} must be divisible by heads {self.heads}")
        if not 0 < self.d_lr < self.d_v:
            raise ConfigError(f"adapter width d_lr={self.d_lr} must satisfy 0 < d_lr < d_v={self.d_v}")
        if self.depth < 0 or self.mlp_ratio <= 0:
            raise ConfigError("depth must be >= 0 and mlp_ratio > 0")

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_tokens(self) -> int:
        return self.grid ** 2

    def tokens_at(self, stride: int) -> int:
        return (self.image_size // stride) ** 2


def patchify(image: np.ndarray, patch: int) -> np.ndarray:
    """(H, W, C) -> (H/p * W/p, p*p*C), patches in row-major order."""
    h, w, c = image.shape
    x = image.reshape(h // patch, patch, w // patch, patch, c).transpose(0, 2, 1, 3, 4)
    return x.reshape(-1, patch * patch * c)


class Attention(Module):
    # no key bias: it would only shift each score row, which softmax ignores
    def __init__(self, pf: ParamFactory, name: str, dim: int, heads: int, trainable: bool):
        super().__init__()
        self.q = Linear(pf, f"{name}.q", dim, dim, trainable)
        self.k = Linear(pf, f"{name}.k", dim, dim, trainable, bias=False)
        self.v = Linear(pf, f"{name}.v", dim, dim, trainable)
        self.proj = Linear(pf, f"{name}.proj", dim, dim, trainable)
        self.heads = heads

    def __call__(self, x):
        q, k, v = self.q(x), self.k(x), self.v(x)
        dh = x.shape[1] // self.heads
        scale = 1.0 / math.sqrt(dh)
        outs = []
        for h in range(self.heads):
            sl = (slice(None), slice(h * dh, (h + 1) * dh))
            w = T.softmax_rows(T.matmul(q[sl], T.transpose(k[sl])) * scale)
            outs.append(T.matmul(w, v[sl]))
        return self.proj(T.concat(outs, axis=1))


class Block(Module):
    def __init__(self, pf: ParamFactory, name: str, cfg: EncoderConfig, trainable: bool = False):
        super().__init__()
        self.ln1 = LayerNorm(pf, f"{name}.ln1", cfg.d_v, trainable)
        self.attn = Attention(pf, f"{name}.attn", cfg.d_v, cfg.heads, trainable)
        self.ln2 = LayerNorm(pf, f"{name}.ln2", cfg.d_v, trainable)
        self.ffn = MLP(pf, f"{name}.ffn", cfg.d_v, cfg.d_v * cfg.mlp_ratio, cfg.d_v, "gelu", trainable)


class Adapter(Module):
    """relu(Z W_down + b_1) W_up + b_2, plus the branch scale ``a`` (starts at 0)."""

    def __init__(self, pf: ParamFactory, name: str, d_v: int, d_lr: int):
        super().__init__()
        self.W_down = pf.normal(f"{name}.W_down", (d_v, d_lr))
        self.b_1 = pf.zeros(f"{name}.b_1", (d_lr,))
        self.W_up = pf.normal(f"{name}.W_up", (d_lr, d_v))
        self.b_2 = pf.zeros(f"{name}.b_2", (d_v,))
        self.a = pf.zeros(f"{name}.a", (1,))


def adapter_forward(z, p: Adapter):
    return T.linear(T.relu(T.linear(z, p.W_down, p.b_1)), p.W_up, p.b_2)


def _attention_half(e, blk: Block):
    return blk.attn(blk.ln1(e)) + e


def block_forward(e, blk: Block):
    e_hat = _attention_half(e, blk)
    return blk.ffn(blk.ln2(e_hat)) + e_hat


def adapted_block_forward(e, blk: Block, adapter: Adapter):
    # the adapter reads the residual stream before the FFN's LayerNorm
    e_hat = _attention_half(e, blk)
    return adapter.a * adapter_forward(e_hat, adapter) + blk.ffn(blk.ln2(e_hat)) + e_hat


class ImageEncoder(Module):
    def __init__(self, cfg: EncoderConfig, pf: ParamFactory, peft: bool = True):
        super().__init__()
        self.cfg = cfg
        self.patch_embed = Linear(pf, "encoder.patch_embed", cfg.patch_size ** 2 * 3, cfg.d_v,
                                  trainable=False)
        self.pos = pf.normal("encoder.pos", (cfg.num_tokens, cfg.d_v), trainable=False)
        self.blocks = [Block(pf, f"encoder.block{i}", cfg) for i in range(cfg.depth)]
        self.adapters = [Adapter(pf, f"encoder.adapter{i}", cfg.d_v, cfg.d_lr)
                         for i in range(cfg.depth)] if peft else []
        self.sfp_layers = [Linear(pf, f"encoder.sfp{n}", cfg.d_v, cfg.d_v) for n in SCALES]

    def embed(self, image: np.ndarray):
        h, w = self.cfg.image_size, self.cfg.image_size
        if image.shape != (h, w, 3):
            raise ConfigError(f"image shape {image.shape} does not match configured {(h, w, 3)}")
        pixels = (np.asarray(image) - PIXEL_MEAN) / PIXEL_STD
        patches = T.Tensor(patchify(pixels, self.cfg.patch_size).astype(self.pos.dtype, copy=False))
        return self.patch_embed(patches) + self.pos

    def encode(self, image: np.ndarray, use_adapters: bool = True):
        e = self.embed(image)
        for i, blk in enumerate(self.blocks):
            if use_adapters and self.adapters:
                e = adapted_block_forward(e, blk, self.adapters[i])
            else:
                e = block_forward(e, blk)
        return e

    def sfp(self, tokens) -> dict:
        """Last-layer tokens -> {stride: (H/stride)^2 x d_v tokens}."""
        n_tok, d_v = tokens.shape
        g = math.isqrt(n_tok)
        if g * g != n_tok:
            raise ConfigError(f"token count {n_tok} is not a square grid")
        grid = T.reshape(tokens, (g, g, d_v))
        feats = {}
        for n, layer in zip(SCALES, self.sfp_layers):
            side = self.cfg.image_size // n
            resized = T.resize_bilinear(grid, side, side)
            feats[n] = layer(T.reshape(resized, (side * side, d_v)))
        return feats

    def __call__(self, image: np.ndarray, use_adapters: bool = True) -> dict:
        return self.sfp(self.encode(image, use_adapters))

    def adapter_parameter_count(self) -> int:
        return int(sum(p.data.size for a in self.adapters for p in a.parameters()))

    def backbone_parameters(self):
        return [p for p in self.parameters() if not p.trainable]


def check_features(feats: dict, image_size: int) -> None:
    for n in SCALES:
        if n not in feats:
            raise DimensionError(f"missing stride-{n} features")
        want = (image_size // n) ** 2
        if feats[n].shape[0] != want:
            raise DimensionError(f"stride-{n} features have {feats[n].shape[0]} tokens, want {want}")
