"""Mask losses (BCE, DICE, UAL), the multi-scale cosine query loss, and their weighted total."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError

PROB_CLAMP = 1e-7
DICE_EPS = 1.0


@dataclass(frozen=True)
class LossWeights:
    bce: float = 1.0
    dice: float = 0.5
    ual: float = 0.0
    q: float = 0.5

    def __post_init__(self):
        for name in ("bce", "dice", "ual", "q"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight {name} must be >= 0")

    @classmethod
    def profile(cls, mode: str) -> "LossWeights":
        if mode == "zeroshot":
            return cls(bce=1.0, dice=0.5, ual=0.0, q=0.5)
        if mode == "supervised":
            return cls(bce=1.0, dice=0.5, ual=1.0, q=0.5)
        raise ConfigError(f"unknown loss profile {mode!r}")


@dataclass
class LossBreakdown:
    bce: T.Tensor
    dice: T.Tensor
    ual: T.Tensor
    q: T.Tensor
    total: T.Tensor

    def values(self) -> dict:
        return {k: getattr(self, k).item() for k in ("bce", "dice", "ual", "q", "total")}


def _pair(p, g):
    p = T.as_tensor(p)
    g = np.asarray(g.data if isinstance(g, T.Tensor) else g, dtype=p.dtype)
    if p.shape != g.shape:
        raise DimensionError(f"prediction {p.shape} and ground truth {g.shape} differ")
    return p, g


def bce(p, g):
    p, g = _pair(p, g)
    pc = T.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    per_pixel = T.mul(g, T.log(pc)) + T.mul(1.0 - g, T.log(1.0 - pc))
    return -T.mean(per_pixel)


def dice(p, g):
    p, g = _pair(p, g)
    inter = T.sum(T.mul(p, g))
    return 1.0 - (2.0 * inter + DICE_EPS) / (T.sum(p) + float(g.sum()) + DICE_EPS)


def ual(p):
    p = T.as_tensor(p)
    c = 2.0 * p - 1.0
    return T.mean(1.0 - c * c)


def _cosine(a, b):
    na, nb = T.sqrt(T.sum(a * a)), T.sqrt(T.sum(b * b))
    if na.item() == 0.0 or nb.item() == 0.0:
        warnings.warn("query loss: zero-norm operand, cosine taken as 0", RuntimeWarning, stacklevel=3)
        return T.Tensor(0.0)
    return T.sum(a * b) / (na * nb)


def query_loss(caption_set, query_set):
    """1 - mean_n cos(I_n, Q_n); I_n is treated as a constant target."""
    if sorted(caption_set) != sorted(query_set):
        raise DimensionError("caption and query sets cover different scales")
    cosines = []
    for n in sorted(query_set):
        i_n, q_n = caption_set[n], query_set[n]
        if i_n.shape != q_n.shape:
            raise DimensionError(f"stride {n}: {i_n.shape} vs {q_n.shape}")
        cosines.append(_cosine(T.stop_gradient(i_n), q_n))
    total = cosines[0]
    for c in cosines[1:]:
        total = total + c
    return 1.0 - total * (1.0 / len(cosines))


def total_loss(p, g, caption_set, query_set, w: LossWeights) -> LossBreakdown:
    if not isinstance(w, LossWeights):
        raise ConfigError("weights must be a LossWeights instance")
    parts = {
        "bce": bce(p, g),
        "dice": dice(p, g),
        "ual": ual(p),
        "q": query_loss(caption_set, query_set) if caption_set is not None else T.Tensor(0.0),
    }
    total = (w.bce * parts["bce"] + w.dice * parts["dice"]
             + w.ual * parts["ual"] + w.q * parts["q"])
    return LossBreakdown(total=total, **parts)
