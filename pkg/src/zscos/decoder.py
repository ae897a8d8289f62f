"""All-MLP mask decoder: nine linear layers, bilinear upsampling between them."""
from __future__ import annotations

from . import tensor as T
from .encoder import SCALES
from .errors import DimensionError
from .nn import Linear, Module, ParamFactory

# trainable head layers use 1/sqrt(fan_in) init; at d=64 a fixed 0.02 shrinks the
# signal by ~6x per layer and the nine-layer stack starts out nearly dead
FAN_IN = "fan_in"


class MaskDecoder(Module):
    def __init__(self, pf: ParamFactory, d_v: int, d: int, image_size: int):
        super().__init__()
        self.fuse = [Linear(pf, f"decoder.fuse{n}", d_v + d, d, std=FAN_IN) for n in SCALES]
        self.merge = Linear(pf, "decoder.merge", len(SCALES) * d, d, std=FAN_IN)
        self.up1 = Linear(pf, "decoder.up1", d, d, std=FAN_IN)
        self.up2 = Linear(pf, "decoder.up2", d, d, std=FAN_IN)
        self.head = Linear(pf, "decoder.head", d, max(d // 2, 1), std=FAN_IN)
        self.out = Linear(pf, "decoder.out", max(d // 2, 1), 1, std=FAN_IN)
        self.d = d
        self.image_size = image_size

    def mlp_layers(self) -> list:
        return [*self.fuse, self.merge, self.up1, self.up2, self.head, self.out]

    def _grid(self, tokens, side):
        return T.reshape(tokens, (side, side, tokens.shape[1]))

    def __call__(self, feats: dict, grouped) -> T.Tensor:
        """Return H x W mask logits."""
        size = self.image_size
        base = size // min(SCALES)
        fused = []
        for n, layer in zip(SCALES, self.fuse):
            if n not in feats or n not in grouped.scales:
                raise DimensionError(f"stride {n} missing from features or grouped tokens")
            v, a = feats[n], grouped[n]
            side = size // n
            if v.shape[0] != side * side or a.shape[0] != v.shape[0]:
                raise DimensionError(f"stride {n}: {v.shape} features vs {a.shape} grouped tokens")
            x = T.gelu(layer(T.concat([v, a], axis=1)))
            x = T.resize_bilinear(self._grid(x, side), base, base)
            fused.append(T.reshape(x, (base * base, self.d)))
        x = T.gelu(self.merge(T.concat(fused, axis=1)))
        side = base
        for layer in (self.up1, self.up2):
            x = T.gelu(layer(x))
            x = T.resize_bilinear(self._grid(x, side), side * 2, side * 2)
            side *= 2
            x = T.reshape(x, (side * side, self.d))
        logits = self.out(T.gelu(self.head(x)))
        return T.reshape(logits, (size, size))
