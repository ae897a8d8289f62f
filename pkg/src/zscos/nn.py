"""Named parameters and a minimal module container."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ConfigError

INIT_STD = 0.02


class Parameter(T.Tensor):
    __slots__ = ("name", "trainable")

    def __init__(self, name: str, data, trainable: bool = True):
        super().__init__(np.array(data, copy=True), requires_grad=trainable, op="param")
        self.name = name
        self.trainable = trainable

    def __repr__(self) -> str:
        flag = "trainable" if self.trainable else "frozen"
        return f"Parameter({self.name!r}, shape={self.shape}, {flag})"


class Module:
    """Registers Parameters and sub-Modules assigned as attributes, in order."""

    def __init__(self):
        object.__setattr__(self, "_members", {})

    def __setattr__(self, key, value):
        if isinstance(value, (Parameter, Module)) or (
                isinstance(value, (list, tuple)) and value
                and all(isinstance(v, (Parameter, Module)) for v in value)):
            self._members[key] = value
        object.__setattr__(self, key, value)

    def parameters(self):
        for value in self._members.values():
            items = value if isinstance(value, (list, tuple)) else (value,)
            for item in items:
                if isinstance(item, Parameter):
                    yield item
                else:
                    yield from item.parameters()

    def named_parameters(self) -> dict:
        out = {}
        for p in self.parameters():
            if p.name in out:
                raise ConfigError(f"duplicate parameter name {p.name!r}")
            out[p.name] = p
        return out

    def set_trainable(self, flag: bool) -> None:
        for p in self.parameters():
            p.trainable = flag
            p.requires_grad = flag

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self, trainable: bool | None = None) -> int:
        return int(sum(p.data.size for p in self.parameters()
                       if trainable is None or p.trainable == trainable))


class ParamFactory:
    """Creates named parameters from one generator so init order fixes the values."""

    def __init__(self, rng: np.random.Generator, dtype=np.float64, std: float = INIT_STD):
        self.rng = rng
        self.dtype = dtype
        self.std = std

    def normal(self, name, shape, trainable=True, std=None):
        """``std`` may be a number, None (factory default) or "fan_in" (1/sqrt(shape[0]))."""
        if std is None:
            std = self.std
        elif std == "fan_in":
            std = 1.0 / np.sqrt(shape[0])
        return Parameter(name, (self.rng.standard_normal(shape) * std).astype(self.dtype), trainable)

    def zeros(self, name, shape, trainable=True):
        return Parameter(name, np.zeros(shape, dtype=self.dtype), trainable)

    def ones(self, name, shape, trainable=True):
        return Parameter(name, np.ones(shape, dtype=self.dtype), trainable)


class Linear(Module):
    def __init__(self, pf: ParamFactory, name: str, d_in: int, d_out: int,
                 trainable: bool = True, bias: bool = True, std=None):
        super().__init__()
        self.W = pf.normal(f"{name}.W", (d_in, d_out), trainable, std)
        self.b = pf.zeros(f"{name}.b", (d_out,), trainable) if bias else None

    def __call__(self, x):
        return T.linear(x, self.W, self.b)


class LayerNorm(Module):
    def __init__(self, pf: ParamFactory, name: str, dim: int, trainable: bool = True):
        super().__init__()
        self.gamma = pf.ones(f"{name}.gamma", (dim,), trainable)
        self.beta = pf.zeros(f"{name}.beta", (dim,), trainable)

    def __call__(self, x):
        return T.layer_norm(x, self.gamma, self.beta)


class MLP(Module):
    """Two linear layers with an activation in between."""

    def __init__(self, pf: ParamFactory, name: str, d_in: int, d_hidden: int, d_out: int,
                 act: str = "gelu", trainable: bool = True, std=None):
        super().__init__()
        self.fc1 = Linear(pf, f"{name}.fc1", d_in, d_hidden, trainable, std=std)
        self.fc2 = Linear(pf, f"{name}.fc2", d_hidden, d_out, trainable, std=std)
        self.act = act

    def __call__(self, x):
        return self.fc2(T.activate(self.fc1(x), self.act))
