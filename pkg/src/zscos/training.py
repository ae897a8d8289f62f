"""AdamW, warm-up + cosine schedule, and the deterministic training loop."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .errors import ConfigError, FormatError, NumericError
from .io import read_checkpoint, write_checkpoint
from .losses import LossWeights, total_loss
from .model import Segmenter


def lr_at(step: int, total_steps: int, warmup_steps: int, peak: float) -> float:
    """Linear warm-up to ``peak`` over ``warmup_steps``, then cosine decay to 0 at the last step."""
    if warmup_steps > 0 and step < warmup_steps:
        return peak * (step + 1) / warmup_steps
    span = total_steps - warmup_steps - 1
    if span <= 0:
        return peak
    progress = min(max((step - warmup_steps) / span, 0.0), 1.0)
    return 0.5 * peak * (1.0 + math.cos(math.pi * progress))


class AdamW:
    def __init__(self, params, betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.05):
        self.params = [p for p in params if p.trainable]
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = {p.name: np.zeros_like(p.data) for p in self.params}
        self.v = {p.name: np.zeros_like(p.data) for p in self.params}
        self.t = 0

    def step(self, lr: float) -> None:
        self.t += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p in self.params:
            if p.grad is None:
                continue
            g = p.grad
            m = self.m[p.name] = b1 * self.m[p.name] + (1.0 - b1) * g
            v = self.v[p.name] = b2 * self.v[p.name] + (1.0 - b2) * g * g
            decayed = p.data * (1.0 - lr * self.weight_decay)
            p.data = (decayed - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


@dataclass
class StepLog:
    step: int
    lr: float
    bce: float
    dice: float
    ual: float
    q: float
    total: float

    def line(self) -> str:
        return (f"step={self.step} bce={self.bce:.6f} dice={self.dice:.6f} "
                f"ual={self.ual:.6f} q={self.q:.6f} total={self.total:.6f}")


@dataclass
class Trainer:
    """Steps are a pure function of (parameters, moments, step index, seed).

    Batch order and flips for step k come from generators seeded by
    (seed, epoch) and (seed, epoch, position), so a resumed run replays the
    uninterrupted one exactly.
    """
    model: Segmenter
    weights: LossWeights
    lr: float = 1.5e-4
    weight_decay: float = 0.05
    total_steps: int = 100
    warmup_steps: int = 0
    batch_size: int = 4
    seed: int = 0
    hflip: bool = True
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.batch_size < 1 or self.total_steps < 1:
            raise ConfigError("batch_size and total_steps must be >= 1")
        self.optim = AdamW(self.model.parameters(), weight_decay=self.weight_decay)
        self.step = 0

    def batch_for(self, step: int, n: int):
        per_epoch = math.ceil(n / self.batch_size)
        epoch, pos = divmod(step, per_epoch)
        order = np.random.default_rng([self.seed, epoch]).permutation(n)
        idx = order[pos * self.batch_size:(pos + 1) * self.batch_size]
        flips = np.random.default_rng([self.seed, epoch, pos, 1]).random(len(idx)) < 0.5
        return idx, flips & self.hflip

    def train_step(self, samples: Sequence, captions: Sequence[np.ndarray]) -> StepLog:
        idx, flips = self.batch_for(self.step, len(samples))
        self.model.zero_grad()
        sums = dict.fromkeys(("bce", "dice", "ual", "q", "total"), 0.0)
        scale = 1.0 / len(idx)
        for i, flip in zip(idx, flips):
            s = samples[i].flipped() if flip else samples[i]
            out = self.model(s.image, captions[i], mode="train")
            parts = total_loss(T.sigmoid(out.logits), s.mask, out.caption_set, out.query_set,
                               self.weights)
            values = parts.values()
            if not np.isfinite(values["total"]):
                raise NumericError(f"non-finite loss at step {self.step}")
            (parts.total * scale).backward()
            for k in sums:
                sums[k] += values[k] * scale
        lr = lr_at(self.step, self.total_steps, self.warmup_steps, self.lr)
        self.optim.step(lr)
        log = StepLog(self.step, lr, **sums)
        self.history.append(log)
        self.step += 1
        return log

    def run(self, samples, captions, until: int | None = None,
            on_step: Callable[[StepLog], None] | None = None,
            checkpoint_every: int = 0, checkpoint_path=None) -> list:
        until = self.total_steps if until is None else min(until, self.total_steps)
        logs = []
        while self.step < until:
            log = self.train_step(samples, captions)
            logs.append(log)
            if on_step is not None:
                on_step(log)
            if checkpoint_every and checkpoint_path and self.step % checkpoint_every == 0:
                self.model.save(checkpoint_path)
                self.save_state(f"{checkpoint_path}.state")
        return logs

    # -- resumable state -----------------------------------------------------
    def state_entries(self) -> list:
        out = [("state.step", np.array([float(self.step)]), False),
               ("state.adam_t", np.array([float(self.optim.t)]), False)]
        for p in self.optim.params:
            out.append((f"adam.m.{p.name}", self.optim.m[p.name], False))
            out.append((f"adam.v.{p.name}", self.optim.v[p.name], False))
        return out + self.model.entries()

    def save_state(self, path) -> None:
        write_checkpoint(path, self.state_entries())

    def load_state(self, path) -> None:
        entries = read_checkpoint(path)
        table = {name: arr for name, arr, _ in entries}
        try:
            self.step = int(table["state.step"][0])
            self.optim.t = int(table["state.adam_t"][0])
            for p in self.optim.params:
                self.optim.m[p.name] = table[f"adam.m.{p.name}"].copy()
                self.optim.v[p.name] = table[f"adam.v.{p.name}"].copy()
        except KeyError as exc:
            raise FormatError(f"{path}: training state lacks {exc.args[0]}") from None
        self.model.load_arrays([e for e in entries if not e[0].startswith(("state.", "adam."))])
