"""Central-difference verification of the adjoint rules."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .tensor import Tensor, checked

STEP = 1e-5
DENOM_FLOOR = 1e-8


@dataclass
class GradReport:
    op: str
    max_rel_error: float
    errors: dict = field(default_factory=dict)
    worst: tuple = ()
    checked: int = 0
    skipped: int = 0

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error <= tol

    def line(self, tol: float = 1e-4) -> str:
        status = "PASS" if self.passed(tol) else "FAIL"
        where = f" worst={self.worst[0]}{[int(i) for i in self.worst[1]]}" if self.worst else ""
        return (f"{status} {self.op:<24} max_rel_err={self.max_rel_error:.3e} "
                f"entries={self.checked} nonsmooth_skipped={self.skipped}{where}")


def _named(inputs) -> list:
    if isinstance(inputs, Mapping):
        return list(inputs.items())
    out = []
    for i, t in enumerate(inputs):
        out.append((getattr(t, "name", None) or f"input{i}", t))
    return out


def _scalar(f, args) -> float:
    out = f(*args)
    return float(np.sum(out.data))


def finite_diff_check(f: Callable[..., Tensor], inputs: Sequence[Tensor] | Mapping[str, Tensor],
                      op: str = "f", *, h: float = STEP, max_entries: int | None = None,
                      kink_tol: float = 1e-3, rng: np.random.Generator | None = None) -> GradReport:
    """Compare the adjoint gradient of scalar ``f(*inputs)`` against central differences.

    ``inputs`` are perturbed in place and restored.  Entries where the one-sided
    slopes disagree by more than ``kink_tol`` sit on a non-smooth point (ReLU
    corner, threshold or arg-min switch) and are counted as skipped rather than
    compared; the error denominator is ``max(|analytic|, |numeric|, 1e-8)``.
    """
    named = _named(inputs)
    tensors = [t for _, t in named]
    args = tensors if not isinstance(inputs, Mapping) else []

    def call():
        return f(*args)

    previous = [(t.requires_grad, t.grad) for t in tensors]
    with checked(True):
        for t in tensors:
            t.requires_grad = True
            t.grad = None
        out = call()
        if out.data.size != 1:
            raise ValueError(f"{op}: finite_diff_check needs a scalar-valued function")
        out.backward()
        analytic = {name: (t.grad if t.grad is not None else np.zeros_like(t.data)).copy()
                    for name, t in named}
        f0 = float(np.sum(call().data))

        report = GradReport(op=op, max_rel_error=0.0)
        for name, t in named:
            flat = t.data.reshape(-1)
            if not flat.flags.writeable or not np.shares_memory(flat, t.data):
                t.data = t.data.copy()
                flat = t.data.reshape(-1)
            idx = np.arange(flat.size)
            if max_entries is not None and flat.size > max_entries:
                idx = (rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False)
            worst_here = 0.0
            a_flat = analytic[name].reshape(-1)
            for k in idx:
                orig = flat[k]
                flat[k] = orig + h
                fp = float(np.sum(call().data))
                flat[k] = orig - h
                fm = float(np.sum(call().data))
                flat[k] = orig
                numeric = (fp - fm) / (2 * h)
                slope_gap = abs((fp - f0) - (f0 - fm)) / h
                if slope_gap > kink_tol * max(1.0, abs(numeric)):
                    report.skipped += 1
                    continue
                a = float(a_flat[k])
                err = abs(a - numeric) / max(abs(a), abs(numeric), DENOM_FLOOR)
                report.checked += 1
                if err > worst_here:
                    worst_here = err
                if err > report.max_rel_error:
                    report.max_rel_error = err
                    report.worst = (name, np.unravel_index(k, t.shape))
            report.errors[name] = worst_here
    for t, (req, grad) in zip(tensors, previous):
        t.requires_grad, t.grad = req, grad
    return report
