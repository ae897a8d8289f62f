"""The gradient-check suite: every primitive plus the model's composite blocks."""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import losses as L
from . import tensor as T
from .decoder import MaskDecoder
from .encoder import SCALES, Adapter, Block, EncoderConfig, adapted_block_forward
from .gradcheck import GradReport, finite_diff_check
from .mfa import MFA, GroupedTokens, MFAConfig, TextMixer, token_match
from .nn import ParamFactory

TOLERANCE = 1e-4
SEEDS = (0, 1, 2, 3, 4)
# composite parameter sets are large; a random subset of entries per tensor is enough
MAX_ENTRIES = 24
# Probe weights are kept small so the rounding noise of f(x +- h) stays well under the
# 1e-8 error floor; otherwise gradients that are structurally zero (a per-row shift
# removed by a following LayerNorm) read as 1e-11 / 1e-8 failures.
PROBE_SCALE = 1e-3


def _leaf(rng, *shape, scale=1.0):
    return T.Tensor(rng.standard_normal(shape) * scale, requires_grad=True)


def _probe(out, weights):
    """Scalar projection with fixed random weights so every output entry matters."""
    return T.sum(out * (np.asarray(weights) * PROBE_SCALE))


# Each case takes a generator and returns (f, inputs) for finite_diff_check.
def _matmul(rng):
    a, b = _leaf(rng, 4, 5), _leaf(rng, 5, 3)
    w = rng.standard_normal((4, 3))
    return lambda: _probe(T.matmul(a, b), w), {"a": a, "b": b}


def _linear(rng):
    x, W, b = _leaf(rng, 6, 5), _leaf(rng, 5, 4), _leaf(rng, 4)
    w = rng.standard_normal((6, 4))
    return lambda: _probe(T.linear(x, W, b), w), {"x": x, "W": W, "b": b}


def _softmax(rng):
    x = _leaf(rng, 4, 5, scale=2.0)
    w = rng.standard_normal((4, 5))
    return lambda: _probe(T.softmax_rows(x), w), {"x": x}


def _minmax(rng):
    x = _leaf(rng, 4, 6)
    w = rng.standard_normal((4, 6))
    return lambda: _probe(T.minmax_rows(x), w), {"x": x}


def _layer_norm(rng):
    x, g, b = _leaf(rng, 5, 6), _leaf(rng, 6), _leaf(rng, 6)
    w = rng.standard_normal((5, 6))
    return lambda: _probe(T.layer_norm(x, g, b), w), {"x": x, "gamma": g, "beta": b}


def _activation(kind):
    def case(rng):
        x = _leaf(rng, 5, 6, scale=2.0)
        w = rng.standard_normal((5, 6))
        return lambda: _probe(T.activate(x, kind), w), {"x": x}
    return case


def _resize(out_h, out_w):
    def case(rng):
        x = _leaf(rng, 4, 4, 3)
        w = rng.standard_normal((out_h, out_w, 3))
        return lambda: _probe(T.resize_bilinear(x, out_h, out_w), w), {"x": x}
    return case


def _elementwise(rng):
    a, b = _leaf(rng, 3, 4), _leaf(rng, 3, 4)
    pos = T.Tensor(rng.uniform(0.5, 2.0, (3, 4)), requires_grad=True)
    w = rng.standard_normal((3, 4))

    def f():
        y = (a + b) * a - b / pos + T.exp(a * 0.5) + T.log(pos) * T.sqrt(pos)
        return _probe(T.clip(y, -50.0, 50.0), w)
    return f, {"a": a, "b": b, "pos": pos}


def _structural(rng):
    a, b = _leaf(rng, 3, 4), _leaf(rng, 2, 4)
    w = rng.standard_normal((6, 2))

    def f():
        c = T.concat([a, b], axis=0)[1:, :]
        r = T.reshape(T.transpose(c), (8, 2))
        pooled = T.reshape(T.mean(T.reshape(r, (2, 4, 2)), axis=0), (4, 2))
        return _probe(pooled, w[:4]) + _probe(r[:6], w)
    return f, {"a": a, "b": b}


def _sparsify(rng):
    x = _leaf(rng, 4, 6)
    w = rng.standard_normal((4, 6))
    return lambda: _probe(T.sparsify(x, 0.1), w), {"x": x}


def _unit_factory(rng):
    return ParamFactory(rng, dtype=np.float64, std=0.5)


def _adapter_block(rng):
    cfg = EncoderConfig(image_size=32, patch_size=8, depth=1, d_v=8, heads=2, d_lr=4, mlp_ratio=2)
    pf = _unit_factory(rng)
    blk, ad = Block(pf, "blk", cfg), Adapter(pf, "ad", cfg.d_v, cfg.d_lr)
    ad.a.data = np.array([0.7])
    e = _leaf(rng, cfg.num_tokens, cfg.d_v)
    w = rng.standard_normal((cfg.num_tokens, cfg.d_v))
    inputs = {"E": e, **{p.name: p for p in ad.parameters()},
              **{p.name: p for p in blk.parameters()}}
    return lambda: _probe(adapted_block_forward(e, blk, ad), w), inputs


def _mixer(rng):
    cfg = MFAConfig(caption_len=4, caption_dim=5, d=6)
    mixer = TextMixer(_unit_factory(rng), cfg)
    t = _leaf(rng, 4, 5)
    w = rng.standard_normal((2, 6))
    return lambda: _probe(mixer(t), w), {"T": t, **{p.name: p for p in mixer.parameters()}}


def _token_match(rng):
    v, u = _leaf(rng, 6, 4), _leaf(rng, 3, 4)
    w = rng.standard_normal((6, 4))
    return lambda: _probe(token_match(v, u), w), {"v": v, "u": u}


def _small_grouped(rng, size, d):
    return {n: _leaf(rng, (size // n) ** 2, d) for n in SCALES}


def _decoder(rng):
    size, d_v, d = 32, 3, 4
    dec = MaskDecoder(_unit_factory(rng), d_v, d, size)
    feats = _small_grouped(rng, size, d_v)
    grouped = _small_grouped(rng, size, d)
    w = rng.standard_normal((size, size))

    def f():
        return _probe(dec(feats, GroupedTokens("caption", grouped)), w)
    inputs = {**{f"feat{n}": t for n, t in feats.items()},
              **{f"group{n}": t for n, t in grouped.items()},
              **{p.name: p for p in dec.parameters()}}
    return f, inputs


def _mask_pair(rng, shape=(6, 6)):
    p = T.Tensor(rng.uniform(0.05, 0.95, shape), requires_grad=True)
    g = rng.random(shape) < 0.4
    return p, g


def _bce(rng):
    p, g = _mask_pair(rng)
    return lambda: L.bce(p, g), {"p": p}


def _dice(rng):
    p, g = _mask_pair(rng)
    return lambda: L.dice(p, g), {"p": p}


def _ual(rng):
    p, _ = _mask_pair(rng)
    return lambda: L.ual(p), {"p": p}


def _sets(rng, role, d=3):
    return GroupedTokens(role, {n: _leaf(rng, 4, d) for n in SCALES})


def _query_loss(rng):
    caption, query = _sets(rng, "caption"), _sets(rng, "query")
    inputs = {f"Q{n}": query[n] for n in SCALES}
    return lambda: L.query_loss(caption, query), inputs


def _align_query(rng):
    """Projector, mixer, token matching and the query loss composed.

    The caption set is computed once and held fixed: the loss stops its gradient,
    so perturbing shared weights must not move it in the numeric derivative either.
    """
    cfg = MFAConfig(caption_len=4, caption_dim=3, d=4)
    mfa = MFA(_unit_factory(rng), cfg, d_v=3)
    feats = {n: _leaf(rng, 3, 3) for n in SCALES}
    caption = rng.standard_normal((4, 3))
    with T.no_grad():
        fixed, _ = mfa.align_all(feats, caption, training=True)
    fixed = GroupedTokens("caption", {n: T.Tensor(fixed[n].data.copy()) for n in SCALES})

    def f():
        _, qry = mfa.align_all(feats, None, training=False)
        return L.query_loss(fixed, qry) * PROBE_SCALE
    return f, {**{f"feat{n}": t for n, t in feats.items()}, **{p.name: p for p in mfa.parameters()}}


def _total_loss(rng):
    p, g = _mask_pair(rng)
    caption, query = _sets(rng, "caption"), _sets(rng, "query")
    w = L.LossWeights.profile("supervised")
    return lambda: L.total_loss(p, g, caption, query, w).total, {"p": p, "Q4": query[4]}


CASES: dict[str, Callable] = {
    "matmul": _matmul,
    "linear": _linear,
    "softmax_rows": _softmax,
    "minmax_rows": _minmax,
    "layer_norm": _layer_norm,
    "relu": _activation("relu"),
    "sigmoid": _activation("sigmoid"),
    "gelu": _activation("gelu"),
    "resize_bilinear_up": _resize(7, 9),
    "resize_bilinear_down": _resize(3, 2),
    "elementwise": _elementwise,
    "structural": _structural,
    "sparsify": _sparsify,
    "adapter_block": _adapter_block,
    "text_mixer": _mixer,
    "token_match": _token_match,
    "decoder": _decoder,
    "loss_bce": _bce,
    "loss_dice": _dice,
    "loss_ual": _ual,
    "loss_query": _query_loss,
    "align_query": _align_query,
    "loss_total": _total_loss,
}


def merge(reports: list[GradReport]) -> GradReport:
    out = GradReport(op=reports[0].op, max_rel_error=0.0)
    for r in reports:
        out.checked += r.checked
        out.skipped += r.skipped
        for k, v in r.errors.items():
            out.errors[k] = max(out.errors.get(k, 0.0), v)
        if r.max_rel_error >= out.max_rel_error:
            out.max_rel_error = r.max_rel_error
            out.worst = r.worst
    return out


def stop_gradient_violation(seed: int = 0) -> float:
    """Largest analytic query-loss gradient reaching the caption set (should be exactly 0)."""
    rng = np.random.default_rng(seed)
    caption, query = _sets(rng, "caption"), _sets(rng, "query")
    with T.checked(True):
        L.query_loss(caption, query).backward()
    return max(float(np.abs(caption[n].grad).max()) if caption[n].grad is not None else 0.0
               for n in SCALES)


def run_suite(seeds=SEEDS, cases: dict | None = None, max_entries: int = MAX_ENTRIES) -> list:
    """One merged GradReport per case, worst over ``seeds``."""
    reports = []
    for name, case in (cases or CASES).items():
        per_seed = []
        for seed in seeds:
            rng = np.random.default_rng([seed, len(name)])
            f, inputs = case(rng)
            per_seed.append(finite_diff_check(f, inputs, name, max_entries=max_entries,
                                              rng=np.random.default_rng(seed)))
        reports.append(merge(per_seed))
    return reports
