import math

import numpy as np
import pytest

from zscos import losses as L
from zscos import tensor as T
from zscos.errors import ConfigError, DimensionError
from zscos.mfa import GroupedTokens


def sets(rng, role, shape=(4, 3)):
    return GroupedTokens(role, {n: T.Tensor(rng.standard_normal(shape), requires_grad=True)
                                for n in (4, 8, 16, 32)})


def test_bce_half_is_log_two():
    p = np.full((4, 4), 0.5)
    g = np.eye(4, dtype=bool)
    assert L.bce(p, g).item() == pytest.approx(math.log(2), abs=1e-12)


def test_bce_clamps_saturated_predictions():
    g = np.array([[1.0, 0.0]])
    value = L.bce(np.array([[0.0, 1.0]]), g).item()
    assert math.isfinite(value)
    assert value == pytest.approx(-math.log(1e-7), rel=1e-6)


def test_dice_perfect_and_disjoint():
    g = np.zeros((4, 4))
    g[:2] = 1
    assert L.dice(g, g).item() == pytest.approx(0.0, abs=1e-12)
    # with eps = 1: 1 - 1 / (8 + 8 + 1)
    assert L.dice(1 - g, g).item() == pytest.approx(1 - 1 / 17, abs=1e-12)


def test_ual_extremes():
    assert L.ual(np.full((2, 2), 0.5)).item() == 1.0
    assert L.ual(np.array([[0.0, 1.0]])).item() == 0.0


def test_query_loss_zero_for_identical_sets():
    rng = np.random.default_rng(0)
    a = sets(rng, "caption")
    b = GroupedTokens("query", {n: T.Tensor(a[n].data * 3.0) for n in a})
    assert L.query_loss(a, b).item() == pytest.approx(0.0, abs=1e-12)
    c = GroupedTokens("query", {n: T.Tensor(-a[n].data) for n in a})
    assert L.query_loss(a, c).item() == pytest.approx(2.0, abs=1e-12)


def test_query_loss_stops_caption_gradient():
    rng = np.random.default_rng(1)
    cap, qry = sets(rng, "caption"), sets(rng, "query")
    L.query_loss(cap, qry).backward()
    for n in cap:
        assert cap[n].grad is None
        assert np.any(qry[n].grad != 0)


def test_query_loss_zero_norm_warns():
    rng = np.random.default_rng(2)
    cap = sets(rng, "caption")
    zero = GroupedTokens("query", {n: T.Tensor(np.zeros((4, 3))) for n in cap})
    with pytest.warns(RuntimeWarning):
        assert L.query_loss(cap, zero).item() == 1.0


def test_query_loss_scale_mismatch():
    rng = np.random.default_rng(3)
    cap = sets(rng, "caption")
    with pytest.raises(DimensionError):
        L.query_loss(cap, GroupedTokens("query", {4: cap[4]}))


def test_profiles():
    z, s = L.LossWeights.profile("zeroshot"), L.LossWeights.profile("supervised")
    assert (z.bce, z.dice, z.ual, z.q) == (1.0, 0.5, 0.0, 0.5)
    assert (s.bce, s.dice, s.ual, s.q) == (1.0, 0.5, 1.0, 0.5)
    with pytest.raises(ConfigError):
        L.LossWeights.profile("fewshot")
    with pytest.raises(ConfigError):
        L.LossWeights(bce=-1)


def test_total_is_weighted_sum():
    rng = np.random.default_rng(4)
    p = T.Tensor(rng.uniform(0.1, 0.9, (5, 5)))
    g = rng.random((5, 5)) < 0.5
    cap, qry = sets(rng, "caption"), sets(rng, "query")
    w = L.LossWeights(bce=0.3, dice=0.7, ual=0.2, q=0.9)
    parts = L.total_loss(p, g, cap, qry, w).values()
    expected = 0.3 * parts["bce"] + 0.7 * parts["dice"] + 0.2 * parts["ual"] + 0.9 * parts["q"]
    assert parts["total"] == pytest.approx(expected, rel=1e-12)
    assert L.total_loss(p, g, None, qry, w).values()["q"] == 0.0


def test_shape_mismatch():
    with pytest.raises(DimensionError):
        L.bce(np.full((2, 2), 0.5), np.zeros((2, 3)))
