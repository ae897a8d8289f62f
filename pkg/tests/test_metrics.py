import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from zscos import metrics as M
from zscos.errors import DimensionError

EPS = np.spacing(1.0)


def blob(size=16, seed=0):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size]
    cy, cx = rng.uniform(0.3, 0.7, 2) * size
    r = rng.uniform(0.15, 0.3) * size
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


# -- oracles -----------------------------------------------------------------
def e_measure_oracle(p, g):
    """Threshold loop straight from the enhanced-alignment definition."""
    g = g.astype(bool)
    n = g.size
    scores = []
    for t in range(256):
        fm = (p > t / 256).astype(float)
        gt = g.astype(float)
        if g.sum() == 0:
            enhanced = 1.0 - fm
        elif g.sum() == n:
            enhanced = fm
        else:
            d_fm = fm - fm.mean()
            d_gt = gt - gt.mean()
            align = 2 * d_gt * d_fm / (d_gt * d_gt + d_fm * d_fm + EPS)
            enhanced = (align + 1) ** 2 / 4
        scores.append(enhanced.sum() / n)
    return float(np.mean(scores))


def weighted_f_oracle(p, g):
    """Weighted F-measure with brute-force distance transform and convolution."""
    h, w = g.shape
    fg = np.argwhere(g)
    err = np.abs(p - g)
    dist = np.zeros((h, w))
    err_t = err.copy()
    for y in range(h):
        for x in range(w):
            if not g[y, x]:
                d = np.sqrt(((fg - [y, x]) ** 2).sum(axis=1))
                k = np.argmin(d)
                dist[y, x] = d[k]
                err_t[y, x] = err[tuple(fg[k])]
    kern = np.array([[math.exp(-(i * i + j * j) / 50.0) for j in range(-3, 4)] for i in range(-3, 4)])
    kern /= kern.sum()
    padded = np.pad(err_t, 3)
    err_a = np.array([[np.sum(padded[y:y + 7, x:x + 7] * kern) for x in range(w)] for y in range(h)])
    min_e = err.copy()
    sel = g & (err_a < err)
    min_e[sel] = err_a[sel]
    b = np.ones((h, w))
    b[~g] = 2 - np.exp(math.log(0.5) / 5 * dist[~g])
    ew = min_e * b
    tp = g.sum() - ew[g].sum()
    fp = ew[~g].sum()
    r = 1 - ew[g].mean()
    prec = tp / (EPS + tp + fp)
    return 2 * r * prec / (EPS + r + prec)


# -- sanity -------------------------------------------------------------------
def test_perfect_prediction():
    g = blob()
    p = g.astype(float)
    assert M.mae(p, g) == 0.0
    assert abs(M.weighted_f_beta(p, g) - 1) <= 1e-6
    assert abs(M.s_measure(p, g) - 1) <= 1e-6
    assert abs(M.e_measure(p, g) - 1) <= 1e-6
    assert M.iou(p, g) == 1.0


def test_complemented_prediction():
    # object kept more than 3 px from the border: the 7x7 smoothing pads with zeros,
    # which would otherwise lower the error of foreground pixels next to the edge
    g = np.zeros((16, 16), bool)
    g[5:11, 4:12] = True
    p = 1.0 - g
    assert M.mae(p, g) == 1.0
    assert abs(M.weighted_f_beta(p, g)) <= 1e-6
    assert M.iou(p, g) == 0.0


def test_complement_touching_border_follows_reference_padding():
    g = np.zeros((16, 16), bool)
    g[0:6, 4:12] = True
    value = M.weighted_f_beta(1.0 - g, g)
    assert 0 < value < 0.05


def test_e_measure_matches_threshold_oracle_on_4x4():
    rng = np.random.default_rng(0)
    worst = 0.0
    for k in range(300):
        g = rng.random((4, 4)) < rng.uniform(0, 1)
        if k % 50 == 0:
            g[:] = k % 100 == 0  # empty and full ground truth
        p = rng.random((4, 4))
        if k % 7 == 0:
            p = np.round(p * 4) / 4  # values landing exactly on thresholds
        worst = max(worst, abs(M.e_measure(p, g) - e_measure_oracle(p, g)))
    assert worst <= 1e-9


def test_weighted_f_matches_definition_oracle_on_8x8():
    g = np.zeros((8, 8), bool)
    g[2:6, 3:7] = True
    g[5, 2] = True
    # error constant over the foreground, so nearest-pixel ties cannot matter
    p = np.where(g, 0.7, 0.0)
    rng = np.random.default_rng(1)
    p[~g] = rng.uniform(0, 0.6, (~g).sum())
    assert abs(M.weighted_f_beta(p, g) - weighted_f_oracle(p, g)) <= 1e-6


def test_empty_ground_truth_conventions():
    g = np.zeros((6, 6), bool)
    p = np.full((6, 6), 0.25)
    with pytest.warns(RuntimeWarning):
        assert M.weighted_f_beta(p, g) == 0.0
    assert M.s_measure(p, g) == pytest.approx(0.75)
    assert M.e_measure(np.zeros((6, 6)), g) == 1.0


def test_shape_mismatch():
    with pytest.raises(DimensionError):
        M.mae(np.zeros((3, 3)), np.zeros((3, 4), bool))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (5, 5), elements=st.floats(0, 1)), st.integers(0, 2 ** 32 - 1))
def test_mae_and_iou_permutation_invariant(p, seed):
    g = np.random.default_rng(seed).random((5, 5)) < 0.4
    perm = np.random.default_rng(seed + 1).permutation(25)
    pp, gp = p.ravel()[perm].reshape(5, 5), g.ravel()[perm].reshape(5, 5)
    assert M.mae(p, g) == pytest.approx(M.mae(pp, gp), abs=1e-15)
    assert M.iou(p, g) == M.iou(pp, gp)


def test_normalize_prediction():
    np.testing.assert_allclose(M.normalize_prediction(np.array([2.0, 4.0, 3.0])), [0, 1, 0.5])
    np.testing.assert_array_equal(M.normalize_prediction(np.full(3, 0.4)), np.full(3, 0.4))


def test_report_format():
    rep = M.EvalReport()
    g = blob()
    rep.add("a", g.astype(float), g)
    rep.add("b", 1.0 - g, g)
    lines = rep.records().strip().splitlines()
    assert lines[0] == "image,fwb,mae,s,e,iou"
    assert [l.split(",")[0] for l in lines[1:]] == ["a", "b", "MEAN"]
    assert "F_β^w" in rep.table() and "MEAN" in rep.table()
    assert "caption" in M.side_by_side({"caption": rep, "codebook": rep})


def test_headline_row_format():
    # summary rows render three decimals
    rep = M.EvalReport()
    rep.ids, rep.rows = ["x"], [{"fwb": 0.729, "mae": 0.07, "s": 0.8, "e": 0.85, "iou": 0.6}]
    assert "0.729" in rep.table()


# -- cross-check against the community reference implementation ---------------
def test_matches_reference_package():
    sod = pytest.importorskip("py_sod_metrics")
    for seed in range(6):
        g = blob(24, seed)
        rng = np.random.default_rng(seed)
        soft = np.clip(g * 0.8 + rng.normal(0, 0.2, g.shape), 0, 1)
        pred8 = np.round(soft * 255).astype(np.uint8)
        gt8 = g.astype(np.uint8) * 255
        p = M.normalize_prediction(pred8 / 255.0)
        for ours, ref in ((M.weighted_f_beta, sod.WeightedFmeasure()), (M.s_measure, sod.Smeasure()),
                          (M.mae, sod.MAE())):
            ref.step(pred=pred8, gt=gt8)
            key = {"WeightedFmeasure": "wfm", "Smeasure": "sm", "MAE": "mae"}[type(ref).__name__]
            assert ours(p, g) == pytest.approx(float(ref.get_results()[key]), abs=1e-6)
