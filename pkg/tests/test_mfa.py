import numpy as np
import pytest

from zscos import tensor as T
from zscos.errors import ConfigError, DimensionError, ModeError
from zscos.mfa import MFA, MFAConfig, TextMixer, token_match
from zscos.nn import ParamFactory


def token_match_oracle(v, u):
    """Loop-by-loop reading of: similarity, row min-max, keep >= 1/L_v, row softmax, weighted sum."""
    lv, lt = v.shape[0], u.shape[0]
    out = np.zeros((lv, u.shape[1]))
    for i in range(lv):
        s = [sum(v[i, k] * u[j, k] for k in range(v.shape[1])) for j in range(lt)]
        lo, hi = min(s), max(s)
        if hi == lo:
            norm = [0.0] * lt
        else:
            norm = [(x - lo) / (hi - lo) for x in s]
        kept = [x if x >= 1.0 / lv else 0.0 for x in norm]
        m = max(kept)
        e = [np.exp(x - m) for x in kept]
        z = sum(e)
        for j in range(lt):
            out[i] += (e[j] / z) * u[j]
    return out


def test_token_match_oracle_1000_instances():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for k in range(1000):
        lv, lt, d = rng.integers(1, 9), rng.integers(1, 7), rng.integers(1, 6)
        v = rng.standard_normal((lv, d))
        u = rng.standard_normal((lt, d))
        if k % 10 == 0:
            u[:] = u[0]  # every similarity in a row equal
        if k % 10 == 1:
            v[0] = 0.0  # one constant row
        got = token_match(T.Tensor(v), T.Tensor(u)).data
        worst = max(worst, np.max(np.abs(got - token_match_oracle(v, u))))
    assert worst <= 1e-12


def test_token_match_spec_example_shape_and_support():
    rng = np.random.default_rng(0)
    v, u = rng.standard_normal((5, 3)), rng.standard_normal((4, 3))
    out = token_match(T.Tensor(v), T.Tensor(u)).data
    assert out.shape == (5, 3)
    # rows are convex combinations of u, so they stay inside its bounding box
    assert np.all(out <= u.max(axis=0) + 1e-12) and np.all(out >= u.min(axis=0) - 1e-12)


def test_token_match_constant_rows_give_mean_token():
    u = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]])
    v = np.zeros((2, 2))
    np.testing.assert_allclose(token_match(T.Tensor(v), T.Tensor(u)).data,
                               np.tile(u.mean(axis=0), (2, 1)), atol=1e-15)


def test_token_match_width_mismatch():
    with pytest.raises(DimensionError):
        token_match(T.Tensor(np.ones((3, 2))), T.Tensor(np.ones((2, 3))))


def test_mixer_shapes():
    cfg = MFAConfig(caption_len=6, caption_dim=5, d=7)
    mixer = TextMixer(ParamFactory(np.random.default_rng(0)), cfg)
    assert mixer(T.Tensor(np.ones((6, 5)))).shape == (3, 7)
    assert mixer.W_half.shape == (3, 6)
    with pytest.raises(ConfigError):
        mixer(T.Tensor(np.ones((5, 5))))


def test_config_requires_even_caption_length():
    with pytest.raises(ConfigError):
        MFAConfig(caption_len=5)


def test_align_all_sets():
    cfg = MFAConfig(caption_len=4, caption_dim=3, d=6)
    mfa = MFA(ParamFactory(np.random.default_rng(1)), cfg, d_v=5)
    rng = np.random.default_rng(2)
    feats = {n: T.Tensor(rng.standard_normal((64 // n, 5))) for n in (4, 8, 16, 32)}
    cap, qry = mfa.align_all(feats, rng.standard_normal((4, 3)), training=True)
    assert cap.role == "caption" and qry.role == "query"
    assert list(cap) == [4, 8, 16, 32] and len(qry) == 4
    for n in cap:
        assert cap[n].shape == (64 // n, 6) == qry[n].shape
    none, only_q = mfa.align_all(feats, None, training=False)
    assert none is None
    np.testing.assert_array_equal(only_q[4].data, qry[4].data)
    with pytest.raises(ModeError):
        mfa.align_all(feats, None, training=True)


def test_query_is_small_gaussian():
    mfa = MFA(ParamFactory(np.random.default_rng(3)), MFAConfig(16, 48, 8), d_v=4)
    assert mfa.query.shape == (16, 48)
    assert 0.015 < mfa.query.data.std() < 0.025
