import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lad import nn
from lad import tensor as T
from lad.tensor import Tensor, grad_check


def rng(seed=0):
    return np.random.default_rng(seed)


def test_matmul_identity_and_basis():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(T.matmul(Tensor(np.eye(2)), a).data, a.data)
    np.testing.assert_array_equal(T.matmul(Tensor([[1.0, 0.0]]), Tensor([[2.0], [3.0]])).data, [[2.0]])


def test_matmul_shape_error_names_shapes():
    with pytest.raises(T.ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_matmul_gradient_matches_finite_differences():
    r = rng(1)
    w = r.normal(size=(3, 2))
    err = grad_check(lambda a, b: T.sum(T.mul(T.matmul(a, b), Tensor(w))),
                     [r.normal(size=(3, 4)), r.normal(size=(4, 2))])
    assert err <= 1e-6


def test_softmax_examples():
    np.testing.assert_allclose(T.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])
    p = T.softmax(Tensor([1000.0, 0.0])).data
    assert np.all(np.isfinite(p)) and p[0] == 1.0 and p[1] < 1e-300
    p = T.softmax(Tensor([3.0, 7.0, 5.0]), mask=[True, False, True]).data
    expect = np.array([math.exp(3), 0.0, math.exp(5)]) / (math.exp(3) + math.exp(5))
    np.testing.assert_allclose(p, expect, rtol=1e-14)
    assert p[1] == 0.0


def test_softmax_fully_masked_row_raises():
    with pytest.raises(ValueError):
        T.softmax(Tensor([[1.0, 2.0]]), mask=[[False, False]])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 9), st.integers(0, 10_000))
def test_softmax_rows_are_distributions(rows, cols, seed):
    r = rng(seed)
    x = r.normal(scale=30, size=(rows, cols))
    mask = r.random((rows, cols)) < 0.6
    mask[np.arange(rows), r.integers(0, cols, rows)] = True
    p = T.softmax(Tensor(x), mask=mask).data
    assert np.all(p >= 0)
    assert np.all(p[~mask] == 0.0)
    assert np.max(np.abs(p.sum(axis=1) - 1.0)) <= 1e-12


def test_softmax_gradient():
    r = rng(2)
    w = r.normal(size=(3, 5))
    mask = np.ones((3, 5), bool)
    mask[0, 1] = False
    assert grad_check(lambda x: T.sum(T.mul(T.softmax(x, mask), Tensor(w))), [r.normal(size=(3, 5))]) <= 1e-6


def test_cross_entropy_examples():
    assert abs(T.cross_entropy(Tensor(np.zeros((1, 4))), [2]).item() - math.log(4)) < 1e-12
    logits = 50.0 * np.eye(3)
    assert T.cross_entropy(Tensor(logits), [0, 1, 2]).item() <= 1e-10
    with pytest.raises(ValueError):
        T.cross_entropy(Tensor(np.zeros((1, 4))), [4])


def test_cross_entropy_gradient_is_softmax_minus_onehot():
    r = rng(3)
    x = r.normal(size=(2, 5))
    t = Tensor(x, requires_grad=True)
    T.cross_entropy(t, [1, 4]).backward()
    p = np.exp(x) / np.exp(x).sum(axis=1, keepdims=True)
    onehot = np.zeros_like(p)
    onehot[[0, 1], [1, 4]] = 1
    np.testing.assert_allclose(t.grad, (p - onehot) / 2, rtol=1e-12, atol=1e-15)
    assert grad_check(lambda z: T.cross_entropy(z, [1, 4]), [x]) <= 1e-6


def test_layer_norm_examples():
    one, zero = Tensor(np.ones(4)), Tensor(np.zeros(4))
    np.testing.assert_array_equal(T.layer_norm(Tensor(np.full((2, 4), 3.0)), one, zero).data, 0.0)
    y = T.layer_norm(Tensor([[1.0, -1.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2))).data
    np.testing.assert_allclose(y, [[1.0, -1.0]], atol=1e-5)
    with pytest.raises(T.ShapeError):
        T.layer_norm(Tensor([[1.0]]), Tensor(np.ones(1)), Tensor(np.zeros(1)))


def test_layer_norm_gradient():
    r = rng(4)
    w = r.normal(size=(3, 6))
    err = grad_check(lambda x, g, b: T.sum(T.mul(T.layer_norm(x, g, b), Tensor(w))),
                     [r.normal(size=(3, 6)), r.normal(size=6), r.normal(size=6)])
    assert err <= 1e-5


def _mha_params(dim, heads, seed=0):
    ps = nn.ParamSet()
    nn.add_attention(ps, "a", dim, heads, np.random.default_rng(seed))
    return ps


def test_mha_single_key_is_projected_value():
    ps = _mha_params(8, 2)
    r = rng(5)
    q = Tensor(r.normal(size=(3, 8)))
    kv = Tensor(r.normal(size=(1, 8)))
    out = nn.multi_head_attention(ps, "a", q, kv, heads=2).data
    v = kv.data @ ps["a.v.w"].data + ps["a.v.b"].data
    expect = v @ ps["a.o.w"].data + ps["a.o.b"].data
    np.testing.assert_allclose(out, np.repeat(expect, 3, axis=0), rtol=1e-12)


def test_mha_identity_projections_pick_aligned_key():
    dim = 4
    ps = _mha_params(dim, 1)
    for part in "qkvo":
        ps[f"a.{part}.w"].data = np.eye(dim)
    keys = 20.0 * np.eye(dim)[:3]
    q = Tensor(20.0 * np.eye(dim)[[1]])
    out = nn.multi_head_attention(ps, "a", q, Tensor(keys), heads=1).data
    np.testing.assert_allclose(out[0], keys[1], atol=1e-6)


def test_mha_indivisible_heads_is_config_error():
    with pytest.raises(nn.ConfigError):
        _mha_params(6, 4)


def test_mha_gradient_3x8():
    ps = _mha_params(8, 2, seed=1)
    r = rng(6)
    w = r.normal(size=(3, 8))
    names = ps.names()

    def f(q, kv, *weights):
        for n, t in zip(names, weights):
            ps._params[n] = t
        return T.sum(T.mul(nn.multi_head_attention(ps, "a", q, kv, heads=2), Tensor(w)))

    inputs = [r.normal(size=(3, 8)), r.normal(size=(3, 8))] + [ps[n].data.copy() for n in names]
    assert grad_check(f, inputs) <= 1e-5


def test_mha_attention_rows_sum_to_one():
    r = rng(7)
    q, k = r.normal(size=(2, 3, 4, 5)), r.normal(size=(2, 3, 6, 5))
    mask = r.random((2, 1, 4, 6)) < 0.7
    mask[..., 0] = True
    p = T.attention_weights(q, k, mask)
    assert np.max(np.abs(p.sum(-1) - 1)) <= 1e-12


def test_attention_bias_gradient():
    r = rng(8)
    w = r.normal(size=(1, 2, 3, 4))
    mask = np.ones((1, 1, 3, 5), bool)
    mask[..., 4] = False
    err = grad_check(lambda q, k, v, b: T.sum(T.mul(T.attention(q, k, v, mask, b), Tensor(w))),
                     [r.normal(size=(1, 2, 3, 4)), r.normal(size=(1, 2, 5, 4)),
                      r.normal(size=(1, 2, 5, 4)), r.normal(size=(1, 2, 3, 5))])
    assert err <= 1e-5


def test_gather_weighted_and_take_gradients():
    r = rng(9)
    idx = np.array([[0, 2, 3], [1, 1, 0]])
    wts = np.array([[0.5, 0.5, 0.0], [0.25, 0.25, 0.5]])
    w = r.normal(size=(2, 3))
    assert grad_check(lambda p: T.sum(T.mul(T.gather_weighted(p, idx, wts), Tensor(w))),
                      [r.normal(size=(4, 3))]) <= 1e-6
    w2 = r.normal(size=(2, 2, 3))
    assert grad_check(lambda p: T.sum(T.mul(T.take(p, [[0, 3], [3, 3]]), Tensor(w2))),
                      [r.normal(size=(4, 3))]) <= 1e-6


def test_grad_check_of_sum_is_exact():
    assert grad_check(lambda x: T.sum(x), [np.array([0.5, -2.0, 3.25])]) <= 1e-10


def test_grad_check_cross_entropy_of_ffn():
    r = rng(10)
    ps = nn.ParamSet()
    nn.add_ffn(ps, "f", 6, 12, 4, r)
    names = ps.names()

    def f(x, *weights):
        for n, t in zip(names, weights):
            ps._params[n] = t
        return T.cross_entropy(nn.ffn(ps, "f", x), [0, 3, 1])

    assert grad_check(f, [r.normal(size=(3, 6))] + [ps[n].data.copy() for n in names]) <= 1e-5


def test_ops_are_deterministic():
    r = rng(11)
    x = r.normal(size=(4, 7))
    g, b = np.ones(7), np.zeros(7)
    a = T.layer_norm(Tensor(x), Tensor(g), Tensor(b)).data
    c = T.layer_norm(Tensor(x), Tensor(g), Tensor(b)).data
    assert a.tobytes() == c.tobytes()


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with T.no_grad():
        y = T.sum(T.mul(x, 2.0))
    assert not y.requires_grad and y._parents == ()
