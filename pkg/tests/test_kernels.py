import numpy as np
import pytest

from lad import kernels

pytestmark = pytest.mark.skipif(kernels.compiled_backend is None, reason="compiled kernels not built")

C, P = kernels.compiled_backend, kernels.python_backend


def test_layer_norm_backends_agree():
    r = np.random.default_rng(0)
    x = r.normal(size=(7, 5))
    g, b = r.normal(size=5), r.normal(size=5)
    for a, e in zip(C.layer_norm_fwd(x, g, b, 1e-5), P.layer_norm_fwd(x, g, b, 1e-5)):
        np.testing.assert_allclose(a, e, rtol=1e-12, atol=1e-12)
    _, xhat, rstd = P.layer_norm_fwd(x, g, b, 1e-5)
    gy = r.normal(size=(7, 5))
    for a, e in zip(C.layer_norm_bwd(gy, xhat, rstd, g), P.layer_norm_bwd(gy, xhat, rstd, g)):
        np.testing.assert_allclose(a, e, rtol=1e-12, atol=1e-12)


def test_softmax_backends_agree_with_and_without_mask():
    r = np.random.default_rng(1)
    x = r.normal(size=(6, 4)) * 10
    mask = (r.random((6, 4)) > 0.4).astype(np.uint8)
    mask[:, 1] = 1
    for m in (mask, np.zeros((0, 4), dtype=np.uint8)):
        np.testing.assert_allclose(C.softmax_fwd(x, m), P.softmax_fwd(x, m), rtol=1e-12, atol=1e-15)
    p = P.softmax_fwd(x, mask)
    gy = r.normal(size=(6, 4))
    np.testing.assert_allclose(C.softmax_bwd(gy, p), P.softmax_bwd(gy, p), rtol=1e-12, atol=1e-15)


def test_softmax_all_masked_row_raises_in_both():
    x = np.zeros((2, 3))
    mask = np.array([[1, 0, 0], [0, 0, 0]], dtype=np.uint8)
    for be in (C, P):
        with pytest.raises(ValueError):
            be.softmax_fwd(x, mask)


def test_softmax_nan_row_propagates_in_both():
    x = np.array([[0.0, 1.0, 2.0], [np.nan, 1.0, 0.0]])
    mask = np.ones((2, 3), dtype=np.uint8)
    for be in (C, P):
        p = be.softmax_fwd(x, mask)
        assert np.all(np.isnan(p[1]))
        np.testing.assert_allclose(p[0], np.exp([0, 1, 2]) / np.exp([0, 1, 2]).sum())


def test_gather_weighted_backends_agree():
    r = np.random.default_rng(2)
    pool = r.normal(size=(9, 3))
    idx = r.integers(0, 9, size=(5, 4)).astype(np.int64)
    w = r.random((5, 4))
    np.testing.assert_allclose(C.gather_weighted_fwd(pool, idx, w), P.gather_weighted_fwd(pool, idx, w), rtol=1e-12)
    gy = r.normal(size=(5, 3))
    np.testing.assert_allclose(C.gather_weighted_bwd(gy, idx, w, 9), P.gather_weighted_bwd(gy, idx, w, 9),
                               rtol=1e-12, atol=1e-15)


def test_dijkstra_backends_agree_on_random_graphs():
    from lad.env.planner import _csr
    from lad.selftest import random_graph
    r = np.random.default_rng(3)
    for _ in range(30):
        n = int(r.integers(2, 20))
        adj = random_graph(r, n, int(r.integers(0, n)))
        _, _, indptr, indices, lengths = _csr(adj)
        src = int(r.integers(n))
        np.testing.assert_array_equal(C.dijkstra_csr(indptr, indices, lengths, src),
                                      P.dijkstra_csr(indptr, indices, lengths, src))


def test_dijkstra_unreachable_is_inf():
    indptr = np.array([0, 1, 2, 2], dtype=np.int64)
    indices = np.array([1, 0], dtype=np.int64)
    lengths = np.array([2.0, 2.0])
    for be in (C, P):
        np.testing.assert_array_equal(be.dijkstra_csr(indptr, indices, lengths, 0), [0.0, 2.0, np.inf])


def test_nearest_centroid_agrees_and_breaks_ties_low():
    r = np.random.default_rng(4)
    pts, cen = r.normal(size=(30, 4)), r.normal(size=(5, 4))
    for a, e in zip(C.nearest_centroid(pts, cen), P.nearest_centroid(pts, cen)):
        np.testing.assert_allclose(a, e, rtol=1e-12)
    tie = np.array([[0.0, 0.0]])
    cen = np.array([[1.0, 0.0], [-1.0, 0.0]])
    for be in (C, P):
        assert be.nearest_centroid(tie, cen)[0][0] == 0
