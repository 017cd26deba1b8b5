import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metricdst.core import DataError
from metricdst.embedder import EmbeddingModel, embed
from metricdst.pseudolabel import classify, knn_confidence, knn_confidences, pseudolabel_pool
import oracles


def test_all_positive_neighbours_at_distance_zero():
    ref = np.full((5, 2), 0.3)
    assert knn_confidence([0.3, 0.3], ref, [1] * 5, 5) == 1.0


def test_all_negative_neighbours_at_distance_zero():
    ref = np.full((5, 2), 0.3)
    assert knn_confidence([0.3, 0.3], ref, [0] * 5, 5) == 0.0


def test_hand_placed_neighbours():
    r2 = math.sqrt(2.0)
    # normalised distances 0.1, 0.2, 0.2, 0.3, 0.4 with labels 1, 1, 1, 0, 0
    ref = np.array([[0.1 * r2, 0.0], [0.2 * r2, 0.0], [0.0, 0.2 * r2], [0.3 * r2, 0.0],
                    [0.0, 0.4 * r2], [1.0, 1.0]])
    labels = [1, 1, 1, 0, 0, 1]
    c = knn_confidence([0.0, 0.0], ref, labels, 5)
    assert c == pytest.approx((0.9 + 0.8 + 0.8 + 0.3 + 0.4) / 5, abs=1e-12)
    assert c == pytest.approx(0.64, abs=1e-12)


@pytest.mark.parametrize("c,label", [(0.51, 1), (0.5, 0), (0.0, 0), (1.0, 1)])
def test_classify_threshold(c, label):
    assert classify(c) == label


def test_empty_pool():
    m = EmbeddingModel.initialize(2)
    assert pseudolabel_pool(m, np.zeros((3, 2)), [0, 1, 0], np.zeros((0, 2))) == []


def test_duplicate_of_labeled_sample():
    m = EmbeddingModel.initialize(2, seed=3)
    rng = np.random.default_rng(0)
    lx = rng.normal(size=(12, 2))
    ly = np.array([0, 1] * 6)
    pls = pseudolabel_pool(m, lx, ly, lx[[4]], k=5)
    zl = embed(m, lx)
    idx, dist = oracles.knn_scan(zl[4].tolist(), zl.tolist(), 5)
    assert dist[0] == 0.0 and idx[0] == 4
    rest = sum(ly[i] * (1 - d / math.sqrt(2)) + (1 - ly[i]) * d / math.sqrt(2)
               for i, d in zip(idx[1:], dist[1:]))
    assert pls[0].confidence == pytest.approx((ly[4] + rest) / 5, abs=1e-12)


def test_pool_order_and_indices_follow_input():
    m = EmbeddingModel.initialize(2, seed=1)
    rng = np.random.default_rng(2)
    pls = pseudolabel_pool(m, rng.normal(size=(10, 2)), [0, 1] * 5, rng.normal(size=(4, 2)),
                           k=3, pool_indices=[40, 10, 30, 20])
    assert [p.sample_index for p in pls] == [40, 10, 30, 20]
    for p in pls:
        assert p.predicted_label == int(p.confidence > 0.5)
        assert 0.0 <= p.confidence <= 1.0
        assert all(0.0 < v < 1.0 for v in p.embedding)


def test_k_out_of_range():
    with pytest.raises(DataError):
        knn_confidences(np.zeros((1, 2)), np.zeros((3, 2)), [0, 1, 0], 0)
    with pytest.raises(DataError):
        knn_confidences(np.zeros((1, 2)), np.zeros((3, 2)), [0, 1, 0], 4)


@st.composite
def knn_instance(draw, grid=False):
    n = draw(st.integers(1, 500 if not grid else 60))
    k = draw(st.integers(1, min(n, 9)))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    if grid:
        # coarse grid coordinates force many exact distance ties
        ref = rng.integers(0, 4, (n, 2)) / 4.0
        q = rng.integers(0, 4, (6, 2)) / 4.0
    else:
        ref = rng.random((n, 2))
        q = rng.random((6, 2))
    y = rng.integers(0, 2, n)
    return q, ref, y, k


@given(knn_instance())
@settings(max_examples=40)
def test_knn_matches_exhaustive_scan(inst):
    q, ref, y, k = inst
    conf, idx = knn_confidences(q, ref, y, k)
    for row, c, nn in zip(q, conf, idx):
        ref_idx, _ = oracles.knn_scan(row.tolist(), ref.tolist(), k)
        assert nn.tolist() == ref_idx
        assert c == pytest.approx(oracles.knn_confidence(row.tolist(), ref.tolist(),
                                                         y.tolist(), k), abs=1e-12)


@given(knn_instance(grid=True))
@settings(max_examples=60)
def test_knn_ties_break_to_lower_index(inst):
    q, ref, y, k = inst
    _, idx = knn_confidences(q, ref, y, k)
    for row, nn in zip(q, idx):
        assert nn.tolist() == oracles.knn_scan(row.tolist(), ref.tolist(), k)[0]


@given(knn_instance())
@settings(max_examples=30)
def test_label_flip_symmetry(inst):
    q, ref, y, k = inst
    a, _ = knn_confidences(q, ref, y, k)
    b, _ = knn_confidences(q, ref, 1 - y, k)
    assert np.allclose(a, 1 - b, atol=1e-12)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.integers(0, 1))
def test_k1_is_affine_in_normalised_distance(qx, qy, rx, ry, y):
    c = knn_confidence([qx, qy], [[rx, ry]], [y], 1)
    d = math.hypot(qx - rx, qy - ry) / math.sqrt(2)
    assert c == pytest.approx(y * (1 - d) + (1 - y) * d, abs=1e-12)
