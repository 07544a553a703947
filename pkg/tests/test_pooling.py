import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import check_grads
from oplib import random_views
from padel import tensor as T
from padel.pooling import (LSTMParams, SubgraphPooling, bce_loss, bilstm_layer, bilstm_layer_reference, ce_loss,
                           classify, micro_f1, multi_hot, one_hot, pack_views)
from padel.position import PositionTable
from padel.tensor import Tape, Tensor
from padel.vsubgae import normalize_adjacency


def _model(d=3, hidden=4, classes=2, seed=0, n=8):
    rng = np.random.default_rng(seed)
    pool = SubgraphPooling(d, hidden, classes, rng)
    X = T.parameter(rng.normal(size=(n, d)))
    table = PositionTable(rng.normal(size=(n, 5)), d, rng)
    return rng, pool, X, table


def test_pack_views_layout():
    A = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    packed = pack_views([(np.array([5, 2, 9]), A), (np.array([1]), np.zeros((1, 1)))])
    np.testing.assert_array_equal(packed.node_ids, [2, 5, 9, 1])
    np.testing.assert_array_equal(packed.starts, [0, 3])
    np.testing.assert_array_equal(packed.lengths, [3, 1])
    # ids were sorted, so the adjacency is permuted to match: 5 was the hub
    perm = [1, 0, 2]
    np.testing.assert_allclose(packed.A_norm.toarray()[:3, :3], normalize_adjacency(A[np.ix_(perm, perm)]))
    assert packed.A_norm[3, 3] == 1.0
    np.testing.assert_allclose(packed.pool.toarray(), [[1 / 3, 1 / 3, 1 / 3, 0], [0, 0, 0, 1]])
    with pytest.raises(ValueError):
        pack_views([(np.array([], dtype=int), np.zeros((0, 0)))])


def test_single_node_view_np():
    rng, pool, X, table = _model()
    packed = pack_views([(np.array([4]), np.zeros((1, 1)))])
    e_np, _ = pool.encode(X, table, packed)
    feats = np.concatenate([X.data[4], table.rows_for([4]).data[0]])[None]
    expected = np.maximum(feats @ pool.W_np.data @ pool.W_fc.data, 0)
    np.testing.assert_allclose(e_np.data, expected, atol=1e-14)


def test_identical_features_complete_graph():
    rng, pool, _, _ = _model()
    f = Tensor(np.tile(rng.normal(size=(1, 6)), (4, 1)))
    packed = pack_views([(np.arange(4), np.ones((4, 4)) - np.eye(4))])
    H = T.const_matmul(packed.A_norm, T.matmul(f, pool.W_np))
    rows = T.relu(T.matmul(H, pool.W_fc)).data
    np.testing.assert_allclose(rows, np.tile(rows[:1], (4, 1)), atol=1e-14)
    np.testing.assert_allclose(pool.encode_np(f, packed).data, rows[:1], atol=1e-14)


@settings(max_examples=30)
@given(seed=st.integers(0, 2**31))
def test_encode_np_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    pool = SubgraphPooling(2, 4, 2, rng)
    A = np.triu((rng.random((6, 6)) < 0.4).astype(float), 1)
    A = A + A.T
    F = rng.normal(size=(6, 4))
    perm = rng.permutation(6)
    base = pack_views([(np.arange(6), A)])
    shuffled = pack_views([(np.arange(6), A)])
    shuffled.A_norm = base.A_norm[perm][:, perm]
    a = pool.encode_np(Tensor(F), base).data
    b = pool.encode_np(Tensor(F[perm]), shuffled).data
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_single_node_sequence_reads_same_element():
    rng = np.random.default_rng(1)
    f, b = LSTMParams(rng, 3, 2, "f"), LSTMParams(rng, 3, 2, "b")
    x = Tensor(rng.normal(size=(1, 3)))
    out = bilstm_layer(x, [0], [1], f, b).data
    # each direction sees exactly one step from the zero state
    for p, half in ((f, out[0, :2]), (b, out[0, 2:])):
        a = x.data @ p.Wx.data + p.b.data
        i, g, o = T._sigmoid(a[:, :2]), np.tanh(a[:, 4:6]), T._sigmoid(a[:, 6:])
        np.testing.assert_allclose(half, (o * np.tanh(i * g))[0], atol=1e-15)


def test_zero_positions_give_zero_structure_encoding():
    rng, pool, X, table = _model()
    table.W_P.data[:] = 0
    packed = pack_views(random_views(rng, 8, 4))
    _, e_s = pool.encode(X, table, packed)
    assert not e_s.data.any()


@pytest.mark.parametrize("seed", range(5))
def test_fused_lstm_matches_reference(seed):
    rng = np.random.default_rng(seed)
    f, b = LSTMParams(rng, 3, 2, "f"), LSTMParams(rng, 3, 2, "b")
    for p in f.tensors() + b.tensors():
        p.data = rng.normal(size=p.shape)
    lengths = rng.integers(1, 6, size=4)
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    X = T.parameter(rng.normal(size=(int(lengths.sum()), 3)))
    R = Tensor(rng.normal(size=(X.rows, 4)))
    grads = []
    for layer in (bilstm_layer, bilstm_layer_reference):
        with Tape() as tape:
            out = layer(X, starts, lengths, f, b)
            grads.append((out.data, tape.backward(T.sum_all(T.pointwise_mul(out, R)))))
    np.testing.assert_allclose(grads[0][0], grads[1][0], atol=1e-13)
    for p in [X] + f.tensors() + b.tensors():
        np.testing.assert_allclose(grads[0][1][p], grads[1][1][p], atol=1e-12)


def test_structure_encoding_deterministic_and_nonnegative():
    rng, pool, X, table = _model(seed=3)
    packed = pack_views(random_views(rng, 8, 5))
    a = pool.encode(X, table, packed)
    b = pool.encode(X, table, packed)
    for u, v in zip(a, b):
        assert u.data.tobytes() == v.data.tobytes()
        assert np.all(u.data >= 0)


def test_pooling_gradients_through_both_layers():
    rng, pool, X, table = _model(seed=4)
    packed = pack_views(random_views(rng, 8, 3))
    Y = one_hot([0, 1, 1], 2)
    build = lambda: ce_loss(pool.classify(*pool.encode(X, table, packed)), Y)
    assert check_grads(build, [X, table.W_P, pool.W_S] + pool.pooling_params()) < 1e-4


def test_classify_examples():
    z = Tensor(np.zeros((2, 3)))
    W = Tensor(np.random.default_rng(0).normal(size=(3, 2)))
    assert not classify(z, z, W).data.any()
    a, b = Tensor([[1.0, 2.0]]), Tensor([[0.5, -1.0]])
    np.testing.assert_array_equal(classify(a, b, Tensor(np.eye(2))).data, [[1.5, 1.0]])


def test_ce_examples():
    assert ce_loss(Tensor(np.zeros((3, 6))), one_hot([0, 3, 5], 6)).item() == pytest.approx(math.log(6), abs=1e-12)
    assert ce_loss(Tensor(np.zeros((1, 6))), one_hot([2], 6)).item() == pytest.approx(1.79176, abs=1e-5)
    logits = np.zeros((1, 3))
    logits[0, 1] = 30.0
    assert ce_loss(Tensor(logits), one_hot([1], 3)).item() < 1e-9
    rng = np.random.default_rng(0)
    L = rng.normal(size=(4, 3))
    Y = one_hot([0, 2, 1, 1], 3)
    assert ce_loss(Tensor(L + 7.5), Y).item() == pytest.approx(ce_loss(Tensor(L), Y).item(), abs=1e-12)
    with pytest.raises(ValueError):
        ce_loss(Tensor(L), np.ones((4, 3)))


def test_bce_examples():
    Y = multi_hot([(0, 3), (9,)], 10)
    assert bce_loss(Tensor(np.zeros((2, 10))), Y).item() == pytest.approx(10 * math.log(2), abs=1e-12)
    assert bce_loss(Tensor(60.0 * Y - 30.0), Y).item() < 1e-9


def test_micro_f1_examples():
    assert micro_f1(np.eye(3), [0, 1, 2], False) == 1.0
    assert micro_f1(np.eye(3), [1, 2, 0], False) == 0.0
    # TP=2, FP=1, FN=1
    logits = np.array([[5.0, 5.0, -5.0], [-5.0, -5.0, 5.0]])
    truth = np.array([[1, 0, 0], [0, 1, 1]])
    assert micro_f1(logits, truth, True) == pytest.approx(2 / 3)
    assert micro_f1(-np.ones((2, 3)) * 5, np.zeros((2, 3)), True) == 1.0
