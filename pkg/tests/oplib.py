"""Gradient-check cases shared by the unit and acceptance suites.

Each case maps a random generator to ``(build, params)`` where ``build()``
returns a 1x1 loss and ``params`` are the leaves to differentiate.  Inputs
are drawn from [-2, 2]; ops with kinks keep their inputs away from them.
"""

import numpy as np

from padel import tensor as T
from padel.contrastive import info_nce
from padel.pooling import LSTMParams, SubgraphPooling, bce_loss, bilstm_layer, bilstm_layer_reference, ce_loss, \
    pack_views
from padel.position import PositionTable
from padel.vsubgae import VSubGAE, normalize_adjacency
from padel.graph import BaseGraph, induced_adjacency


def _u(rng, *shape, lo=-2.0, hi=2.0):
    return rng.uniform(lo, hi, size=shape)


def _away(rng, *shape, points=(0.0,), gap=0.05):
    x = _u(rng, *shape)
    for p in points:
        close = np.abs(x - p) < gap
        x[close] = p + gap * np.sign(x[close] - p + 1e-12) * 2
    return x


def _p(x, name=None):
    return T.parameter(x, name=name)


def _weighted(out, rng):
    """Reduce to a scalar with fixed random weights so every output entry matters."""
    R = rng.uniform(-1, 1, size=out.shape)
    return T.sum_all(T.pointwise_mul(out, T.Tensor(R)))


def _unary(fn, draw=_u):
    def case(rng):
        r, c = rng.integers(1, 5, size=2)
        a = _p(draw(rng, r, c))
        R = rng.uniform(-1, 1, size=(r, c))
        return (lambda: T.sum_all(T.pointwise_mul(fn(a), T.Tensor(R)))), [a]
    return case


def _binary(fn, shape_b):
    def case(rng):
        r, c, k = rng.integers(1, 5, size=3)
        a = _p(_u(rng, r, c))
        b = _p(_u(rng, *shape_b(r, c, k)))
        R = rng.uniform(-1, 1, size=fn(a, b).shape)
        return (lambda: T.sum_all(T.pointwise_mul(fn(a, b), T.Tensor(R)))), [a, b]
    return case


def _gather(rng):
    r, c = rng.integers(1, 5, size=2)
    a = _p(_u(rng, r, c))
    idx = rng.integers(0, r, size=int(rng.integers(1, 7)))
    R = rng.uniform(-1, 1, size=(idx.size, c))
    return (lambda: T.sum_all(T.pointwise_mul(T.gather_rows(a, idx), T.Tensor(R)))), [a]


def _slices(rng):
    r, c = rng.integers(2, 6, size=2)
    a = _p(_u(rng, r, c))
    R1 = rng.uniform(-1, 1, size=(r - 1, c))
    R2 = rng.uniform(-1, 1, size=(r, c - 1))

    def build():
        s1 = T.sum_all(T.pointwise_mul(T.slice_rows(a, 1, r), T.Tensor(R1)))
        s2 = T.sum_all(T.pointwise_mul(T.slice_cols(a, 0, c - 1), T.Tensor(R2)))
        return T.add(s1, s2)
    return build, [a]


def _concat(rng):
    r, c = rng.integers(1, 4, size=2)
    a, b = _p(_u(rng, r, c)), _p(_u(rng, r, c + 1))
    d = _p(_u(rng, r + 1, c))
    R1 = rng.uniform(-1, 1, size=(r, 2 * c + 1))
    R2 = rng.uniform(-1, 1, size=(2 * r + 1, c))

    def build():
        s1 = T.sum_all(T.pointwise_mul(T.concat_cols(a, b), T.Tensor(R1)))
        s2 = T.sum_all(T.pointwise_mul(T.concat_rows(a, d), T.Tensor(R2)))
        return T.add(s1, s2)
    return build, [a, b, d]


def _reductions(rng):
    r, c = rng.integers(1, 5, size=2)
    a = _p(_u(rng, r, c))
    R = rng.uniform(-1, 1, size=(1, c))
    R2 = rng.uniform(-1, 1, size=(r, 1))

    def build():
        x = T.sum_all(T.pointwise_mul(T.mean_rows(a), T.Tensor(R)))
        y = T.sum_all(T.pointwise_mul(T.sum_rows(a), T.Tensor(R2)))
        return T.add(T.add(x, y), T.mean_all(T.pointwise_mul(a, a)))
    return build, [a]


def _reshape_transpose(rng):
    r, c = rng.integers(1, 5, size=2)
    a = _p(_u(rng, r, c))
    R = rng.uniform(-1, 1, size=(c, r))
    R2 = rng.uniform(-1, 1, size=(1, r * c))

    def build():
        return T.add(T.sum_all(T.pointwise_mul(T.transpose(a), T.Tensor(R))),
                     T.sum_all(T.pointwise_mul(T.reshape(a, 1, r * c), T.Tensor(R2))))
    return build, [a]


def _const_matmul(rng):
    import scipy.sparse as sp
    r, c, k = rng.integers(1, 5, size=3)
    a = _p(_u(rng, r, c))
    M = _u(rng, k, r)
    Ms = sp.csr_matrix(M * (rng.random(M.shape) < 0.6))
    R = rng.uniform(-1, 1, size=(k, c))
    return (lambda: T.add(T.sum_all(T.pointwise_mul(T.const_matmul(M, a), T.Tensor(R))),
                          T.sum_all(T.pointwise_mul(T.const_matmul(Ms, a), T.Tensor(R))))), [a]


def _logsumexp(rng):
    r, c = rng.integers(1, 5, size=2)
    a = _p(_u(rng, r, c))
    mask = rng.random((r, c)) < 0.7
    mask[np.arange(r), rng.integers(0, c, size=r)] = True
    R = rng.uniform(-1, 1, size=(r, 1))
    return (lambda: T.add(T.sum_all(T.pointwise_mul(T.logsumexp_rows(a), T.Tensor(R))),
                          T.sum_all(T.pointwise_mul(T.logsumexp_rows(a, mask), T.Tensor(R))))), [a]


def _l2norm(rng):
    r, c = rng.integers(1, 5, size=2)
    x = _u(rng, r, c)
    x[np.linalg.norm(x, axis=1) < 0.3] += 0.5
    a = _p(x)
    R = rng.uniform(-1, 1, size=(r, c))
    return (lambda: T.sum_all(T.pointwise_mul(T.l2_normalize_rows(a), T.Tensor(R)))), [a]


def _bce(rng):
    r, c = rng.integers(1, 5, size=2)
    a = _p(_u(rng, r, c))
    Y = (rng.random((r, c)) < 0.5).astype(float)
    return (lambda: T.sum_all(T.bce_with_logits(a, Y))), [a]


def _log(rng):
    r, c = rng.integers(1, 5, size=2)
    a = _p(rng.uniform(0.2, 2.0, size=(r, c)))
    R = rng.uniform(-1, 1, size=(r, c))
    return (lambda: T.sum_all(T.pointwise_mul(T.log(a), T.Tensor(R)))), [a]


def _scalars(rng):
    r, c = rng.integers(1, 5, size=2)
    a = _p(_u(rng, r, c))
    s, k = rng.uniform(-2, 2, size=2)
    R = rng.uniform(-1, 1, size=(r, c))
    return (lambda: T.sum_all(T.pointwise_mul(T.neg(T.add_scalar(T.scale(a, s), k)), T.Tensor(R)))), [a]


OPS = {
    "matmul": _binary(T.matmul, lambda r, c, k: (c, k)),
    "add": _binary(T.add, lambda r, c, k: (r, c)),
    "row_broadcast_add": _binary(T.row_broadcast_add, lambda r, c, k: (1, c)),
    "pointwise_mul": _binary(T.pointwise_mul, lambda r, c, k: (r, c)),
    "scale_add_scalar_neg": _scalars,
    "relu": _unary(T.relu, lambda rng, *s: _away(rng, *s)),
    "sigmoid": _unary(T.sigmoid),
    "tanh": _unary(T.tanh),
    "exp": _unary(T.exp),
    "log": _log,
    "clip": _unary(lambda a: T.clip(a, -1.0, 1.0), lambda rng, *s: _away(rng, *s, points=(-1.0, 1.0))),
    "concat": _concat,
    "slice": _slices,
    "gather_rows": _gather,
    "reductions": _reductions,
    "reshape_transpose": _reshape_transpose,
    "const_matmul": _const_matmul,
    "logsumexp_rows": _logsumexp,
    "l2_normalize_rows": _l2norm,
    "bce_with_logits": _bce,
}


# ---------------------------------------------------------------- composite blocks


def random_views(rng, num_nodes, count, max_size=5):
    g = BaseGraph.from_edges(num_nodes, [(i, j) for i in range(num_nodes) for j in range(i + 1, num_nodes)
                                         if rng.random() < 0.35])
    views = []
    for _ in range(count):
        ids = np.sort(rng.choice(num_nodes, size=int(rng.integers(1, max_size + 1)), replace=False))
        views.append((ids, induced_adjacency(g, ids)))
    return views


def gcn_layer(rng):
    """``mean(relu(A_norm [X,P] W_np W_fc))`` through the pooling neighbor branch."""
    d, n = 2, 7
    pool = SubgraphPooling(d, 4, 2, rng)
    packed = pack_views(random_views(rng, n, 3))
    feats = _p(_u(rng, n, 2 * d))
    feats_rows = lambda: T.gather_rows(feats, packed.node_ids)
    R = rng.uniform(-1, 1, size=(3, 4))
    build = lambda: T.sum_all(T.pointwise_mul(pool.encode_np(feats_rows(), packed), T.Tensor(R)))
    return build, [feats, pool.W_np, pool.W_fc]


def _lstm_case(layer_index, fused):
    def case(rng):
        d_in, h = (3, 2) if layer_index == 1 else (4, 2)
        fwd, bwd = LSTMParams(rng, d_in, h, "f"), LSTMParams(rng, d_in, h, "b")
        for p in fwd.tensors() + bwd.tensors():
            p.data = rng.uniform(-0.8, 0.8, size=p.shape)
        lengths = rng.integers(1, 5, size=int(rng.integers(1, 4)))
        starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
        X = _p(_u(rng, int(lengths.sum()), d_in))
        layer = bilstm_layer if fused else bilstm_layer_reference
        R = rng.uniform(-1, 1, size=(int(lengths.sum()), 2 * h))
        build = lambda: T.sum_all(T.pointwise_mul(layer(X, starts, lengths, fwd, bwd), T.Tensor(R)))
        return build, [X] + fwd.tensors() + bwd.tensors()
    return case


def structure_branch(rng):
    """Both recurrent layers stacked, through ``encode_s`` and the head."""
    d, n = 3, 8
    pool = SubgraphPooling(d, 4, 2, rng)
    table = PositionTable(_u(rng, n, 5), d, rng)
    packed = pack_views(random_views(rng, n, 3))
    R = rng.uniform(-1, 1, size=(3, 4))
    build = lambda: T.sum_all(T.pointwise_mul(pool.encode_s(table.rows_for(packed.node_ids), packed),
                                              T.Tensor(R)))
    return build, [table.W_P] + pool.pooling_params()[2:]


def vsubgae_encoder(rng):
    d, n = 2, 5
    model = VSubGAE(n, d, rng)
    A = np.triu((rng.random((n, n)) < 0.5).astype(float), 1)
    A_norm = normalize_adjacency(A + A.T)
    feats = _p(_u(rng, n, 2 * d))
    eps = rng.standard_normal((n, 2 * d))
    R = rng.uniform(-1, 1, size=(n, 2 * d))

    def build():
        s = model.encode(feats, A_norm, eps)
        return T.sum_all(T.pointwise_mul(T.add(s.z, T.scale(s.log_sigma, 0.3)), T.Tensor(R)))
    return build, [feats] + model.encoder_params()


def infonce(rng):
    K = int(rng.integers(2, 6))
    pos, ex, ep = _p(_u(rng, K, 1)), _p(_u(rng, K, K - 1)), _p(_u(rng, K, K - 1))
    return (lambda: info_nce(pos, ex, ep)), [pos, ex, ep]


def ce(rng):
    r, c = int(rng.integers(1, 5)), int(rng.integers(2, 6))
    a = _p(_u(rng, r, c))
    Y = np.eye(c)[rng.integers(0, c, size=r)]
    return (lambda: ce_loss(a, Y)), [a]


def bce(rng):
    r, c = rng.integers(1, 5, size=2)
    a = _p(_u(rng, r, c))
    Y = (rng.random((r, c)) < 0.5).astype(float)
    return (lambda: bce_loss(a, Y)), [a]


BLOCKS = {
    "gcn_layer": gcn_layer,
    "lstm_layer1": _lstm_case(1, fused=True),
    "lstm_layer2": _lstm_case(2, fused=True),
    "lstm_reference": _lstm_case(1, fused=False),
    "structure_branch": structure_branch,
    "vsubgae_encoder": vsubgae_encoder,
    "info_nce": infonce,
    "ce_loss": ce,
    "bce_loss": bce,
}
