"""Structure-aware subgraph pooling, classification heads and metrics.

Two encodings per subgraph view:

* ``e_np`` - mean over nodes of ``relu(GCN([X, P], A) @ W_fc)``;
* ``e_s``  - ``relu`` of the final forward/backward hidden states of a
  two-layer bidirectional LSTM run over the nodes' position rows in
  ascending node-id order.

Views are packed into one batch: node rows are stacked, the normalized
adjacency becomes block diagonal, and each view is a contiguous segment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import tensor as T
from .tensor import Function, Tensor
from .vsubgae import normalize_adjacency


# ---------------------------------------------------------------- packing


@dataclass
class PackedViews:
    node_ids: np.ndarray        # stacked global ids, views back to back
    starts: np.ndarray
    lengths: np.ndarray
    A_norm: sp.csr_matrix       # block-diagonal normalized adjacency
    pool: sp.csr_matrix         # (views x rows) averaging matrix

    @property
    def num_views(self) -> int:
        return self.starts.size


def pack_views(views: Sequence[tuple[np.ndarray, np.ndarray]]) -> PackedViews:
    """Stack ``(node_ids, adjacency)`` views; node ids are sorted per view."""
    ids, lengths, rr, cc, vv = [], [], [], [], []
    offset = 0
    for nodes, A in views:
        nodes = np.asarray(nodes, dtype=np.int64)
        if nodes.size == 0:
            raise ValueError("empty view")
        order = np.argsort(nodes, kind="stable")
        if not np.all(order == np.arange(nodes.size)):
            nodes = nodes[order]
            A = np.asarray(A)[np.ix_(order, order)]
        An = normalize_adjacency(A)
        r, c = np.nonzero(An)
        rr.append(r + offset)
        cc.append(c + offset)
        vv.append(An[r, c])
        ids.append(nodes)
        lengths.append(nodes.size)
        offset += nodes.size
    lengths = np.asarray(lengths, dtype=np.int64)
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]]).astype(np.int64)
    n = offset
    A_norm = sp.csr_matrix((np.concatenate(vv), (np.concatenate(rr), np.concatenate(cc))), shape=(n, n))
    rows = np.repeat(np.arange(lengths.size), lengths)
    pool = sp.csr_matrix((1.0 / np.repeat(lengths, lengths), (rows, np.arange(n))), shape=(lengths.size, n))
    return PackedViews(np.concatenate(ids), starts, lengths, A_norm, pool)


# ---------------------------------------------------------------- recurrent layers


def _sig(x):
    return T._sigmoid(x)


def _lstm_scan(Xp, mask, Wx, Wh, b):
    B, L, _ = Xp.shape
    h_dim = Wh.shape[0]
    h = np.zeros((B, h_dim))
    c = np.zeros((B, h_dim))
    cache = []
    out = np.zeros((B, L, h_dim))
    for t in range(L):
        a = Xp[:, t] @ Wx + h @ Wh + b
        i = _sig(a[:, :h_dim])
        f = _sig(a[:, h_dim:2 * h_dim])
        g = np.tanh(a[:, 2 * h_dim:3 * h_dim])
        o = _sig(a[:, 3 * h_dim:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        m = mask[:, t, None]
        cache.append((h, c, i, f, g, o, tc))
        h = np.where(m, h_new, h)
        c = np.where(m, c_new, c)
        out[:, t] = np.where(m, h_new, 0.0)
    return out, cache


def _lstm_scan_backward(dOut, Xp, mask, Wx, Wh, cache):
    B, L, _ = Xp.shape
    h_dim = Wh.shape[0]
    dXp = np.zeros_like(Xp)
    dWx = np.zeros_like(Wx)
    dWh = np.zeros_like(Wh)
    db = np.zeros((1, 4 * h_dim))
    dh_next = np.zeros((B, h_dim))
    dc_next = np.zeros((B, h_dim))
    for t in range(L - 1, -1, -1):
        h_prev, c_prev, i, f, g, o, tc = cache[t]
        m = mask[:, t, None]
        dh = dh_next + dOut[:, t]
        dc = dc_next + dh * o * (1.0 - tc * tc)
        da = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            dc * i * (1.0 - g * g),
            dh * tc * o * (1.0 - o),
        ], axis=1) * m
        dWx += Xp[:, t].T @ da
        dWh += h_prev.T @ da
        db += da.sum(axis=0, keepdims=True)
        dXp[:, t] = da @ Wx.T
        dh_next = np.where(m, da @ Wh.T, dh)
        dc_next = np.where(m, dc * f, dc_next)
    return dXp, dWx, dWh, db


class BiLSTMLayer(Function):
    """Fused bidirectional LSTM over packed variable-length segments.

    Inputs: stacked rows ``(N, d_in)`` then forward ``Wx, Wh, b`` and
    backward ``Wx, Wh, b``.  Output ``(N, 2h)``: at each position the
    forward hidden state followed by the backward one.  Gate order is
    input, forget, cell, output.
    """

    def __init__(self, starts: np.ndarray, lengths: np.ndarray):
        L = int(lengths.max())
        steps = np.arange(L)
        self.mask = steps[None, :] < lengths[:, None]
        fwd = starts[:, None] + steps[None, :]
        bwd = starts[:, None] + lengths[:, None] - 1 - steps[None, :]
        self.idx_f = np.where(self.mask, fwd, 0)
        self.idx_b = np.where(self.mask, bwd, 0)

    def forward(self, X, Wxf, Whf, bf, Wxb, Whb, bb):
        self.X_shape = X.shape
        self.params = (Wxf, Whf, Wxb, Whb)
        h = Whf.shape[0]
        self.Xf = X[self.idx_f] * self.mask[..., None]
        self.Xb = X[self.idx_b] * self.mask[..., None]
        out_f, self.cache_f = _lstm_scan(self.Xf, self.mask, Wxf, Whf, bf)
        out_b, self.cache_b = _lstm_scan(self.Xb, self.mask, Wxb, Whb, bb)
        out = np.zeros((X.shape[0], 2 * h))
        m = self.mask
        out[self.idx_f[m], :h] = out_f[m]
        out[self.idx_b[m], h:] = out_b[m]
        return out

    def backward(self, grad):
        Wxf, Whf, Wxb, Whb = self.params
        h = Whf.shape[0]
        m = self.mask
        dOf = np.zeros(self.Xf.shape[:2] + (h,))
        dOb = np.zeros_like(dOf)
        dOf[m] = grad[self.idx_f[m], :h]
        dOb[m] = grad[self.idx_b[m], h:]
        dXf, dWxf, dWhf, dbf = _lstm_scan_backward(dOf, self.Xf, m, Wxf, Whf, self.cache_f)
        dXb, dWxb, dWhb, dbb = _lstm_scan_backward(dOb, self.Xb, m, Wxb, Whb, self.cache_b)
        dX = np.zeros(self.X_shape)
        np.add.at(dX, self.idx_f[m], dXf[m])
        np.add.at(dX, self.idx_b[m], dXb[m])
        return dX, dWxf, dWhf, dbf, dWxb, dWhb, dbb


class LSTMParams:
    """Weights of one direction: ``Wx (d_in, 4h)``, ``Wh (h, 4h)``, ``b (1, 4h)``."""

    def __init__(self, rng: np.random.Generator, d_in: int, hidden: int, prefix: str):
        bound = 1.0 / np.sqrt(hidden)
        self.Wx = T.parameter(rng.uniform(-bound, bound, (d_in, 4 * hidden)), name=f"{prefix}.Wx")
        self.Wh = T.parameter(rng.uniform(-bound, bound, (hidden, 4 * hidden)), name=f"{prefix}.Wh")
        self.b = T.parameter(np.zeros((1, 4 * hidden)), name=f"{prefix}.b")

    def tensors(self) -> list[Tensor]:
        return [self.Wx, self.Wh, self.b]


def bilstm_layer(X: Tensor, starts, lengths, fwd: LSTMParams, bwd: LSTMParams) -> Tensor:
    return BiLSTMLayer(np.asarray(starts), np.asarray(lengths))(X, *fwd.tensors(), *bwd.tensors())


def _lstm_reference_direction(rows: list[Tensor], p: LSTMParams) -> list[Tensor]:
    hdim = p.Wh.rows
    h = Tensor(np.zeros((1, hdim)))
    c = Tensor(np.zeros((1, hdim)))
    outs = []
    for x in rows:
        a = T.row_broadcast_add(T.add(T.matmul(x, p.Wx), T.matmul(h, p.Wh)), p.b)
        i = T.sigmoid(T.slice_cols(a, 0, hdim))
        f = T.sigmoid(T.slice_cols(a, hdim, 2 * hdim))
        g = T.tanh(T.slice_cols(a, 2 * hdim, 3 * hdim))
        o = T.sigmoid(T.slice_cols(a, 3 * hdim, 4 * hdim))
        c = T.add(T.pointwise_mul(f, c), T.pointwise_mul(i, g))
        h = T.pointwise_mul(o, T.tanh(c))
        outs.append(h)
    return outs


def bilstm_layer_reference(X: Tensor, starts, lengths, fwd: LSTMParams, bwd: LSTMParams) -> Tensor:
    """Same contract as :func:`bilstm_layer`, built step by step from primitive ops."""
    pieces = []
    for s, n in zip(starts, lengths):
        rows = [T.slice_rows(X, int(s) + t, int(s) + t + 1) for t in range(int(n))]
        hf = _lstm_reference_direction(rows, fwd)
        hb = _lstm_reference_direction(rows[::-1], bwd)[::-1]
        pieces.extend(T.concat_cols(a, b) for a, b in zip(hf, hb))
    return T.concat_rows(*pieces)


# ---------------------------------------------------------------- pooling model


class SubgraphPooling:
    """Neighbor/position branch, structure branch and the linear head."""

    def __init__(self, dim: int, hidden: int, num_classes: int, rng: np.random.Generator,
                 fused_lstm: bool = True):
        if hidden % 2:
            raise ValueError("pooling output dimension must be even")
        self.dim, self.hidden, self.num_classes = dim, hidden, num_classes
        self.fused_lstm = fused_lstm
        half = hidden // 2
        self.W_np = T.glorot_uniform(rng, 2 * dim, 2 * dim, name="W_np")
        self.W_fc = T.glorot_uniform(rng, 2 * dim, hidden, name="W_fc")
        self.l1f = LSTMParams(rng, dim, half, "lstm1.f")
        self.l1b = LSTMParams(rng, dim, half, "lstm1.b")
        self.l2f = LSTMParams(rng, 2 * half, half, "lstm2.f")
        self.l2b = LSTMParams(rng, 2 * half, half, "lstm2.b")
        self.W_S = T.glorot_uniform(rng, hidden, num_classes, name="W_S")

    def pooling_params(self) -> list[Tensor]:
        ps = [self.W_np, self.W_fc]
        for p in (self.l1f, self.l1b, self.l2f, self.l2b):
            ps.extend(p.tensors())
        return ps

    def head_params(self) -> list[Tensor]:
        return [self.W_S]

    def state(self) -> dict[str, Tensor]:
        return {t.name: t for t in self.pooling_params() + self.head_params()}

    def load_state(self, arrays: dict[str, np.ndarray], head: bool = True) -> None:
        for k, t in self.state().items():
            if k == "W_S" and not head:
                continue
            if arrays[k].shape != t.shape:
                raise ValueError(f"checkpoint tensor {k} has shape {arrays[k].shape}, expected {t.shape}")
            t.data = arrays[k].copy()

    def encode_np(self, features: Tensor, packed: PackedViews) -> Tensor:
        H = T.const_matmul(packed.A_norm, T.matmul(features, self.W_np))
        return T.const_matmul(packed.pool, T.relu(T.matmul(H, self.W_fc)))

    def encode_s(self, positions: Tensor, packed: PackedViews) -> Tensor:
        layer = bilstm_layer if self.fused_lstm else bilstm_layer_reference
        out1 = layer(positions, packed.starts, packed.lengths, self.l1f, self.l1b)
        out2 = layer(out1, packed.starts, packed.lengths, self.l2f, self.l2b)
        half = self.hidden // 2
        last = packed.starts + packed.lengths - 1
        h_f = T.slice_cols(T.gather_rows(out2, last), 0, half)
        h_b = T.slice_cols(T.gather_rows(out2, packed.starts), half, 2 * half)
        return T.relu(T.concat_cols(h_f, h_b))

    def encode(self, X: Tensor, positions, packed: PackedViews) -> tuple[Tensor, Tensor]:
        """``(E_np, E_s)`` for every packed view, one row per view."""
        P_rows = positions.rows_for(packed.node_ids)
        features = T.concat_cols(T.gather_rows(X, packed.node_ids), P_rows)
        return self.encode_np(features, packed), self.encode_s(P_rows, packed)

    def classify(self, e_np: Tensor, e_s: Tensor) -> Tensor:
        return classify(e_np, e_s, self.W_S)


def classify(e_np: Tensor, e_s: Tensor, W_S: Tensor) -> Tensor:
    """Logits ``(e_np + e_s) @ W_S``."""
    return T.matmul(T.add(e_np, e_s), W_S)


# ---------------------------------------------------------------- losses


def ce_loss(logits: Tensor, Y: np.ndarray) -> Tensor:
    """Softmax cross-entropy against one-hot rows, averaged over rows."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape != logits.shape:
        raise ValueError(f"targets {Y.shape} do not match logits {logits.shape}")
    if not (np.isin(Y, (0.0, 1.0)).all() and np.all(Y.sum(axis=1) == 1)):
        raise ValueError("targets must be one-hot rows")
    lse = T.logsumexp_rows(logits)
    picked = T.sum_rows(T.pointwise_mul(logits, Tensor(Y)))
    return T.mean_all(T.add(lse, T.neg(picked)))


def bce_loss(logits: Tensor, Y: np.ndarray) -> Tensor:
    """Binary cross-entropy summed over label positions, averaged over rows."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape != logits.shape:
        raise ValueError(f"targets {Y.shape} do not match logits {logits.shape}")
    if not np.isin(Y, (0.0, 1.0)).all():
        raise ValueError("multi-hot targets must be 0 or 1")
    per_row = T.sum_rows(T.bce_with_logits(logits, Y))
    return T.mean_all(per_row)


def micro_f1(logits, truths, multi_label: bool, threshold: float = 0.5) -> float:
    """Micro-averaged F1.

    Single-label: ``truths`` are class indices and the score is accuracy of
    the argmax.  Multi-label: ``truths`` is a 0/1 matrix and label ``i`` is
    predicted when ``sigmoid(logit_i) >= threshold``.
    """
    S = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    if multi_label:
        Y = np.atleast_2d(np.asarray(truths)).astype(bool)
        if Y.shape != S.shape:
            raise ValueError("predictions and truths differ in shape")
        pred = T._sigmoid(S) >= threshold
        tp = int((pred & Y).sum())
        fp = int((pred & ~Y).sum())
        fn = int((~pred & Y).sum())
        denom = 2 * tp + fp + fn
        return 1.0 if denom == 0 else 2 * tp / denom
    y = np.asarray(truths).reshape(-1)
    if y.size != S.shape[0]:
        raise ValueError("predictions and truths differ in length")
    if y.size == 0:
        return 0.0
    return float(np.mean(S.argmax(axis=1) == y))


def one_hot(labels: Sequence[int], num_classes: int) -> np.ndarray:
    Y = np.zeros((len(labels), num_classes))
    Y[np.arange(len(labels)), labels] = 1.0
    return Y


def multi_hot(label_sets: Sequence[Sequence[int]], num_classes: int) -> np.ndarray:
    Y = np.zeros((len(label_sets), num_classes))
    for r, ls in enumerate(label_sets):
        Y[r, list(ls)] = 1.0
    return Y
