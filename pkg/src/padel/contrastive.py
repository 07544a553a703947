"""Explore/exploit views and the two-family InfoNCE objective.

For anchor ``k`` in a batch of ``K`` subgraphs the positive pair is
``(ran_k, aug_k)`` where ``ran_k`` is the subgraph itself and ``aug_k`` its
autoencoder-resampled version.  Negatives are ``(ran_k, ran_i)`` and
``(ran_i, aug_k)`` for ``i != k``, where ``ran_i`` are fresh random walks
drawn for this anchor.  Scores are sums of two cosine similarities, one per
encoding branch; there is no temperature.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .graph import BaseGraph, SubgraphRecord, induced_adjacency
from .pooling import SubgraphPooling, pack_views
from .tensor import Tensor
from .vsubgae import VSubGAE, augment, diffuse_subgraph

View = tuple  # (sorted node ids, dense adjacency)


def random_walk(graph: BaseGraph, hop: int, rng: np.random.Generator) -> np.ndarray:
    """Node set of a ``hop``-step simple random walk from a uniform start.

    A node without neighbors ends the walk early.
    """
    if graph.num_nodes == 0:
        raise ValueError("random walk on an empty graph")
    if hop < 1:
        raise ValueError("hop must be at least 1")
    v = int(rng.integers(graph.num_nodes))
    seen = {v}
    for _ in range(hop):
        nbrs = graph.neighbors(v)
        if nbrs.size == 0:
            break
        v = int(nbrs[rng.integers(nbrs.size)])
        seen.add(v)
    return np.array(sorted(seen), dtype=np.int64)


def default_hop(records: Sequence[SubgraphRecord]) -> int:
    return max(1, int(round(float(np.mean([len(r.node_ids) for r in records])))))


def explore_view(graph: BaseGraph, batch: Sequence[SubgraphRecord], k: int, hop: int,
                 rng: np.random.Generator) -> list[View]:
    """Position ``k`` holds ``batch[k]``; every other position a random-walk subgraph."""
    if len(batch) < 2:
        raise ValueError("a contrastive batch needs at least two subgraphs")
    views = []
    for i, rec in enumerate(batch):
        nodes = np.asarray(rec.node_ids, dtype=np.int64) if i == k else random_walk(graph, hop, rng)
        views.append((nodes, induced_adjacency(graph, nodes)))
    return views


def exploit_view(model: VSubGAE, X: Tensor, positions, graph: BaseGraph, batch: Sequence[SubgraphRecord],
                 p_diff: float, rng: np.random.Generator, cap: int) -> list[View]:
    """Diffuse each subgraph, then resample its edges from the frozen autoencoder."""
    views = []
    for rec in batch:
        nodes, A = diffuse_subgraph(graph, rec.node_ids, p_diff, rng, cap)
        feats = np.concatenate([X.data[nodes], positions.rows_for(nodes).data], axis=1)
        views.append((nodes, augment(model, Tensor(feats), A, rng)))
    return views


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def score(enc_i: tuple[np.ndarray, np.ndarray], enc_j: tuple[np.ndarray, np.ndarray]) -> float:
    """Contrastive score: cosine of the ``e_np`` pair plus cosine of the ``e_s`` pair."""
    return cosine(enc_i[0], enc_j[0]) + cosine(enc_i[1], enc_j[1])


def info_nce(pos: Tensor, explore: Tensor, exploit: Tensor) -> Tensor:
    """Mean over anchors of ``-log(e^pos / (e^pos + sum e^explore + sum e^exploit))``.

    ``pos`` is ``K x 1``; ``explore`` and ``exploit`` are ``K x (K-1)`` with
    row ``k`` holding anchor ``k``'s negative scores.
    """
    K = pos.rows
    if K < 2:
        raise ValueError("InfoNCE needs K >= 2")
    if pos.cols != 1 or explore.shape != (K, K - 1) or exploit.shape != (K, K - 1):
        raise T.ShapeError("score tensors must be K x 1, K x (K-1), K x (K-1)")
    logits = T.concat_cols(pos, explore, exploit)
    return T.mean_all(T.add(T.logsumexp_rows(logits), T.neg(pos)))


@dataclass
class ContrastBatch:
    originals: list
    augmented: list
    walks: list            # walks[k] = anchor k's K-1 random views, i != k in order

    @property
    def size(self) -> int:
        return len(self.originals)


def build_batch(graph: BaseGraph, batch: Sequence[SubgraphRecord], model: VSubGAE, X: Tensor, positions,
                hop: int, p_diff: float, cap: int, rng: np.random.Generator) -> ContrastBatch:
    originals = [(np.asarray(r.node_ids, dtype=np.int64), induced_adjacency(graph, r.node_ids)) for r in batch]
    augmented = exploit_view(model, X, positions, graph, batch, p_diff, rng, cap)
    walks = []
    for k in range(len(batch)):
        views = explore_view(graph, batch, k, hop, rng)
        walks.append([v for i, v in enumerate(views) if i != k])
    return ContrastBatch(originals, augmented, walks)


def _pair_scores(Nnp: Tensor, Ns: Tensor, a: np.ndarray, b: np.ndarray) -> Tensor:
    dot_np = T.sum_rows(T.pointwise_mul(T.gather_rows(Nnp, a), T.gather_rows(Nnp, b)))
    dot_s = T.sum_rows(T.pointwise_mul(T.gather_rows(Ns, a), T.gather_rows(Ns, b)))
    return T.add(dot_np, dot_s)


def contrastive_loss(pooling: SubgraphPooling, X: Tensor, positions, cb: ContrastBatch) -> Tensor:
    """Encode every view of the batch once, then score and apply InfoNCE."""
    K = cb.size
    views = list(cb.originals) + list(cb.augmented) + [v for ws in cb.walks for v in ws]
    packed = pack_views(views)
    e_np, e_s = pooling.encode(X, positions, packed)
    Nnp, Ns = T.l2_normalize_rows(e_np), T.l2_normalize_rows(e_s)
    orig = np.arange(K)
    aug = K + np.arange(K)
    walk = (2 * K + np.arange(K * (K - 1))).reshape(K, K - 1)
    anchor_rep = np.repeat(orig, K - 1)
    aug_rep = np.repeat(aug, K - 1)
    pos = _pair_scores(Nnp, Ns, orig, aug)
    explore = T.reshape(_pair_scores(Nnp, Ns, anchor_rep, walk.reshape(-1)), K, K - 1)
    exploit = T.reshape(_pair_scores(Nnp, Ns, walk.reshape(-1), aug_rep), K, K - 1)
    return info_nce(pos, explore, exploit)
