"""Variational subgraph autoencoder with random 1-hop node diffusion.

The encoder is a two-layer graph convolution over ``[X, P]`` rows of the
subgraph's nodes; the decoder is ``sigmoid(z @ z.T)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from . import tensor as T
from .graph import DEFAULT_MAX_SUBGRAPH_NODES, BaseGraph, induced_adjacency
from .tensor import Tensor

LOG_SIGMA_CLAMP = 10.0


def normalize_adjacency(A: np.ndarray) -> np.ndarray:
    """``D^-1/2 (A + I) D^-1/2`` with ``D`` the degree matrix of ``A + I``."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("adjacency must be square")
    if not np.array_equal(A, A.T):
        raise ValueError("adjacency must be symmetric")
    S = A.copy()
    np.fill_diagonal(S, 1.0)
    d = 1.0 / np.sqrt(S.sum(axis=1))
    return S * d[:, None] * d[None, :]


def diffuse_subgraph(graph: BaseGraph, node_ids: Sequence[int], p_diff: float, rng: np.random.Generator,
                     cap: int = DEFAULT_MAX_SUBGRAPH_NODES) -> tuple[np.ndarray, np.ndarray]:
    """Randomly grow a subgraph by one hop.

    Each original node, with probability ``p_diff``, contributes one
    uniformly chosen base-graph neighbor.  Added nodes are dropped once the
    set reaches ``cap``; original nodes are always kept.  Returns the sorted
    node ids and their induced adjacency.
    """
    if not 0.0 <= p_diff <= 1.0:
        raise ValueError(f"p_diff must lie in [0, 1], got {p_diff}")
    base = [int(v) for v in node_ids]
    nodes = set(base)
    # draw for every node so the random stream does not depend on the cap
    coins = rng.random(len(base))
    picks = rng.random(len(base))
    for v, c, u in zip(base, coins, picks):
        if c >= p_diff:
            continue
        nbrs = graph.neighbors(v)
        if nbrs.size == 0:
            continue
        w = int(nbrs[min(int(u * nbrs.size), nbrs.size - 1)])
        if w not in nodes and len(nodes) < cap:
            nodes.add(w)
    ids = np.array(sorted(nodes), dtype=np.int64)
    return ids, induced_adjacency(graph, ids)


@dataclass
class LatentSample:
    mu: Tensor
    log_sigma: Tensor
    z: Tensor
    eps: np.ndarray


class VSubGAE:
    """Parameters: node table ``X`` (|V| x d) and the three 2d x 2d encoder maps."""

    def __init__(self, num_nodes: int, dim: int, rng: np.random.Generator):
        self.dim = dim
        self.X = T.parameter(rng.normal(0.0, 1.0 / np.sqrt(dim), size=(num_nodes, dim)), name="X")
        self.W_1 = T.glorot_uniform(rng, 2 * dim, 2 * dim, name="W_1")
        self.W_mu = T.glorot_uniform(rng, 2 * dim, 2 * dim, name="W_mu")
        self.W_sigma = T.glorot_uniform(rng, 2 * dim, 2 * dim, name="W_sigma")

    def encoder_params(self) -> list[Tensor]:
        return [self.W_1, self.W_mu, self.W_sigma]

    def state(self) -> dict[str, Tensor]:
        return {"X": self.X, "W_1": self.W_1, "W_mu": self.W_mu, "W_sigma": self.W_sigma}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        for k, t in self.state().items():
            if arrays[k].shape != t.shape:
                raise ValueError(f"checkpoint tensor {k} has shape {arrays[k].shape}, expected {t.shape}")
            t.data = arrays[k].copy()

    def encode(self, features: Tensor, A_norm: np.ndarray, eps: np.ndarray) -> LatentSample:
        return encode(features, A_norm, self.W_1, self.W_mu, self.W_sigma, eps)


def encode(features: Tensor, A_norm: np.ndarray, W_1: Tensor, W_mu: Tensor, W_sigma: Tensor,
           eps: np.ndarray) -> LatentSample:
    """Reparameterized latent sample for one subgraph.

    ``features`` holds the ``[X, P]`` rows of the subgraph's nodes, in the
    same order as ``A_norm``.
    """
    if features.cols != W_1.rows:
        raise T.ShapeError(f"features have {features.cols} columns, W_1 expects {W_1.rows}")
    hidden = T.relu(T.const_matmul(A_norm, T.matmul(features, W_1)))
    mu = T.const_matmul(A_norm, T.matmul(hidden, W_mu))
    log_sigma = T.clip(T.const_matmul(A_norm, T.matmul(hidden, W_sigma)), -LOG_SIGMA_CLAMP, LOG_SIGMA_CLAMP)
    eps = np.asarray(eps, dtype=np.float64)
    z = T.add(mu, T.pointwise_mul(T.exp(log_sigma), Tensor(eps)))
    return LatentSample(mu, log_sigma, z, eps)


def decode_logits(z: Tensor) -> Tensor:
    return T.matmul(z, T.transpose(z))


def decode(z: Tensor) -> Tensor:
    """Edge probabilities ``sigmoid(z z^T)``."""
    return T.sigmoid(decode_logits(z))


def kl_divergence(mu: Tensor, log_sigma: Tensor) -> Tensor:
    """KL(N(mu, sigma^2) || N(0, I)) summed over latent dims, averaged over nodes."""
    n = mu.rows
    two_ls = T.scale(log_sigma, 2.0)
    # mu^2 + sigma^2 - 1 - 2 log sigma; written this way round so the zero case is +0.0
    inner = T.add_scalar(T.add(T.add(T.pointwise_mul(mu, mu), T.exp(two_ls)), T.neg(two_ls)), -1.0)
    return T.scale(T.sum_all(inner), 0.5 / n)


def elbo_loss(logits: Tensor, target: np.ndarray, mu: Tensor, log_sigma: Tensor, beta: float) -> Tensor:
    """Negated ELBO: mean edge BCE plus ``beta`` times the per-node KL."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    recon = T.mean_all(T.bce_with_logits(logits, target))
    return T.add(recon, T.scale(kl_divergence(mu, log_sigma), beta))


def sample_adjacency(prob: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One Bernoulli draw per unordered pair; symmetric with a zero diagonal."""
    n = prob.shape[0]
    iu = np.triu_indices(n, 1)
    draws = rng.random(iu[0].size) < prob[iu]
    A = np.zeros((n, n))
    A[iu] = draws
    return A + A.T


def augment(model: VSubGAE, features: Tensor, A: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Resample a subgraph's edges from the (frozen) autoencoder."""
    eps = rng.standard_normal((A.shape[0], 2 * model.dim))
    sample = model.encode(Tensor(features.data), normalize_adjacency(A), eps)
    prob = T._sigmoid(sample.z.data @ sample.z.data.T)
    return sample_adjacency(prob, rng)


def reconstruction_auc(prob: np.ndarray, A: np.ndarray) -> float:
    """ROC AUC of off-diagonal upper-triangle scores against 0/1 targets."""
    iu = np.triu_indices(A.shape[0], 1)
    y = A[iu] > 0
    s = prob[iu]
    pos, neg = int(y.sum()), int((~y).sum())
    if pos == 0 or neg == 0:
        raise ValueError("AUC needs both edges and non-edges")
    r = rankdata(s)
    return float((r[y].sum() - pos * (pos + 1) / 2) / (pos * neg))


def pooled_reconstruction_auc(probs: Sequence[np.ndarray], As: Sequence[np.ndarray]) -> float:
    """AUC over the upper-triangle pairs of several subgraphs taken together."""
    scores, labels = [], []
    for p, A in zip(probs, As):
        iu = np.triu_indices(A.shape[0], 1)
        scores.append(p[iu])
        labels.append(A[iu])
    n = sum(s.size for s in scores)
    if n == 0:
        raise ValueError("AUC needs at least one node pair")
    s, y = np.concatenate(scores), np.concatenate(labels) > 0
    pos, neg = int(y.sum()), int((~y).sum())
    if pos == 0 or neg == 0:
        raise ValueError("AUC needs both edges and non-edges")
    r = rankdata(s)
    return float((r[y].sum() - pos * (pos + 1) / 2) / (pos * neg))
