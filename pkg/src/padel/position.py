"""Anchor-free cosine phase position encoding.

Pipeline: hop distances ``C`` -> per-node diameters -> phase matrix
``cos(pi * C[i, j] / dia[i])`` (``-1.5`` where unreachable) -> PCA scores ->
learned linear projection.
"""

from __future__ import annotations

import hashlib
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse.linalg as spla

from .graph import BaseGraph
from .tensor import Tensor, glorot_uniform, matmul

UNREACHABLE = np.uint16(0xFFFF)
UNREACHABLE_PHASE = -1.5
CACHE_ENV = "PADEL_CACHE_DIR"


class EigenSolverError(RuntimeError):
    pass


# ---------------------------------------------------------------- distances


def _bfs_block(A, sources: np.ndarray, n: int, out: np.ndarray) -> None:
    """Level-synchronous BFS from a block of sources; writes rows of ``out``."""
    b = sources.size
    cols = np.arange(b)
    frontier = np.zeros((n, b), dtype=np.float32)
    frontier[sources, cols] = 1.0
    visited = frontier > 0
    dist = np.full((n, b), UNREACHABLE, dtype=np.uint16)
    dist[sources, cols] = 0
    level = 0
    while True:
        level += 1
        reached = (A @ frontier) > 0
        new = reached & ~visited
        if not new.any():
            break
        if level >= int(UNREACHABLE):
            raise OverflowError("hop count does not fit in uint16")
        dist[new] = level
        visited |= new
        frontier = new.astype(np.float32)
    out[sources[0]:sources[-1] + 1] = dist.T


def all_pairs_distances(graph: BaseGraph, block_size: int = 512, workers: int | None = None) -> np.ndarray:
    """Exact unweighted hop counts between every pair of nodes.

    Returns a symmetric ``uint16`` matrix with ``UNREACHABLE`` (0xFFFF) where
    no path exists.  Sources are swept in contiguous blocks; each block is a
    breadth-first search whose frontier expansion is one sparse product.
    """
    n = graph.num_nodes
    out = np.empty((n, n), dtype=np.uint16)
    if n == 0:
        return out
    A = graph.to_sparse(np.float32)
    blocks = [np.arange(s, min(s + block_size, n)) for s in range(0, n, block_size)]
    if workers is None:
        workers = min(4, os.cpu_count() or 1)
    if workers <= 1 or len(blocks) == 1:
        for src in blocks:
            _bfs_block(A, src, n, out)
    else:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(lambda s: _bfs_block(A, s, n, out), blocks))
    return out


def diameters(C: np.ndarray) -> np.ndarray:
    """Per-node largest finite hop count."""
    finite = np.where(C == UNREACHABLE, 0, C)
    return finite.max(axis=1).astype(np.int64) if C.size else np.zeros(0, dtype=np.int64)


def phase_encode(C: np.ndarray, dia: np.ndarray, dtype=np.float64, block_rows: int = 1024) -> np.ndarray:
    """Cosine phase matrix.

    Rows with ``dia == 0`` (isolated nodes) are ``-1.5`` except the diagonal,
    which is 1.
    """
    n = C.shape[0]
    out = np.empty((n, n), dtype=dtype)
    for s in range(0, n, block_rows):
        e = min(s + block_rows, n)
        blk = C[s:e].astype(np.float64)
        d = dia[s:e].astype(np.float64)[:, None]
        unreachable = C[s:e] == UNREACHABLE
        with np.errstate(divide="ignore", invalid="ignore"):
            ph = np.cos(np.pi * blk / np.where(d > 0, d, 1.0))
        ph[unreachable] = UNREACHABLE_PHASE
        dead = np.flatnonzero(d[:, 0] == 0)
        ph[dead] = UNREACHABLE_PHASE
        ph[dead, s + dead] = 1.0
        out[s:e] = ph
    return out


# ---------------------------------------------------------------- PCA


@dataclass
class PCAResult:
    scores: np.ndarray          # n x k, nonincreasing variance order
    components: np.ndarray      # features x k, unit columns
    eigenvalues: np.ndarray     # covariance eigenvalues of the kept components
    explained_variance_ratio: np.ndarray
    mean: np.ndarray


def _fix_signs(V: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def _lanczos_top(X: np.ndarray, mean: np.ndarray, k: int, tol: float, max_iter: int):
    """Top-k covariance eigenpairs by implicitly restarted Lanczos (ARPACK).

    The centered matrix is never formed; the start vector is fixed, so the
    result is deterministic.
    """
    n, m = X.shape
    denom = max(n - 1, 1)

    def cov_mv(v):
        v = np.asarray(v, dtype=np.float64).reshape(-1)
        y = X @ v - float(mean @ v)
        return (X.T @ y - mean * y.sum()) / denom

    op = spla.LinearOperator((m, m), matvec=cov_mv, dtype=np.float64)
    v0 = np.ones(m) / np.sqrt(m)
    try:
        w, V = spla.eigsh(op, k=k, which="LA", v0=v0, tol=tol, maxiter=max_iter * m)
    except spla.ArpackNoConvergence as exc:
        raise EigenSolverError(f"Lanczos did not converge: {exc}") from exc
    order = np.argsort(w)[::-1]
    return w[order], V[:, order]


def pca_reduce(X: np.ndarray, k: int, method: str = "auto", max_iter: int = 50, tol: float = 0.0) -> PCAResult:
    """Principal-component scores of the rows of ``X``.

    Columns are mean-centered; each component's sign is chosen so its
    largest-magnitude loading is positive.  ``method="eigh"`` uses a dense
    symmetric eigensolver on the covariance, ``"subspace"`` a deterministic
    block power iteration (used automatically for wide inputs).
    """
    X = np.asarray(X, dtype=np.float64)
    n, m = X.shape
    if not 1 <= k <= m:
        raise ValueError(f"pca dimension {k} out of range for {m} features")
    mean = X.mean(axis=0)
    if method == "auto":
        method = "eigh" if m <= 2048 or k >= m - 1 else "lanczos"
    if method == "eigh":
        Xc = X - mean
        cov = Xc.T @ Xc / max(n - 1, 1)
        try:
            w, V = np.linalg.eigh(cov)
        except np.linalg.LinAlgError as exc:
            raise EigenSolverError(str(exc)) from exc
        order = np.argsort(w)[::-1]
        total = float(np.clip(w, 0, None).sum())
        w, V = w[order][:k], V[:, order][:, :k]
    elif method == "lanczos":
        if k >= m - 1:
            raise ValueError("the Lanczos solver needs k < m - 1; use method='eigh'")
        w, V = _lanczos_top(X, mean, k, tol, max_iter)
        total = float(((X * X).sum() - n * float(mean @ mean)) / max(n - 1, 1))
    else:
        raise ValueError(f"unknown PCA method {method!r}")
    V = _fix_signs(V)
    w = np.clip(w, 0, None)
    ratio = w / total if total > 0 else np.zeros_like(w)
    return PCAResult(X @ V - mean @ V, V, w, ratio, mean)


# ---------------------------------------------------------------- projection


class PositionTable:
    """PCA-reduced phase rows plus the learnable projection ``W_P``."""

    def __init__(self, reduced: np.ndarray, dim: int, rng: np.random.Generator):
        self.reduced = np.asarray(reduced, dtype=np.float64)
        self.reduced_dim = self.reduced.shape[1]
        self.dim = dim
        self.W_P = glorot_uniform(rng, self.reduced_dim, dim, name="W_P")
        self._reduced_t = Tensor(self.reduced)

    def project(self) -> Tensor:
        if self.W_P.rows != self.reduced_dim:
            raise ValueError("projection rows do not match the reduced dimension")
        return matmul(self._reduced_t, self.W_P)

    def rows_for(self, node_ids) -> Tensor:
        """``P`` rows for ``node_ids`` without projecting the whole table."""
        return matmul(Tensor(self.reduced[np.asarray(node_ids, dtype=np.int64)]), self.W_P)


# ---------------------------------------------------------------- cache


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def graph_digest(graph: BaseGraph) -> str:
    h = hashlib.sha256()
    h.update(struct.pack("<q", graph.num_nodes))
    h.update(graph.indptr.astype("<i8").tobytes())
    h.update(graph.indices.astype("<i8").tobytes())
    return h.hexdigest()


def default_cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV, Path.home() / ".cache" / "padel"))


_PCA_MAGIC = b"PCA1"


def write_pca(path, res: PCAResult) -> None:
    n, k = res.scores.shape
    with open(path, "wb") as fh:
        fh.write(_PCA_MAGIC)
        fh.write(struct.pack("<qq", n, k))
        fh.write(res.eigenvalues.astype("<f8").tobytes())
        fh.write(res.explained_variance_ratio.astype("<f8").tobytes())
        fh.write(res.scores.astype("<f8").tobytes())


def read_pca(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(4) != _PCA_MAGIC:
            raise ValueError(f"{path}: not a PCA cache file")
        n, k = struct.unpack("<qq", fh.read(16))
        eig = np.frombuffer(fh.read(8 * k), dtype="<f8").copy()
        ratio = np.frombuffer(fh.read(8 * k), dtype="<f8").copy()
        scores = np.frombuffer(fh.read(8 * n * k), dtype="<f8").reshape(n, k).copy()
    return scores, eig, ratio


@dataclass
class Preprocessed:
    reduced: np.ndarray
    eigenvalues: np.ndarray
    explained_variance_ratio: np.ndarray
    cache_hit: bool
    cache_dir: Path | None


def preprocess(graph: BaseGraph, pca_dim: int, cache_dir=None, key: str | None = None) -> Preprocessed:
    """Distances -> phases -> PCA, cached on disk.

    The cache directory holds ``distances.bin`` (u16), ``phase.bin`` (f32)
    and ``pca-<dim>.bin``.  PCA always runs on the f32-rounded phase matrix
    so cached and fresh runs agree bit for bit.
    """
    n = graph.num_nodes
    k = min(pca_dim, n)
    if cache_dir is None:
        C = all_pairs_distances(graph)
        phase = phase_encode(C, diameters(C)).astype(np.float32)
        res = pca_reduce(phase.astype(np.float64), k)
        return Preprocessed(res.scores, res.eigenvalues, res.explained_variance_ratio, False, None)

    d = Path(cache_dir) / (key or graph_digest(graph))
    d.mkdir(parents=True, exist_ok=True)
    pca_path = d / f"pca-{k}.bin"
    if pca_path.exists():
        scores, eig, ratio = read_pca(pca_path)
        return Preprocessed(scores, eig, ratio, True, d)
    phase_path = d / "phase.bin"
    if phase_path.exists():
        phase = np.fromfile(phase_path, dtype="<f4").reshape(n, n)
        hit = True
    else:
        dist_path = d / "distances.bin"
        if dist_path.exists():
            C = np.fromfile(dist_path, dtype="<u2").reshape(n, n)
        else:
            C = all_pairs_distances(graph)
            _atomic_write(dist_path, C.astype("<u2").tobytes())
        phase = phase_encode(C, diameters(C), dtype=np.float32)
        _atomic_write(phase_path, phase.astype("<f4").tobytes())
        hit = False
    res = pca_reduce(phase.astype(np.float64), k)
    tmp = pca_path.with_suffix(".tmp")
    write_pca(tmp, res)
    os.replace(tmp, pca_path)
    return Preprocessed(res.scores, res.eigenvalues, res.explained_variance_ratio, hit, d)


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)
