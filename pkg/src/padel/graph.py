"""Base graph, labeled subgraph records and their on-disk formats.

Edge file: one undirected edge ``u v`` per line (whitespace separated);
``#`` starts a comment line.  A line holding a single id declares an
isolated node.

Subgraph file: ``12-7-93<TAB>label_a,label_b<TAB>train`` per line.  Label
names are interned to indices in first-seen order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

SPLITS = ("train", "val", "test")
DEFAULT_MAX_SUBGRAPH_NODES = 128


class DataFormatError(ValueError):
    """Malformed or inconsistent dataset input; carries the offending line number."""

    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


@dataclass(frozen=True, eq=False)
class BaseGraph:
    """Simple undirected graph in CSR form (sorted, deduplicated neighbor lists)."""

    num_nodes: int
    indptr: np.ndarray
    indices: np.ndarray

    @classmethod
    def from_edges(cls, num_nodes: int, edges) -> "BaseGraph":
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= num_nodes):
            raise ValueError("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            raise ValueError("self-loops are not allowed")
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        A = sp.csr_matrix((np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(num_nodes, num_nodes))
        A.sum_duplicates()
        A.sort_indices()
        indptr = A.indptr.astype(np.int64)
        indices = A.indices.astype(np.int64)
        indptr.flags.writeable = False
        indices.flags.writeable = False
        return cls(num_nodes, indptr, indices)

    @property
    def num_edges(self) -> int:
        return int(self.indices.size // 2)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def edges(self) -> np.ndarray:
        """Each undirected edge once, as ``(u, v)`` with ``u < v``."""
        src = np.repeat(np.arange(self.num_nodes), self.degree())
        keep = src < self.indices
        return np.stack([src[keep], self.indices[keep]], axis=1)

    @cached_property
    def csr(self) -> sp.csr_matrix:
        return self.to_sparse(np.float64)

    def to_sparse(self, dtype=np.float32) -> sp.csr_matrix:
        data = np.ones(self.indices.size, dtype=dtype)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.num_nodes, self.num_nodes))

    def to_dense(self) -> np.ndarray:
        return self.to_sparse(np.float64).toarray()


@dataclass(frozen=True)
class SubgraphRecord:
    node_ids: tuple[int, ...]
    labels: tuple[int, ...]
    split: str

    @property
    def label(self) -> int:
        return self.labels[0]


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    graph: BaseGraph
    subgraphs: tuple[SubgraphRecord, ...]
    num_classes: int
    multi_label: bool
    train_fraction_used: float = 1.0
    label_names: tuple[str, ...] = ()
    node_map: dict = field(default_factory=dict)

    def split(self, name: str) -> list[SubgraphRecord]:
        return [r for r in self.subgraphs if r.split == name]

    def mean_subgraph_size(self) -> float:
        return float(np.mean([len(r.node_ids) for r in self.subgraphs]))

    def validate(self) -> None:
        n = self.graph.num_nodes
        for r in self.subgraphs:
            ids = r.node_ids
            if not ids:
                raise ValueError("empty subgraph")
            if any(b <= a for a, b in zip(ids, ids[1:])):
                raise ValueError("subgraph node ids must be strictly increasing")
            if ids[-1] >= n or ids[0] < 0:
                raise ValueError("subgraph node id out of range")
            if r.split not in SPLITS:
                raise ValueError(f"unknown split {r.split!r}")
            if not r.labels or any(not 0 <= c < self.num_classes for c in r.labels):
                raise ValueError("label index out of range")
            if not self.multi_label and len(r.labels) != 1:
                raise ValueError("single-label dataset with a multi-label record")


# ---------------------------------------------------------------- loading


def _read_edge_file(path) -> tuple[list[tuple[int, int]], set[int]]:
    edges, isolated = [], set()
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                ids = [int(p, 10) for p in parts]
            except ValueError:
                raise DataFormatError(f"non-integer node id in {line!r}", path, lineno) from None
            if any(i < 0 for i in ids):
                raise DataFormatError("negative node id", path, lineno)
            if len(ids) == 1:
                isolated.add(ids[0])
            elif len(ids) == 2:
                if ids[0] == ids[1]:
                    raise DataFormatError(f"self-loop on node {ids[0]}", path, lineno)
                edges.append((ids[0], ids[1]))
            else:
                raise DataFormatError(f"expected 2 fields, got {len(ids)}", path, lineno)
    return edges, isolated


def _read_subgraph_file(path, node_map: dict[int, int], max_nodes: int | None):
    label_index: dict[str, int] = {}
    parsed = []
    any_multi = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise DataFormatError(f"expected 3 tab-separated fields, got {len(fields)}", path, lineno)
            node_field, label_field, split = (f.strip() for f in fields)
            if not node_field:
                raise DataFormatError("empty subgraph", path, lineno)
            try:
                orig = [int(t, 10) for t in node_field.split("-")]
            except ValueError:
                raise DataFormatError(f"bad node list {node_field!r}", path, lineno) from None
            ids = set()
            for o in orig:
                if o not in node_map:
                    raise DataFormatError(f"node id {o} out of range (not in the base graph)", path, lineno)
                ids.add(node_map[o])
            ids = sorted(ids)
            if max_nodes is not None and len(ids) > max_nodes:
                ids = ids[:max_nodes]
            names = [s.strip() for s in label_field.split(",") if s.strip()]
            if not names:
                raise DataFormatError("missing label", path, lineno)
            if len(names) > 1:
                any_multi = True
            labels = []
            for nm in names:
                if nm not in label_index:
                    label_index[nm] = len(label_index)
                labels.append(label_index[nm])
            if split not in SPLITS:
                raise DataFormatError(f"unknown split tag {split!r}", path, lineno)
            parsed.append(SubgraphRecord(tuple(ids), tuple(sorted(set(labels))), split))
    names = tuple(sorted(label_index, key=label_index.get))
    return parsed, names, any_multi


def load_dataset(edge_file, subgraph_file, max_subgraph_nodes: int | None = DEFAULT_MAX_SUBGRAPH_NODES,
                 sidecar_dir=None) -> DatasetBundle:
    """Read an edge file and a subgraph file into a validated :class:`DatasetBundle`.

    Node ids are remapped to ``0..|V|-1`` in ascending order of the original
    ids.  When ``sidecar_dir`` is given, ``labels.json`` and ``node_map.json``
    are written there.
    """
    edges, isolated = _read_edge_file(edge_file)
    all_ids = sorted({u for e in edges for u in e} | isolated)
    node_map = {orig: i for i, orig in enumerate(all_ids)}
    dense = [(node_map[u], node_map[v]) for u, v in edges]
    graph = BaseGraph.from_edges(len(all_ids), dense)
    records, label_names, multi = _read_subgraph_file(subgraph_file, node_map, max_subgraph_nodes)
    bundle = DatasetBundle(graph, tuple(records), len(label_names), multi,
                           label_names=label_names, node_map=node_map)
    bundle.validate()
    if sidecar_dir is not None:
        write_sidecars(bundle, sidecar_dir)
    return bundle


def write_sidecars(bundle: DatasetBundle, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "labels.json").write_text(json.dumps({n: i for i, n in enumerate(bundle.label_names)}, indent=1))
    (d / "node_map.json").write_text(json.dumps({str(k): v for k, v in sorted(bundle.node_map.items())}, indent=1))


def save_edges(graph: BaseGraph, path) -> None:
    with open(path, "w") as fh:
        deg = graph.degree()
        for u, v in graph.edges():
            fh.write(f"{u} {v}\n")
        for i in np.flatnonzero(deg == 0):
            fh.write(f"{i}\n")


def save_subgraphs(records: Iterable[SubgraphRecord], label_names: Sequence[str], path) -> None:
    with open(path, "w") as fh:
        for r in records:
            nodes = "-".join(str(i) for i in r.node_ids)
            labels = ",".join(label_names[c] for c in r.labels)
            fh.write(f"{nodes}\t{labels}\t{r.split}\n")


# ---------------------------------------------------------------- queries


def subsample_train(bundle: DatasetBundle, fraction: float, seed: int) -> DatasetBundle:
    """Keep ``ceil(fraction * |train|)`` uniformly chosen training records."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    train_idx = [i for i, r in enumerate(bundle.subgraphs) if r.split == "train"]
    keep_n = math.ceil(fraction * len(train_idx) - 1e-9)
    rng = np.random.default_rng(seed)
    kept = set(rng.choice(train_idx, size=keep_n, replace=False).tolist()) if train_idx else set()
    records = tuple(r for i, r in enumerate(bundle.subgraphs) if r.split != "train" or i in kept)
    return replace(bundle, subgraphs=records, train_fraction_used=bundle.train_fraction_used * fraction)


def coverage_stats(bundle: DatasetBundle) -> tuple[int, float]:
    covered = set()
    for r in bundle.subgraphs:
        covered.update(r.node_ids)
    n = bundle.graph.num_nodes
    return len(covered), (len(covered) / n if n else 0.0)


def induced_adjacency(graph: BaseGraph, node_ids: Sequence[int]) -> np.ndarray:
    """Dense 0/1 adjacency of the subgraph induced by ``node_ids`` (local order kept)."""
    ids = np.asarray(node_ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= graph.num_nodes):
        raise ValueError("node id out of range")
    sub = graph.csr[ids][:, ids]
    return sub.toarray().astype(np.float64)
