"""Small generated datasets written in the edge/subgraph file formats."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .graph import BaseGraph, SubgraphRecord, save_edges, save_subgraphs

# Zachary's karate club (0-indexed), 78 edges.
KARATE_EDGES = [
    (0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (0, 6), (0, 7), (0, 8), (0, 10), (0, 11), (0, 12), (0, 13),
    (0, 17), (0, 19), (0, 21), (0, 31), (1, 2), (1, 3), (1, 7), (1, 13), (1, 17), (1, 19), (1, 21), (1, 30),
    (2, 3), (2, 7), (2, 8), (2, 9), (2, 13), (2, 27), (2, 28), (2, 32), (3, 7), (3, 12), (3, 13), (4, 6),
    (4, 10), (5, 6), (5, 10), (5, 16), (6, 16), (8, 30), (8, 32), (8, 33), (9, 33), (13, 33), (14, 32),
    (14, 33), (15, 32), (15, 33), (18, 32), (18, 33), (19, 33), (20, 32), (20, 33), (22, 32), (22, 33),
    (23, 25), (23, 27), (23, 29), (23, 32), (23, 33), (24, 25), (24, 27), (24, 31), (25, 31), (26, 29),
    (26, 33), (27, 33), (28, 31), (28, 33), (29, 32), (29, 33), (30, 32), (30, 33), (31, 32), (31, 33),
    (32, 33),
]
# faction after the split: 0 = instructor's club, 1 = officer's club
KARATE_FACTION = [0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 1, 0, 0, 1, 0, 1, 0, 1, 1, 1, 1, 1, 1, 1, 1,
                  1, 1, 1, 1]


def karate_graph() -> tuple[BaseGraph, np.ndarray]:
    return BaseGraph.from_edges(34, KARATE_EDGES), np.array(KARATE_FACTION)


def assign_splits(n: int, rng: np.random.Generator, fractions=(0.8, 0.1, 0.1)) -> list[str]:
    counts = [int(round(f * n)) for f in fractions[:2]]
    counts.append(n - sum(counts))
    tags = ["train"] * counts[0] + ["val"] * counts[1] + ["test"] * counts[2]
    order = rng.permutation(n)
    out = [""] * n
    for pos, i in enumerate(order):
        out[i] = tags[pos]
    return out


def sbm_graph(sizes, p_in: float, p_out: float, rng: np.random.Generator) -> tuple[BaseGraph, np.ndarray]:
    """Stochastic block model; ``block[i]`` is node ``i``'s community."""
    block = np.repeat(np.arange(len(sizes)), sizes)
    n = block.size
    iu, ju = np.triu_indices(n, 1)
    p = np.where(block[iu] == block[ju], p_in, p_out)
    keep = rng.random(iu.size) < p
    return BaseGraph.from_edges(n, np.stack([iu[keep], ju[keep]], axis=1)), block


def grow_connected(graph: BaseGraph, start: int, size: int, rng: np.random.Generator) -> list[int]:
    """Random connected node set grown from ``start`` by repeatedly adding a frontier neighbor."""
    nodes = [start]
    seen = {start}
    while len(nodes) < size:
        frontier = sorted({int(u) for v in nodes for u in graph.neighbors(v)} - seen)
        if not frontier:
            break
        w = frontier[rng.integers(len(frontier))]
        nodes.append(w)
        seen.add(w)
    return sorted(nodes)


def make_sbm(num_nodes: int = 200, blocks: int = 2, p_in: float = 0.3, p_out: float = 0.01,
             num_subgraphs: int = 60, subgraph_size: int = 7, seed: int = 0):
    if blocks < 1 or num_nodes < blocks or not (0 <= p_out <= 1 and 0 <= p_in <= 1):
        raise ValueError("invalid SBM parameters")
    if subgraph_size < 1:
        raise ValueError("subgraph_size must be positive")
    rng = np.random.default_rng(seed)
    sizes = [num_nodes // blocks + (1 if b < num_nodes % blocks else 0) for b in range(blocks)]
    graph, block = sbm_graph(sizes, p_in, p_out, rng)
    splits = assign_splits(num_subgraphs, rng)
    records = []
    for i in range(num_subgraphs):
        nodes = grow_connected(graph, int(rng.integers(num_nodes)), subgraph_size, rng)
        counts = np.bincount(block[nodes], minlength=blocks)
        records.append(SubgraphRecord(tuple(nodes), (int(np.argmax(counts)),), splits[i]))
    names = [f"block{b}" for b in range(blocks)]
    return graph, records, names


def make_barbell(clique: int = 5, path: int = 5, num_subgraphs: int = 40, subgraph_size: int = 3, seed: int = 0):
    if clique < 2 or path < 0:
        raise ValueError("invalid barbell parameters")
    rng = np.random.default_rng(seed)
    n = 2 * clique + path
    edges = [(i, j) for i in range(clique) for j in range(i + 1, clique)]
    off = clique + path
    edges += [(off + i, off + j) for i in range(clique) for j in range(i + 1, clique)]
    chain = [clique - 1] + list(range(clique, clique + path)) + [off]
    edges += list(zip(chain[:-1], chain[1:]))
    graph = BaseGraph.from_edges(n, edges)
    side = np.array([0] * clique + [0 if i < path / 2 else 1 for i in range(path)] + [1] * clique)
    splits = assign_splits(num_subgraphs, rng)
    records = []
    for i in range(num_subgraphs):
        label = i % 2
        pool = np.flatnonzero(side == label)
        nodes = sorted(rng.choice(pool, size=min(subgraph_size, pool.size), replace=False).tolist())
        records.append(SubgraphRecord(tuple(nodes), (label,), splits[i]))
    return graph, records, ["left", "right"]


def make_karate(seed: int = 0):
    rng = np.random.default_rng(seed)
    graph, faction = karate_graph()
    splits = assign_splits(34, rng)
    records = [SubgraphRecord((i,), (int(faction[i]),), splits[i]) for i in range(34)]
    return graph, records, ["instructor", "officer"]


GENERATORS = {"sbm": make_sbm, "barbell": make_barbell, "karate": make_karate}


def make_synthetic(kind: str, out_dir, seed: int = 0, **params) -> tuple[Path, Path]:
    """Write ``edges.txt`` and ``subgraphs.txt`` for a generated dataset."""
    if kind not in GENERATORS:
        raise ValueError(f"unknown synthetic kind {kind!r}; expected one of {sorted(GENERATORS)}")
    graph, records, names = GENERATORS[kind](seed=seed, **params)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    edge_path, sub_path = out / "edges.txt", out / "subgraphs.txt"
    save_edges(graph, edge_path)
    save_subgraphs(records, names, sub_path)
    return edge_path, sub_path
