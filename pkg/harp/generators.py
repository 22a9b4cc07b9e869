from __future__ import annotations

import logging
import math

import numpy as np

from harp.graph import Graph, LabelSet

_LOGGER = logging.getLogger(__name__)


def _rng(seed: int | np.random.Generator | None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _sample_pairs(
    n: int, p: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Sample each unordered pair of ``range(n)`` independently with probability p."""
    pair_count = n * (n - 1) // 2
    if pair_count == 0 or p <= 0.0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    edge_count = int(rng.binomial(pair_count, min(p, 1.0)))
    chosen = np.sort(rng.choice(pair_count, size=edge_count, replace=False))
    rows = np.arange(n, dtype=np.int64)
    # first pair index of each row i, pairs (i, j) with j > i
    offsets = rows * (2 * n - rows - 1) // 2
    sources = np.searchsorted(offsets, chosen, side="right") - 1
    targets = chosen - offsets[sources] + sources + 1
    return sources.astype(np.int64), targets.astype(np.int64)


def generate_erdos_renyi(
    n: int, avg_degree: float, seed: int | np.random.Generator | None = None
) -> Graph:
    if n < 1:
        raise ValueError(f"Invalid node count: {n}")
    if avg_degree < 0:
        raise ValueError(f"Invalid average degree: {avg_degree}")
    if n == 1:
        return Graph.empty(1)
    if avg_degree >= n:
        raise ValueError(
            f"Average degree {avg_degree} must be smaller than the node count {n}"
        )
    p = min(avg_degree / (n - 1), 1.0)
    sources, targets = _sample_pairs(n, p, _rng(seed))
    graph = Graph.from_edges(n, sources, targets)
    _LOGGER.info(
        "Generated Erdos-Renyi graph: %d nodes, %d edges (p=%.3g)",
        n,
        graph.edge_count,
        p,
    )
    return graph


def generate_barabasi_albert(
    n: int, m: int, seed: int | np.random.Generator | None = None
) -> Graph:
    if m < 1 or m >= n:
        raise ValueError(f"Attachment count must satisfy 1 <= m < n, got m={m}, n={n}")
    rng = _rng(seed)
    sources: list[int] = []
    targets: list[int] = []
    repeated: list[int] = []
    chosen = list(range(m))
    for source in range(m, n):
        sources.extend([source] * m)
        targets.extend(chosen)
        repeated.extend(chosen)
        repeated.extend([source] * m)
        picked: set[int] = set()
        while len(picked) < m:
            picked.add(repeated[int(rng.integers(len(repeated)))])
        chosen = sorted(picked)
    graph = Graph.from_edges(n, sources, targets)
    _LOGGER.info(
        "Generated Barabasi-Albert graph: %d nodes, %d edges", n, graph.edge_count
    )
    return graph


def generate_planted_partition(
    n: int,
    communities: int,
    avg_degree: float,
    mixing: float,
    seed: int | np.random.Generator | None = None,
) -> tuple[Graph, LabelSet]:
    if communities < 1 or n < 2 * communities:
        raise ValueError(
            f"Need at least two nodes per community, got n={n}, communities={communities}"
        )
    if not 0.0 <= mixing <= 1.0:
        raise ValueError(f"Mixing parameter must be in [0, 1], got {mixing}")
    rng = _rng(seed)
    membership = rng.permutation(np.arange(n) % communities)

    sources: list[np.ndarray] = []
    targets: list[np.ndarray] = []
    for community in range(communities):
        members = np.flatnonzero(membership == community)
        p_in = (1.0 - mixing) * avg_degree / max(members.size - 1, 1)
        src, dst = _sample_pairs(members.size, p_in, rng)
        sources.append(members[src])
        targets.append(members[dst])

    outside = n - n / communities
    if communities > 1 and mixing > 0.0:
        p_out = mixing * avg_degree / outside
        src, dst = _sample_pairs(n, p_out, rng)
        across = membership[src] != membership[dst]
        sources.append(src[across])
        targets.append(dst[across])

    graph = Graph.from_edges(n, np.concatenate(sources), np.concatenate(targets))
    labels = LabelSet(
        {node: frozenset({int(membership[node])}) for node in range(n)},
        communities,
        tuple(str(community) for community in range(communities)),
    )
    _LOGGER.info(
        "Generated planted partition graph: %d nodes, %d edges, %d communities",
        n,
        graph.edge_count,
        communities,
    )
    return graph, labels


def generate_ring_lattice(n: int, neighbors: int = 2) -> Graph:
    if n < 3:
        raise ValueError(f"A ring needs at least 3 nodes, got {n}")
    if not 1 <= neighbors < n / 2:
        raise ValueError(f"Invalid neighbor count {neighbors} for a ring of {n}")
    nodes = np.arange(n, dtype=np.int64)
    sources = np.concatenate([nodes for _ in range(neighbors)])
    targets = np.concatenate([(nodes + step) % n for step in range(1, neighbors + 1)])
    return Graph.from_edges(n, sources, targets)


def generate_grid(rows: int, cols: int) -> Graph:
    if rows < 1 or cols < 1:
        raise ValueError(f"Invalid grid shape: {rows}x{cols}")
    ids = np.arange(rows * cols, dtype=np.int64).reshape(rows, cols)
    sources = np.concatenate([ids[:, :-1].ravel(), ids[:-1, :].ravel()])
    targets = np.concatenate([ids[:, 1:].ravel(), ids[1:, :].ravel()])
    return Graph.from_edges(rows * cols, sources, targets)


GENERATORS = ("erdos_renyi", "barabasi_albert", "planted_partition", "ring_lattice", "grid")


def generate_graph(
    kind: str,
    nodes: int,
    *,
    avg_degree: float = 10.0,
    m: int = 5,
    communities: int = 6,
    mixing: float = 0.2,
    neighbors: int = 2,
    seed: int | None = None,
) -> tuple[Graph, LabelSet | None]:
    match kind:
        case "erdos_renyi":
            return generate_erdos_renyi(nodes, avg_degree, seed), None
        case "barabasi_albert":
            return generate_barabasi_albert(nodes, m, seed), None
        case "planted_partition":
            return generate_planted_partition(nodes, communities, avg_degree, mixing, seed)
        case "ring_lattice":
            return generate_ring_lattice(nodes, neighbors), None
        case "grid":
            side = math.isqrt(nodes)
            if side * side != nodes:
                raise ValueError(f"Grid generator needs a square node count, got {nodes}")
            return generate_grid(side, side), None
        case _:
            raise ValueError(f"Unknown generator: {kind!r}")
