from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from harp.config import DEFAULT_MAX_LEVELS, DEFAULT_THRESHOLD
from harp.graph import Graph, format_edge_list, read_edge_list

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class ParentMap:
    parents: np.ndarray
    coarse_count: int

    def __post_init__(self) -> None:
        if self.parents.ndim != 1:
            raise ValueError("Parent map must be one-dimensional.")
        if self.parents.size and (
            self.parents.min() < 0 or self.parents.max() >= self.coarse_count
        ):
            raise ValueError(
                f"Parent id out of range for {self.coarse_count} coarse nodes"
            )

    @classmethod
    def identity(cls, node_count: int) -> ParentMap:
        return cls(np.arange(node_count, dtype=np.int64), node_count)

    @property
    def fine_count(self) -> int:
        return int(self.parents.size)

    def preimage_sizes(self) -> np.ndarray:
        return np.bincount(self.parents, minlength=self.coarse_count)

    def then(self, other: ParentMap) -> ParentMap:
        """Compose with a map from this map's coarse nodes to coarser ones."""
        if other.fine_count != self.coarse_count:
            raise ValueError(
                f"Cannot compose maps: {self.coarse_count} coarse nodes vs "
                f"{other.fine_count} fine nodes"
            )
        return ParentMap(other.parents[self.parents], other.coarse_count)


@dataclass(frozen=True)
class CoarseningHierarchy:
    graphs: list[Graph]
    parent_maps: list[ParentMap] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.graphs:
            raise ValueError("A hierarchy needs at least the input graph.")
        if len(self.parent_maps) != len(self.graphs) - 1:
            raise ValueError("Expected one parent map per coarsening step.")
        for level, parent_map in enumerate(self.parent_maps):
            if parent_map.fine_count != self.graphs[level].node_count:
                raise ValueError(f"Parent map {level} does not cover level {level}")
            if parent_map.coarse_count != self.graphs[level + 1].node_count:
                raise ValueError(f"Parent map {level} does not target level {level + 1}")

    @property
    def depth(self) -> int:
        return len(self.graphs) - 1

    @property
    def coarsest(self) -> Graph:
        return self.graphs[-1]

    @property
    def node_counts(self) -> list[int]:
        return [graph.node_count for graph in self.graphs]

    @property
    def edge_counts(self) -> list[int]:
        return [graph.edge_count for graph in self.graphs]

    def ancestors(self, level: int) -> ParentMap:
        if not 0 <= level <= self.depth:
            raise ValueError(f"Invalid level {level} for depth {self.depth}")
        composed = ParentMap.identity(self.graphs[0].node_count)
        for parent_map in self.parent_maps[:level]:
            composed = composed.then(parent_map)
        return composed


@njit(cache=True)
def _greedy_matching(sources, targets, order, eligible):
    mate = np.full(eligible.shape[0], -1, dtype=np.int64)
    for edge in order:
        u = sources[edge]
        v = targets[edge]
        if eligible[u] and eligible[v] and mate[u] < 0 and mate[v] < 0:
            mate[u] = v
            mate[v] = u
    return mate


@njit(cache=True)
def _star_matching(indptr, indices, degrees, hub_order, keys):
    node_count = indptr.shape[0] - 1
    mate = np.full(node_count, -1, dtype=np.int64)
    is_hub = np.zeros(node_count, dtype=np.bool_)
    owner = np.full(node_count, -1, dtype=np.int64)
    candidates = np.empty(node_count, dtype=np.int64)
    for hub in hub_order:
        if mate[hub] >= 0:
            continue
        count = 0
        for arc in range(indptr[hub], indptr[hub + 1]):
            node = indices[arc]
            # peripheral: at most half the hub's degree
            if mate[node] < 0 and not is_hub[node] and 2 * degrees[node] <= degrees[hub]:
                candidates[count] = node
                count += 1
        if count < 2:
            continue
        is_hub[hub] = True
        group = candidates[:count].copy()
        group = group[np.argsort(keys[group])]
        for node in group:
            owner[node] = hub
        # neighbors of the hub that are also adjacent to each other pair first
        for node in group:
            if mate[node] >= 0:
                continue
            best = -1
            for arc in range(indptr[node], indptr[node + 1]):
                other = indices[arc]
                if owner[other] == hub and mate[other] < 0 and other != node:
                    if best < 0 or keys[other] < keys[best]:
                        best = other
            if best >= 0:
                mate[node] = best
                mate[best] = node
        pending = -1
        for node in group:
            if mate[node] >= 0:
                continue
            if pending < 0:
                pending = node
            else:
                mate[pending] = node
                mate[node] = pending
                pending = -1
    return mate


@njit(cache=True)
def _mates_to_parents(mate):
    parents = np.full(mate.shape[0], -1, dtype=np.int64)
    coarse = 0
    for node in range(mate.shape[0]):
        if parents[node] >= 0:
            continue
        parents[node] = coarse
        if mate[node] >= 0:
            parents[mate[node]] = coarse
        coarse += 1
    return parents, coarse


def contract(graph: Graph, parent_map: ParentMap) -> Graph:
    """Merge nodes by ``parent_map``; parallel edges sum, intra-supernode edges vanish."""
    if parent_map.fine_count != graph.node_count:
        raise ValueError(
            f"Parent map covers {parent_map.fine_count} nodes, graph has {graph.node_count}"
        )
    sources, targets, weights = graph.edges()
    parents = parent_map.parents
    return Graph.from_edges(
        parent_map.coarse_count, parents[sources], parents[targets], weights
    )


def _from_mates(graph: Graph, mate: np.ndarray) -> tuple[Graph, ParentMap]:
    parents, coarse_count = _mates_to_parents(mate)
    parent_map = ParentMap(parents, int(coarse_count))
    return contract(graph, parent_map), parent_map


def edge_collapse(
    graph: Graph, rng: np.random.Generator, eligible: np.ndarray | None = None
) -> tuple[Graph, ParentMap]:
    """Contract a greedy maximal matching over edges in weighted random order.

    Heavier edges tend to come first; with unit weights the order is a uniform
    shuffle. Only nodes flagged in ``eligible`` (all by default) take part.
    """
    if eligible is None:
        eligible = np.ones(graph.node_count, dtype=np.bool_)
    sources, targets, weights = graph.edges()
    order = np.argsort(rng.exponential(size=sources.size) / weights, kind="stable")
    mate = _greedy_matching(sources, targets, order, eligible.astype(np.bool_))
    return _from_mates(graph, mate)


def star_collapse(graph: Graph, rng: np.random.Generator) -> tuple[Graph, ParentMap]:
    nodes = np.arange(graph.node_count, dtype=np.int64)
    hub_order = np.lexsort((nodes, -graph.degrees)).astype(np.int64)
    keys = rng.random(graph.node_count)
    mate = _star_matching(
        graph.indptr.astype(np.int64),
        graph.indices.astype(np.int64),
        graph.degrees,
        hub_order,
        keys,
    )
    return _from_mates(graph, mate)


def hybrid_step(graph: Graph, rng: np.random.Generator) -> tuple[Graph, ParentMap]:
    starred, star_map = star_collapse(graph, rng)
    # supernodes from the star pass stay out of the matching, so merges remain pairwise
    untouched = star_map.preimage_sizes() == 1
    collapsed, edge_map = edge_collapse(starred, rng, untouched)
    return collapsed, star_map.then(edge_map)


def coarsen_hierarchy(
    graph: Graph,
    threshold: int = DEFAULT_THRESHOLD,
    max_levels: int = DEFAULT_MAX_LEVELS,
    rng: np.random.Generator | None = None,
) -> CoarseningHierarchy:
    if threshold < 1:
        raise ValueError(f"Invalid threshold: {threshold}")
    generator = rng if rng is not None else np.random.default_rng()
    graphs = [graph]
    parent_maps: list[ParentMap] = []
    current = graph
    while current.node_count >= threshold and len(parent_maps) < max_levels:
        coarser, parent_map = hybrid_step(current, generator)
        if coarser.node_count >= current.node_count:
            _LOGGER.info(
                "Coarsening stalled at level %d with %d nodes",
                len(parent_maps),
                current.node_count,
            )
            break
        graphs.append(coarser)
        parent_maps.append(parent_map)
        _LOGGER.debug(
            "Coarsened level %d: %d nodes, %d edges",
            len(parent_maps),
            coarser.node_count,
            coarser.edge_count,
        )
        current = coarser
    hierarchy = CoarseningHierarchy(graphs, parent_maps)
    _LOGGER.info(
        "Built hierarchy with %d levels: %s nodes",
        hierarchy.depth + 1,
        " -> ".join(str(count) for count in hierarchy.node_counts),
    )
    return hierarchy


@dataclass(frozen=True)
class LevelStats:
    level: int
    nodes: int
    edges: int
    node_ratio: float
    edge_ratio: float


def level_stats(hierarchy: CoarseningHierarchy) -> list[LevelStats]:
    base_nodes = max(hierarchy.graphs[0].node_count, 1)
    base_edges = max(hierarchy.graphs[0].edge_count, 1)
    return [
        LevelStats(
            level,
            graph.node_count,
            graph.edge_count,
            graph.node_count / base_nodes,
            graph.edge_count / base_edges,
        )
        for level, graph in enumerate(hierarchy.graphs)
    ]


def write_level_stats(stats: list[LevelStats], path: Path | str) -> None:
    destination = Path(path)
    destination.parent.mkdir(parents=True, exist_ok=True)
    with destination.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["level", "nodes", "edges", "node_ratio", "edge_ratio"])
        for row in stats:
            writer.writerow(
                [row.level, row.nodes, row.edges, repr(row.node_ratio), repr(row.edge_ratio)]
            )
    _LOGGER.info("Wrote level statistics: %s", destination.as_posix())


def save_hierarchy(hierarchy: CoarseningHierarchy, directory: Path | str) -> None:
    """Write ``level_<i>.edgelist``, ``parents_<i>.tsv`` and ``levels.csv``.

    Level 0 uses the input's external ids; coarser levels use their dense ids.
    Parent files list every fine node, isolated ones included, in id order.
    """
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    for level, graph in enumerate(hierarchy.graphs):
        (root / f"level_{level}.edgelist").write_text(
            format_edge_list(graph), encoding="utf-8"
        )
    for level, parent_map in enumerate(hierarchy.parent_maps):
        fine = hierarchy.graphs[level]
        lines = [
            f"{fine.external_id(node)}\t{int(parent)}\n"
            for node, parent in enumerate(parent_map.parents)
        ]
        (root / f"parents_{level}.tsv").write_text("".join(lines), encoding="utf-8")
    write_level_stats(level_stats(hierarchy), root / "levels.csv")
    _LOGGER.info("Saved hierarchy with %d levels to %s", hierarchy.depth + 1, root.as_posix())


def _read_parents(path: Path) -> tuple[list[str], np.ndarray]:
    ids: list[str] = []
    parents: list[int] = []
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise ValueError(f"{path.as_posix()} line {number}: expected 2 fields")
        try:
            parents.append(int(fields[1]))
        except ValueError as exc:
            raise ValueError(f"{path.as_posix()} line {number}: {exc}") from exc
        ids.append(fields[0])
    return ids, np.array(parents, dtype=np.int64)


def _read_level(path: Path, node_ids: list[str]) -> Graph:
    index = {node_id: node for node, node_id in enumerate(node_ids)}
    sources: list[int] = []
    targets: list[int] = []
    weights: list[float] = []
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        try:
            sources.append(index[tokens[0]])
            targets.append(index[tokens[1]])
            weights.append(float(tokens[2]) if len(tokens) > 2 else 1.0)
        except (KeyError, IndexError, ValueError) as exc:
            raise ValueError(f"{path.as_posix()} line {number}: {exc!r}") from exc
    return Graph.from_edges(len(node_ids), sources, targets, weights, node_ids)


def load_hierarchy(directory: Path | str) -> CoarseningHierarchy:
    root = Path(directory)
    if not root.is_dir():
        raise NotADirectoryError(f"{root} is not a directory")
    level_files = sorted(
        root.glob("level_*.edgelist"), key=lambda path: int(path.stem.split("_")[1])
    )
    if not level_files:
        raise FileNotFoundError(f"No level_<i>.edgelist files in {root}")
    if len(level_files) == 1:
        return CoarseningHierarchy([read_edge_list(level_files[0])])

    graphs: list[Graph] = []
    parent_maps: list[ParentMap] = []
    for level in range(len(level_files) - 1):
        fine_ids, parents = _read_parents(root / f"parents_{level}.tsv")
        if level == 0:
            graphs.append(_read_level(level_files[0], fine_ids))
        elif fine_ids != [str(node) for node in range(graphs[level].node_count)]:
            raise ValueError(f"parents_{level}.tsv does not list level {level} in id order")
        coarse_count = int(parents.max()) + 1 if parents.size else 0
        parent_maps.append(ParentMap(parents, coarse_count))
        coarse_ids = [str(node) for node in range(coarse_count)]
        coarse = _read_level(level_files[level + 1], coarse_ids)
        graphs.append(Graph(coarse.adjacency))
    return CoarseningHierarchy(graphs, parent_maps)
