from __future__ import annotations

import logging
import math
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

_LOGGER = logging.getLogger(__name__)
_LABEL_SEPARATORS = re.compile(r"[\s,]+")


class EdgeListParseError(ValueError):
    def __init__(self, line_number: int, message: str) -> None:
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class LabelParseError(ValueError):
    def __init__(self, line_number: int, message: str) -> None:
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected weighted graph over dense ids ``0..node_count-1``.

    The adjacency matrix is symmetric with sorted column indices, no stored
    diagonal and strictly positive weights. Instances are never mutated.
    """

    adjacency: sparse.csr_array
    external_ids: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        rows, cols = self.adjacency.shape
        if rows != cols:
            raise ValueError(f"Adjacency must be square, got {self.adjacency.shape}")
        if self.external_ids is not None and len(self.external_ids) != rows:
            raise ValueError(
                f"Expected {rows} external ids, got {len(self.external_ids)}"
            )

    @classmethod
    def from_edges(
        cls,
        node_count: int,
        sources: Sequence[int] | np.ndarray,
        targets: Sequence[int] | np.ndarray,
        weights: Sequence[float] | np.ndarray | None = None,
        external_ids: Sequence[str] | None = None,
    ) -> Graph:
        if node_count < 0:
            raise ValueError(f"Invalid node count: {node_count}")
        src = np.asarray(sources, dtype=np.int64)
        dst = np.asarray(targets, dtype=np.int64)
        if src.shape != dst.shape:
            raise ValueError("Sources and targets must have the same length.")
        if weights is None:
            wgt = np.ones(src.shape[0], dtype=np.float64)
        else:
            wgt = np.asarray(weights, dtype=np.float64)
            if wgt.shape != src.shape:
                raise ValueError("Weights must match the number of edges.")
            if wgt.size and not (np.isfinite(wgt).all() and (wgt > 0).all()):
                raise ValueError("Edge weights must be finite and positive.")
        if src.size and (
            min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= node_count
        ):
            raise ValueError(f"Edge endpoint out of range for {node_count} nodes")

        keep = src != dst
        src, dst, wgt = src[keep], dst[keep], wgt[keep]
        half = sparse.coo_array(
            (wgt, (src, dst)), shape=(node_count, node_count)
        ).tocsr()
        adjacency = (half + half.T).tocsr()
        adjacency.sum_duplicates()
        adjacency.eliminate_zeros()
        adjacency.sort_indices()
        ids = tuple(external_ids) if external_ids is not None else None
        return cls(adjacency, ids)

    @classmethod
    def empty(cls, node_count: int, external_ids: Sequence[str] | None = None) -> Graph:
        return cls.from_edges(node_count, [], [], external_ids=external_ids)

    @property
    def node_count(self) -> int:
        return int(self.adjacency.shape[0])

    @property
    def edge_count(self) -> int:
        return int(self.adjacency.nnz // 2)

    @property
    def indptr(self) -> np.ndarray:
        return self.adjacency.indptr

    @property
    def indices(self) -> np.ndarray:
        return self.adjacency.indices

    @property
    def weights(self) -> np.ndarray:
        return self.adjacency.data

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr).astype(np.int64)

    @cached_property
    def weighted_degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1), dtype=np.float64).ravel()

    @property
    def total_weight(self) -> float:
        return float(self.adjacency.data.sum()) / 2.0

    @cached_property
    def _index(self) -> dict[str, int]:
        return {self.external_id(v): v for v in range(self.node_count)}

    def neighbors(self, node: int) -> np.ndarray:
        start, end = self.indptr[node], self.indptr[node + 1]
        return self.indices[start:end]

    def neighbor_weights(self, node: int) -> np.ndarray:
        start, end = self.indptr[node], self.indptr[node + 1]
        return self.weights[start:end]

    def weight(self, u: int, v: int) -> float:
        neighbors = self.neighbors(u)
        pos = int(np.searchsorted(neighbors, v))
        if pos < neighbors.size and neighbors[pos] == v:
            return float(self.neighbor_weights(u)[pos])
        return 0.0

    def has_edge(self, u: int, v: int) -> bool:
        return self.weight(u, v) > 0.0

    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        upper = sparse.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return (
            upper.row[order].astype(np.int64),
            upper.col[order].astype(np.int64),
            upper.data[order].astype(np.float64),
        )

    def external_id(self, node: int) -> str:
        if self.external_ids is None:
            return str(node)
        return self.external_ids[node]

    def index_of(self, external_id: str) -> int:
        try:
            return self._index[external_id]
        except KeyError as exc:
            raise ValueError(f"Unknown node id: {external_id!r}") from exc

    def has_external_id(self, external_id: str) -> bool:
        return external_id in self._index

    def subgraph(self, nodes: np.ndarray) -> Graph:
        nodes = np.asarray(nodes, dtype=np.int64)
        induced = self.adjacency[nodes][:, nodes].tocsr()
        induced.sort_indices()
        ids = tuple(self.external_id(int(v)) for v in nodes)
        return Graph(induced, ids)


@dataclass(frozen=True)
class LabelSet:
    node_labels: Mapping[int, frozenset[int]]
    label_count: int
    label_names: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.label_names and len(self.label_names) != self.label_count:
            raise ValueError(
                f"Expected {self.label_count} label names, got {len(self.label_names)}"
            )
        for node, labels in self.node_labels.items():
            if not labels:
                raise ValueError(f"Node {node} has an empty label set.")
            for label in labels:
                if not 0 <= label < self.label_count:
                    raise ValueError(f"Label id {label} out of range for node {node}")

    def validate_for(self, graph: Graph) -> None:
        for node in self.node_labels:
            if not 0 <= node < graph.node_count:
                raise ValueError(
                    f"Labeled node {node} out of range for {graph.node_count} nodes"
                )

    def labeled_nodes(self) -> np.ndarray:
        return np.array(sorted(self.node_labels), dtype=np.int64)

    def label_name(self, label: int) -> str:
        if self.label_names:
            return self.label_names[label]
        return str(label)

    def indicator(self, nodes: Iterable[int]) -> np.ndarray:
        node_list = list(nodes)
        matrix = np.zeros((len(node_list), self.label_count), dtype=bool)
        for row, node in enumerate(node_list):
            matrix[row, sorted(self.node_labels[int(node)])] = True
        return matrix

    def counts(self, nodes: Iterable[int]) -> np.ndarray:
        return np.array(
            [len(self.node_labels[int(node)]) for node in nodes], dtype=np.int64
        )

    def restrict(self, nodes: Iterable[int]) -> LabelSet:
        keep = {int(node) for node in nodes}
        return LabelSet(
            {node: labels for node, labels in self.node_labels.items() if node in keep},
            self.label_count,
            self.label_names,
        )


def _content_lines(text: str) -> Iterable[tuple[int, str]]:
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield number, line


def _parse_weight(token: str, line_number: int) -> float:
    try:
        weight = float(token)
    except ValueError as exc:
        raise EdgeListParseError(line_number, f"Invalid weight: {token!r}") from exc
    if not math.isfinite(weight) or weight <= 0:
        raise EdgeListParseError(line_number, f"Weight must be positive: {token!r}")
    return weight


def load_edge_list(text: str) -> Graph:
    ids: dict[str, int] = {}
    sources: list[int] = []
    targets: list[int] = []
    weights: list[float] = []
    self_loops = 0

    for number, line in _content_lines(text):
        tokens = line.split()
        if len(tokens) not in (2, 3):
            raise EdgeListParseError(
                number, f"Expected 2 or 3 tokens, got {len(tokens)}: {line!r}"
            )
        weight = _parse_weight(tokens[2], number) if len(tokens) == 3 else 1.0
        u = ids.setdefault(tokens[0], len(ids))
        v = ids.setdefault(tokens[1], len(ids))
        if u == v:
            self_loops += 1
            continue
        sources.append(u)
        targets.append(v)
        weights.append(weight)

    if self_loops:
        _LOGGER.warning("Dropped %d self-loop lines", self_loops)
    graph = Graph.from_edges(len(ids), sources, targets, weights, list(ids))
    _LOGGER.info(
        "Loaded edge list: %d nodes, %d edges", graph.node_count, graph.edge_count
    )
    return graph


def read_edge_list(path: Path | str) -> Graph:
    source = Path(path)
    _LOGGER.info("Reading edge list: %s", source.as_posix())
    return load_edge_list(source.read_text(encoding="utf-8"))


def format_edge_list(graph: Graph) -> str:
    sources, targets, weights = graph.edges()
    lines = [
        f"{graph.external_id(int(u))} {graph.external_id(int(v))} {float(w)!r}"
        for u, v, w in zip(sources, targets, weights)
    ]
    return "".join(f"{line}\n" for line in lines)


def write_edge_list(graph: Graph, path: Path | str) -> None:
    destination = Path(path)
    destination.parent.mkdir(parents=True, exist_ok=True)
    destination.write_text(format_edge_list(graph), encoding="utf-8")
    _LOGGER.info("Wrote edge list: %s", destination.as_posix())


def _label_sort_key(name: str) -> tuple[int, int | str]:
    try:
        return (0, int(name))
    except ValueError:
        return (1, name)


def load_labels(text: str, graph: Graph) -> LabelSet:
    raw: dict[int, set[str]] = {}
    for number, line in _content_lines(text):
        tokens = [token for token in _LABEL_SEPARATORS.split(line) if token]
        if not tokens:
            raise LabelParseError(number, "Missing node id")
        node_token, label_tokens = tokens[0], tokens[1:]
        if not label_tokens:
            raise LabelParseError(number, f"No labels for node {node_token!r}")
        if not graph.has_external_id(node_token):
            raise LabelParseError(number, f"Unknown node id: {node_token!r}")
        raw.setdefault(graph.index_of(node_token), set()).update(label_tokens)

    names = sorted({name for labels in raw.values() for name in labels}, key=_label_sort_key)
    label_ids = {name: index for index, name in enumerate(names)}
    node_labels = {
        node: frozenset(label_ids[name] for name in labels)
        for node, labels in raw.items()
    }
    labels = LabelSet(node_labels, len(names), tuple(names))
    _LOGGER.info(
        "Loaded labels: %d labeled nodes, %d classes", len(node_labels), len(names)
    )
    return labels


def read_labels(path: Path | str, graph: Graph) -> LabelSet:
    source = Path(path)
    _LOGGER.info("Reading labels: %s", source.as_posix())
    return load_labels(source.read_text(encoding="utf-8"), graph)


def write_labels(labels: LabelSet, graph: Graph, path: Path | str) -> None:
    destination = Path(path)
    destination.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for node in labels.labeled_nodes():
        names = " ".join(
            labels.label_name(label) for label in sorted(labels.node_labels[int(node)])
        )
        lines.append(f"{graph.external_id(int(node))} {names}\n")
    destination.write_text("".join(lines), encoding="utf-8")
    _LOGGER.info("Wrote labels: %s", destination.as_posix())


def edge_list_labels(labels: LabelSet, graph: Graph) -> LabelSet:
    """Labels of the nodes an edge list can name; isolated nodes never appear in one."""
    connected = np.flatnonzero(graph.degrees > 0)
    dropped = len(labels.node_labels) - int(np.isin(labels.labeled_nodes(), connected).sum())
    if dropped:
        _LOGGER.warning("Omitting labels of %d isolated nodes", dropped)
    return labels.restrict(connected)


def largest_connected_component(graph: Graph) -> Graph:
    if graph.node_count == 0:
        return graph
    count, membership = csgraph.connected_components(graph.adjacency, directed=False)
    sizes = np.bincount(membership, minlength=count)
    # components are numbered by their smallest member, so argmax breaks ties correctly
    largest = int(np.argmax(sizes))
    nodes = np.flatnonzero(membership == largest)
    if count > 1:
        _LOGGER.info(
            "Largest connected component: %d of %d nodes (%d components)",
            nodes.size,
            graph.node_count,
            count,
        )
    return graph.subgraph(nodes)
