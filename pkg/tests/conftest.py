from pathlib import Path
from typing import Callable, Sequence

import pytest

from harp.config import HarpConfig
from harp.graph import Graph

EdgeSpec = Sequence[tuple[int, int]] | Sequence[tuple[int, int, float]]
MakeGraph = Callable[..., Graph]
MakeConfig = Callable[..., HarpConfig]
WriteText = Callable[[Path, str, str], Path]

_FAST_SETTINGS: dict[str, object] = {
    "dim": 8,
    "window": 3,
    "walks_per_node": 4,
    "walk_length": 8,
    "line_iterations": 20,
    "threshold": 10,
}


@pytest.fixture
def make_graph() -> MakeGraph:
    def _make_graph(edges: EdgeSpec, node_count: int | None = None) -> Graph:
        sources = [edge[0] for edge in edges]
        targets = [edge[1] for edge in edges]
        weights = [edge[2] if len(edge) > 2 else 1.0 for edge in edges]
        if node_count is None:
            node_count = max([*sources, *targets], default=-1) + 1
        return Graph.from_edges(node_count, sources, targets, weights)

    return _make_graph


@pytest.fixture
def make_config() -> MakeConfig:
    def _make_config(method: str = "deepwalk", **overrides: object) -> HarpConfig:
        settings = {**_FAST_SETTINGS, **overrides}
        return HarpConfig.for_method(method, **settings)

    return _make_config


@pytest.fixture
def write_text() -> WriteText:
    def _write_text(root: Path, relative_path: str, content: str) -> Path:
        path = root / relative_path
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(content, encoding="utf-8")
        return path

    return _write_text
