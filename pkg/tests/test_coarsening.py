import logging
from pathlib import Path

import numpy as np
import pytest
from scipy.sparse import csgraph

from tests.conftest import MakeGraph
from harp.coarsening import (
    CoarseningHierarchy,
    ParentMap,
    coarsen_hierarchy,
    contract,
    edge_collapse,
    hybrid_step,
    level_stats,
    load_hierarchy,
    save_hierarchy,
    star_collapse,
    write_level_stats,
)
from harp.generators import (
    generate_barabasi_albert,
    generate_erdos_renyi,
    generate_planted_partition,
)
from harp.graph import Graph, load_edge_list


def _is_connected(graph: Graph) -> bool:
    count, _ = csgraph.connected_components(graph.adjacency, directed=False)
    return count == 1


def _intra_weight(graph: Graph, parents: np.ndarray) -> float:
    sources, targets, weights = graph.edges()
    return float(weights[parents[sources] == parents[targets]].sum())


def _star(make_graph: MakeGraph, leaves: int) -> Graph:
    return make_graph([(0, leaf) for leaf in range(1, leaves + 1)])


@pytest.mark.parametrize("seed", range(5))
def test_edge_collapse_triangle(make_graph: MakeGraph, seed: int) -> None:
    triangle = make_graph([(0, 1), (1, 2), (0, 2)])

    coarse, parent_map = edge_collapse(triangle, np.random.default_rng(seed))

    assert coarse.node_count == 2
    assert coarse.edge_count == 1
    assert coarse.weight(0, 1) == 2.0
    assert sorted(parent_map.preimage_sizes().tolist()) == [1, 2]


def test_edge_collapse_produces_a_maximal_matching() -> None:
    graph = generate_erdos_renyi(300, 4.0, seed=1)

    _, parent_map = edge_collapse(graph, np.random.default_rng(0))

    sizes = parent_map.preimage_sizes()
    assert sizes.max() <= 2
    unmatched = np.flatnonzero(sizes[parent_map.parents] == 1)
    lonely = set(unmatched.tolist())
    sources, targets, _ = graph.edges()
    assert not any(u in lonely and v in lonely for u, v in zip(sources, targets))


def test_edge_collapse_respects_eligibility(make_graph: MakeGraph) -> None:
    path = make_graph([(0, 1), (1, 2), (2, 3)])
    eligible = np.array([False, True, True, False])

    coarse, parent_map = edge_collapse(path, np.random.default_rng(0), eligible)

    assert parent_map.parents.tolist() == [0, 1, 1, 2]
    assert coarse.node_count == 3


def test_edge_collapse_isolated_node(make_graph: MakeGraph) -> None:
    coarse, parent_map = edge_collapse(make_graph([], node_count=1), np.random.default_rng(0))

    assert coarse.node_count == 1
    assert parent_map.parents.tolist() == [0]


def test_edge_collapse_prefers_heavy_edges(make_graph: MakeGraph) -> None:
    path = make_graph([(0, 1, 20.0), (1, 2, 1.0)])

    heavy = 0
    for seed in range(200):
        _, parent_map = edge_collapse(path, np.random.default_rng(seed))
        heavy += int(parent_map.parents[0] == parent_map.parents[1])

    assert heavy >= 170


def test_hierarchy_keeps_communities_together() -> None:
    graph, labels = generate_planted_partition(2000, 4, 10.0, 0.1, seed=5)
    membership = np.array([min(labels.node_labels[node]) for node in range(graph.node_count)])

    hierarchy = coarsen_hierarchy(graph, threshold=50, rng=np.random.default_rng(5))

    assert hierarchy.depth >= 3
    for level, floor in ((1, 0.8), (3, 0.7)):
        ancestors = hierarchy.ancestors(level)
        counts = np.zeros((ancestors.coarse_count, labels.label_count), dtype=np.int64)
        np.add.at(counts, (ancestors.parents, membership), 1)
        merged = ancestors.preimage_sizes() > 1
        purity = counts[merged].max(axis=1).sum() / counts[merged].sum()
        assert purity >= floor


def test_star_collapse_pairs_peripheral_nodes(make_graph: MakeGraph) -> None:
    star = _star(make_graph, 6)

    coarse, parent_map = star_collapse(star, np.random.default_rng(3))

    assert coarse.node_count == 4
    assert parent_map.preimage_sizes()[parent_map.parents[0]] == 1
    assert sorted(parent_map.preimage_sizes().tolist()) == [1, 2, 2, 2]
    hub = parent_map.parents[0]
    assert coarse.degrees[hub] == 3
    assert coarse.weighted_degrees[hub] == 6.0


def test_star_collapse_odd_leaf_stays_single(make_graph: MakeGraph) -> None:
    coarse, parent_map = star_collapse(_star(make_graph, 5), np.random.default_rng(0))

    assert coarse.node_count == 4
    assert sorted(parent_map.preimage_sizes().tolist()) == [1, 1, 2, 2]


def test_star_collapse_path(make_graph: MakeGraph) -> None:
    path = make_graph([(0, 1), (1, 2)])

    coarse, parent_map = star_collapse(path, np.random.default_rng(0))

    assert parent_map.parents.tolist() == [0, 1, 0]
    assert coarse.edge_count == 1
    assert coarse.weight(0, 1) == 2.0


def test_star_collapse_edgeless_graph(make_graph: MakeGraph) -> None:
    coarse, parent_map = star_collapse(make_graph([], node_count=4), np.random.default_rng(0))

    assert coarse.node_count == 4
    assert parent_map.parents.tolist() == [0, 1, 2, 3]


def test_hybrid_step_keeps_merges_pairwise(make_graph: MakeGraph) -> None:
    star = _star(make_graph, 6)

    coarse, parent_map = hybrid_step(star, np.random.default_rng(0))

    assert coarse.node_count == 4
    assert parent_map.preimage_sizes().max() == 2


def test_star_collapse_pairs_adjacent_neighbors_first(make_graph: MakeGraph) -> None:
    edges = [(0, leaf) for leaf in range(1, 7)] + [(1, 2), (3, 4)]
    graph = make_graph(edges)

    for seed in range(10):
        _, parent_map = star_collapse(graph, np.random.default_rng(seed))

        parents = parent_map.parents
        assert parents[1] == parents[2]
        assert parents[3] == parents[4]
        assert parents[5] == parents[6]


def test_star_collapse_leaves_neighbors_of_similar_degree(make_graph: MakeGraph) -> None:
    edges = [(0, node) for node in range(1, 5)]
    leaf = 5
    for node in range(1, 5):
        edges += [(node, leaf), (node, leaf + 1)]
        leaf += 2
    graph = make_graph(edges)

    _, parent_map = star_collapse(graph, np.random.default_rng(0))

    sizes = parent_map.preimage_sizes()[parent_map.parents]
    assert sizes[:5].tolist() == [1, 1, 1, 1, 1]
    assert (sizes[5:] == 2).all()


def test_contract_sums_parallel_edges(make_graph: MakeGraph) -> None:
    graph = make_graph([(0, 2, 1.5), (1, 2, 2.0), (0, 1, 4.0), (2, 3)])
    parent_map = ParentMap(np.array([0, 0, 1, 2]), 3)

    coarse = contract(graph, parent_map)

    assert coarse.weight(0, 1) == 3.5
    assert coarse.weight(1, 2) == 1.0
    assert coarse.total_weight == graph.total_weight - 4.0


def test_parent_map_validation_and_composition() -> None:
    with pytest.raises(ValueError, match="out of range"):
        ParentMap(np.array([0, 2]), 2)
    first = ParentMap(np.array([0, 0, 1, 2]), 3)
    second = ParentMap(np.array([0, 1, 0]), 2)

    assert first.then(second).parents.tolist() == [0, 0, 1, 0]
    with pytest.raises(ValueError, match="Cannot compose"):
        second.then(first)


def test_small_graph_is_its_own_hierarchy() -> None:
    graph = generate_erdos_renyi(50, 4.0, seed=0)

    hierarchy = coarsen_hierarchy(graph, threshold=100, rng=np.random.default_rng(0))

    assert hierarchy.depth == 0
    assert hierarchy.coarsest is graph


def test_hierarchy_stalls_on_edgeless_graph(
    make_graph: MakeGraph, caplog: pytest.LogCaptureFixture
) -> None:
    with caplog.at_level(logging.INFO):
        hierarchy = coarsen_hierarchy(
            make_graph([], node_count=200), threshold=10, rng=np.random.default_rng(0)
        )

    assert hierarchy.depth == 0
    assert "stalled" in caplog.text


def test_hierarchy_respects_max_levels() -> None:
    graph = generate_erdos_renyi(400, 6.0, seed=2)

    hierarchy = coarsen_hierarchy(graph, threshold=2, max_levels=2, rng=np.random.default_rng(0))

    assert hierarchy.depth == 2


@pytest.mark.parametrize("seed", range(100))
def test_hierarchy_invariants_on_random_graphs(seed: int) -> None:
    rng = np.random.default_rng(seed)
    nodes = int(rng.integers(20, 120))
    if seed % 2:
        graph = generate_barabasi_albert(nodes, int(rng.integers(1, 4)), seed=seed)
    else:
        graph = generate_erdos_renyi(nodes, float(rng.uniform(1.0, 6.0)), seed=seed)

    hierarchy = coarsen_hierarchy(graph, threshold=8, rng=np.random.default_rng(seed))

    for level, parent_map in enumerate(hierarchy.parent_maps):
        fine, coarse = hierarchy.graphs[level], hierarchy.graphs[level + 1]
        sizes = parent_map.preimage_sizes()
        assert coarse.node_count < fine.node_count
        assert sizes.min() >= 1
        assert sizes.max() <= 2
        assert sizes.sum() == fine.node_count
        assert coarse.total_weight == pytest.approx(
            fine.total_weight - _intra_weight(fine, parent_map.parents)
        )
        if _is_connected(fine):
            assert _is_connected(coarse)
    assert (
        hierarchy.coarsest.node_count < 8
        or hierarchy.coarsest.edge_count == 0
        or hierarchy.depth == 32
    )
    assert hierarchy.ancestors(hierarchy.depth).fine_count == graph.node_count


def test_hierarchy_is_deterministic() -> None:
    graph = generate_barabasi_albert(500, 3, seed=4)

    first = coarsen_hierarchy(graph, threshold=20, rng=np.random.default_rng(11))
    second = coarsen_hierarchy(graph, threshold=20, rng=np.random.default_rng(11))

    assert first.node_counts == second.node_counts
    for a, b in zip(first.parent_maps, second.parent_maps):
        np.testing.assert_array_equal(a.parents, b.parents)


def test_ancestors_compose_parent_maps() -> None:
    graph = generate_erdos_renyi(200, 5.0, seed=6)
    hierarchy = coarsen_hierarchy(graph, threshold=10, rng=np.random.default_rng(1))

    expected = np.arange(graph.node_count)
    for level in range(hierarchy.depth + 1):
        np.testing.assert_array_equal(hierarchy.ancestors(level).parents, expected)
        if level < hierarchy.depth:
            expected = hierarchy.parent_maps[level].parents[expected]
    with pytest.raises(ValueError, match="Invalid level"):
        hierarchy.ancestors(hierarchy.depth + 1)


def test_hierarchy_validation(make_graph: MakeGraph) -> None:
    graph = make_graph([(0, 1)])

    with pytest.raises(ValueError, match="at least the input graph"):
        CoarseningHierarchy([])
    with pytest.raises(ValueError, match="one parent map per"):
        CoarseningHierarchy([graph, graph])


def test_level_stats_csv(tmp_path: Path) -> None:
    graph = generate_erdos_renyi(300, 6.0, seed=0)
    hierarchy = coarsen_hierarchy(graph, threshold=50, rng=np.random.default_rng(0))

    stats = level_stats(hierarchy)
    write_level_stats(stats, tmp_path / "levels.csv")

    assert stats[0].node_ratio == 1.0
    assert [row.nodes for row in stats] == hierarchy.node_counts
    lines = (tmp_path / "levels.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "level,nodes,edges,node_ratio,edge_ratio"
    assert len(lines) == hierarchy.depth + 2


def test_hierarchy_round_trip_keeps_isolated_nodes(tmp_path: Path) -> None:
    text = "".join(f"n{i} n{(i + 1) % 40} {1 + i % 3}\n" for i in range(40))
    ring = load_edge_list(text)
    graph = Graph.from_edges(
        41,
        *ring.edges()[:2],
        ring.edges()[2],
        external_ids=[ring.external_id(v) for v in range(40)] + ["lonely"],
    )
    hierarchy = coarsen_hierarchy(graph, threshold=5, rng=np.random.default_rng(2))
    assert hierarchy.depth >= 2

    save_hierarchy(hierarchy, tmp_path / "h")
    loaded = load_hierarchy(tmp_path / "h")

    assert loaded.node_counts == hierarchy.node_counts
    assert loaded.graphs[0].external_id(40) == "lonely"
    assert [loaded.graphs[0].external_id(v) for v in range(41)] == [
        graph.external_id(v) for v in range(41)
    ]
    for original, reloaded in zip(hierarchy.graphs, loaded.graphs):
        assert (original.adjacency != reloaded.adjacency).nnz == 0
    for original, reloaded in zip(hierarchy.parent_maps, loaded.parent_maps):
        np.testing.assert_array_equal(original.parents, reloaded.parents)
    assert (tmp_path / "h" / "levels.csv").exists()


def test_load_hierarchy_errors(tmp_path: Path) -> None:
    with pytest.raises(NotADirectoryError):
        load_hierarchy(tmp_path / "missing")
    with pytest.raises(FileNotFoundError, match="level_"):
        load_hierarchy(tmp_path)
