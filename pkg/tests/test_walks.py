import numpy as np
import pytest

from tests.conftest import MakeGraph
from harp.generators import generate_erdos_renyi, generate_ring_lattice
from harp.walks import WalkCorpus, node2vec_walks, random_walks


def _return_fraction(corpus: WalkCorpus) -> float:
    returns = 0
    steps = 0
    for walk in corpus:
        for i in range(2, walk.size):
            steps += 1
            returns += int(walk[i] == walk[i - 2])
    return returns / steps


def test_random_walks_follow_edges() -> None:
    graph = generate_erdos_renyi(60, 5.0, seed=2)

    corpus = random_walks(graph, 3, 12, seed=4)

    assert corpus.walk_count == 180
    assert corpus.walks.shape == (180, 12)
    for walk in corpus:
        assert all(graph.has_edge(int(a), int(b)) for a, b in zip(walk[:-1], walk[1:]))


def test_each_round_starts_once_from_every_node() -> None:
    graph = generate_ring_lattice(20)

    corpus = random_walks(graph, 4, 5, seed=0)

    starts = corpus.walks[:, 0].reshape(4, 20)
    for round_starts in starts:
        assert sorted(round_starts.tolist()) == list(range(20))


def test_isolated_nodes_yield_single_token_walks(make_graph: MakeGraph) -> None:
    graph = make_graph([(0, 1), (1, 2)], node_count=5)

    corpus = random_walks(graph, 2, 6, seed=1)

    isolated = corpus.walks[:, 0] >= 3
    assert corpus.lengths[isolated].tolist() == [1] * 4
    assert np.all(corpus.walks[isolated, 1:] == -1)
    assert corpus.lengths[~isolated].tolist() == [6] * 6
    assert corpus.token_count == 2 * (6 * 3 + 2)


def test_walks_are_deterministic_across_thread_counts() -> None:
    graph = generate_erdos_renyi(200, 6.0, seed=8)

    single = random_walks(graph, 5, 10, seed=21)
    again = random_walks(graph, 5, 10, seed=21)
    threaded = random_walks(graph, 5, 10, seed=21, thread_count=4)
    other = random_walks(graph, 5, 10, seed=22)

    np.testing.assert_array_equal(single.walks, again.walks)
    np.testing.assert_array_equal(single.walks, threaded.walks)
    assert not np.array_equal(single.walks, other.walks)


def test_node2vec_with_unit_parameters_matches_uniform_walks() -> None:
    graph = generate_erdos_renyi(150, 6.0, seed=3)

    uniform = random_walks(graph, 4, 10, seed=5)
    biased = node2vec_walks(graph, 4, 10, 1.0, 1.0, seed=5)

    np.testing.assert_array_equal(uniform.walks, biased.walks)


def test_node2vec_return_parameter_controls_backtracking() -> None:
    cycle = generate_ring_lattice(40, neighbors=1)

    uniform = _return_fraction(random_walks(cycle, 20, 20, seed=0))
    returning = _return_fraction(node2vec_walks(cycle, 20, 20, 0.25, 1.0, seed=0))
    exploring = _return_fraction(node2vec_walks(cycle, 20, 20, 4.0, 1.0, seed=0))

    assert uniform == pytest.approx(0.5, abs=0.03)
    assert returning == pytest.approx(0.8, abs=0.03)
    assert exploring == pytest.approx(0.2, abs=0.03)


def test_weighted_walks_prefer_heavy_edges(make_graph: MakeGraph) -> None:
    graph = make_graph([(0, 1, 9.0), (0, 2, 1.0)])

    corpus = random_walks(graph, 2000, 2, seed=3)

    from_center = corpus.walks[corpus.walks[:, 0] == 0, 1]
    assert np.mean(from_center == 1) == pytest.approx(0.9, abs=0.03)


def test_extra_walks_start_from_pool() -> None:
    graph = generate_ring_lattice(30)
    pool = np.arange(10, 20)

    corpus = random_walks(graph, 2, 5, seed=0, extra_walks=7, start_pool=pool)

    assert corpus.walk_count == 2 * 30 + 7
    extra_starts = corpus.walks[60:, 0]
    assert len(set(extra_starts.tolist())) == 7
    assert np.all((extra_starts >= 10) & (extra_starts < 20))
    with pytest.raises(ValueError, match="extra walks"):
        random_walks(graph, 1, 5, seed=0, extra_walks=11, start_pool=pool)


def test_walk_parameters_are_validated() -> None:
    graph = generate_ring_lattice(10)

    with pytest.raises(ValueError, match="Walk length"):
        random_walks(graph, 1, 0, seed=0)
    with pytest.raises(ValueError, match="must be positive"):
        node2vec_walks(graph, 1, 5, 0.0, 1.0, seed=0)


def test_node2vec_return_probability_on_triangle(make_graph: MakeGraph) -> None:
    triangle = make_graph([(0, 1), (1, 2), (0, 2)])

    corpus = node2vec_walks(triangle, 6000, 3, 2.0, 2.0, seed=5)

    assert _return_fraction(corpus) == pytest.approx(1 / 3, abs=0.03)


@pytest.mark.parametrize("p", [1.0, 1.5])
def test_node2vec_outward_step_on_path(make_graph: MakeGraph, p: float) -> None:
    path = make_graph([(0, 1), (1, 2)])

    corpus = node2vec_walks(path, 6000, 3, p, 0.5, seed=6)

    from_ends = corpus.walks[corpus.walks[:, 0] != 1]
    outward = float(np.mean(from_ends[:, 2] != from_ends[:, 0]))
    # odds of moving on versus returning are 2p to 1
    assert outward == pytest.approx(2 * p / (2 * p + 1), abs=0.03)
