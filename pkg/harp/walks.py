from __future__ import annotations

import logging
from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np
from numba import njit

from harp.graph import Graph
from harp.sampling import (
    NeighborTables,
    alias_draw,
    next_uniform,
    run_chunked,
    stream_state,
)

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class WalkCorpus:
    """Walks stored row-wise; row ``i`` holds ``lengths[i]`` node ids, padded with -1."""

    walks: np.ndarray
    lengths: np.ndarray
    walk_length: int
    walks_per_node: int

    @property
    def walk_count(self) -> int:
        return int(self.walks.shape[0])

    @property
    def token_count(self) -> int:
        return int(self.lengths.sum())

    def walk(self, index: int) -> np.ndarray:
        return self.walks[index, : self.lengths[index]]

    def __iter__(self) -> Iterator[np.ndarray]:
        for index in range(self.walk_count):
            yield self.walk(index)

    def __len__(self) -> int:
        return self.walk_count


@njit(cache=True, nogil=True)
def _is_adjacent(indptr, indices, u, v):
    lo = indptr[u]
    hi = indptr[u + 1]
    while lo < hi:
        mid = (lo + hi) // 2
        if indices[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo < indptr[u + 1] and indices[lo] == v


@njit(cache=True, nogil=True)
def _walk_kernel(
    indptr,
    indices,
    arc_prob,
    arc_alias,
    starts,
    begin,
    end,
    walk_length,
    inv_p,
    inv_q,
    seed,
    walks,
    lengths,
):
    biased = inv_p != 1.0 or inv_q != 1.0
    ceiling = max(inv_p, 1.0, inv_q)
    state = np.empty(1, dtype=np.uint64)
    for row in range(begin, end):
        state[0] = stream_state(seed, row)
        current = starts[row]
        previous = -1
        walks[row, 0] = current
        length = 1
        while length < walk_length:
            offset = indptr[current]
            degree = indptr[current + 1] - offset
            if degree == 0:
                break
            while True:
                candidate = indices[offset + alias_draw(arc_prob, arc_alias, offset, degree, state)]
                if previous < 0 or not biased:
                    break
                if candidate == previous:
                    factor = inv_p
                elif _is_adjacent(indptr, indices, previous, candidate):
                    factor = 1.0
                else:
                    factor = inv_q
                if next_uniform(state) * ceiling < factor:
                    break
            walks[row, length] = candidate
            length += 1
            previous = current
            current = candidate
        lengths[row] = length


def _start_nodes(
    node_count: int, walks_per_node: int, rng: np.random.Generator
) -> np.ndarray:
    rounds = [rng.permutation(node_count) for _ in range(walks_per_node)]
    if not rounds:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(rounds).astype(np.int64)


def _generate(
    graph: Graph,
    walks_per_node: int,
    walk_length: int,
    inv_p: float,
    inv_q: float,
    seed: int,
    thread_count: int,
    extra_walks: int,
    start_pool: np.ndarray | None = None,
) -> WalkCorpus:
    if walk_length < 1:
        raise ValueError(f"Walk length must be at least 1, got {walk_length}")
    if walks_per_node < 0:
        raise ValueError(f"Invalid walks per node: {walks_per_node}")
    rng = np.random.default_rng(seed)
    starts = _start_nodes(graph.node_count, walks_per_node, rng)
    if extra_walks:
        pool = start_pool if start_pool is not None else np.arange(graph.node_count)
        if extra_walks > pool.size:
            raise ValueError(
                f"Cannot draw {extra_walks} extra walks from {pool.size} start nodes"
            )
        extra = rng.choice(pool, size=extra_walks, replace=False).astype(np.int64)
        starts = np.concatenate([starts, extra])
    tables = NeighborTables.for_graph(graph)
    indptr = graph.indptr.astype(np.int64)
    indices = graph.indices.astype(np.int64)
    walks = np.full((starts.size, walk_length), -1, dtype=np.int32)
    lengths = np.zeros(starts.size, dtype=np.int64)
    kernel_seed = np.uint64(rng.integers(np.iinfo(np.int64).max))

    def work(begin: int, end: int) -> None:
        _walk_kernel(
            indptr,
            indices,
            tables.prob,
            tables.alias,
            starts,
            begin,
            end,
            walk_length,
            inv_p,
            inv_q,
            kernel_seed,
            walks,
            lengths,
        )

    run_chunked(work, int(starts.size), thread_count)
    corpus = WalkCorpus(walks, lengths, walk_length, walks_per_node)
    _LOGGER.debug(
        "Generated %d walks (%d tokens) over %d nodes",
        corpus.walk_count,
        corpus.token_count,
        graph.node_count,
    )
    return corpus


def random_walks(
    graph: Graph,
    walks_per_node: int,
    walk_length: int,
    seed: int,
    *,
    thread_count: int = 1,
    extra_walks: int = 0,
    start_pool: np.ndarray | None = None,
) -> WalkCorpus:
    return _generate(
        graph,
        walks_per_node,
        walk_length,
        1.0,
        1.0,
        seed,
        thread_count,
        extra_walks,
        start_pool,
    )


def node2vec_walks(
    graph: Graph,
    walks_per_node: int,
    walk_length: int,
    p: float,
    q: float,
    seed: int,
    *,
    thread_count: int = 1,
    extra_walks: int = 0,
    start_pool: np.ndarray | None = None,
) -> WalkCorpus:
    if p <= 0 or q <= 0:
        raise ValueError(f"Return and in-out parameters must be positive, got p={p}, q={q}")
    return _generate(
        graph,
        walks_per_node,
        walk_length,
        1.0 / p,
        1.0 / q,
        seed,
        thread_count,
        extra_walks,
        start_pool,
    )
