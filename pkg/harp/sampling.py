from __future__ import annotations

import logging
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from harp.graph import Graph

_LOGGER = logging.getLogger(__name__)

NOISE_EXPONENT = 0.75

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_SHIFT30 = np.uint64(30)
_SHIFT27 = np.uint64(27)
_SHIFT31 = np.uint64(31)
_SHIFT11 = np.uint64(11)
_INV_2_53 = 1.0 / 9007199254740992.0


@njit(cache=True, nogil=True)
def _mix64(z):
    z = (z ^ (z >> _SHIFT30)) * _MIX1
    z = (z ^ (z >> _SHIFT27)) * _MIX2
    return z ^ (z >> _SHIFT31)


@njit(cache=True, nogil=True)
def stream_state(seed, stream):
    """Start of the splitmix64 stream for ``(seed, stream)``."""
    return _mix64(np.uint64(seed) + np.uint64(stream) * _GOLDEN)


@njit(cache=True, nogil=True)
def next_uniform(state):
    state[0] = state[0] + _GOLDEN
    return float(_mix64(state[0]) >> _SHIFT11) * _INV_2_53


@njit(cache=True, nogil=True)
def next_below(state, n):
    value = int(next_uniform(state) * n)
    if value >= n:
        value = n - 1
    return value


@njit(cache=True, nogil=True)
def alias_draw(prob, alias, offset, size, state):
    slot = next_below(state, size)
    if next_uniform(state) < prob[offset + slot]:
        return slot
    return alias[offset + slot]


@njit(cache=True, nogil=True)
def _fill_alias(weights, prob, alias, small, large):
    n = weights.shape[0]
    total = 0.0
    for i in range(n):
        total += weights[i]
    scaled = weights * (n / total)
    small_count = 0
    large_count = 0
    for i in range(n):
        if scaled[i] < 1.0:
            small[small_count] = i
            small_count += 1
        else:
            large[large_count] = i
            large_count += 1
    while small_count > 0 and large_count > 0:
        small_count -= 1
        lesser = small[small_count]
        large_count -= 1
        greater = large[large_count]
        prob[lesser] = scaled[lesser]
        alias[lesser] = greater
        scaled[greater] = scaled[greater] + scaled[lesser] - 1.0
        if scaled[greater] < 1.0:
            small[small_count] = greater
            small_count += 1
        else:
            large[large_count] = greater
            large_count += 1
    while large_count > 0:
        large_count -= 1
        prob[large[large_count]] = 1.0
        alias[large[large_count]] = large[large_count]
    while small_count > 0:
        small_count -= 1
        prob[small[small_count]] = 1.0
        alias[small[small_count]] = small[small_count]


@njit(cache=True)
def _build_alias(weights):
    n = weights.shape[0]
    prob = np.ones(n, dtype=np.float64)
    alias = np.arange(n, dtype=np.int64)
    _fill_alias(weights, prob, alias, np.empty(n, np.int64), np.empty(n, np.int64))
    return prob, alias


@njit(cache=True)
def _build_segmented_alias(indptr, weights):
    size = weights.shape[0]
    prob = np.ones(size, dtype=np.float64)
    alias = np.zeros(size, dtype=np.int64)
    small = np.empty(size, np.int64)
    large = np.empty(size, np.int64)
    for node in range(indptr.shape[0] - 1):
        start = indptr[node]
        end = indptr[node + 1]
        if end > start:
            _fill_alias(
                weights[start:end],
                prob[start:end],
                alias[start:end],
                small[start:end],
                large[start:end],
            )
    return prob, alias


@dataclass(frozen=True)
class AliasTable:
    prob: np.ndarray
    alias: np.ndarray

    @classmethod
    def from_weights(cls, weights: np.ndarray) -> AliasTable:
        values = np.asarray(weights, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("Alias table needs a non-empty 1-D weight vector.")
        if not np.isfinite(values).all() or (values < 0).any():
            raise ValueError("Alias table weights must be finite and non-negative.")
        if values.sum() <= 0:
            raise ValueError("Alias table weights must not all be zero.")
        prob, alias = _build_alias(values)
        return cls(prob, alias)

    @property
    def size(self) -> int:
        return int(self.prob.shape[0])

    def probabilities(self) -> np.ndarray:
        result = self.prob.copy()
        np.add.at(result, self.alias, 1.0 - self.prob)
        return result / self.size

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        slots = rng.integers(self.size, size=size)
        keep = rng.random(size) < self.prob[slots]
        return np.where(keep, slots, self.alias[slots])


@dataclass(frozen=True)
class NeighborTables:
    """Per-node alias tables packed alongside the CSR arcs of a graph."""

    prob: np.ndarray
    alias: np.ndarray

    @classmethod
    def for_graph(cls, graph: Graph) -> NeighborTables:
        prob, alias = _build_segmented_alias(
            graph.indptr.astype(np.int64), graph.weights.astype(np.float64)
        )
        return cls(prob, alias)


def noise_distribution(graph: Graph) -> AliasTable:
    strength = graph.weighted_degrees
    if not (strength > 0).any():
        raise ValueError("Noise distribution needs at least one edge.")
    return AliasTable.from_weights(np.power(strength, NOISE_EXPONENT))


def split_range(total: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, total)) if total else 1
    bounds = np.linspace(0, total, parts + 1).astype(np.int64)
    return [(int(bounds[i]), int(bounds[i + 1])) for i in range(parts)]


def run_chunked[T](
    work: Callable[[int, int], T], total: int, thread_count: int
) -> list[T]:
    """Run ``work(begin, end)`` over disjoint slices of ``range(total)``.

    With more than one thread the slices run concurrently; ``work`` is expected
    to call numba kernels compiled with ``nogil=True``.
    """
    chunks = split_range(total, thread_count)
    if len(chunks) == 1:
        return [work(*chunks[0])]
    _LOGGER.debug("Dispatching %d items over %d threads", total, len(chunks))
    with ThreadPoolExecutor(max_workers=len(chunks)) as executor:
        futures = [executor.submit(work, begin, end) for begin, end in chunks]
        return [future.result() for future in futures]
