from __future__ import annotations

import logging
import math

import numpy as np
from numba import njit

from harp.config import TrainConfig
from harp.embedding import EmbeddingMatrix
from harp.graph import Graph
from harp.sampling import AliasTable, alias_draw, noise_distribution, run_chunked, stream_state
from harp.skipgram import TrainingDivergedError, learning_rate

_LOGGER = logging.getLogger(__name__)


@njit(cache=True, nogil=True)
def _first_order_kernel(
    arc_sources,
    arc_targets,
    arc_prob,
    arc_alias,
    vectors,
    noise_prob,
    noise_alias,
    negative_count,
    begin,
    end,
    lr_start,
    lr_end,
    total,
    seed,
):
    dim = vectors.shape[1]
    work = np.zeros(dim, dtype=np.float64)
    state = np.empty(1, dtype=np.uint64)
    arc_count = arc_prob.shape[0]
    noise_size = noise_prob.shape[0]
    loss = 0.0
    for sample in range(begin, end):
        state[0] = stream_state(seed, sample)
        arc = alias_draw(arc_prob, arc_alias, 0, arc_count, state)
        u = arc_sources[arc]
        v = arc_targets[arc]
        lr = learning_rate(sample, total, lr_start, lr_end)
        for k in range(dim):
            work[k] = 0.0
        for j in range(negative_count + 1):
            if j == 0:
                target = v
                label = 1.0
            else:
                target = alias_draw(noise_prob, noise_alias, 0, noise_size, state)
                if target == u or target == v:
                    continue
                label = 0.0
            score = 0.0
            for k in range(dim):
                score += vectors[u, k] * vectors[target, k]
            if score >= 0:
                sig = 1.0 / (1.0 + math.exp(-score))
            else:
                sig = math.exp(score) / (1.0 + math.exp(score))
            step = (label - sig) * lr
            if label > 0.0:
                term = -math.log(sig) if sig > 0.0 else math.inf
            else:
                term = -math.log1p(-sig) if sig < 1.0 else math.inf
            if not (math.isfinite(step) and math.isfinite(score)):
                return loss, sample
            loss += term
            for k in range(dim):
                work[k] += step * vectors[target, k]
                vectors[target, k] += step * vectors[u, k]
        for k in range(dim):
            vectors[u, k] += work[k]
    return loss, -1


def _arcs(graph: Graph) -> tuple[np.ndarray, np.ndarray, AliasTable]:
    sources = np.repeat(np.arange(graph.node_count, dtype=np.int64), graph.degrees)
    targets = graph.indices.astype(np.int64)
    return sources, targets, AliasTable.from_weights(graph.weights)


def train_line_first_order(
    graph: Graph,
    init: EmbeddingMatrix | None,
    config: TrainConfig,
    samples: int | None = None,
) -> EmbeddingMatrix:
    """First-order LINE with a single symmetric embedding matrix.

    Runs ``config.line_iterations * |E|`` edge samples unless ``samples`` is
    given; edges are drawn proportionally to weight.
    """
    if graph.edge_count == 0:
        raise ValueError("LINE needs a graph with at least one edge.")
    n, dim = graph.node_count, config.dim
    rng = np.random.default_rng(config.seed)
    if init is not None:
        if init.vectors.shape != (n, dim):
            raise ValueError(
                f"Initial embedding shape {init.vectors.shape} does not match ({n}, {dim})"
            )
        vectors = np.array(init.vectors, dtype=np.float64, copy=True)
    else:
        vectors = rng.uniform(-0.5 / dim, 0.5 / dim, size=(n, dim))

    total = config.line_iterations * graph.edge_count if samples is None else samples
    if total < 0:
        raise ValueError(f"Invalid sample count: {total}")
    sources, targets, arcs = _arcs(graph)
    noise = noise_distribution(graph)
    kernel_seed = np.uint64(rng.integers(np.iinfo(np.int64).max))
    _LOGGER.debug(
        "Training first-order LINE: %d edge samples, lr %.4g -> %.4g",
        total,
        config.lr_start,
        config.lr_end,
    )

    def work(begin: int, end: int) -> tuple[float, int]:
        return _first_order_kernel(
            sources,
            targets,
            arcs.prob,
            arcs.alias,
            vectors,
            noise.prob,
            noise.alias,
            config.negatives,
            begin,
            end,
            config.lr_start,
            config.lr_end,
            total,
            kernel_seed,
        )

    results = run_chunked(work, total, config.thread_count)
    for _, failed in results:
        if failed >= 0:
            raise TrainingDivergedError(
                f"LINE training diverged at sample {failed} of {total} "
                f"(lr_start={config.lr_start}); lower the learning rate"
            )
    embedding = EmbeddingMatrix(vectors)
    if not embedding.is_finite():
        raise TrainingDivergedError("LINE training produced non-finite parameters")
    _LOGGER.debug(
        "LINE mean sample loss %.5f", sum(loss for loss, _ in results) / max(total, 1)
    )
    return embedding
