"""Skip-gram training over walk corpora.

Both objectives share one pair-update code path: ``skipgram_pair_step`` and the
corpus training loop call the same numba kernels, so the gradient checks in the
test suite exercise exactly what training runs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from harp.config import Objective, TrainConfig
from harp.embedding import EmbeddingMatrix
from harp.graph import Graph
from harp.sampling import AliasTable, alias_draw, noise_distribution, run_chunked, stream_state
from harp.walks import WalkCorpus

_LOGGER = logging.getLogger(__name__)


class TrainingDivergedError(FloatingPointError):
    pass


@njit(cache=True, nogil=True)
def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


@njit(cache=True, nogil=True)
def _log_sigmoid(x):
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


@njit(cache=True, nogil=True)
def learning_rate(index, total, lr_start, lr_end):
    if total <= 1:
        return lr_start
    rate = lr_start - (lr_start - lr_end) * (index / (total - 1))
    if rate < lr_end:
        return lr_end
    return rate


@njit(cache=True, nogil=True)
def _hierarchical_softmax_update(
    vectors, inner, center, codes, points, code_length, lr, work
):
    dim = vectors.shape[1]
    for k in range(dim):
        work[k] = 0.0
    loss = 0.0
    for j in range(code_length):
        node = points[j]
        score = 0.0
        for k in range(dim):
            score += vectors[center, k] * inner[node, k]
        sign = 1.0 - 2.0 * codes[j]
        step = (1.0 - codes[j] - _sigmoid(score)) * lr
        term = -_log_sigmoid(sign * score)
        if not (math.isfinite(step) and math.isfinite(term)):
            return math.nan
        loss += term
        for k in range(dim):
            work[k] += step * inner[node, k]
            inner[node, k] += step * vectors[center, k]
    for k in range(dim):
        vectors[center, k] += work[k]
    return loss


@njit(cache=True, nogil=True)
def _negative_sampling_update(vectors, output, center, context, negatives, count, lr, work):
    dim = vectors.shape[1]
    for k in range(dim):
        work[k] = 0.0
    loss = 0.0
    for j in range(count + 1):
        if j == 0:
            target = context
            label = 1.0
        else:
            target = negatives[j - 1]
            if target == context:
                continue
            label = 0.0
        score = 0.0
        for k in range(dim):
            score += vectors[center, k] * output[target, k]
        step = (label - _sigmoid(score)) * lr
        if label > 0.0:
            term = -_log_sigmoid(score)
        else:
            term = -_log_sigmoid(-score)
        if not (math.isfinite(step) and math.isfinite(term)):
            return math.nan
        loss += term
        for k in range(dim):
            work[k] += step * output[target, k]
            output[target, k] += step * vectors[center, k]
    for k in range(dim):
        vectors[center, k] += work[k]
    return loss


@njit(cache=True, nogil=True)
def _train_walks_kernel(
    walks,
    lengths,
    pair_offsets,
    begin,
    end,
    window,
    vectors,
    output,
    hierarchical,
    codes,
    points,
    code_lengths,
    noise_prob,
    noise_alias,
    negative_count,
    lr_start,
    lr_end,
    total_pairs,
    seed,
):
    work = np.zeros(vectors.shape[1], dtype=np.float64)
    negatives = np.zeros(max(negative_count, 1), dtype=np.int64)
    state = np.empty(1, dtype=np.uint64)
    noise_size = noise_prob.shape[0]
    loss = 0.0
    for row in range(begin, end):
        state[0] = stream_state(seed, row)
        pair = pair_offsets[row]
        length = lengths[row]
        for i in range(length):
            center = walks[row, i]
            first = max(0, i - window)
            last = min(length, i + window + 1)
            for j in range(first, last):
                if j == i:
                    continue
                context = walks[row, j]
                lr = learning_rate(pair, total_pairs, lr_start, lr_end)
                if hierarchical:
                    term = _hierarchical_softmax_update(
                        vectors,
                        output,
                        center,
                        codes[context],
                        points[context],
                        code_lengths[context],
                        lr,
                        work,
                    )
                else:
                    for s in range(negative_count):
                        negatives[s] = alias_draw(noise_prob, noise_alias, 0, noise_size, state)
                    term = _negative_sampling_update(
                        vectors, output, center, context, negatives, negative_count, lr, work
                    )
                if not math.isfinite(term):
                    return loss, pair
                loss += term
                pair += 1
    return loss, -1


@njit(cache=True)
def _huffman_links(counts, order):
    n = counts.shape[0]
    total = 2 * n - 1
    weight = np.zeros(total, dtype=np.float64)
    parent = np.full(total, -1, dtype=np.int64)
    branch = np.zeros(total, dtype=np.uint8)
    for i in range(n):
        weight[i] = counts[i]
    leaf_pos = 0
    inner_pos = n
    picked = np.empty(2, dtype=np.int64)
    for created in range(n, total):
        for slot in range(2):
            take_leaf = leaf_pos < n and (
                inner_pos >= created or weight[order[leaf_pos]] <= weight[inner_pos]
            )
            if take_leaf:
                picked[slot] = order[leaf_pos]
                leaf_pos += 1
            else:
                picked[slot] = inner_pos
                inner_pos += 1
        weight[created] = weight[picked[0]] + weight[picked[1]]
        parent[picked[0]] = created
        parent[picked[1]] = created
        branch[picked[1]] = 1
    return parent, branch


@njit(cache=True)
def _huffman_paths(parent, branch, n):
    total = 2 * n - 1
    depth = np.zeros(total, dtype=np.int64)
    for node in range(total - 2, -1, -1):
        depth[node] = depth[parent[node]] + 1
    max_length = 0
    for leaf in range(n):
        if depth[leaf] > max_length:
            max_length = depth[leaf]
    codes = np.zeros((n, max_length), dtype=np.uint8)
    points = np.zeros((n, max_length), dtype=np.int64)
    for leaf in range(n):
        node = leaf
        for pos in range(depth[leaf] - 1, -1, -1):
            codes[leaf, pos] = branch[node]
            points[leaf, pos] = parent[node] - n
            node = parent[node]
    return codes, points, depth[:n].copy()


@dataclass
class HuffmanTree:
    codes: np.ndarray
    points: np.ndarray
    code_lengths: np.ndarray
    inner: np.ndarray

    @property
    def leaf_count(self) -> int:
        return int(self.codes.shape[0])

    @property
    def height(self) -> int:
        return int(self.codes.shape[1])

    def code(self, leaf: int) -> str:
        return "".join(str(int(bit)) for bit in self.codes[leaf, : self.code_lengths[leaf]])


def build_huffman_tree(frequencies: np.ndarray, dim: int) -> HuffmanTree:
    counts = np.maximum(np.asarray(frequencies, dtype=np.float64), 1.0)
    if counts.ndim != 1 or counts.size == 0:
        raise ValueError("Huffman tree needs at least one leaf.")
    if dim < 1:
        raise ValueError(f"Invalid dimension: {dim}")
    order = np.argsort(counts, kind="stable").astype(np.int64)
    parent, branch = _huffman_links(counts, order)
    codes, points, lengths = _huffman_paths(parent, branch, counts.size)
    inner = np.zeros((max(counts.size - 1, 0), dim), dtype=np.float64)
    _LOGGER.debug(
        "Built huffman tree over %d leaves, height %d", counts.size, codes.shape[1]
    )
    return HuffmanTree(codes, points, lengths, inner)


@dataclass
class SkipGramParams:
    vectors: np.ndarray
    output: np.ndarray
    tree: HuffmanTree | None = None
    noise: AliasTable | None = None

    @property
    def objective(self) -> Objective:
        if self.tree is not None:
            return Objective.HIERARCHICAL_SOFTMAX
        return Objective.NEGATIVE_SAMPLING

    @classmethod
    def initialize(
        cls,
        graph: Graph,
        config: TrainConfig,
        rng: np.random.Generator,
        init: EmbeddingMatrix | None = None,
        frequencies: np.ndarray | None = None,
    ) -> SkipGramParams:
        n, dim = graph.node_count, config.dim
        if init is not None:
            if init.vectors.shape != (n, dim):
                raise ValueError(
                    f"Initial embedding shape {init.vectors.shape} does not match ({n}, {dim})"
                )
            vectors = np.array(init.vectors, dtype=np.float64, copy=True)
        else:
            vectors = rng.uniform(-0.5 / dim, 0.5 / dim, size=(n, dim))
        if config.objective is Objective.HIERARCHICAL_SOFTMAX:
            counts = frequencies if frequencies is not None else graph.degrees
            tree = build_huffman_tree(counts, dim)
            return cls(vectors, tree.inner, tree=tree)
        noise = noise_distribution(graph) if graph.edge_count else None
        return cls(vectors, np.zeros((n, dim), dtype=np.float64), noise=noise)


def pair_loss(
    params: SkipGramParams, center: int, context: int, negatives: np.ndarray | None = None
) -> float:
    vector = params.vectors[center]
    if params.tree is not None:
        length = params.tree.code_lengths[context]
        scores = params.output[params.tree.points[context, :length]] @ vector
        signs = 1.0 - 2.0 * params.tree.codes[context, :length]
        return float(np.sum(np.logaddexp(0.0, -signs * scores)))
    loss = float(np.logaddexp(0.0, -(params.output[context] @ vector)))
    for target in negatives if negatives is not None else ():
        if target == context:
            continue
        loss += float(np.logaddexp(0.0, params.output[target] @ vector))
    return loss


def leaf_probabilities(params: SkipGramParams, center: int) -> np.ndarray:
    if params.tree is None:
        raise ValueError("Leaf probabilities need a hierarchical softmax model.")
    tree = params.tree
    scores = params.output @ params.vectors[center]
    signs = 1.0 - 2.0 * tree.codes.astype(np.float64)
    mask = np.arange(tree.height)[None, :] < tree.code_lengths[:, None]
    log_terms = -np.logaddexp(0.0, -signs * scores[tree.points])
    return np.exp(np.where(mask, log_terms, 0.0).sum(axis=1))


def _draw_negatives(
    params: SkipGramParams, config: TrainConfig, rng: np.random.Generator | None
) -> np.ndarray:
    if not config.negatives:
        return np.zeros(0, dtype=np.int64)
    if params.noise is None:
        raise ValueError("Negative sampling needs a noise distribution.")
    generator = rng if rng is not None else np.random.default_rng(config.seed)
    return params.noise.sample(config.negatives, generator)


def skipgram_pair_step(
    center: int,
    context: int,
    params: SkipGramParams,
    config: TrainConfig,
    lr: float,
    rng: np.random.Generator | None = None,
    negatives: np.ndarray | None = None,
) -> float:
    work = np.zeros(params.vectors.shape[1], dtype=np.float64)
    if params.tree is not None:
        loss = _hierarchical_softmax_update(
            params.vectors,
            params.output,
            center,
            params.tree.codes[context],
            params.tree.points[context],
            params.tree.code_lengths[context],
            lr,
            work,
        )
    else:
        if negatives is None:
            negatives = _draw_negatives(params, config, rng)
        drawn = np.asarray(negatives, dtype=np.int64)
        buffer = drawn if drawn.size else np.zeros(1, dtype=np.int64)
        loss = _negative_sampling_update(
            params.vectors, params.output, center, context, buffer, drawn.size, lr, work
        )
    if not math.isfinite(loss):
        raise TrainingDivergedError(
            f"Non-finite gradient for pair ({center}, {context}) at learning rate {lr}"
        )
    return loss


def window_pair_counts(walk_length: int, window: int) -> np.ndarray:
    """Number of (center, context) pairs in a walk of each length ``0..walk_length``."""
    counts = np.zeros(walk_length + 1, dtype=np.int64)
    for length in range(walk_length + 1):
        counts[length] = sum(
            min(length - 1, i + window) - max(0, i - window) for i in range(length)
        )
    return counts


def count_pairs(corpus: WalkCorpus, window: int) -> int:
    return int(window_pair_counts(corpus.walk_length, window)[corpus.lengths].sum())


def train_skipgram(
    corpus: WalkCorpus,
    graph: Graph,
    init: EmbeddingMatrix | None,
    config: TrainConfig,
) -> EmbeddingMatrix:
    rng = np.random.default_rng(config.seed)
    frequencies = np.bincount(corpus.walks[corpus.walks >= 0], minlength=graph.node_count)
    params = SkipGramParams.initialize(graph, config, rng, init, frequencies)
    hierarchical = params.tree is not None
    if not hierarchical and config.negatives and params.noise is None:
        _LOGGER.warning("Graph has no edges; training without negative samples")

    per_walk = window_pair_counts(corpus.walk_length, config.window)[corpus.lengths]
    offsets = np.concatenate([[0], np.cumsum(per_walk)[:-1]]).astype(np.int64)
    total_pairs = int(per_walk.sum())
    noise_prob = params.noise.prob if params.noise is not None else np.ones(1)
    noise_alias = params.noise.alias if params.noise is not None else np.zeros(1, np.int64)
    negative_count = config.negatives if params.noise is not None else 0
    tree = params.tree
    codes = tree.codes if tree is not None else np.zeros((1, 1), np.uint8)
    points = tree.points if tree is not None else np.zeros((1, 1), np.int64)
    code_lengths = tree.code_lengths if tree is not None else np.zeros(1, np.int64)
    kernel_seed = np.uint64(rng.integers(np.iinfo(np.int64).max))
    _LOGGER.debug(
        "Training skip-gram (%s): %d walks, %d pairs, lr %.4g -> %.4g",
        config.objective,
        corpus.walk_count,
        total_pairs,
        config.lr_start,
        config.lr_end,
    )

    def work(begin: int, end: int) -> tuple[float, int]:
        return _train_walks_kernel(
            corpus.walks,
            corpus.lengths,
            offsets,
            begin,
            end,
            config.window,
            params.vectors,
            params.output,
            hierarchical,
            codes,
            points,
            code_lengths,
            noise_prob,
            noise_alias,
            negative_count,
            config.lr_start,
            config.lr_end,
            total_pairs,
            kernel_seed,
        )

    results = run_chunked(work, corpus.walk_count, config.thread_count)
    for _, failed in results:
        if failed >= 0:
            raise TrainingDivergedError(
                f"Skip-gram training diverged at pair {failed} of {total_pairs} "
                f"(lr_start={config.lr_start}); lower the learning rate"
            )
    embedding = EmbeddingMatrix(params.vectors, params.output)
    if not embedding.is_finite():
        raise TrainingDivergedError("Skip-gram training produced non-finite parameters")
    loss = sum(loss for loss, _ in results)
    _LOGGER.debug("Skip-gram mean pair loss %.5f", loss / max(total_pairs, 1))
    return embedding
