from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
from tqdm import tqdm

from harp.coarsening import CoarseningHierarchy, ParentMap, coarsen_hierarchy
from harp.config import HarpConfig, Method, TrainConfig
from harp.embedding import EmbeddingMatrix
from harp.graph import Graph
from harp.line import train_line_first_order
from harp.minify import write_text_output
from harp.render import LevelEntry, ReportRenderer
from harp.skipgram import count_pairs, train_skipgram
from harp.walks import node2vec_walks, random_walks

_LOGGER = logging.getLogger(__name__)


def prolongate(coarse: EmbeddingMatrix, parent_map: ParentMap) -> EmbeddingMatrix:
    if coarse.rows != parent_map.coarse_count:
        raise ValueError(
            f"Parent id out of range: embedding has {coarse.rows} rows, "
            f"parent map targets {parent_map.coarse_count} nodes"
        )
    return EmbeddingMatrix(coarse.vectors[parent_map.parents])


def walk_unit(graph: Graph, walk_length: int) -> int:
    """Walk tokens emitted by one round of walks, one walk per node."""
    isolated = int(np.count_nonzero(graph.degrees == 0))
    return walk_length * (graph.node_count - isolated) + isolated


@dataclass(frozen=True)
class SampleBudget:
    method: Method
    per_level: tuple[int, ...]
    unit: int
    rate: int

    @property
    def total(self) -> int:
        return sum(self.per_level)

    @property
    def baseline_equivalent(self) -> int:
        if not self.unit:
            return self.rate
        return math.ceil(self.total / self.unit)

    @property
    def baseline_rounds(self) -> int:
        return self.total // self.unit if self.unit else 0

    @property
    def remainder(self) -> int:
        return self.total - self.baseline_rounds * self.unit

    def to_dict(self) -> dict[str, object]:
        return {
            "method": str(self.method),
            "per_level": list(self.per_level),
            "unit": self.unit,
            "rate": self.rate,
            "total": self.total,
            "baseline_equivalent": self.baseline_equivalent,
        }


def compute_sample_budget(
    hierarchy: CoarseningHierarchy, config: HarpConfig
) -> SampleBudget:
    train = config.train
    if config.method.uses_walks:
        per_level = tuple(
            train.walks_per_node * walk_unit(graph, train.walk_length)
            for graph in hierarchy.graphs
        )
        unit = walk_unit(hierarchy.graphs[0], train.walk_length)
        rate = train.walks_per_node
    else:
        per_level = tuple(
            train.line_iterations * graph.edge_count for graph in hierarchy.graphs
        )
        unit = hierarchy.graphs[0].edge_count
        rate = train.line_iterations
    budget = SampleBudget(config.method, per_level, unit, rate)
    _LOGGER.debug(
        "Sample budget: %s per level, %d total, baseline equivalent %d",
        list(per_level),
        budget.total,
        budget.baseline_equivalent,
    )
    return budget


@dataclass
class PhaseTimings:
    coarsening: float = 0.0
    sampling: float = 0.0
    training: float = 0.0
    prolongation: float = 0.0

    @property
    def total(self) -> float:
        return self.coarsening + self.sampling + self.training + self.prolongation

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class LevelTraining:
    embedding: EmbeddingMatrix
    samples: int
    pairs: int


@dataclass(frozen=True)
class HarpRun:
    embedding: EmbeddingMatrix
    budget: SampleBudget
    level_samples: tuple[int, ...]
    level_pairs: tuple[int, ...]
    timings: PhaseTimings
    hierarchy: CoarseningHierarchy | None = None
    level_embeddings: tuple[EmbeddingMatrix, ...] | None = None

    @property
    def samples(self) -> int:
        return sum(self.level_samples)

    @property
    def pairs(self) -> int:
        return sum(self.level_pairs)


def _level_seeds(seed: int, level: int) -> tuple[int, int]:
    state = np.random.SeedSequence([seed, level]).generate_state(2)
    return int(state[0]), int(state[1])


def embed_graph(
    graph: Graph,
    method: Method,
    config: TrainConfig,
    init: EmbeddingMatrix | None = None,
    *,
    level: int = 0,
    walks_per_node: int | None = None,
    extra_walks: int = 0,
    start_pool: np.ndarray | None = None,
    samples: int | None = None,
    timings: PhaseTimings | None = None,
) -> LevelTraining:
    """Train one graph with the configured embedder, warm-started from ``init``."""
    timings = timings if timings is not None else PhaseTimings()
    walk_seed, train_seed = _level_seeds(config.seed, level)
    level_config = config.with_seed(train_seed)

    if method.uses_walks:
        rounds = config.walks_per_node if walks_per_node is None else walks_per_node
        start = time.perf_counter()
        if method is Method.NODE2VEC:
            corpus = node2vec_walks(
                graph,
                rounds,
                config.walk_length,
                config.p,
                config.q,
                walk_seed,
                thread_count=config.thread_count,
                extra_walks=extra_walks,
                start_pool=start_pool,
            )
        else:
            corpus = random_walks(
                graph,
                rounds,
                config.walk_length,
                walk_seed,
                thread_count=config.thread_count,
                extra_walks=extra_walks,
                start_pool=start_pool,
            )
        timings.sampling += time.perf_counter() - start
        start = time.perf_counter()
        embedding = train_skipgram(corpus, graph, init, level_config)
        timings.training += time.perf_counter() - start
        return LevelTraining(embedding, corpus.token_count, count_pairs(corpus, config.window))

    if graph.edge_count == 0:
        _LOGGER.warning("Level %d has no edges; keeping its initial embedding", level)
        if init is not None:
            return LevelTraining(init.copy(), 0, 0)
        rng = np.random.default_rng(train_seed)
        dim = config.dim
        vectors = rng.uniform(-0.5 / dim, 0.5 / dim, size=(graph.node_count, dim))
        return LevelTraining(EmbeddingMatrix(vectors), 0, 0)
    total = config.line_iterations * graph.edge_count if samples is None else samples
    start = time.perf_counter()
    embedding = train_line_first_order(graph, init, level_config, samples=total)
    timings.training += time.perf_counter() - start
    return LevelTraining(embedding, total, total)


def run_harp(
    graph: Graph,
    config: HarpConfig,
    *,
    keep_levels: bool = False,
    progress: bool = False,
) -> HarpRun:
    if graph.node_count == 0:
        raise ValueError("Cannot embed an empty graph.")
    timings = PhaseTimings()
    start = time.perf_counter()
    hierarchy = coarsen_hierarchy(
        graph, config.threshold, config.max_levels, np.random.default_rng(config.seed)
    )
    timings.coarsening = time.perf_counter() - start
    budget = compute_sample_budget(hierarchy, config)

    coarsest = hierarchy.depth
    level_samples = [0] * (coarsest + 1)
    level_pairs = [0] * (coarsest + 1)
    level_embeddings: list[EmbeddingMatrix] = []
    embedding: EmbeddingMatrix | None = None
    levels = tqdm(
        range(coarsest, -1, -1), desc="levels", total=coarsest + 1, disable=not progress
    )
    for level in levels:
        init = None
        if embedding is not None:
            start = time.perf_counter()
            init = prolongate(embedding, hierarchy.parent_maps[level])
            timings.prolongation += time.perf_counter() - start
        level_graph = hierarchy.graphs[level]
        result = embed_graph(
            level_graph,
            config.method,
            config.level_config(level, coarsest),
            init,
            level=level,
            timings=timings,
        )
        embedding = result.embedding
        level_samples[level] = result.samples
        level_pairs[level] = result.pairs
        if keep_levels:
            level_embeddings.append(embedding)
        _LOGGER.info(
            "Trained level %d (%d nodes, %d edges): %d samples",
            level,
            level_graph.node_count,
            level_graph.edge_count,
            result.samples,
        )
    assert embedding is not None
    return HarpRun(
        embedding,
        budget,
        tuple(level_samples),
        tuple(level_pairs),
        timings,
        hierarchy,
        tuple(reversed(level_embeddings)) if keep_levels else None,
    )


def _baseline_walk_plan(
    graph: Graph, budget: SampleBudget, walk_length: int
) -> tuple[int, int, np.ndarray]:
    non_isolated = np.flatnonzero(graph.degrees > 0)
    if non_isolated.size:
        pool, per_walk = non_isolated, walk_length
    else:
        pool, per_walk = np.arange(graph.node_count), 1
    extra = min(budget.remainder // per_walk, int(pool.size))
    return budget.baseline_rounds, extra, pool


def run_baseline(
    graph: Graph,
    config: HarpConfig,
    budget: SampleBudget | None = None,
    *,
    progress: bool = False,
) -> HarpRun:
    """Flat run of the embedder; with ``budget`` it sees as many samples as a HARP run."""
    if graph.node_count == 0:
        raise ValueError("Cannot embed an empty graph.")
    if budget is None:
        budget = compute_sample_budget(CoarseningHierarchy([graph]), config)
    timings = PhaseTimings()
    train = config.train
    with tqdm(total=1, desc="baseline", disable=not progress) as bar:
        if config.method.uses_walks:
            rounds, extra, pool = _baseline_walk_plan(graph, budget, train.walk_length)
            _LOGGER.debug("Baseline walks: %d rounds plus %d extra walks", rounds, extra)
            result = embed_graph(
                graph,
                config.method,
                train,
                walks_per_node=rounds,
                extra_walks=extra,
                start_pool=pool,
                timings=timings,
            )
        else:
            result = embed_graph(
                graph, config.method, train, samples=budget.total, timings=timings
            )
        bar.update(1)
    _LOGGER.info("Trained baseline %s: %d samples", config.method, result.samples)
    return HarpRun(
        result.embedding, budget, (result.samples,), (result.pairs,), timings
    )


def harp_embed(graph: Graph, config: HarpConfig) -> EmbeddingMatrix:
    return run_harp(graph, config).embedding


def embed_levels_dump(
    graph: Graph,
    config: HarpConfig,
    directory: Path | str,
    dim: int = 2,
    *,
    progress: bool = False,
) -> HarpRun:
    if dim != 2:
        raise ValueError(f"Level dumps are two-dimensional, got dim={dim}")
    config = replace(
        config,
        train=replace(config.train, dim=dim),
        refine=replace(config.refine, dim=dim) if config.refine is not None else None,
    )
    run = run_harp(graph, config, keep_levels=True, progress=progress)
    assert run.hierarchy is not None and run.level_embeddings is not None

    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    renderer = ReportRenderer()
    entries: list[LevelEntry] = []
    for level, (level_graph, level_embedding) in enumerate(
        zip(run.hierarchy.graphs, run.level_embeddings)
    ):
        rows = [
            f"{level_graph.external_id(node)}\t{float(x)!r}\t{float(y)!r}\n"
            for node, (x, y) in enumerate(level_embedding.vectors)
        ]
        tsv_name = f"level_{level}.tsv"
        svg_name = f"level_{level}.svg"
        write_text_output(root / tsv_name, "".join(rows))
        write_text_output(
            root / svg_name,
            renderer.render_level_svg(level_graph, level_embedding.vectors, level),
        )
        entries.append(
            LevelEntry(level, level_graph.node_count, level_graph.edge_count, svg_name, tsv_name)
        )
    title = f"HARP({config.method}) levels"
    write_text_output(root / "index.html", renderer.render_levels_page(title, entries))
    return run
