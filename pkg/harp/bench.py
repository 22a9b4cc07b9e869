from __future__ import annotations

import csv
import json
import logging
import platform
import shutil
import time
from collections.abc import Iterator, Mapping, Sequence
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

import numba
import numpy as np
import scipy
from scipy import stats
from tqdm import tqdm

from harp.coarsening import LevelStats, coarsen_hierarchy, level_stats
from harp.config import HarpConfig, Method
from harp.embedding import write_embedding
from harp.evaluation import DEFAULT_RATIOS, EvaluationReport, evaluate, write_eval_csv
from harp.generators import generate_erdos_renyi, generate_graph
from harp.graph import (
    Graph,
    LabelSet,
    edge_list_labels,
    largest_connected_component,
    read_edge_list,
    read_labels,
    write_edge_list,
    write_labels,
)
from harp.pipeline import HarpRun, compute_sample_budget, run_baseline, run_harp

_LOGGER = logging.getLogger(__name__)

MODES = ("baseline", "harp")
STAGES = ("load", "coarsen", "embed", "evaluate", "write")
MANIFEST_NAME = "manifest.json"


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException) -> None:
        if stage not in STAGES:
            raise ValueError(f"Unknown stage: {stage!r}")
        super().__init__(f"{stage}: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@contextmanager
def stage(name: str) -> Iterator[None]:
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


@dataclass(frozen=True)
class BenchRecord:
    graph: str
    nodes: int
    edges: int
    method: str
    mode: str
    coarsening_s: float
    sampling_s: float
    training_s: float
    prolongation_s: float
    total_s: float
    samples: int

    @property
    def overhead_fraction(self) -> float:
        if self.total_s <= 0:
            return 0.0
        return (self.coarsening_s + self.prolongation_s) / self.total_s


BENCH_COLUMNS = [item for item in BenchRecord.__dataclass_fields__]


def _record(label: str, graph: Graph, mode: str, run: HarpRun, total: float) -> BenchRecord:
    timings = run.timings
    return BenchRecord(
        label,
        graph.node_count,
        graph.edge_count,
        str(run.budget.method),
        mode,
        timings.coarsening,
        timings.sampling,
        timings.training,
        timings.prolongation,
        total,
        run.samples,
    )


def bench_scaling(
    node_counts: Sequence[int],
    avg_degree: float = 10.0,
    method: Method | str = Method.DEEPWALK,
    seed: int = 0,
    *,
    overrides: Mapping[str, object] | None = None,
    warmup: bool = True,
    progress: bool = False,
) -> list[BenchRecord]:
    if list(node_counts) != sorted(node_counts):
        raise ValueError(f"Node counts must be ascending, got {list(node_counts)}")
    config = HarpConfig.for_method(method, seed=seed, **dict(overrides or {}))
    if warmup:
        # compiles the numba kernels outside the timed runs
        warm = generate_erdos_renyi(64, min(avg_degree, 8.0), seed)
        run_baseline(warm, config, run_harp(warm, config).budget)
        _LOGGER.debug("Benchmark warm-up finished")

    records: list[BenchRecord] = []
    for n in tqdm(node_counts, desc="bench", disable=not progress):
        graph = generate_erdos_renyi(n, avg_degree, seed)
        label = f"erdos_renyi(n={n},avg_degree={avg_degree:g})"
        start = time.perf_counter()
        harp_run = run_harp(graph, config)
        harp_total = time.perf_counter() - start
        start = time.perf_counter()
        baseline_run = run_baseline(graph, config, harp_run.budget)
        baseline_total = time.perf_counter() - start
        records.append(_record(label, graph, "baseline", baseline_run, baseline_total))
        records.append(_record(label, graph, "harp", harp_run, harp_total))
        _LOGGER.info(
            "n=%d: baseline %.3fs, HARP %.3fs (overhead %.1f%%)",
            n,
            baseline_total,
            harp_total,
            100.0 * records[-1].overhead_fraction,
        )
    return records


def linear_fit_r2(xs: Sequence[float], ys: Sequence[float]) -> float:
    return float(stats.linregress(xs, ys).rvalue ** 2)


def write_bench_csv(records: Sequence[BenchRecord], path: Path | str) -> None:
    destination = Path(path)
    destination.parent.mkdir(parents=True, exist_ok=True)
    with destination.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=BENCH_COLUMNS)
        writer.writeheader()
        for record in records:
            writer.writerow(asdict(record))
    _LOGGER.info("Wrote benchmark CSV: %s", destination.as_posix())


def coarsen_stats(
    graph: Graph, threshold: int, max_levels: int, seed: int
) -> list[LevelStats]:
    component = largest_connected_component(graph)
    hierarchy = coarsen_hierarchy(
        component, threshold, max_levels, np.random.default_rng(seed)
    )
    return level_stats(hierarchy)


@dataclass(frozen=True)
class RunSpec:
    config: HarpConfig
    mode: str
    output_dir: str
    graph_path: str | None = None
    generator: Mapping[str, object] | None = None
    labels_path: str | None = None
    ratios: tuple[float, ...] = DEFAULT_RATIOS
    repetitions: int = 10
    matched_budget: bool = True
    eval_workers: int = field(default=1, compare=False)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"Invalid mode: {self.mode!r}")
        if (self.graph_path is None) == (self.generator is None):
            raise ValueError("A run needs exactly one of a graph file or a generator.")
        if self.generator is not None and "kind" not in self.generator:
            raise ValueError("Generator settings need a 'kind'.")
        object.__setattr__(self, "ratios", tuple(float(ratio) for ratio in self.ratios))

    def to_dict(self) -> dict[str, object]:
        return {
            "config": self.config.to_dict(),
            "mode": self.mode,
            "output_dir": self.output_dir,
            "graph_path": self.graph_path,
            "generator": dict(self.generator) if self.generator is not None else None,
            "labels_path": self.labels_path,
            "ratios": list(self.ratios),
            "repetitions": self.repetitions,
            "matched_budget": self.matched_budget,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> RunSpec:
        generator = data.get("generator")
        return cls(
            HarpConfig.from_dict(data["config"]),  # type: ignore[arg-type]
            str(data["mode"]),
            str(data["output_dir"]),
            graph_path=data.get("graph_path"),  # type: ignore[arg-type]
            generator=dict(generator) if isinstance(generator, dict) else None,
            labels_path=data.get("labels_path"),  # type: ignore[arg-type]
            ratios=tuple(data.get("ratios", DEFAULT_RATIOS)),  # type: ignore[arg-type]
            repetitions=int(data.get("repetitions", 10)),  # type: ignore[arg-type]
            matched_budget=bool(data.get("matched_budget", True)),
        )


def prepare_output_dir(output_dir: Path, overwrite: bool) -> None:
    if output_dir.exists():
        if not output_dir.is_dir():
            raise NotADirectoryError(
                f"Output path exists but is not a directory: {output_dir}"
            )
        if any(output_dir.iterdir()):
            if not overwrite:
                raise FileExistsError(
                    f"Output directory already exists: {output_dir}. Use --overwrite to replace it."
                )
            for item in output_dir.iterdir():
                if item.is_dir() and not item.is_symlink():
                    shutil.rmtree(item)
                else:
                    item.unlink()
    output_dir.mkdir(parents=True, exist_ok=True)
    _LOGGER.info("Prepared output directory: %s", output_dir.as_posix())


def _versions() -> dict[str, str]:
    try:
        harp_version = metadata.version("harp")
    except metadata.PackageNotFoundError:
        harp_version = "unknown"
    return {
        "harp": harp_version,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def _load_inputs(spec: RunSpec) -> tuple[Graph, LabelSet | None]:
    if spec.graph_path is not None:
        graph = read_edge_list(spec.graph_path)
        labels = read_labels(spec.labels_path, graph) if spec.labels_path else None
        return graph, labels
    assert spec.generator is not None
    params = dict(spec.generator)
    kind = str(params.pop("kind"))
    graph, labels = generate_graph(kind, **params)  # type: ignore[arg-type]
    if spec.labels_path:
        labels = read_labels(spec.labels_path, graph)
    return graph, labels


def end_to_end(
    spec: RunSpec, *, overwrite: bool = False, progress: bool = False
) -> dict[str, object]:
    """Load, embed and evaluate one configuration, writing artifacts and a manifest."""
    output_dir = Path(spec.output_dir)
    with stage("write"):
        prepare_output_dir(output_dir, overwrite)
    with stage("load"):
        graph, labels = _load_inputs(spec)
        if labels is not None:
            labels.validate_for(graph)
    _LOGGER.info(
        "Loaded graph: %d nodes, %d edges", graph.node_count, graph.edge_count
    )

    config = spec.config
    budget = None
    if spec.mode == "baseline" and spec.matched_budget:
        with stage("coarsen"):
            hierarchy = coarsen_hierarchy(
                graph, config.threshold, config.max_levels, np.random.default_rng(config.seed)
            )
            budget = compute_sample_budget(hierarchy, config)
    with stage("embed"):
        if spec.mode == "harp":
            run = run_harp(graph, config, progress=progress)
        else:
            run = run_baseline(graph, config, budget, progress=progress)

    outputs: dict[str, str] = {"embedding": "embedding.txt"}
    with stage("write"):
        write_embedding(run.embedding, graph, output_dir / "embedding.txt")
        if spec.generator is not None:
            write_edge_list(graph, output_dir / "graph.edgelist")
            outputs["graph"] = "graph.edgelist"
            if labels is not None:
                written = edge_list_labels(labels, graph)
                write_labels(written, graph, output_dir / "labels.txt")
                outputs["labels"] = "labels.txt"

    reports: list[EvaluationReport] = []
    if labels is not None and spec.ratios:
        name = f"harp_{config.method}" if spec.mode == "harp" else str(config.method)
        with stage("evaluate"):
            for ratio in spec.ratios:
                reports.append(
                    evaluate(
                        run.embedding,
                        labels,
                        ratio,
                        spec.repetitions,
                        config.seed,
                        method=name,
                        workers=spec.eval_workers,
                    )
                )
        with stage("write"):
            write_eval_csv(reports, output_dir / "eval.csv")
            outputs["evaluation"] = "eval.csv"

    manifest: dict[str, object] = {
        "spec": spec.to_dict(),
        "versions": _versions(),
        "budget": run.budget.to_dict(),
        "samples": {
            "per_level": list(run.level_samples),
            "total": run.samples,
            "pairs": run.pairs,
        },
        "timings": run.timings.to_dict(),
        "outputs": outputs,
        "evaluation": [
            {
                "method": report.method,
                "ratio": report.ratio,
                "mean": report.mean,
                "scores": list(report.scores),
            }
            for report in reports
        ],
    }
    with stage("write"):
        write_manifest(manifest, output_dir / MANIFEST_NAME)
    return manifest


def write_manifest(manifest: Mapping[str, object], path: Path) -> None:
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    _LOGGER.info("Wrote run manifest: %s", path.as_posix())


def load_manifest(path: Path | str) -> RunSpec:
    source = Path(path)
    data = json.loads(source.read_text(encoding="utf-8"))
    if not isinstance(data, dict) or "spec" not in data:
        raise ValueError(f"Invalid run manifest: {source.as_posix()}")
    return RunSpec.from_dict(data["spec"])
