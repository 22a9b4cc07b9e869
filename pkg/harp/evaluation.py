from __future__ import annotations

import csv
import logging
import math
import time
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special, stats
from scipy.sparse import csgraph
from scipy.spatial import distance
from tqdm import tqdm

from harp.config import HarpConfig, Method
from harp.embedding import EmbeddingMatrix
from harp.graph import Graph, LabelSet
from harp.pipeline import run_baseline, run_harp

_LOGGER = logging.getLogger(__name__)

ARMIJO_C = 1e-4
GRADIENT_TOLERANCE = 1e-6
DEFAULT_RATIOS = (0.02, 0.05, 0.08)


def split_labeled(
    labels: LabelSet, ratio: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    if not 0 < ratio < 1:
        raise ValueError(f"Invalid labeled ratio: {ratio!r}")
    nodes = labels.labeled_nodes()
    if nodes.size < 2:
        raise ValueError(
            f"Need at least 2 labeled nodes for a train/test split, got {nodes.size}"
        )
    train_size = min(max(math.floor(ratio * nodes.size + 0.5), 1), nodes.size - 1)
    shuffled = rng.permutation(nodes)
    return np.sort(shuffled[:train_size]), np.sort(shuffled[train_size:])


@dataclass(frozen=True)
class OneVsRestModel:
    weights: np.ndarray
    intercepts: np.ndarray
    degenerate: tuple[int, ...] = ()
    histories: tuple[tuple[float, ...], ...] = ()

    @property
    def label_count(self) -> int:
        return int(self.intercepts.size)

    def decision_function(self, features: np.ndarray) -> np.ndarray:
        return features @ self.weights + self.intercepts


def logistic_objective(
    theta: np.ndarray, features: np.ndarray, targets: np.ndarray, l2: float
) -> tuple[float, np.ndarray]:
    """Mean logistic loss plus ``l2 * |w|^2 / 2``; the last entry of ``theta`` is the intercept."""
    weights, intercept = theta[:-1], theta[-1]
    scores = features @ weights + intercept
    loss = float(np.mean(np.logaddexp(0.0, scores) - targets * scores))
    loss += 0.5 * l2 * float(weights @ weights)
    residual = special.expit(scores) - targets
    gradient = np.empty_like(theta)
    gradient[:-1] = features.T @ residual / features.shape[0] + l2 * weights
    gradient[-1] = residual.mean()
    return loss, gradient


def _fit_binary(
    features: np.ndarray, targets: np.ndarray, l2: float, max_iter: int
) -> tuple[np.ndarray, list[float]]:
    theta = np.zeros(features.shape[1] + 1)
    value, gradient = logistic_objective(theta, features, targets, l2)
    history = [value]
    step = 1.0
    for _ in range(max_iter):
        squared_norm = float(gradient @ gradient)
        if math.sqrt(squared_norm) < GRADIENT_TOLERANCE:
            break
        while True:
            candidate = theta - step * gradient
            candidate_value, candidate_gradient = logistic_objective(
                candidate, features, targets, l2
            )
            if candidate_value <= value - ARMIJO_C * step * squared_norm:
                break
            step *= 0.5
            if step < 1e-20:
                return theta, history
        theta, value, gradient = candidate, candidate_value, candidate_gradient
        history.append(value)
        step *= 2.0
    return theta, history


def train_ovr_logreg(
    features: np.ndarray, targets: np.ndarray, l2: float, max_iter: int = 500
) -> OneVsRestModel:
    if not np.isfinite(features).all():
        raise ValueError("Non-finite features in logistic regression input.")
    if l2 < 0:
        raise ValueError(f"Invalid l2 strength: {l2!r}")
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets[:, None]
    label_count = targets.shape[1]
    weights = np.zeros((features.shape[1], label_count))
    intercepts = np.zeros(label_count)
    degenerate: list[int] = []
    histories: list[tuple[float, ...]] = []
    for label in range(label_count):
        column = targets[:, label]
        positives = float(column.sum())
        negatives = column.size - positives
        if positives == 0 or negatives == 0:
            intercepts[label] = math.log((positives + 0.5) / (negatives + 0.5))
            degenerate.append(label)
            histories.append(())
            continue
        theta, history = _fit_binary(features, column, l2, max_iter)
        weights[:, label] = theta[:-1]
        intercepts[label] = theta[-1]
        histories.append(tuple(history))
    if degenerate:
        _LOGGER.warning(
            "%d of %d label columns have a single class in training; using constant classifiers",
            len(degenerate),
            label_count,
        )
    return OneVsRestModel(weights, intercepts, tuple(degenerate), tuple(histories))


def predict_multilabel(
    model: OneVsRestModel, features: np.ndarray, k_per_node: np.ndarray
) -> list[frozenset[int]]:
    """Top-k labels per row; equal scores go to the lower label id."""
    k_per_node = np.asarray(k_per_node, dtype=np.int64)
    if k_per_node.size and k_per_node.max() > model.label_count:
        raise ValueError(
            f"k={int(k_per_node.max())} exceeds the label count {model.label_count}"
        )
    scores = model.decision_function(features)
    order = np.argsort(-scores, axis=1, kind="stable")
    return [frozenset(order[row, :k].tolist()) for row, k in enumerate(k_per_node)]


def macro_f1(
    predicted: Sequence[Iterable[int]], truth: Sequence[Iterable[int]], label_count: int
) -> float:
    if len(predicted) != len(truth):
        raise ValueError(
            f"Prediction count {len(predicted)} does not match truth count {len(truth)}"
        )
    if label_count == 0:
        return 0.0
    predicted_matrix = np.zeros((len(predicted), label_count), dtype=bool)
    truth_matrix = np.zeros((len(truth), label_count), dtype=bool)
    for row, (guess, actual) in enumerate(zip(predicted, truth)):
        predicted_matrix[row, list(guess)] = True
        truth_matrix[row, list(actual)] = True
    true_positive = np.sum(predicted_matrix & truth_matrix, axis=0)
    false_positive = np.sum(predicted_matrix & ~truth_matrix, axis=0)
    false_negative = np.sum(~predicted_matrix & truth_matrix, axis=0)
    denominator = 2 * true_positive + false_positive + false_negative
    scores = np.divide(
        2.0 * true_positive,
        denominator,
        out=np.zeros(label_count),
        where=denominator > 0,
    )
    return float(scores.mean())


@dataclass(frozen=True)
class EvaluationReport:
    method: str
    ratio: float
    scores: tuple[float, ...]
    seed: int
    runtime_s: float = 0.0

    def __post_init__(self) -> None:
        for score in self.scores:
            if not 0.0 <= score <= 1.0:
                raise ValueError(f"Macro-F1 out of range: {score!r}")

    @property
    def repetitions(self) -> int:
        return len(self.scores)

    @property
    def mean(self) -> float:
        return float(np.mean(self.scores)) if self.scores else 0.0


def evaluate(
    embedding: EmbeddingMatrix | np.ndarray,
    labels: LabelSet,
    ratio: float,
    repetitions: int = 10,
    seed: int = 0,
    *,
    method: str = "embedding",
    C: float = 1.0,
    l2: float | None = None,
    max_iter: int = 500,
    workers: int = 1,
) -> EvaluationReport:
    vectors = embedding.vectors if isinstance(embedding, EmbeddingMatrix) else embedding
    nodes = labels.labeled_nodes()
    if nodes.size and nodes.max() >= vectors.shape[0]:
        raise ValueError(
            f"Embedding has {vectors.shape[0]} rows but labels reference node {int(nodes.max())}"
        )
    if repetitions < 1:
        raise ValueError(f"Invalid repetitions: {repetitions!r}")
    if C <= 0:
        raise ValueError(f"Invalid C: {C!r}")

    def repetition(child: np.random.SeedSequence) -> float:
        rng = np.random.default_rng(child)
        train, test = split_labeled(labels, ratio, rng)
        strength = l2 if l2 is not None else 1.0 / (C * train.size)
        model = train_ovr_logreg(vectors[train], labels.indicator(train), strength, max_iter)
        predicted = predict_multilabel(model, vectors[test], labels.counts(test))
        truth = [labels.node_labels[int(node)] for node in test]
        return macro_f1(predicted, truth, labels.label_count)

    start = time.perf_counter()
    children = np.random.SeedSequence(seed).spawn(repetitions)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            scores = list(executor.map(repetition, children))
    else:
        scores = [repetition(child) for child in children]
    report = EvaluationReport(
        method, ratio, tuple(scores), seed, time.perf_counter() - start
    )
    _LOGGER.info(
        "Evaluated %s at ratio %g: mean Macro-F1 %.4f over %d repetitions",
        method,
        ratio,
        report.mean,
        repetitions,
    )
    return report


def paired_t_test(first: Sequence[float], second: Sequence[float]) -> tuple[float, float]:
    a = np.asarray(first, dtype=np.float64)
    b = np.asarray(second, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("Paired t-test needs two equal-length score vectors.")
    if a.size < 2:
        raise ValueError("Paired t-test needs at least two pairs.")
    diffs = a - b
    if not diffs.any():
        return 0.0, 1.0
    if np.all(diffs == diffs[0]):
        return math.copysign(math.inf, float(diffs[0])), 0.0
    statistic = float(diffs.mean() / (diffs.std(ddof=1) / math.sqrt(diffs.size)))
    p_value = float(2.0 * stats.t.sf(abs(statistic), diffs.size - 1))
    return statistic, p_value


def gain_percent(baseline: float, harp: float) -> float:
    if baseline == 0.0:
        return 0.0 if harp == 0.0 else math.copysign(math.inf, harp)
    return (harp - baseline) / baseline * 100.0


@dataclass(frozen=True)
class ComparisonRow:
    embedder: str
    ratio: float
    baseline_f1: float
    harp_f1: float
    gain_pct: float
    t_stat: float
    p_value: float


@dataclass(frozen=True)
class Comparison:
    rows: list[ComparisonRow]
    reports: list[EvaluationReport]
    samples: dict[str, tuple[int, int]] = field(default_factory=dict)


def compare_reports(
    embedder: str, baseline: EvaluationReport, harp: EvaluationReport
) -> ComparisonRow:
    statistic, p_value = paired_t_test(harp.scores, baseline.scores)
    return ComparisonRow(
        embedder,
        baseline.ratio,
        baseline.mean,
        harp.mean,
        gain_percent(baseline.mean, harp.mean),
        statistic,
        p_value,
    )


def compare_methods(
    graph: Graph,
    labels: LabelSet,
    methods: Sequence[Method | str],
    ratios: Sequence[float] = DEFAULT_RATIOS,
    configs: Mapping[Method, HarpConfig] | None = None,
    *,
    repetitions: int = 10,
    seed: int = 0,
    C: float = 1.0,
    workers: int = 1,
    progress: bool = False,
) -> Comparison:
    """Baseline against HARP for each embedder, with matched sample budgets."""
    labels.validate_for(graph)
    rows: list[ComparisonRow] = []
    reports: list[EvaluationReport] = []
    samples: dict[str, tuple[int, int]] = {}
    for raw in tqdm(methods, desc="methods", disable=not progress):
        method = Method(raw)
        config = (configs or {}).get(method) or HarpConfig.for_method(method, seed=seed)
        harp_run = run_harp(graph, config, progress=progress)
        baseline_run = run_baseline(graph, config, harp_run.budget, progress=progress)
        samples[str(method)] = (baseline_run.samples, harp_run.samples)
        _LOGGER.info(
            "%s samples: baseline %d, HARP %d", method, baseline_run.samples, harp_run.samples
        )
        for ratio in ratios:
            baseline = evaluate(
                baseline_run.embedding,
                labels,
                ratio,
                repetitions,
                seed,
                method=str(method),
                C=C,
                workers=workers,
            )
            harp = evaluate(
                harp_run.embedding,
                labels,
                ratio,
                repetitions,
                seed,
                method=f"harp_{method}",
                C=C,
                workers=workers,
            )
            reports.extend([baseline, harp])
            rows.append(compare_reports(str(method), baseline, harp))
    return Comparison(rows, reports, samples)


def distance_correlation(graph: Graph, vectors: np.ndarray) -> float:
    """Spearman correlation of hop distance and embedding distance over connected pairs."""
    if vectors.shape[0] != graph.node_count:
        raise ValueError(
            f"Embedding has {vectors.shape[0]} rows but the graph has {graph.node_count} nodes"
        )
    hops = csgraph.shortest_path(graph.adjacency, directed=False, unweighted=True)
    upper = np.triu_indices(graph.node_count, k=1)
    hop_pairs = hops[upper]
    embedded = distance.pdist(vectors)
    connected = np.isfinite(hop_pairs)
    if np.count_nonzero(connected) < 2:
        raise ValueError("Distance correlation needs at least two connected node pairs.")
    result = stats.spearmanr(hop_pairs[connected], embedded[connected])
    return float(result.statistic)


def write_eval_csv(reports: Iterable[EvaluationReport], path: Path | str) -> None:
    destination = Path(path)
    destination.parent.mkdir(parents=True, exist_ok=True)
    with destination.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["method", "ratio", "rep", "macro_f1"])
        for report in reports:
            for rep, score in enumerate(report.scores):
                writer.writerow([report.method, repr(report.ratio), rep, repr(score)])
    _LOGGER.info("Wrote evaluation CSV: %s", destination.as_posix())


def write_comparison_csv(rows: Iterable[ComparisonRow], path: Path | str) -> None:
    destination = Path(path)
    destination.parent.mkdir(parents=True, exist_ok=True)
    with destination.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["embedder", "ratio", "baseline_f1", "harp_f1", "gain_pct", "t_stat", "p_value"]
        )
        for row in rows:
            writer.writerow(
                [
                    row.embedder,
                    repr(row.ratio),
                    repr(row.baseline_f1),
                    repr(row.harp_f1),
                    repr(row.gain_pct),
                    repr(row.t_stat),
                    repr(row.p_value),
                ]
            )
    _LOGGER.info("Wrote comparison CSV: %s", destination.as_posix())
