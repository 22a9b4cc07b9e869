from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from harp.graph import Graph

_LOGGER = logging.getLogger(__name__)


@dataclass
class EmbeddingMatrix:
    vectors: np.ndarray
    output: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.vectors.ndim != 2 or self.vectors.shape[1] < 1:
            raise ValueError(f"Invalid embedding shape: {self.vectors.shape}")

    @property
    def rows(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def is_finite(self) -> bool:
        if not np.isfinite(self.vectors).all():
            return False
        return self.output is None or bool(np.isfinite(self.output).all())

    def copy(self) -> EmbeddingMatrix:
        output = self.output.copy() if self.output is not None else None
        return EmbeddingMatrix(self.vectors.copy(), output)


def format_embedding(vectors: np.ndarray, ids: list[str]) -> str:
    rows, dim = vectors.shape
    lines = [f"{rows} {dim}\n"]
    for node_id, row in zip(ids, vectors):
        values = " ".join(repr(float(value)) for value in row)
        lines.append(f"{node_id} {values}\n")
    return "".join(lines)


def write_embedding(
    embedding: EmbeddingMatrix | np.ndarray, graph: Graph | None, path: Path | str
) -> None:
    vectors = embedding.vectors if isinstance(embedding, EmbeddingMatrix) else embedding
    if graph is not None and graph.node_count != vectors.shape[0]:
        raise ValueError(
            f"Embedding has {vectors.shape[0]} rows but the graph has {graph.node_count} nodes"
        )
    ids = [
        graph.external_id(v) if graph is not None else str(v)
        for v in range(vectors.shape[0])
    ]
    destination = Path(path)
    destination.parent.mkdir(parents=True, exist_ok=True)
    destination.write_text(format_embedding(vectors, ids), encoding="utf-8")
    _LOGGER.info("Wrote embedding: %s", destination.as_posix())


def parse_embedding(text: str) -> tuple[list[str], np.ndarray]:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise ValueError("Embedding file is empty.")
    header = lines[0].split()
    if len(header) != 2:
        raise ValueError(f"Invalid embedding header: {lines[0]!r}")
    rows, dim = int(header[0]), int(header[1])
    if len(lines) - 1 != rows:
        raise ValueError(f"Embedding header declares {rows} rows, found {len(lines) - 1}")
    ids: list[str] = []
    vectors = np.empty((rows, dim), dtype=np.float64)
    for index, line in enumerate(lines[1:]):
        tokens = line.split()
        if len(tokens) != dim + 1:
            raise ValueError(
                f"line {index + 2}: expected {dim + 1} tokens, got {len(tokens)}"
            )
        ids.append(tokens[0])
        vectors[index] = [float(token) for token in tokens[1:]]
    return ids, vectors


def read_embedding(path: Path | str) -> tuple[list[str], np.ndarray]:
    source = Path(path)
    _LOGGER.info("Reading embedding: %s", source.as_posix())
    return parse_embedding(source.read_text(encoding="utf-8"))
