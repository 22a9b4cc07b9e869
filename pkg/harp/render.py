from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
from jinja2 import Environment, FileSystemLoader, select_autoescape

from harp.graph import Graph

if TYPE_CHECKING:
    from harp.evaluation import ComparisonRow

_SERIES_COLORS = {"baseline": "#8c959f", "harp": "#1f6feb"}


@dataclass(frozen=True)
class Point:
    x: float
    y: float
    label: str


@dataclass(frozen=True)
class Segment:
    x1: float
    y1: float
    x2: float
    y2: float


@dataclass(frozen=True)
class LevelEntry:
    level: int
    nodes: int
    edges: int
    svg_link: str
    tsv_link: str


@dataclass(frozen=True)
class Series:
    name: str
    color: str
    points: list[Point]

    @property
    def polyline(self) -> str:
        return " ".join(f"{point.x:.2f},{point.y:.2f}" for point in self.points)


@dataclass(frozen=True)
class Chart:
    title: str
    width: int
    height: int
    series: list[Series]
    x_ticks: list[Point]
    y_ticks: list[Point]


def _fit_square(vectors: np.ndarray, size: int, margin: float) -> np.ndarray:
    if vectors.shape[0] == 0:
        return np.zeros((0, 2))
    low = vectors.min(axis=0)
    span = float(max((vectors.max(axis=0) - low).max(), 1e-12))
    scale = (size - 2 * margin) / span
    coords = (vectors - low) * scale + margin
    # svg y grows downwards
    coords[:, 1] = size - coords[:, 1]
    return coords


class ReportRenderer:
    def __init__(self) -> None:
        templates_dir = Path(__file__).resolve().parent / "templates"
        self._env = Environment(
            loader=FileSystemLoader(templates_dir),
            autoescape=select_autoescape(["html", "xml", "svg"]),
        )

    def render_level_svg(
        self, graph: Graph, vectors: np.ndarray, level: int, size: int = 480
    ) -> str:
        if vectors.shape != (graph.node_count, 2):
            raise ValueError(f"Expected ({graph.node_count}, 2) coordinates, got {vectors.shape}")
        coords = _fit_square(vectors, size, margin=12.0)
        sources, targets, _ = graph.edges()
        segments = [
            Segment(
                float(coords[u, 0]), float(coords[u, 1]), float(coords[v, 0]), float(coords[v, 1])
            )
            for u, v in zip(sources, targets)
        ]
        points = [
            Point(float(x), float(y), graph.external_id(node))
            for node, (x, y) in enumerate(coords)
        ]
        template = self._env.get_template("level.svg")
        return template.render(
            size=size,
            level=level,
            nodes=graph.node_count,
            edges=graph.edge_count,
            radius=3.0 if graph.node_count < 500 else 1.5,
            segments=segments,
            points=points,
        )

    def render_levels_page(self, title: str, entries: Sequence[LevelEntry]) -> str:
        template = self._env.get_template("levels.html")
        return template.render(page_title=title, levels=list(entries))

    def render_report(
        self, title: str, rows: Sequence[ComparisonRow], summary: str = ""
    ) -> str:
        embedders = sorted({row.embedder for row in rows})
        charts = [
            _f1_chart(embedder, [row for row in rows if row.embedder == embedder])
            for embedder in embedders
        ]
        template = self._env.get_template("report.html")
        return template.render(
            page_title=title, summary=summary, rows=list(rows), charts=charts
        )


def _f1_chart(
    embedder: str, rows: list[ComparisonRow], width: int = 420, height: int = 260
) -> Chart:
    margin = 40.0
    rows = sorted(rows, key=lambda row: row.ratio)
    ratios = [row.ratio for row in rows]
    values = [row.baseline_f1 for row in rows] + [row.harp_f1 for row in rows]
    x_low, x_high = min(ratios), max(ratios)
    if x_high - x_low < 1e-12:
        x_low, x_high = x_low - 0.01, x_high + 0.01
    y_low = max(0.0, min(values) - 0.05)
    y_high = min(1.0, max(values) + 0.05)
    if y_high - y_low < 1e-9:
        y_low, y_high = max(0.0, y_low - 0.05), y_high + 0.05

    def place(ratio: float, value: float, label: str) -> Point:
        x = margin + (ratio - x_low) / (x_high - x_low) * (width - 2 * margin)
        y = height - margin - (value - y_low) / (y_high - y_low) * (height - 2 * margin)
        return Point(x, y, label)

    series = [
        Series(
            name,
            _SERIES_COLORS[name],
            [
                place(row.ratio, getattr(row, f"{name}_f1"), f"{getattr(row, f'{name}_f1'):.4f}")
                for row in rows
            ],
        )
        for name in ("baseline", "harp")
    ]
    x_ticks = [place(ratio, y_low, f"{ratio:g}") for ratio in ratios]
    y_ticks = [
        place(x_low, value, f"{value:.2f}") for value in np.linspace(y_low, y_high, 5)
    ]
    return Chart(embedder, width, height, series, x_ticks, y_ticks)
