import logging
from pathlib import Path, PurePosixPath

import numpy as np
import pytest

from tests.conftest import MakeGraph
from harp.evaluation import ComparisonRow
from harp.graph import Graph
from harp.minify import minify_html_text, should_minify_path, write_text_output
from harp.render import LevelEntry, ReportRenderer


def _rows() -> list[ComparisonRow]:
    return [
        ComparisonRow("deepwalk", 0.02, 0.31, 0.36, 16.1, 3.2, 0.01),
        ComparisonRow("deepwalk", 0.08, 0.40, 0.43, 7.5, 2.1, 0.06),
        ComparisonRow("line", 0.02, 0.22, 0.29, 31.8, 4.4, 0.001),
    ]


def test_level_svg_draws_every_node_and_edge(make_graph: MakeGraph) -> None:
    graph = make_graph([(0, 1), (1, 2), (2, 0), (2, 3)])
    vectors = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0], [2.0, 2.0]])

    svg = ReportRenderer().render_level_svg(graph, vectors, level=3, size=200)

    assert svg.count("<circle") == 4
    assert svg.count("<line") == 4
    assert "Level 3: 4 nodes, 4 edges" in svg
    assert 'width="200"' in svg


def test_level_svg_escapes_node_ids() -> None:
    graph = Graph.from_edges(2, [0], [1], external_ids=["<a>", "b&c"])

    svg = ReportRenderer().render_level_svg(graph, np.array([[0.0, 0.0], [1.0, 1.0]]), 0)

    assert "&lt;a&gt;" in svg
    assert "b&amp;c" in svg


def test_level_svg_needs_planar_coordinates(make_graph: MakeGraph) -> None:
    graph = make_graph([(0, 1)])

    with pytest.raises(ValueError, match="coordinates"):
        ReportRenderer().render_level_svg(graph, np.zeros((2, 3)), 0)


def test_levels_page_links_each_level() -> None:
    entries = [
        LevelEntry(0, 400, 800, "level_0.svg", "level_0.tsv"),
        LevelEntry(1, 210, 500, "level_1.svg", "level_1.tsv"),
    ]

    html = ReportRenderer().render_levels_page("HARP(line) levels", entries)

    assert "<title>HARP(line) levels</title>" in html
    assert 'src="level_1.svg"' in html
    assert "Level 0: 400 nodes, 800 edges" in html


def test_report_has_a_chart_per_embedder() -> None:
    html = ReportRenderer().render_report("Comparison", _rows(), summary="3000 nodes")

    assert html.count("<polyline") == 4
    assert "<td>deepwalk</td><td>0.02</td><td>0.3100</td><td>0.3600</td>" in html
    assert "<p>3000 nodes</p>" in html


def test_should_minify_path() -> None:
    assert should_minify_path(PurePosixPath("site/index.html"))
    assert should_minify_path(Path("REPORT.HTM"))
    assert not should_minify_path(Path("level_0.svg"))
    assert not should_minify_path(Path("eval.csv"))


def test_write_text_output_minifies_html_only(tmp_path: Path) -> None:
    html = "<html>\n  <body>\n    <p>hello</p>\n  </body>\n</html>\n"

    write_text_output(tmp_path / "out" / "page.html", html)
    write_text_output(tmp_path / "out" / "page.svg", html)

    assert (tmp_path / "out" / "page.html").read_text(encoding="utf-8") == minify_html_text(html)
    assert (tmp_path / "out" / "page.svg").read_text(encoding="utf-8") == html


def test_minify_failure_keeps_text(
    monkeypatch: pytest.MonkeyPatch, caplog: pytest.LogCaptureFixture
) -> None:
    import minify_html

    def broken(*_: object, **__: object) -> str:
        raise RuntimeError("boom")

    monkeypatch.setattr(minify_html, "minify", broken)

    with caplog.at_level(logging.ERROR):
        assert minify_html_text("<p>x</p>") == "<p>x</p>"

    assert "Failed to minify HTML" in caplog.text
