import csv
import json
from dataclasses import replace
from pathlib import Path

import pytest

from tests.conftest import MakeConfig, WriteText
from harp.bench import (
    BENCH_COLUMNS,
    MANIFEST_NAME,
    BenchRecord,
    RunSpec,
    StageError,
    bench_scaling,
    coarsen_stats,
    end_to_end,
    linear_fit_r2,
    load_manifest,
    prepare_output_dir,
    stage,
    write_bench_csv,
)
from harp.embedding import read_embedding
from harp.generators import generate_erdos_renyi

_GENERATOR = {"kind": "planted_partition", "nodes": 120, "avg_degree": 6.0, "seed": 2}


def _spec(make_config: MakeConfig, output_dir: Path, **changes: object) -> RunSpec:
    spec = RunSpec(
        make_config("deepwalk", seed=3),
        "harp",
        str(output_dir),
        generator=dict(_GENERATOR),
        ratios=(0.1, 0.5),
        repetitions=2,
    )
    return replace(spec, **changes)


def test_stage_wraps_failures() -> None:
    with pytest.raises(StageError) as excinfo:
        with stage("embed"):
            raise FloatingPointError("diverged")

    assert excinfo.value.stage == "embed"
    assert isinstance(excinfo.value.cause, FloatingPointError)
    assert str(excinfo.value) == "embed: FloatingPointError: diverged"


def test_stage_keeps_inner_stage() -> None:
    with pytest.raises(StageError) as excinfo:
        with stage("write"):
            with stage("load"):
                raise ValueError("bad line")

    assert excinfo.value.stage == "load"


def test_stage_error_rejects_unknown_stage() -> None:
    with pytest.raises(ValueError, match="Unknown stage"):
        StageError("deploy", RuntimeError("x"))


def test_run_spec_validation(make_config: MakeConfig, tmp_path: Path) -> None:
    with pytest.raises(ValueError, match="Invalid mode"):
        _spec(make_config, tmp_path, mode="flat")
    with pytest.raises(ValueError, match="exactly one of"):
        _spec(make_config, tmp_path, graph_path="graph.edgelist")
    with pytest.raises(ValueError, match="kind"):
        _spec(make_config, tmp_path, generator={"nodes": 10})


def test_prepare_output_dir(tmp_path: Path, write_text: WriteText) -> None:
    output = tmp_path / "out"
    write_text(output, "old/file.txt", "stale")

    with pytest.raises(FileExistsError, match="Use --overwrite"):
        prepare_output_dir(output, overwrite=False)
    prepare_output_dir(output, overwrite=True)

    assert list(output.iterdir()) == []


def test_prepare_output_dir_rejects_files(tmp_path: Path, write_text: WriteText) -> None:
    target = write_text(tmp_path, "out", "not a directory")

    with pytest.raises(NotADirectoryError):
        prepare_output_dir(target, overwrite=True)


def test_end_to_end_writes_artifacts(make_config: MakeConfig, tmp_path: Path) -> None:
    spec = _spec(make_config, tmp_path / "run")

    manifest = end_to_end(spec)

    root = tmp_path / "run"
    assert manifest["outputs"] == {
        "embedding": "embedding.txt",
        "graph": "graph.edgelist",
        "labels": "labels.txt",
        "evaluation": "eval.csv",
    }
    ids, vectors = read_embedding(root / "embedding.txt")
    assert vectors.shape == (120, 8)
    assert len(set(ids)) == 120
    with (root / "eval.csv").open(encoding="utf-8", newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert {row["method"] for row in rows} == {"harp_deepwalk"}
    assert len(rows) == 4
    stored = json.loads((root / MANIFEST_NAME).read_text(encoding="utf-8"))
    assert stored["samples"]["per_level"] == stored["budget"]["per_level"]
    assert stored["samples"]["pairs"] > stored["samples"]["total"]
    assert set(stored["versions"]) >= {"harp", "numpy", "scipy", "numba"}
    assert set(stored["timings"]) == {"coarsening", "sampling", "training", "prolongation"}


def test_manifest_replays_bit_exact(make_config: MakeConfig, tmp_path: Path) -> None:
    spec = _spec(make_config, tmp_path / "first", mode="baseline")
    end_to_end(spec)

    replayed = load_manifest(tmp_path / "first" / MANIFEST_NAME)
    assert replayed == spec
    end_to_end(replace(replayed, output_dir=str(tmp_path / "second")))

    for name in ("embedding.txt", "eval.csv", "graph.edgelist", "labels.txt"):
        first = (tmp_path / "first" / name).read_bytes()
        second = (tmp_path / "second" / name).read_bytes()
        assert first == second


def test_end_to_end_reports_stage_of_failure(
    make_config: MakeConfig, tmp_path: Path
) -> None:
    spec = _spec(
        make_config, tmp_path / "run", generator=None, graph_path=str(tmp_path / "missing")
    )

    with pytest.raises(StageError) as excinfo:
        end_to_end(spec)

    assert excinfo.value.stage == "load"
    assert isinstance(excinfo.value.cause, FileNotFoundError)


def test_load_manifest_rejects_other_json(tmp_path: Path, write_text: WriteText) -> None:
    path = write_text(tmp_path, "manifest.json", "[1, 2]")

    with pytest.raises(ValueError, match="Invalid run manifest"):
        load_manifest(path)


def test_bench_scaling_records_both_modes(tmp_path: Path) -> None:
    overrides = {"dim": 8, "walks_per_node": 2, "walk_length": 6, "window": 2, "threshold": 20}

    records = bench_scaling([80, 160], avg_degree=4.0, overrides=overrides, warmup=False)

    assert [(record.nodes, record.mode) for record in records] == [
        (80, "baseline"),
        (80, "harp"),
        (160, "baseline"),
        (160, "harp"),
    ]
    for baseline, harp in zip(records[::2], records[1::2]):
        assert harp.samples - 6 <= baseline.samples <= harp.samples
        assert baseline.coarsening_s == 0.0
        assert 0.0 <= harp.overhead_fraction <= 1.0
    write_bench_csv(records, tmp_path / "bench.csv")
    header = (tmp_path / "bench.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header.split(",") == BENCH_COLUMNS
    with pytest.raises(ValueError, match="ascending"):
        bench_scaling([100, 10], warmup=False)


def test_bench_record_overhead() -> None:
    record = BenchRecord("g", 10, 20, "line", "harp", 1.0, 2.0, 6.0, 1.0, 10.0, 100)

    assert record.overhead_fraction == pytest.approx(0.2)
    assert replace(record, total_s=0.0).overhead_fraction == 0.0


def test_linear_fit_r2() -> None:
    assert linear_fit_r2([1, 2, 3, 4], [2, 4, 6, 8]) == pytest.approx(1.0)
    assert linear_fit_r2([1, 2, 3, 4], [1, 3, 2, 4]) < 1.0


def test_coarsen_stats_use_largest_component() -> None:
    graph = generate_erdos_renyi(400, 3.0, seed=1)

    stats = coarsen_stats(graph, threshold=30, max_levels=32, seed=0)

    assert stats[0].nodes < 400
    assert stats[-1].nodes < 30
    assert all(a.nodes > b.nodes for a, b in zip(stats, stats[1:]))
