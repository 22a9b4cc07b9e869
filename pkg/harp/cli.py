#!/usr/bin/env python3

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from harp.bench import (
    RunSpec,
    StageError,
    bench_scaling,
    coarsen_stats,
    end_to_end,
    load_manifest,
    prepare_output_dir,
    stage,
    write_bench_csv,
)
from harp.coarsening import coarsen_hierarchy, save_hierarchy, write_level_stats
from harp.config import HarpConfig, Method, Objective, load_config_file, resolve_seed
from harp.embedding import read_embedding, write_embedding
from harp.evaluation import (
    DEFAULT_RATIOS,
    compare_methods,
    evaluate,
    write_comparison_csv,
    write_eval_csv,
)
from harp.generators import GENERATORS, generate_graph
from harp.graph import (
    Graph,
    edge_list_labels,
    read_edge_list,
    read_labels,
    write_edge_list,
    write_labels,
)
from harp.minify import write_text_output
from harp.pipeline import compute_sample_budget, embed_levels_dump, run_baseline, run_harp
from harp.render import ReportRenderer


_LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
_LOG_LEVEL_MAP = {name: getattr(logging, name) for name in _LOG_LEVELS}
_TRAIN_FLAGS = (
    "dim",
    "window",
    "walks_per_node",
    "walk_length",
    "line_iterations",
    "negatives",
    "lr_start",
    "lr_end",
    "objective",
    "p",
    "q",
    "thread_count",
    "threshold",
    "max_levels",
)
_LOGGER = logging.getLogger(__name__)


def _resolve_log_level(log_level: str | None, verbose: int, quiet: int) -> int:
    if log_level:
        return _LOG_LEVEL_MAP[log_level]

    level = logging.WARNING
    if verbose:
        level = logging.DEBUG
    if quiet == 1:
        level = logging.ERROR
    elif quiet >= 2:
        level = logging.CRITICAL
    return level


def _configure_logging(level: int) -> None:
    logging.basicConfig(
        level=level,
        format="%(levelname)s %(message)s",
    )


def _float_list(text: str) -> list[float]:
    return [float(item) for item in text.split(",") if item.strip()]


def _int_list(text: str) -> list[int]:
    return [int(item) for item in text.split(",") if item.strip()]


def _add_training_flags(parser: argparse.ArgumentParser, method_default: str) -> None:
    parser.add_argument(
        "--method",
        choices=[str(method) for method in Method],
        default=method_default,
        help="Embedding algorithm.",
    )
    parser.add_argument("--config", type=Path, help="YAML file with training settings.")
    parser.add_argument("--seed", type=int, help="Random seed (default: $HARP_SEED or 0).")
    parser.add_argument("--dim", type=int, help="Embedding dimension (128; LINE 64).")
    parser.add_argument("--window", type=int, help="Skip-gram window size (10).")
    parser.add_argument("--walks-per-node", type=int, help="Walks per node (40).")
    parser.add_argument("--walk-length", type=int, help="Walk length (10).")
    parser.add_argument(
        "--line-iterations", type=int, help="LINE edge samples per edge (50)."
    )
    parser.add_argument("--negatives", type=int, help="Negative samples per pair (5).")
    parser.add_argument("--lr-start", type=float, help="Initial learning rate (0.025).")
    parser.add_argument("--lr-end", type=float, help="Final learning rate (0.001).")
    parser.add_argument(
        "--objective",
        choices=[str(objective) for objective in Objective],
        help="Skip-gram objective (DeepWalk: hierarchical softmax, node2vec: negative sampling).",
    )
    parser.add_argument("--p", type=float, help="node2vec return parameter (1.0).")
    parser.add_argument("--q", type=float, help="node2vec in-out parameter (1.0).")
    parser.add_argument(
        "--threads", dest="thread_count", type=int, help="Training threads (1)."
    )
    parser.add_argument(
        "--threshold", type=int, help="Stop coarsening below this many nodes (100)."
    )
    parser.add_argument("--max-levels", type=int, help="Maximum coarsening levels (32).")


def _overrides(args: argparse.Namespace) -> dict[str, object]:
    settings: dict[str, object] = {}
    if args.config is not None:
        settings.update(load_config_file(args.config))
    for name in _TRAIN_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            settings[name] = value
    return settings


def _harp_config(args: argparse.Namespace, method: str | None = None) -> HarpConfig:
    settings = _overrides(args)
    settings["seed"] = resolve_seed(
        args.seed if args.seed is not None else settings.get("seed")  # type: ignore[arg-type]
    )
    return HarpConfig.for_method(method or args.method, **settings)


def _cmd_generate(args: argparse.Namespace) -> None:
    with stage("load"):
        graph, labels = generate_graph(
            args.kind,
            args.nodes,
            avg_degree=args.avg_degree,
            m=args.m,
            communities=args.communities,
            mixing=args.mixing,
            neighbors=args.neighbors,
            seed=resolve_seed(args.seed),
        )
    with stage("write"):
        write_edge_list(graph, args.output)
        if args.labels_out is not None:
            if labels is None:
                raise ValueError(f"Generator {args.kind!r} does not produce labels")
            write_labels(edge_list_labels(labels, graph), graph, args.labels_out)


def _cmd_coarsen(args: argparse.Namespace) -> None:
    with stage("load"):
        graph = read_edge_list(args.input)
        seed = resolve_seed(args.seed)
    with stage("coarsen"):
        if args.stats_only:
            stats = coarsen_stats(graph, args.threshold, args.max_levels, seed)
        else:
            hierarchy = coarsen_hierarchy(
                graph, args.threshold, args.max_levels, np.random.default_rng(seed)
            )
    with stage("write"):
        if args.stats_only:
            write_level_stats(stats, args.output)
        else:
            prepare_output_dir(args.output, args.overwrite)
            save_hierarchy(hierarchy, args.output)


def _cmd_embed(args: argparse.Namespace) -> None:
    with stage("load"):
        graph = read_edge_list(args.input)
        config = _harp_config(args)
    with stage("embed"):
        if args.dump_levels is not None:
            run = embed_levels_dump(
                graph, config, args.dump_levels, config.train.dim, progress=args.progress
            )
        elif args.baseline:
            budget = None
            if args.matched_budget:
                hierarchy = coarsen_hierarchy(
                    graph,
                    config.threshold,
                    config.max_levels,
                    np.random.default_rng(config.seed),
                )
                budget = compute_sample_budget(hierarchy, config)
            run = run_baseline(graph, config, budget, progress=args.progress)
        else:
            run = run_harp(graph, config, progress=args.progress)
    _LOGGER.info("Embedded %d nodes with %d samples", graph.node_count, run.samples)
    with stage("write"):
        write_embedding(run.embedding, graph, args.output)


def _cmd_eval(args: argparse.Namespace) -> None:
    with stage("load"):
        ids, vectors = read_embedding(args.embedding)
        labels = read_labels(args.labels, Graph.empty(len(ids), ids))
    with stage("evaluate"):
        reports = [
            evaluate(
                vectors,
                labels,
                ratio,
                args.reps,
                resolve_seed(args.seed),
                method=args.name,
                C=args.C,
                workers=args.workers,
            )
            for ratio in args.ratios
        ]
    with stage("write"):
        write_eval_csv(reports, args.out)
    for report in reports:
        print(f"{report.method}\t{report.ratio:g}\t{report.mean:.4f}")


def _cmd_compare(args: argparse.Namespace) -> None:
    with stage("load"):
        graph = read_edge_list(args.input)
        labels = read_labels(args.labels, graph)
        methods = [Method(item) for item in args.methods.split(",") if item.strip()]
        configs = {method: _harp_config(args, str(method)) for method in methods}
    with stage("evaluate"):
        comparison = compare_methods(
            graph,
            labels,
            methods,
            args.ratios,
            configs,
            repetitions=args.reps,
            seed=resolve_seed(args.seed),
            C=args.C,
            workers=args.workers,
            progress=args.progress,
        )
    with stage("write"):
        write_comparison_csv(comparison.rows, args.out)
        if args.curves is not None:
            write_eval_csv(comparison.reports, args.curves)
        if args.report is not None:
            summary = (
                f"{graph.node_count} nodes, {graph.edge_count} edges, "
                f"{labels.label_count} labels, {args.reps} repetitions"
            )
            html = ReportRenderer().render_report("HARP comparison", comparison.rows, summary)
            write_text_output(args.report, html)
    for row in comparison.rows:
        print(
            f"{row.embedder}\t{row.ratio:g}\t{row.baseline_f1:.4f}\t{row.harp_f1:.4f}\t"
            f"{row.gain_pct:+.1f}%\tp={row.p_value:.3g}"
        )


def _cmd_bench(args: argparse.Namespace) -> None:
    with stage("load"):
        settings = _overrides(args)
        file_seed = settings.pop("seed", None)
        seed = resolve_seed(args.seed if args.seed is not None else file_seed)  # type: ignore[arg-type]
    with stage("embed"):
        records = bench_scaling(
            args.nodes,
            args.avg_degree,
            args.method,
            seed,
            overrides=settings,
            warmup=not args.no_warmup,
            progress=args.progress,
        )
    with stage("write"):
        write_bench_csv(records, args.out)


def _cmd_dump_levels(args: argparse.Namespace) -> None:
    with stage("load"):
        graph = read_edge_list(args.input)
        config = _harp_config(args)
    with stage("write"):
        prepare_output_dir(args.output_dir, args.overwrite)
    with stage("embed"):
        embed_levels_dump(graph, config, args.output_dir, progress=args.progress)


def _cmd_run(args: argparse.Namespace) -> None:
    with stage("load"):
        if args.manifest is not None:
            spec = load_manifest(args.manifest)
            if args.output_dir is not None:
                spec = replace(spec, output_dir=str(args.output_dir))
        else:
            if args.output_dir is None:
                raise ValueError("run needs --output-dir or --manifest")
            generator = None
            if args.generate is not None:
                generator = {
                    "kind": args.generate,
                    "nodes": args.nodes,
                    "avg_degree": args.avg_degree,
                    "communities": args.communities,
                    "mixing": args.mixing,
                    "seed": resolve_seed(args.seed),
                }
            spec = RunSpec(
                _harp_config(args),
                args.mode,
                str(args.output_dir),
                graph_path=str(args.input) if args.input is not None else None,
                generator=generator,
                labels_path=str(args.labels) if args.labels is not None else None,
                ratios=tuple(args.ratios),
                repetitions=args.reps,
                matched_budget=not args.unmatched,
            )
    end_to_end(spec, overwrite=args.overwrite, progress=args.progress)


def _parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="harp", description="Multilevel graph embedding and evaluation."
    )
    parser.add_argument(
        "--log-level",
        choices=_LOG_LEVELS,
        help="Set log level (DEBUG, INFO, WARNING, ERROR, CRITICAL).",
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="Increase verbosity (use -v for DEBUG).",
    )
    parser.add_argument(
        "-q",
        "--quiet",
        action="count",
        default=0,
        help="Reduce output (use -q for ERROR, -qq for CRITICAL).",
    )
    parser.add_argument(
        "--progress", action="store_true", help="Show progress bars on stderr."
    )
    commands = parser.add_subparsers(dest="command", required=True)

    generate = commands.add_parser("generate", help="Write a synthetic graph.")
    generate.add_argument("--kind", choices=GENERATORS, default="erdos_renyi")
    generate.add_argument("--nodes", type=int, required=True)
    generate.add_argument("--avg-degree", type=float, default=10.0)
    generate.add_argument("--m", type=int, default=5, help="Barabasi-Albert attachments.")
    generate.add_argument("--communities", type=int, default=6)
    generate.add_argument("--mixing", type=float, default=0.2)
    generate.add_argument("--neighbors", type=int, default=2, help="Ring lattice reach.")
    generate.add_argument("--seed", type=int)
    generate.add_argument("--output", type=Path, required=True)
    generate.add_argument("--labels-out", type=Path, help="Write community labels.")
    generate.set_defaults(handler=_cmd_generate)

    coarsen = commands.add_parser("coarsen", help="Build and save a coarsening hierarchy.")
    coarsen.add_argument("--input", type=Path, required=True)
    coarsen.add_argument("--threshold", type=int, default=100)
    coarsen.add_argument("--max-levels", type=int, default=32)
    coarsen.add_argument("--seed", type=int)
    coarsen.add_argument(
        "--output",
        type=Path,
        required=True,
        help="Hierarchy directory, or the CSV file with --stats-only.",
    )
    coarsen.add_argument(
        "--stats-only",
        action="store_true",
        help="Write per-level node/edge ratios of the largest component only.",
    )
    coarsen.add_argument("--overwrite", action="store_true")
    coarsen.set_defaults(handler=_cmd_coarsen)

    embed = commands.add_parser("embed", help="Embed a graph with HARP or a flat baseline.")
    embed.add_argument("--input", type=Path, required=True)
    embed.add_argument("--output", type=Path, required=True)
    _add_training_flags(embed, str(Method.DEEPWALK))
    embed.add_argument("--baseline", action="store_true", help="Skip coarsening.")
    embed.add_argument(
        "--matched-budget",
        action="store_true",
        help="With --baseline, train on as many samples as HARP would.",
    )
    embed.add_argument("--dump-levels", type=Path, help="Write 2-D level layouts here.")
    embed.set_defaults(handler=_cmd_embed)

    evaluation = commands.add_parser("eval", help="Multi-label node classification.")
    evaluation.add_argument("--embedding", type=Path, required=True)
    evaluation.add_argument("--labels", type=Path, required=True)
    evaluation.add_argument("--ratios", type=_float_list, default=list(DEFAULT_RATIOS))
    evaluation.add_argument("--reps", type=int, default=10)
    evaluation.add_argument("--seed", type=int)
    evaluation.add_argument("--name", default="embedding", help="Method column value.")
    evaluation.add_argument("--C", type=float, default=1.0, help="Inverse l2 strength.")
    evaluation.add_argument("--workers", type=int, default=1)
    evaluation.add_argument("--out", type=Path, required=True)
    evaluation.set_defaults(handler=_cmd_eval)

    compare = commands.add_parser("compare", help="Baseline vs HARP classification.")
    compare.add_argument("--input", type=Path, required=True)
    compare.add_argument("--labels", type=Path, required=True)
    compare.add_argument("--methods", default="deepwalk,line,node2vec")
    compare.add_argument("--ratios", type=_float_list, default=list(DEFAULT_RATIOS))
    compare.add_argument("--reps", type=int, default=10)
    compare.add_argument("--C", type=float, default=1.0, help="Inverse l2 strength.")
    compare.add_argument("--workers", type=int, default=1)
    compare.add_argument("--out", type=Path, required=True)
    compare.add_argument("--curves", type=Path, help="Per-repetition Macro-F1 CSV.")
    compare.add_argument("--report", type=Path, help="HTML report with F1 curves.")
    _add_training_flags(compare, str(Method.DEEPWALK))
    compare.set_defaults(handler=_cmd_compare)

    bench = commands.add_parser("bench", help="Runtime scaling on Erdos-Renyi graphs.")
    bench.add_argument("--nodes", type=_int_list, default=[100, 1000, 10000, 100000])
    bench.add_argument("--avg-degree", type=float, default=10.0)
    bench.add_argument("--no-warmup", action="store_true")
    bench.add_argument("--out", type=Path, required=True)
    _add_training_flags(bench, str(Method.DEEPWALK))
    bench.set_defaults(handler=_cmd_bench)

    dump = commands.add_parser("dump-levels", help="2-D embeddings of every level.")
    dump.add_argument("--input", type=Path, required=True)
    dump.add_argument("--output-dir", type=Path, required=True)
    dump.add_argument("--overwrite", action="store_true")
    _add_training_flags(dump, str(Method.LINE))
    dump.set_defaults(handler=_cmd_dump_levels)

    run = commands.add_parser("run", help="End-to-end run with a JSON manifest.")
    source = run.add_mutually_exclusive_group()
    source.add_argument("--input", type=Path, help="Edge list file.")
    source.add_argument("--generate", choices=GENERATORS, help="Synthetic graph kind.")
    source.add_argument("--manifest", type=Path, help="Replay a previous run.")
    run.add_argument("--nodes", type=int, default=1000)
    run.add_argument("--avg-degree", type=float, default=10.0)
    run.add_argument("--communities", type=int, default=6)
    run.add_argument("--mixing", type=float, default=0.2)
    run.add_argument("--labels", type=Path)
    run.add_argument("--mode", choices=["baseline", "harp"], default="harp")
    run.add_argument("--unmatched", action="store_true", help="Baseline at preset budget.")
    run.add_argument("--ratios", type=_float_list, default=list(DEFAULT_RATIOS))
    run.add_argument("--reps", type=int, default=10)
    run.add_argument("--output-dir", type=Path)
    run.add_argument("--overwrite", action="store_true")
    _add_training_flags(run, str(Method.DEEPWALK))
    run.set_defaults(handler=_cmd_run)

    return parser.parse_args(argv)


def _fail(stage_name: str, cause: BaseException) -> None:
    print(
        f"harp: error: stage={stage_name} type={type(cause).__name__} "
        f"message={json.dumps(str(cause))}",
        file=sys.stderr,
    )
    raise SystemExit(2)


def main(argv: list[str] | None = None) -> None:
    args = _parse_args(argv)
    _configure_logging(_resolve_log_level(args.log_level, args.verbose, args.quiet))
    try:
        args.handler(args)
    except StageError as exc:
        _fail(exc.stage, exc.cause)


if __name__ == "__main__":
    main()
