"""Command-line driver: benchmark generation, searches, studies, landscape export.

Reproducibility rules, shared by every subcommand:

* one root ``--seed`` (default 0); each stochastic stage derives its own
  generator as SHA-256 of ``"{seed}:{subcommand}:{stream}"``, so adding
  parallelism or reordering stages never changes results;
* ``--threads`` (or the NBRNAS_THREADS env var) caps worker fan-out; results
  are reduced in fixed order, so any thread count produces identical bytes;
* numbers print with 6 significant digits; files carry full precision.

Exit codes: 0 success, 2 usage error, 1 runtime failure (messages on stderr).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .agg import parse_kind
from .analysis import criterion_top_k, flat_sharp_study, landscape_grid, ranking_study
from .bench import (
    BenchmarkFormatError,
    Objective,
    TabularBenchmark,
    gen_synthetic,
    load_benchmark,
    multilinear_eval_raw,
    write_benchmark,
)
from .gradsearch import DescentConfig, run_na_descent
from .nbhd import NeighborhoodParams
from .sampler_search import na_random_search, random_search
from .space import RelaxedCell, SpaceSpec, parse_cell, relax, render_cell
from ._util import derive_rng, derive_seed, env_thread_default


def _fmt(x: float) -> str:
    return f"{float(x):.6g}"


def _fraction(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not 0.0 <= v < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1), got {text}")
    return v


def _nonneg_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if v < 0.0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {text}")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not v > 0.0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def _nonneg_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _unit_open_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return v


def _agg_kind(text: str):
    try:
        return parse_kind(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _diff_agg_kind(text: str):
    kind = _agg_kind(text)
    if kind.name not in ("mean", "max"):
        raise argparse.ArgumentTypeError(f"{text!r} is a non-differentiable aggregation; choose mean or max")
    return kind


def _agg_list(text: str):
    return tuple(_agg_kind(part) for part in text.split(",") if part.strip())


def _dataset_list(text: str):
    parts = tuple(p.strip() for p in text.split(",") if p.strip())
    if not parts:
        raise argparse.ArgumentTypeError("expected a comma-separated list of dataset names")
    return parts


def _load_space(path: str) -> SpaceSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return SpaceSpec.from_dict(json.load(fh))


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _threads(args) -> int:
    return args.threads if args.threads is not None else env_thread_default()


def _print_cell_errors(bench: TabularBenchmark, obj: Objective, cell) -> None:
    print(f"val_error {_fmt(obj(cell))}")
    for ds in bench.test_datasets:
        test_obj = Objective(bench, ds, None, "test")
        print(f"test_error {ds} {_fmt(test_obj(cell))}")


# ---------------------------------------------------------------------------
# subcommand handlers


def cmd_gen_bench(args) -> int:
    spec = _load_space(args.space)
    bench = gen_synthetic(
        spec,
        seed=derive_seed(args.seed, "gen-bench", "benchmark"),
        epochs=args.epochs,
        spike_fraction=args.spike_fraction,
        spike_height=args.spike_height,
        generalization_gap=args.generalization_gap,
        noise_scale=args.noise_scale,
    )
    write_benchmark(bench, args.out)
    print(f"wrote {args.out}: {bench.num_cells} cells, {bench.epochs} epochs, datasets {','.join(bench.datasets)}")
    return 0


def _print_search_result(bench: TabularBenchmark, obj: Objective, trace) -> None:
    print(f"incumbent {render_cell(trace.incumbent, bench.spec)}")
    print(f"criterion {_fmt(trace.incumbent_score)}")
    _print_cell_errors(bench, obj, trace.incumbent)
    print(f"total_evaluations {trace.total_evaluations}")


def cmd_search_rs(args) -> int:
    bench = load_benchmark(args.bench)
    obj = Objective(bench, args.dataset, args.epoch, "val")
    rng = derive_rng(args.seed, "search-rs", "candidates")
    trace = random_search(obj, args.budget, rng)
    _print_search_result(bench, obj, trace)
    if args.out:
        payload = {
            "algorithm": "rs",
            "config": {"budget": args.budget, "dataset": args.dataset, "epoch": obj.epoch, "seed": args.seed},
        }
        payload.update(trace.to_json_dict(bench.spec))
        _write_json(args.out, payload)
    return 0


def cmd_search_na_rs(args) -> int:
    bench = load_benchmark(args.bench)
    obj = Objective(bench, args.dataset, args.epoch, "val")
    params = NeighborhoodParams(radius=args.d, sample_size=args.n_nbr)
    rng = derive_rng(args.seed, "search-na-rs", "candidates")
    trace = na_random_search(obj, args.T, params, args.agg, rng, threads=_threads(args))
    _print_search_result(bench, obj, trace)
    if args.out:
        payload = {
            "algorithm": "na-rs",
            "config": {
                "steps": args.T,
                "n_nbr": args.n_nbr,
                "d": args.d,
                "agg": str(args.agg),
                "dataset": args.dataset,
                "epoch": obj.epoch,
                "seed": args.seed,
            },
        }
        payload.update(trace.to_json_dict(bench.spec))
        _write_json(args.out, payload)
    return 0


def cmd_grad_search(args) -> int:
    bench = load_benchmark(args.bench)
    obj = Objective(bench, args.dataset, args.epoch, "val")
    cfg = DescentConfig(
        steps=args.T,
        sample_size=args.n_nbr,
        perturb_edges=args.d,
        noise_bound=args.epsilon,
        learning_rate=args.lr,
        kind=args.agg,
        seed=derive_seed(args.seed, "grad-search", "descent"),
    )
    trace, final = run_na_descent(None, obj, cfg, threads=_threads(args))
    print(f"final {render_cell(final, bench.spec)}")
    _print_cell_errors(bench, obj, final)
    if args.out:
        payload = {
            "algorithm": "na-descent",
            "config": {
                "steps": args.T,
                "n_nbr": args.n_nbr,
                "d": args.d,
                "epsilon": args.epsilon,
                "lr": args.lr,
                "agg": str(args.agg),
                "dataset": args.dataset,
                "epoch": obj.epoch,
                "seed": args.seed,
            },
            "steps_trace": [s.to_json_dict(bench.spec) for s in trace],
            "final": render_cell(final, bench.spec),
        }
        _write_json(args.out, payload)
    return 0


def cmd_rank_eval(args) -> int:
    bench = load_benchmark(args.bench)
    report = ranking_study(
        bench,
        search_dataset=args.dataset,
        eval_datasets=args.eval_datasets,
        kinds=args.aggs,
        epoch=args.epoch,
        sample_size=args.samples,
        repeats=args.repeats,
        radius=args.d,
        rng=derive_rng(args.seed, "rank-eval", "samples"),
    )
    for ds, s in report.baseline.items():
        print(f"baseline {ds} tau {_fmt(s.mean)} +- {_fmt(s.std)}")
    for kind_label, per_ds in report.criteria.items():
        for ds, s in per_ds.items():
            print(f"{kind_label} {ds} tau {_fmt(s.mean)} +- {_fmt(s.std)}")
    if args.out:
        _write_json(args.out, report.to_json_dict())
    return 0


def cmd_flat_analysis(args) -> int:
    bench = load_benchmark(args.bench)
    report = flat_sharp_study(
        bench,
        search_dataset=args.dataset,
        eval_datasets=args.eval_datasets,
        epoch=args.epoch,
        top_k=args.top_k,
        radius=args.d,
    )
    for label, group in (("flat", report.flat), ("sharp", report.sharp)):
        tests = " ".join(f"{ds}={_fmt(v)}" for ds, v in group.mean_test.items())
        print(
            f"{label} size {group.size} val {_fmt(group.mean_val)} "
            f"nbhd_var {_fmt(group.mean_nbhd_variance)} test {tests}"
        )
    if args.out:
        _write_json(args.out, report.to_json_dict())
    return 0


def cmd_landscape(args) -> int:
    bench = load_benchmark(args.bench)
    obj = Objective(bench, args.dataset, args.epoch, "val")
    cell = parse_cell(args.cell, bench.spec)
    one_hot = relax(cell, bench.spec).dists
    # centered finite differences need positive mass everywhere, so the center
    # blends the one-hot cell with uniform by the --smooth factor
    m = bench.spec.num_ops
    center_arr = (1.0 - args.smooth) * one_hot + args.smooth * (np.ones_like(one_hot) / m)
    center = RelaxedCell(center_arr)
    grid = landscape_grid(obj, center, grid_n=args.grid, coef_range=tuple(args.range), h=args.step)
    mid = args.grid // 2
    print(f"center {render_cell(cell, bench.spec)} smooth {_fmt(args.smooth)}")
    print(f"center_value {_fmt(grid.values[mid, mid])}")
    if grid.eigenvalues is not None:
        print(f"eigenvalues {_fmt(grid.eigenvalues[0])} {_fmt(grid.eigenvalues[1])}")
    _write_json(args.out + ".json", grid.to_json_dict())
    with open(args.out + ".csv", "w", encoding="utf-8") as fh:
        fh.write(grid.to_csv_text())
    print(f"wrote {args.out}.json and {args.out}.csv")
    return 0


def cmd_criterion_top_k(args) -> int:
    bench = load_benchmark(args.bench)
    kind = None if args.agg is None else args.agg
    cells, report = criterion_top_k(
        bench,
        search_dataset=args.dataset,
        kind=kind,
        k=args.top_k,
        epoch=args.epoch,
        radius=args.d,
        eval_datasets=args.eval_datasets,
    )
    tests = " ".join(f"{ds}={_fmt(v)}" for ds, v in report.mean_test.items())
    print(f"criterion {report.criterion} k {report.k} nbhd_var {_fmt(report.mean_nbhd_variance)} test {tests}")
    if args.out:
        _write_json(args.out, report.to_json_dict(bench))
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(
        prog="nbrnas",
        description="Neighborhood-aware architecture search and analysis over tabular benchmarks.",
        formatter_class=fmt,
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="root seed; sub-streams derive from it")
    common.add_argument("--threads", type=_positive_int, default=None, help="worker threads (default: NBRNAS_THREADS or 1)")

    bench_common = argparse.ArgumentParser(add_help=False)
    bench_common.add_argument("--bench", required=True, help="benchmark JSONL(.gz) file")
    bench_common.add_argument("--dataset", default="search", help="dataset whose validation error drives the run")
    bench_common.add_argument("--epoch", type=int, default=-1, help="validation epoch; negative counts from the end")

    p = sub.add_parser("gen-bench", parents=[common], formatter_class=fmt, help="generate a synthetic benchmark file")
    p.add_argument("--space", required=True, help="space spec JSON file")
    p.add_argument("--out", required=True, help="output benchmark path (.jsonl or .jsonl.gz)")
    p.add_argument("--epochs", type=_positive_int, default=10, help="validation epochs to synthesize")
    p.add_argument("--spike-fraction", type=_fraction, default=0.05, help="fraction of cells given misleading search scores")
    p.add_argument("--spike-height", type=_nonneg_float, default=3.0, help="how much better spiked cells look at search time")
    p.add_argument("--generalization-gap", type=_nonneg_float, default=3.0, help="how much worse spiked cells test")
    p.add_argument("--noise-scale", type=_nonneg_float, default=0.5, help="uniform test-noise half-width for unspiked cells")
    p.set_defaults(func=cmd_gen_bench)

    p = sub.add_parser("search", formatter_class=fmt, help="run a search algorithm")
    search_sub = p.add_subparsers(dest="algo", required=True, metavar="ALGO")

    p_rs = search_sub.add_parser("rs", parents=[common, bench_common], formatter_class=fmt, help="plain random search")
    p_rs.add_argument("--budget", type=_positive_int, default=1000, help="objective evaluations to spend")
    p_rs.add_argument("--out", default=None, help="write the search trace JSON here")
    p_rs.set_defaults(func=cmd_search_rs)

    p_na = search_sub.add_parser(
        "na-rs", parents=[common, bench_common], formatter_class=fmt, help="neighborhood-aware random search"
    )
    p_na.add_argument("--T", type=_positive_int, default=100, help="search steps")
    p_na.add_argument("--n-nbr", type=_positive_int, default=10, help="neighborhood sample size (reference included)")
    p_na.add_argument("--d", type=_nonneg_int, default=1, help="neighborhood distance threshold")
    p_na.add_argument("--agg", type=_agg_kind, default="mean", help="aggregation: mean | median | max | var:<penalty>")
    p_na.add_argument("--out", default=None, help="write the search trace JSON here")
    p_na.set_defaults(func=cmd_search_na_rs)

    p = sub.add_parser(
        "grad-search", parents=[common, bench_common], formatter_class=fmt, help="gradient descent on relaxed cells"
    )
    p.add_argument("--T", type=_nonneg_int, default=100, help="descent steps")
    p.add_argument("--n-nbr", type=_positive_int, default=10, help="neighborhood sample size (reference included)")
    p.add_argument("--d", type=_positive_int, default=None, help="edges perturbed per neighbor (default: scaled to the space)")
    p.add_argument("--epsilon", type=_positive_float, default=0.1, help="additive noise bound, in (0, 1)")
    p.add_argument("--lr", type=_positive_float, default=0.1, help="learning rate")
    p.add_argument("--agg", type=_diff_agg_kind, default="mean", help="differentiable aggregation: mean | max")
    p.add_argument("--out", default=None, help="write the descent trace JSON here")
    p.set_defaults(func=cmd_grad_search)

    p = sub.add_parser(
        "rank-eval", parents=[common, bench_common], formatter_class=fmt, help="rank-correlation study of criteria"
    )
    p.add_argument("--samples", type=_positive_int, default=100, help="cells sampled per repeat")
    p.add_argument("--repeats", type=_positive_int, default=10, help="independent repeats")
    p.add_argument("--d", type=_nonneg_int, default=1, help="neighborhood distance threshold")
    p.add_argument(
        "--aggs",
        type=_agg_list,
        default="mean,median,max,var:1.0",
        help="comma-separated aggregations to evaluate",
    )
    p.add_argument("--eval-datasets", type=_dataset_list, default=None, help="test datasets (default: all with test data)")
    p.add_argument("--out", default=None, help="write the report JSON here")
    p.set_defaults(func=cmd_rank_eval)

    p = sub.add_parser(
        "flat-analysis", parents=[common, bench_common], formatter_class=fmt, help="flat-vs-sharp generalization study"
    )
    p.add_argument("--top-k", type=_positive_int, default=100, help="cells with the lowest validation error (even)")
    p.add_argument("--d", type=_nonneg_int, default=1, help="neighborhood distance threshold")
    p.add_argument("--eval-datasets", type=_dataset_list, default=None, help="test datasets (default: all with test data)")
    p.add_argument("--out", default=None, help="write the report JSON here")
    p.set_defaults(func=cmd_flat_analysis)

    p = sub.add_parser(
        "top-k", parents=[common, bench_common], formatter_class=fmt, help="exhaustive top-k under a criterion"
    )
    p.add_argument("--agg", type=_agg_kind, default=None, help="criterion aggregation (default: plain validation error)")
    p.add_argument("--top-k", type=_positive_int, default=100, help="cells to select")
    p.add_argument("--d", type=_nonneg_int, default=1, help="neighborhood distance threshold")
    p.add_argument("--eval-datasets", type=_dataset_list, default=None, help="test datasets (default: all with test data)")
    p.add_argument("--out", default=None, help="write the report JSON here")
    p.set_defaults(func=cmd_criterion_top_k)

    p = sub.add_parser(
        "landscape", parents=[common, bench_common], formatter_class=fmt, help="export the 2-D loss landscape grid"
    )
    p.add_argument("--cell", required=True, help="center cell, op names joined by '|'")
    p.add_argument("--grid", type=_positive_int, default=41, help="grid points per axis (odd)")
    p.add_argument("--range", type=float, nargs=2, default=(-1.0, 1.0), metavar=("LO", "HI"), help="coefficient range")
    p.add_argument("--step", type=_positive_float, default=1e-3, help="finite-difference step for the Hessian")
    p.add_argument("--smooth", type=_unit_open_float, default=0.1, help="uniform blend applied to the one-hot center, in (0, 1)")
    p.add_argument("--out", required=True, help="output prefix; writes <prefix>.json and <prefix>.csv")
    p.set_defaults(func=cmd_landscape)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse already printed usage/help
        return int(e.code or 0)
    try:
        return int(args.func(args))
    except BenchmarkFormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ValueError, TypeError, OSError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
