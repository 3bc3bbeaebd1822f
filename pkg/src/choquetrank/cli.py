"""Command-line front end wiring data, training, ranking, and evaluation.

Subcommands: train, rank, eval, indices, correlate, synth.  All results go
to standard output except files named by ``--out`` style flags.  Exit
status is a stable contract for scripting: 0 success, 1 data or
computation error, 2 usage error or degenerate training data.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import __version__
from .aggregate import AggregationError, AggregatorSpec, rank_query
from .data import (
    JudgedDataset,
    NormalizationPolicy,
    ParseError,
    generate_synthetic,
    normalize,
    parse_feature_file,
    parse_qrels,
    parse_run_file,
    write_feature_file,
    write_qrels,
    write_run_file,
)
from .evaluation import (
    MetricError,
    ZeroVarianceError,
    build_report,
    paired_t_test,
    parse_metric,
)
from .indices import ConstantInputError, interaction_matrix, shapley_importance, spearman_correlation
from .measure import (
    CapacityError,
    read_capacity_file,
    validate_capacity,
    write_capacity_file,
)
from .training import DegenerateTrainingError, TrainingConfig, train_pipeline

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2

CLI_AGGREGATORS = ("choquet", "lcs", "owa", "min", "prioritized", "mean")


class UsageError(ValueError):
    """Flag combination invalid independent of any input data."""


def _metric_arg(text: str) -> str:
    try:
        return parse_metric(text)
    except MetricError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _metric_list_arg(text: str) -> tuple[str, ...]:
    names = tuple(part for part in text.split(",") if part)
    if not names:
        raise argparse.ArgumentTypeError("no metrics requested")
    return tuple(_metric_arg(name) for name in names)


def _weights_arg(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad weight list {text!r}") from None


def _names_arg(text: str) -> tuple[str, ...]:
    return tuple(part for part in text.split(",") if part)


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="choquetrank",
        description="Multi-criteria relevance fusion with the Choquet integral.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="learn a capacity from judged features")
    train.add_argument("--features", required=True)
    train.add_argument("--qrels", required=True)
    train.add_argument("--metric", type=_metric_arg, default="P@30")
    train.add_argument("--k", type=_positive_int, default=100, help="top-K interpolation depth")
    train.add_argument("--step", type=float, default=0.1)
    train.add_argument("--ridge", type=float, default=1e-8)
    train.add_argument("--monotone", action="store_true", help="project onto monotone capacities")
    train.add_argument("--two-additive", action="store_true", dest="two_additive")
    train.add_argument("--normalize", choices=("minmax", "none"), default="minmax")
    train.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1)
    train.add_argument("--out", required=True, help="capacity file for the fitted measure")
    train.add_argument("--out-initial", help="optional capacity file for the tuned initial measure")

    rank = sub.add_parser("rank", help="write a run file for a chosen aggregator")
    rank.add_argument("--features", required=True)
    rank.add_argument("--aggregator", choices=CLI_AGGREGATORS, required=True)
    rank.add_argument("--capacity", help="capacity file (choquet only)")
    rank.add_argument("--weights", type=_weights_arg, help="weights (lcs and owa)")
    rank.add_argument("--priority", type=_names_arg, help="priority order (prioritized)")
    rank.add_argument("--normalized", action="store_true",
                      help="prioritized averaging instead of scoring")
    rank.add_argument("--normalize", choices=("minmax", "none"), default="minmax")
    rank.add_argument("--tag", default="choquetrank")
    rank.add_argument("--out", required=True)

    ev = sub.add_parser("eval", help="score a run against qrels")
    ev.add_argument("--run", required=True)
    ev.add_argument("--qrels", required=True)
    ev.add_argument("--metrics", type=_metric_list_arg,
                    default=("P@5", "P@10", "P@20", "P@30", "P@100", "MAP"))
    ev.add_argument("--baseline-run", dest="baseline_run")
    ev.add_argument("--per-query", dest="per_query", help="TSV of per-query metric values")

    ind = sub.add_parser("indices", help="Shapley and interaction profile of a capacity")
    ind.add_argument("--capacity", required=True)

    corr = sub.add_parser("correlate", help="Spearman correlation between two criteria")
    corr.add_argument("--features", required=True)
    corr.add_argument("--x", required=True)
    corr.add_argument("--y", required=True)
    corr.add_argument("--normalize", choices=("minmax", "none"), default="none")

    synth = sub.add_parser("synth", help="generate a seeded synthetic dataset")
    synth.add_argument("--queries", type=_positive_int, required=True)
    synth.add_argument("--docs", type=_positive_int, required=True)
    synth.add_argument("--criteria", type=_positive_int, required=True)
    synth.add_argument("--truth", choices=("min", "wsum", "choquet"), required=True)
    synth.add_argument("--weights", type=_weights_arg, help="truth weights (wsum)")
    synth.add_argument("--capacity", help="truth capacity file (choquet)")
    synth.add_argument("--noise", type=float, default=0.0)
    synth.add_argument("--quantile", type=float, default=0.9)
    synth.add_argument("--seed", type=int, required=True)
    synth.add_argument("--out-features", required=True)
    synth.add_argument("--out-qrels", required=True)

    return parser


def _load_features(path, normalize_kind: str) -> JudgedDataset:
    dataset = parse_feature_file(path)
    return normalize(dataset, NormalizationPolicy(kind=normalize_kind))


def _print_capacity(capacity, label: str) -> None:
    print(label)
    for mask, value in capacity.proper_subset_items():
        print(f"  mu({capacity.criteria.subset_label(mask)}) = {value:.6f}")
    print(f"  monotone: {'yes' if capacity.monotone else 'no'}")


def _print_profile(capacity) -> None:
    print("shapley importance:")
    for name, value in shapley_importance(capacity).items():
        print(f"  {name}\t{value:.6f}")
    pairs = interaction_matrix(capacity)
    if pairs:
        print("interaction indices:")
        for (a, b), value in pairs.items():
            print(f"  {a},{b}\t{value:+.6f}")


def _cmd_train(args) -> int:
    dataset = _load_features(args.features, args.normalize)
    judgments = parse_qrels(args.qrels)
    dataset = JudgedDataset(
        criteria=dataset.criteria, vectors=dataset.vectors, judgments=judgments
    )
    config = TrainingConfig(
        target_metric=args.metric,
        top_k=args.k,
        step=args.step,
        monotone_constraint=args.monotone,
        ridge=args.ridge,
        two_additive=args.two_additive,
    )
    report = train_pipeline(dataset, config, threads=args.threads)

    print(f"grid candidates ({len(report.grid.candidates)}), metric {args.metric}:")
    for weights, score in zip(report.grid.candidates, report.per_candidate_scores):
        label = ",".join(f"{w:.6g}" for w in weights)
        print(f"  ({label})\t{score:.6f}")
    wstar = ",".join(f"{w:.6g}" for w in report.best_weights)
    print(f"selected initial weights: ({wstar})  {args.metric} = {report.mu_star_score:.6f}")
    _print_capacity(report.mu_double_star, "fitted capacity:")
    print(f"fit residual RMSE: {report.rmse:.6f} over {report.sample_count} samples")
    if report.skipped_queries:
        print(f"warning: {report.skipped_queries} judged queries had no documents")
    if report.unidentified:
        print("warning: unidentified coalitions held at initialization: "
              + ", ".join(report.unidentified))
    _print_profile(report.mu_double_star)
    write_capacity_file(report.mu_double_star, args.out)
    print(f"capacity written to {args.out}")
    if args.out_initial:
        write_capacity_file(report.mu_star, args.out_initial)
        print(f"initial capacity written to {args.out_initial}")
    return EXIT_OK


def _make_spec(args, dataset: JudgedDataset) -> AggregatorSpec:
    n = dataset.criteria.n
    if args.aggregator == "choquet":
        if not args.capacity:
            raise UsageError("choquet ranking requires --capacity")
        capacity = read_capacity_file(args.capacity)
        if capacity.criteria.names != dataset.criteria.names:
            raise AggregationError(
                f"capacity criteria {capacity.criteria.names} do not match "
                f"feature criteria {dataset.criteria.names}"
            )
        return AggregatorSpec(kind="choquet", capacity=capacity)
    if args.aggregator in ("lcs", "owa"):
        if args.weights is None:
            raise UsageError(f"{args.aggregator} ranking requires --weights")
        if len(args.weights) != n:
            raise AggregationError(
                f"expected {n} weights for {n} criteria, got {len(args.weights)}"
            )
        kind = "weightedSum" if args.aggregator == "lcs" else "owa"
        return AggregatorSpec(kind=kind, weights=args.weights)
    if args.aggregator == "prioritized":
        if args.priority is None:
            raise UsageError("prioritized ranking requires --priority")
        kind = "prioritizedAveraging" if args.normalized else "prioritizedScoring"
        return AggregatorSpec(
            kind=kind, priority_order=args.priority, criteria=dataset.criteria
        )
    if args.aggregator == "min":
        return AggregatorSpec(kind="andMin")
    return AggregatorSpec(kind="arithmeticMean")


def _cmd_rank(args) -> int:
    dataset = _load_features(args.features, args.normalize)
    spec = _make_spec(args, dataset)
    rankings = [rank_query(vectors, spec) for vectors in dataset.by_query().values()]
    write_run_file(rankings, args.tag, args.out)
    total = sum(len(r.entries) for r in rankings)
    print(f"wrote {total} lines for {len(rankings)} queries to {args.out}")
    return EXIT_OK


def _percent_change(a: float, b: float) -> str:
    if b == 0.0:
        return "n/a"
    return f"{100.0 * (a - b) / b:+.2f}%"


def _cmd_eval(args) -> int:
    metrics = list(args.metrics)
    rankings = parse_run_file(args.run)
    judgments = parse_qrels(args.qrels)
    report = build_report(rankings, judgments, metrics)

    baseline = None
    if args.baseline_run:
        baseline = build_report(parse_run_file(args.baseline_run), judgments, metrics)
        if set(baseline.per_query) != set(report.per_query):
            raise MetricError(
                "misaligned query sets: run and baseline evaluate different queries"
            )

    if baseline is None:
        print("metric\tmean")
        for m in metrics:
            print(f"{m}\t{report.means[m]:.6f}")
    else:
        print("metric\trun\tbaseline\tchange\tt\tdf")
        qids = sorted(report.per_query)
        for m in metrics:
            a = [report.per_query[q][m] for q in qids]
            b = [baseline.per_query[q][m] for q in qids]
            t_stat, df = paired_t_test(a, b)
            print(
                f"{m}\t{report.means[m]:.6f}\t{baseline.means[m]:.6f}\t"
                f"{_percent_change(report.means[m], baseline.means[m])}\t"
                f"{t_stat:.4f}\t{df}"
            )
    print(
        f"queries evaluated: {report.query_count}"
        f" (excluded: {len(report.excluded)}, zero-relevant: {len(report.zero_relevant)})"
    )
    if args.per_query:
        with open(args.per_query, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("qid\t" + "\t".join(metrics) + "\n")
            for qid in sorted(report.per_query):
                row = "\t".join(f"{report.per_query[qid][m]:.6f}" for m in metrics)
                fh.write(f"{qid}\t{row}\n")
        print(f"per-query values written to {args.per_query}")
    return EXIT_OK


def _cmd_indices(args) -> int:
    capacity = read_capacity_file(args.capacity)
    _print_capacity(capacity, f"capacity from {args.capacity}:")
    validation = validate_capacity(capacity, require_monotone=True)
    if not validation.ok:
        print(f"note: {len(validation.violations)} monotonicity violations (signed capacity)")
    _print_profile(capacity)
    return EXIT_OK


def _cmd_correlate(args) -> int:
    dataset = _load_features(args.features, args.normalize)
    xi = dataset.criteria.index_of(args.x)
    yi = dataset.criteria.index_of(args.y)
    print("qid\tspearman")
    pooled_x: list[float] = []
    pooled_y: list[float] = []
    for qid, vectors in dataset.by_query().items():
        xs = [v.scores[xi] for v in vectors]
        ys = [v.scores[yi] for v in vectors]
        pooled_x.extend(xs)
        pooled_y.extend(ys)
        try:
            rho = spearman_correlation(xs, ys)
            print(f"{qid}\t{rho:+.4f}")
        except (ConstantInputError, ValueError) as exc:
            print(f"{qid}\tundefined ({exc})")
    rho = spearman_correlation(pooled_x, pooled_y)
    print(f"pooled\t{rho:+.4f}")
    return EXIT_OK


def _cmd_synth(args) -> int:
    if args.truth == "min":
        truth = AggregatorSpec(kind="andMin")
    elif args.truth == "wsum":
        if args.weights is None:
            raise UsageError("--truth wsum requires --weights")
        if len(args.weights) != args.criteria:
            raise ValueError(
                f"expected {args.criteria} truth weights, got {len(args.weights)}"
            )
        truth = AggregatorSpec(kind="weightedSum", weights=args.weights)
    else:
        if not args.capacity:
            raise UsageError("--truth choquet requires --capacity")
        capacity = read_capacity_file(args.capacity)
        if capacity.criteria.n != args.criteria:
            raise ValueError(
                f"truth capacity has {capacity.criteria.n} criteria, expected {args.criteria}"
            )
        truth = AggregatorSpec(kind="choquet", capacity=capacity)
    dataset = generate_synthetic(
        n_queries=args.queries,
        docs_per_query=args.docs,
        n_criteria=args.criteria,
        truth=truth,
        noise=args.noise,
        relevance_quantile=args.quantile,
        seed=args.seed,
    )
    write_feature_file(dataset, args.out_features)
    write_qrels(dataset.judgments, args.out_qrels)
    relevant = sum(1 for g in dataset.judgments.values() if g > 0)
    print(
        f"wrote {len(dataset.vectors)} vectors ({relevant} relevant) to "
        f"{args.out_features} and {args.out_qrels}"
    )
    return EXIT_OK


_HANDLERS = {
    "train": _cmd_train,
    "rank": _cmd_rank,
    "eval": _cmd_eval,
    "indices": _cmd_indices,
    "correlate": _cmd_correlate,
    "synth": _cmd_synth,
}


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateTrainingError as exc:
        print(f"degenerate training data: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (
        ParseError,
        CapacityError,
        AggregationError,
        MetricError,
        ConstantInputError,
        ZeroVarianceError,
        OSError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())
