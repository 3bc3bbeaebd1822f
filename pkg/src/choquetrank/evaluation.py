"""Ranking effectiveness metrics and paired significance testing.

Precision at k divides by k even for rankings shorter than k (the
dominant trec-style convention), average precision is taken over all
judged-relevant documents with unretrieved ones contributing zero, and
relevance is binary: any grade above 0 counts as relevant.

Queries that never appear in the judgments are excluded from the means
and reported separately; silently treating them as zeros would bias MAP.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .aggregate import RankedList

# (query_id, doc_id) -> relevance grade; grade > 0 means relevant.
Judgments = dict[tuple[str, str], int]

_METRIC_RE = re.compile(r"^P@(\d+)$")


class MetricError(ValueError):
    """Unknown metric identifier or metric undefined on the data."""


class ZeroVarianceError(ValueError):
    """Paired t statistic undefined: zero variance with nonzero mean difference."""


def parse_metric(name: str) -> str:
    """Validate a metric identifier ('P@k' with k >= 1, or 'MAP')."""
    if name == "MAP":
        return name
    m = _METRIC_RE.match(name)
    if m and int(m.group(1)) >= 1:
        return name
    raise MetricError(f"unknown metric {name!r}; expected 'P@k' with k >= 1 or 'MAP'")


def precision_at_k(ranking: RankedList, judgments: Judgments, k: int) -> float:
    """Fraction of the top k positions occupied by relevant documents.

    The denominator is k even when fewer than k documents were retrieved.
    """
    if k < 1:
        raise MetricError(f"precision cutoff must be >= 1, got {k}")
    hits = 0
    for entry in ranking.entries[:k]:
        if judgments.get((ranking.query_id, entry.doc_id), 0) > 0:
            hits += 1
    return hits / k


def average_precision(ranking: RankedList, judgments: Judgments) -> float:
    """Mean of the precision values at each relevant retrieved rank.

    Averaged over all judged-relevant documents for the query, so relevant
    documents missing from the ranking pull the value down.  Queries with
    no judged-relevant documents score 0 (flagged at report level).
    """
    qid = ranking.query_id
    relevant_total = sum(
        1 for (q, _d), grade in judgments.items() if q == qid and grade > 0
    )
    if relevant_total == 0:
        return 0.0
    hits = 0
    precision_sum = 0.0
    for entry in ranking.entries:
        if judgments.get((qid, entry.doc_id), 0) > 0:
            hits += 1
            precision_sum += hits / entry.rank
    return precision_sum / relevant_total


def mean_over_queries(per_query) -> float:
    values = list(per_query)
    if not values:
        raise MetricError("cannot average over an empty query set")
    return float(sum(values) / len(values))


@dataclass(frozen=True)
class MetricReport:
    """Per-query metric values plus their unweighted means.

    ``excluded`` lists queries absent from the judgments (not averaged);
    ``zero_relevant`` flags judged queries without any relevant document.
    """

    per_query: dict[str, dict[str, float]]
    means: dict[str, float]
    query_count: int
    excluded: tuple[str, ...]
    zero_relevant: tuple[str, ...]


def _metric_value(metric: str, ranking: RankedList, judgments: Judgments) -> float:
    if metric == "MAP":
        return average_precision(ranking, judgments)
    k = int(metric.split("@")[1])
    return precision_at_k(ranking, judgments, k)


def build_report(rankings, judgments: Judgments, metrics) -> MetricReport:
    """Evaluate every requested metric for every judged query."""
    metric_names = [parse_metric(m) for m in metrics]
    judged_queries = {q for (q, _d) in judgments}
    relevant_queries = {q for (q, _d), grade in judgments.items() if grade > 0}

    per_query: dict[str, dict[str, float]] = {}
    excluded: list[str] = []
    zero_relevant: list[str] = []
    for ranking in rankings:
        qid = ranking.query_id
        if qid in per_query or qid in excluded:
            raise MetricError(f"duplicate ranking for query {qid!r}")
        if qid not in judged_queries:
            excluded.append(qid)
            continue
        if qid not in relevant_queries:
            zero_relevant.append(qid)
        per_query[qid] = {
            m: _metric_value(m, ranking, judgments) for m in metric_names
        }
    if not per_query:
        raise MetricError("no evaluated queries: none of the rankings appear in the judgments")
    means = {
        m: mean_over_queries(vals[m] for vals in per_query.values())
        for m in metric_names
    }
    return MetricReport(
        per_query=per_query,
        means=means,
        query_count=len(per_query),
        excluded=tuple(excluded),
        zero_relevant=tuple(zero_relevant),
    )


def paired_t_test(a, b) -> tuple[float, int]:
    """Paired t statistic and degrees of freedom for per-query values.

    t = mean(d) / (sd(d) / sqrt(n)) over the differences d = a - b with
    the sample standard deviation; df = n - 1.  Identical samples give
    t = 0; zero variance with a nonzero mean is undefined and raises.
    """
    xs = [float(v) for v in a]
    ys = [float(v) for v in b]
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    n = len(xs)
    if n < 2:
        raise ValueError("paired t test needs at least two queries")
    d = [x - y for x, y in zip(xs, ys)]
    mean = sum(d) / n
    var = sum((v - mean) ** 2 for v in d) / (n - 1)
    sd = math.sqrt(var)
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, n - 1
        raise ZeroVarianceError(
            f"differences have zero variance with nonzero mean {mean!r}; t is unbounded"
        )
    return float(mean / (sd / math.sqrt(n))), n - 1
