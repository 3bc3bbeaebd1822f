"""Fused document scores and per-query rankings.

The central operator is the discrete Choquet integral in its
sorted-difference form: scores are sorted ascending and each increment is
weighted by the capacity of the coalition of criteria still at or above
that level.  Classical baselines (weighted sum, OWA, prioritized scoring
and averaging, min with refinement, arithmetic mean) share the same
scoring interface so a ranking run can swap operators freely.

All functions are pure; inputs are immutable and may be evaluated
concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .measure import BOUNDARY_TOL, Capacity, CriterionSet

AGGREGATOR_KINDS = (
    "choquet",
    "weightedSum",
    "owa",
    "prioritizedScoring",
    "prioritizedAveraging",
    "andMin",
    "arithmeticMean",
)


class AggregationError(ValueError):
    """Scores or parameters unfit for aggregation."""


@dataclass(frozen=True)
class CriterionVector:
    """Per-criterion scores of one document for one query.

    Scores are expected in [0, 1]; out-of-range values are rejected at
    aggregation time rather than clamped, so normalization bugs surface.
    """

    query_id: str
    doc_id: str
    scores: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "scores", tuple(float(s) for s in self.scores))
        if not self.query_id:
            raise AggregationError("query id must be non-empty")
        if not self.doc_id:
            raise AggregationError("doc id must be non-empty")
        if not self.scores:
            raise AggregationError("score vector must be non-empty")
        for s in self.scores:
            if not math.isfinite(s):
                raise AggregationError(
                    f"non-finite score for ({self.query_id}, {self.doc_id})"
                )


class RankEntry(NamedTuple):
    doc_id: str
    score: float
    rank: int


@dataclass(frozen=True)
class RankedList:
    """One query's documents ordered by fused score (a run for that query).

    Entries are sorted by score descending with ties broken by ascending
    doc id, and ranks run consecutively from 1.
    """

    query_id: str
    entries: tuple[RankEntry, ...]


def _check_vector(v: CriterionVector, n: int) -> None:
    if len(v.scores) != n:
        raise AggregationError(
            f"criterion-set mismatch: vector ({v.query_id}, {v.doc_id}) has "
            f"{len(v.scores)} scores, expected {n}"
        )
    for s in v.scores:
        if s < 0.0 or s > 1.0:
            raise AggregationError(
                f"score {s!r} outside [0, 1] for ({v.query_id}, {v.doc_id}); "
                "normalize before aggregating"
            )


def _check_weights(weights, n: int) -> tuple[float, ...]:
    w = tuple(float(x) for x in weights)
    if len(w) != n:
        raise AggregationError(f"expected {n} weights, got {len(w)}")
    if any(not math.isfinite(x) for x in w):
        raise AggregationError("weights must be finite")
    if any(x < 0.0 for x in w):
        raise AggregationError("weights must be nonnegative")
    if abs(sum(w) - 1.0) > BOUNDARY_TOL:
        raise AggregationError(f"weights sum to {sum(w)!r}, expected 1")
    return w


def choquet_score(v: CriterionVector, mu: Capacity) -> float:
    """Discrete Choquet integral of the vector's scores under ``mu``.

    Sorts the scores ascending and sums, per distinct score level, the
    level value times the capacity drop when the criteria at that level
    leave the active coalition.  This is the sorted-difference sum
    rearranged by partial summation; the rearrangement is exact in real
    arithmetic and, unlike the increment form, reproduces idempotency
    and the min/max boundary capacities exactly in floating point.
    Ties share one level (their increment terms would be zero anyway),
    so the evaluation is deterministic.  Costs O(N log N) per document.
    """
    n = mu.criteria.n
    _check_vector(v, n)
    order = np.argsort(np.asarray(v.scores), kind="stable")
    remaining = mu.criteria.full_mask
    total = 0.0
    values = mu.values
    i = 0
    while i < n:
        x = v.scores[order[i]]
        at_level = remaining
        while i < n and v.scores[order[i]] == x:
            remaining &= ~(1 << int(order[i]))
            i += 1
        total += x * (values[at_level] - values[remaining])
    return float(total)


def weighted_sum_score(v: CriterionVector, weights) -> float:
    """Linear combination sum(w_i * x_i) with nonnegative weights summing to 1."""
    w = _check_weights(weights, len(v.scores))
    _check_vector(v, len(w))
    return float(sum(wi * xi for wi, xi in zip(w, v.scores)))


def owa_score(v: CriterionVector, owa_weights) -> float:
    """Ordered weighted average: the first weight applies to the largest score."""
    w = _check_weights(owa_weights, len(v.scores))
    _check_vector(v, len(w))
    ranked = sorted(v.scores, reverse=True)
    return float(sum(wi * xi for wi, xi in zip(w, ranked)))


def prioritized_score(
    v: CriterionVector,
    priority_order,
    criteria: CriterionSet,
    normalized: bool = False,
) -> float:
    """Prioritized aggregation over a strict priority order of criteria.

    Each criterion's importance weight is the running product of the
    satisfaction degrees of all higher-priority criteria (w_1 = 1,
    w_i = w_{i-1} * s_{i-1}), so a poorly satisfied important criterion
    mutes everything below it.  Returns the weighted sum (scoring
    variant) or the weighted average (averaging variant).
    """
    _check_vector(v, criteria.n)
    order = tuple(priority_order)
    if sorted(order) != sorted(criteria.names):
        raise AggregationError(
            f"priority order {order!r} is not a permutation of {criteria.names!r}"
        )
    sats = [v.scores[criteria.index_of(name)] for name in order]
    weights = [1.0]
    for s in sats[:-1]:
        weights.append(weights[-1] * s)
    score = sum(w * s for w, s in zip(weights, sats))
    if normalized:
        return float(score / sum(weights))
    return float(score)


def and_min_score(v: CriterionVector) -> tuple[float, tuple[float, ...]]:
    """Min-based score plus a refinement key for breaking min ties.

    The key is the ascending-sorted score tuple; when two documents share
    the same minimum, the one whose remaining scores are lexicographically
    larger ranks higher.
    """
    _check_vector(v, len(v.scores))
    ranked = tuple(sorted(v.scores))
    return ranked[0], ranked


@dataclass(frozen=True)
class AggregatorSpec:
    """Aggregation operator choice plus its parameters.

    kind is one of AGGREGATOR_KINDS; capacity applies to choquet, weights
    to weightedSum and owa, priority_order (with ``criteria``) to the
    prioritized variants.  andMin and arithmeticMean take no parameters.
    """

    kind: str
    capacity: Capacity | None = None
    weights: tuple[float, ...] | None = None
    priority_order: tuple[str, ...] | None = None
    criteria: CriterionSet | None = None

    def __post_init__(self):
        if self.kind not in AGGREGATOR_KINDS:
            raise AggregationError(f"unknown aggregator kind {self.kind!r}")
        if self.kind == "choquet":
            if self.capacity is None:
                raise AggregationError("choquet aggregation requires a capacity")
        elif self.kind in ("weightedSum", "owa"):
            if self.weights is None:
                raise AggregationError(f"{self.kind} aggregation requires weights")
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
            _check_weights(self.weights, len(self.weights))
        elif self.kind in ("prioritizedScoring", "prioritizedAveraging"):
            if self.priority_order is None or self.criteria is None:
                raise AggregationError(
                    f"{self.kind} aggregation requires a priority order and criterion set"
                )
            object.__setattr__(self, "priority_order", tuple(self.priority_order))

    def score(self, v: CriterionVector) -> float:
        if self.kind == "choquet":
            return choquet_score(v, self.capacity)
        if self.kind == "weightedSum":
            return weighted_sum_score(v, self.weights)
        if self.kind == "owa":
            return owa_score(v, self.weights)
        if self.kind == "prioritizedScoring":
            return prioritized_score(v, self.priority_order, self.criteria, normalized=False)
        if self.kind == "prioritizedAveraging":
            return prioritized_score(v, self.priority_order, self.criteria, normalized=True)
        if self.kind == "andMin":
            return and_min_score(v)[0]
        # arithmeticMean
        _check_vector(v, len(v.scores))
        return float(sum(v.scores) / len(v.scores))


def rank_query(
    vectors,
    spec: AggregatorSpec,
    query_id: str | None = None,
) -> RankedList:
    """Score every document of one query and produce its ranked list.

    Sorting is by fused score descending; andMin additionally applies its
    refinement key, and remaining ties fall back to ascending doc id, so
    the ranking is a deterministic total order.  Empty input yields an
    empty list rather than an error.
    """
    vectors = list(vectors)
    if not vectors:
        return RankedList(query_id=query_id or "", entries=())
    qid = vectors[0].query_id
    for v in vectors:
        if v.query_id != qid:
            raise AggregationError(
                f"mixed query ids in one ranking: {qid!r} and {v.query_id!r}"
            )
    if query_id is not None and query_id != qid:
        raise AggregationError(f"query id {query_id!r} does not match vectors ({qid!r})")

    if spec.kind == "andMin":
        scored = []
        for v in vectors:
            primary, key = and_min_score(v)
            scored.append((v.doc_id, primary, key))
        # Refinement key descending (larger remaining scores first), then doc id.
        scored.sort(key=lambda t: (-t[1], tuple(-s for s in t[2]), t[0]))
    else:
        scored = [(v.doc_id, spec.score(v), None) for v in vectors]
        scored.sort(key=lambda t: (-t[1], t[0]))

    entries = tuple(
        RankEntry(doc_id=doc, score=score, rank=i + 1)
        for i, (doc, score, _key) in enumerate(scored)
    )
    return RankedList(query_id=qid, entries=entries)
