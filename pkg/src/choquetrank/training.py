"""Capacity identification from judged training data.

The pipeline has four stages: enumerate an initial grid of additive
weight candidates (step-quantised, summing to 1), select the candidate
whose Choquet ranking maximises a target IR metric over the training
queries, interpolate desired fused scores over each query's top-K
documents (relevant documents are pulled up to the list maximum,
non-relevant ones pushed down to the list minimum), and solve the
resulting linear least-squares system for all free capacity coordinates.

The sorted-difference form of the Choquet integral is linear in the
capacity values: each sample contributes one row whose coefficient on the
coordinate for coalition {c_(i), ..., c_(N)} is the score increment at
level i, plus a constant offset equal to the smallest score (the full-set
coalition, pinned at 1).  Ridge regularisation guards against rank
deficiency when few score orderings occur in the data.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .aggregate import AggregatorSpec, CriterionVector, rank_query
from .data import JudgedDataset
from .evaluation import build_report, parse_metric
from .indices import interaction_matrix, shapley_importance
from .measure import Capacity, CriterionSet, capacity_from_weights

GRID_TOL = 1e-9


class DegenerateTrainingError(ValueError):
    """Training data cannot drive the pipeline (e.g. no relevant documents)."""


class RankDeficientError(ValueError):
    """Unregularised least squares on a rank-deficient design."""


class ProjectionError(RuntimeError):
    """Monotonicity projection failed to converge."""


@dataclass(frozen=True)
class TuningGrid:
    """Initial additive weight candidates, deduplicated, in lexicographic order."""

    step: float
    candidates: tuple[tuple[float, ...], ...]


@dataclass(frozen=True)
class TrainingConfig:
    """Knobs for the capacity-training pipeline.

    ``two_additive`` switches the least-squares stage to the singleton +
    pair parameterisation recommended for more than three criteria, with
    pair coefficients initialised to zero.
    """

    target_metric: str = "P@30"
    top_k: int = 100
    step: float = 0.1
    monotone_constraint: bool = False
    ridge: float = 1e-8
    two_additive: bool = False

    def __post_init__(self):
        parse_metric(self.target_metric)
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")
        if not 0.0 < self.step <= 0.5:
            raise ValueError(f"step must be in (0, 0.5], got {self.step!r}")
        if self.ridge < 0.0:
            raise ValueError(f"ridge must be >= 0, got {self.ridge!r}")


@dataclass(frozen=True)
class TrainingSample:
    """One feature vector with its interpolated desired fused score."""

    vector: CriterionVector
    target: float

    def __post_init__(self):
        if not math.isfinite(self.target):
            raise ValueError(f"target must be finite, got {self.target!r}")


def _compositions(total: int, parts: int):
    """Compositions of ``total`` into ``parts`` positive integers, lexicographic."""
    if parts == 1:
        yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _compositions(total - first, parts - 1):
            yield (first, *rest)


def generate_grid(criteria: CriterionSet, step: float) -> TuningGrid:
    """Step-quantised weight candidates summing to 1.

    For one or two criteria every positive composition of 1 is included
    (9 candidates at step 0.1 for two criteria).  For three or more, only
    candidates whose smallest weight equals the step survive, matching the
    fix-one-criterion-at-the-minimum tuning procedure (21 candidates at
    step 0.1 for three criteria).
    """
    n = criteria.n
    units = round(1.0 / step)
    if units < 1 or abs(units * step - 1.0) > GRID_TOL:
        raise ValueError(f"step {step!r} does not divide 1")
    if n > units:
        raise ValueError(
            f"step {step!r} is too large for {n} criteria (weights could not sum to 1)"
        )
    candidates = []
    for parts in _compositions(units, n):
        if n >= 3 and min(parts) != 1:
            continue
        candidates.append(tuple(k / units for k in parts))
    return TuningGrid(step=float(step), candidates=tuple(candidates))


def candidate_to_capacity(criteria: CriterionSet, weights) -> Capacity:
    """Additive completion of a grid candidate: subset values are weight sums."""
    return capacity_from_weights(criteria, weights)


@dataclass(frozen=True)
class TuneResult:
    best_weights: tuple[float, ...]
    best_capacity: Capacity
    per_candidate_scores: tuple[float, ...]
    best_score: float


def _metric_for_capacity(
    capacity: Capacity,
    groups: dict[str, list[CriterionVector]],
    judgments,
    metric: str,
) -> float:
    spec = AggregatorSpec(kind="choquet", capacity=capacity)
    rankings = [rank_query(vectors, spec) for vectors in groups.values()]
    report = build_report(rankings, judgments, [metric])
    return report.means[metric]


def tune_select(
    grid: TuningGrid,
    train: JudgedDataset,
    config: TrainingConfig,
    threads: int = 1,
) -> TuneResult:
    """Pick the grid candidate whose Choquet ranking maximises the metric.

    Every candidate is scored by the target metric averaged over the
    judged training queries.  Ties go to the lexicographically smallest
    weight vector; candidates are evaluated (possibly concurrently) and
    reduced in deterministic grid order, so thread count never changes
    the winner.
    """
    groups = train.by_query()
    if not groups:
        raise DegenerateTrainingError("training data contains no queries")
    judged = {q for (q, _d) in train.judgments}
    if not any(q in judged for q in groups):
        raise DegenerateTrainingError(
            "metric undefined: no training query has relevance judgments"
        )
    metric = parse_metric(config.target_metric)
    capacities = [candidate_to_capacity(train.criteria, w) for w in grid.candidates]

    def score_one(capacity: Capacity) -> float:
        return _metric_for_capacity(capacity, groups, train.judgments, metric)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scores = list(pool.map(score_one, capacities))
    else:
        scores = [score_one(c) for c in capacities]

    best_idx = 0
    for i in range(1, len(scores)):
        if scores[i] > scores[best_idx]:
            best_idx = i
    return TuneResult(
        best_weights=grid.candidates[best_idx],
        best_capacity=capacities[best_idx],
        per_candidate_scores=tuple(scores),
        best_score=scores[best_idx],
    )


@dataclass(frozen=True)
class TargetsResult:
    samples: tuple[TrainingSample, ...]
    skipped_queries: int


def build_targets(train: JudgedDataset, mu_star: Capacity, top_k: int) -> TargetsResult:
    """Interpolated training targets over each query's top-K documents.

    Documents are ranked under the initial capacity; within the top-K
    list every relevant document's target is the list's maximum fused
    score and every non-relevant document's target is the list's minimum,
    which pushes relevant documents above non-relevant ones while staying
    inside the observed score range.  Judged queries without any vectors
    are skipped and counted, not failed.
    """
    if top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    groups = train.by_query()
    spec = AggregatorSpec(kind="choquet", capacity=mu_star)
    by_doc = {(v.query_id, v.doc_id): v for v in train.vectors}
    samples: list[TrainingSample] = []
    for qid, vectors in groups.items():
        ranking = rank_query(vectors, spec)
        top = ranking.entries[:top_k]
        if not top:
            continue
        hi = max(e.score for e in top)
        lo = min(e.score for e in top)
        for entry in top:
            relevant = train.judgments.get((qid, entry.doc_id), 0) > 0
            samples.append(
                TrainingSample(
                    vector=by_doc[(qid, entry.doc_id)],
                    target=hi if relevant else lo,
                )
            )
    judged_queries = {q for (q, _d) in train.judgments}
    skipped = len([q for q in judged_queries if q not in groups])
    return TargetsResult(samples=tuple(samples), skipped_queries=skipped)


def _chain_design(samples, criteria: CriterionSet):
    """Design matrix over the 2^N - 2 proper-subset coordinates.

    Row j encodes the sorted-difference form of the Choquet integral of
    sample j: the increment at each level multiplies the coordinate of
    the coalition of criteria still active, and the smallest score (the
    full-set term, value pinned at 1) moves to the offset.
    """
    n = criteria.n
    full = criteria.full_mask
    columns = {mask: i for i, mask in enumerate(range(1, full))}
    rows = np.zeros((len(samples), len(columns)))
    offsets = np.zeros(len(samples))
    for j, sample in enumerate(samples):
        scores = sample.vector.scores
        if len(scores) != n:
            raise ValueError(
                f"sample ({sample.vector.query_id}, {sample.vector.doc_id}) "
                f"not aligned to the criterion set"
            )
        order = np.argsort(np.asarray(scores), kind="stable")
        remaining = full
        prev = scores[order[0]]
        offsets[j] = prev
        remaining &= ~(1 << int(order[0]))
        for idx in order[1:]:
            x = scores[idx]
            rows[j, columns[remaining]] = x - prev
            prev = x
            remaining &= ~(1 << int(idx))
    return rows, offsets, columns


def _project_monotone(values: np.ndarray, n: int, tol: float = 1e-9) -> np.ndarray:
    """Nearest-point style repair of monotonicity violations.

    Cyclic midpoint projections onto the covering-pair half-spaces run
    until the largest violation is below ``tol``; a final ascending-size
    cumulative-max sweep plus clipping to [0, 1] then makes the result
    exactly monotone with boundaries pinned.
    """
    out = values.copy()
    size = 1 << n
    full = size - 1
    max_sweeps = 100_000
    for _ in range(max_sweeps):
        worst = 0.0
        for mask in range(size):
            for i in range(n):
                bit = 1 << i
                if mask & bit:
                    continue
                sup = mask | bit
                gap = out[mask] - out[sup]
                if gap <= 0.0:
                    continue
                worst = max(worst, gap)
                if mask == 0:
                    out[sup] = 0.0
                elif sup == full:
                    out[mask] = 1.0
                else:
                    mid = 0.5 * (out[mask] + out[sup])
                    out[mask] = mid
                    out[sup] = mid
        if worst <= tol:
            break
    else:
        raise ProjectionError("monotonicity projection did not converge")
    # Exact repair: raise each coordinate to the max of its covered subsets,
    # smallest coalitions first, then clip into [0, 1].
    for mask in sorted(range(1, full), key=lambda m: m.bit_count()):
        for i in range(n):
            bit = 1 << i
            if mask & bit:
                sub = mask & ~bit
                if out[sub] > out[mask]:
                    out[mask] = out[sub]
    np.clip(out, 0.0, 1.0, out=out)
    out[0] = 0.0
    out[full] = 1.0
    return out


@dataclass(frozen=True)
class FitResult:
    """Fitted capacity with residual diagnostics.

    ``unidentified`` names coalitions whose design column is numerically
    zero: no sample ordering exercised them, so their values are purely
    the ridge pull toward the initialisation.
    """

    capacity: Capacity
    rmse: float
    unidentified: tuple[str, ...]


def least_squares_fit(
    samples,
    criteria: CriterionSet,
    config: TrainingConfig,
    init: Capacity | None = None,
) -> FitResult:
    """Solve the linear capacity-identification problem.

    Minimises the squared residual between the Choquet value and each
    sample's target over all free capacity coordinates, with ridge
    shrinkage toward ``init`` (or toward zero when no initialisation is
    given).  With ``ridge == 0`` a rank-deficient design raises instead
    of silently picking one of many minimisers.  The monotone-constraint
    mode post-processes the solution by iterated projection.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("least squares needs at least one sample")
    if config.two_additive:
        return _least_squares_fit_two_additive(samples, criteria, config, init)
    design, offsets, columns = _chain_design(samples, criteria)
    targets = np.array([s.target for s in samples]) - offsets

    col_norms = np.linalg.norm(design, axis=0)
    unidentified = tuple(
        criteria.subset_label(mask) for mask, i in columns.items() if col_norms[i] < 1e-12
    )

    if config.ridge == 0.0:
        solution, _residual, rank, _sv = np.linalg.lstsq(design, targets, rcond=None)
        if rank < design.shape[1]:
            raise RankDeficientError(
                f"design rank {rank} < {design.shape[1]} unknowns; "
                "set ridge > 0 or provide more score orderings"
            )
    else:
        center = np.zeros(design.shape[1])
        if init is not None:
            for mask, i in columns.items():
                center[i] = init.values[mask]
        gram = design.T @ design + config.ridge * np.eye(design.shape[1])
        rhs = design.T @ targets + config.ridge * center
        solution = np.linalg.solve(gram, rhs)

    full = criteria.full_mask
    values = np.zeros(1 << criteria.n)
    for mask, i in columns.items():
        values[mask] = solution[i]
    values[full] = 1.0
    if config.monotone_constraint:
        values = _project_monotone(values, criteria.n)
        refit = np.array([values[mask] for mask in columns])
        residuals = design @ refit - targets
    else:
        residuals = design @ solution - targets
    rmse = float(np.sqrt(np.mean(residuals**2)))
    return FitResult(
        capacity=Capacity(criteria, values),
        rmse=rmse,
        unidentified=unidentified,
    )


def _least_squares_fit_two_additive(samples, criteria, config, init) -> FitResult:
    """Least squares over singleton + pair coefficients.

    The subset values are linear in the 2-additive coefficients, so the
    chain design composes with that map; the full-set normalisation is a
    single equality constraint handled via its KKT system.
    """
    n = criteria.n
    design, offsets, columns = _chain_design(samples, criteria)
    targets = np.array([s.target for s in samples])

    params: list[int | tuple[int, int]] = list(range(n))
    for a in range(n):
        for b in range(a + 1, n):
            params.append((a, b))
    p = len(params)
    # Map subset coordinates to parameters: mu(A) = sum singles + sum pairs in A.
    expand = np.zeros((len(columns) + 1, p))  # last row is the full set
    masks = list(columns) + [criteria.full_mask]
    for r, mask in enumerate(masks):
        for c, param in enumerate(params):
            if isinstance(param, int):
                inside = bool(mask & (1 << param))
            else:
                pm = (1 << param[0]) | (1 << param[1])
                inside = (mask & pm) == pm
            if inside:
                expand[r, c] = 1.0
    # Rows act on proper subsets via the design, and on the full set via
    # the offset coefficient (smallest score times mu(full)).
    composed = design @ expand[:-1] + offsets[:, None] * expand[-1]

    center = np.zeros(p)
    if init is not None:
        for c, param in enumerate(params):
            if isinstance(param, int):
                center[c] = init.values[1 << param]
            else:
                pm = (1 << param[0]) | (1 << param[1])
                singles = init.values[1 << param[0]] + init.values[1 << param[1]]
                center[c] = init.values[pm] - singles
    constraint = expand[-1]
    gram = composed.T @ composed + config.ridge * np.eye(p)
    kkt = np.zeros((p + 1, p + 1))
    kkt[:p, :p] = gram
    kkt[:p, p] = constraint
    kkt[p, :p] = constraint
    rhs = np.concatenate([composed.T @ targets + config.ridge * center, [1.0]])
    try:
        solution = np.linalg.solve(kkt, rhs)[:p]
    except np.linalg.LinAlgError:
        raise RankDeficientError(
            "2-additive system is singular; increase ridge or supply more orderings"
        ) from None

    values = np.zeros(1 << n)
    for r, mask in enumerate(masks):
        values[mask] = expand[r] @ solution
    values[0] = 0.0
    values[criteria.full_mask] = 1.0
    if config.monotone_constraint:
        values = _project_monotone(values, n)
    cap = Capacity(criteria, values)
    refit = np.array([values[mask] for mask in columns])
    residuals = design @ refit + offsets - targets
    rmse = float(np.sqrt(np.mean(residuals**2)))
    col_norms = np.linalg.norm(design, axis=0)
    unidentified = tuple(
        criteria.subset_label(mask) for mask, i in columns.items() if col_norms[i] < 1e-12
    )
    return FitResult(capacity=cap, rmse=rmse, unidentified=unidentified)


@dataclass(frozen=True)
class TrainReport:
    """Everything the training pipeline learned, for printing and reuse."""

    grid: TuningGrid
    per_candidate_scores: tuple[float, ...]
    best_weights: tuple[float, ...]
    mu_star: Capacity
    mu_star_score: float
    mu_double_star: Capacity
    rmse: float
    unidentified: tuple[str, ...]
    sample_count: int
    skipped_queries: int
    shapley: dict[str, float]
    interactions: dict[tuple[str, str], float]


def train_pipeline(
    train: JudgedDataset,
    config: TrainingConfig,
    threads: int = 1,
) -> TrainReport:
    """Grid tuning, target interpolation, and least-squares identification.

    Returns the selected initial capacity, the fitted capacity, residual
    diagnostics, and the Shapley/interaction profile of the result.
    """
    if not any(grade > 0 for grade in train.judgments.values()):
        raise DegenerateTrainingError("no relevant documents in the training judgments")
    grid = generate_grid(train.criteria, config.step)
    tuned = tune_select(grid, train, config, threads=threads)
    targets = build_targets(train, tuned.best_capacity, config.top_k)
    if not targets.samples:
        raise DegenerateTrainingError("no training samples survived target interpolation")
    fit = least_squares_fit(targets.samples, train.criteria, config, init=tuned.best_capacity)
    return TrainReport(
        grid=grid,
        per_candidate_scores=tuned.per_candidate_scores,
        best_weights=tuned.best_weights,
        mu_star=tuned.best_capacity,
        mu_star_score=tuned.best_score,
        mu_double_star=fit.capacity,
        rmse=fit.rmse,
        unidentified=fit.unidentified,
        sample_count=len(targets.samples),
        skipped_queries=targets.skipped_queries,
        shapley=shapley_importance(fit.capacity),
        interactions=interaction_matrix(fit.capacity),
    )
