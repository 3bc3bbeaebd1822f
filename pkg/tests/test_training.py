"""Grid enumeration, tuning, target interpolation, and least-squares fitting."""

import itertools

import numpy as np
import pytest

from choquetrank import (
    AggregatorSpec,
    CriterionSet,
    CriterionVector,
    DegenerateTrainingError,
    JudgedDataset,
    RankDeficientError,
    TrainingConfig,
    TrainingSample,
    build_targets,
    candidate_to_capacity,
    capacity_from_weights,
    choquet_score,
    generate_grid,
    generate_synthetic,
    least_squares_fit,
    train_pipeline,
    tune_select,
    validate_capacity,
)

from conftest import random_monotone_capacity


def vectors_covering_all_orderings(criteria, per_ordering, rng):
    """Random vectors with every strict score ordering represented."""
    n = criteria.n
    out = []
    doc = 0
    for perm in itertools.permutations(range(n)):
        for _ in range(per_ordering):
            ascending = np.sort(rng.random(n))
            scores = np.empty(n)
            for level, crit_idx in enumerate(perm):
                scores[crit_idx] = ascending[level]
            out.append(CriterionVector("q1", f"d{doc:04d}", tuple(scores)))
            doc += 1
    return out


def samples_from_capacity(capacity, vectors):
    return [
        TrainingSample(vector=v, target=choquet_score(v, capacity)) for v in vectors
    ]


class TestGenerateGrid:
    def test_counts_for_two_and_three_criteria(self):
        two = generate_grid(CriterionSet(("a", "b")), 0.1)
        three = generate_grid(CriterionSet(("a", "b", "c")), 0.1)
        assert len(two.candidates) == 9
        assert len(three.candidates) == 21

    def test_single_criterion(self):
        grid = generate_grid(CriterionSet(("only",)), 0.1)
        assert grid.candidates == ((1.0,),)

    def test_candidate_invariants(self):
        grid = generate_grid(CriterionSet(("a", "b", "c")), 0.1)
        seen = set()
        for weights in grid.candidates:
            assert abs(sum(weights) - 1.0) <= 1e-9
            assert all(w >= 0.1 - 1e-12 for w in weights)
            assert min(weights) == pytest.approx(0.1, abs=1e-12)
            assert weights not in seen
            seen.add(weights)

    def test_two_criteria_enumerates_all_positive_compositions(self):
        grid = generate_grid(CriterionSet(("a", "b")), 0.1)
        assert grid.candidates[0] == pytest.approx((0.1, 0.9))
        assert grid.candidates[-1] == pytest.approx((0.9, 0.1))

    def test_lexicographic_and_deterministic(self):
        a = generate_grid(CriterionSet(("a", "b", "c")), 0.1)
        b = generate_grid(CriterionSet(("a", "b", "c")), 0.1)
        assert a == b
        assert list(a.candidates) == sorted(a.candidates)

    def test_exhaustive_cross_check_for_three_criteria(self):
        # 36 positive compositions of 10 into 3 parts, minus 15 with all
        # parts at least 2, leaves 21.
        grid = generate_grid(CriterionSet(("a", "b", "c")), 0.1)
        brute = [
            (i / 10, j / 10, (10 - i - j) / 10)
            for i in range(1, 9)
            for j in range(1, 10 - i)
            if min(i, j, 10 - i - j) == 1
        ]
        assert len(grid.candidates) == len(brute)

    def test_step_too_large(self):
        with pytest.raises(ValueError, match="too large"):
            generate_grid(CriterionSet(("a", "b", "c")), 0.5)

    def test_step_must_divide_one(self):
        with pytest.raises(ValueError, match="divide"):
            generate_grid(CriterionSet(("a", "b")), 0.3)

    def test_larger_step_two_criteria(self):
        grid = generate_grid(CriterionSet(("a", "b")), 0.5)
        assert grid.candidates == ((0.5, 0.5),)


class TestCandidateToCapacity:
    def test_additive_sums(self):
        cap = candidate_to_capacity(CriterionSet(("a", "b", "c")), (0.8, 0.1, 0.1))
        assert cap.subset_value(("a", "b")) == pytest.approx(0.9)
        assert cap.subset_value(("a", "c")) == pytest.approx(0.9)
        assert cap.subset_value(("b", "c")) == pytest.approx(0.2)

    def test_single_criterion(self):
        cap = candidate_to_capacity(CriterionSet(("a",)), (1.0,))
        assert cap.value(1) == 1.0

    def test_symmetric(self):
        cap = candidate_to_capacity(CriterionSet(("a", "b")), (0.5, 0.5))
        assert cap.subset_value(("a",)) == cap.subset_value(("b",)) == 0.5


def two_doc_dataset():
    """Relevance decided by criterion 1 alone: doc A relevant, doc B not."""
    crit = CriterionSet(("c1", "c2"))
    vectors = (
        CriterionVector("q1", "dA", (1.0, 0.0)),
        CriterionVector("q1", "dB", (0.0, 1.0)),
    )
    judgments = {("q1", "dA"): 1, ("q1", "dB"): 0}
    return JudgedDataset(criteria=crit, vectors=vectors, judgments=judgments)


class TestTuneSelect:
    def test_candidate_favouring_relevant_criterion_wins(self):
        dataset = two_doc_dataset()
        from choquetrank.training import TuningGrid

        grid = TuningGrid(step=0.1, candidates=((0.1, 0.9), (0.9, 0.1)))
        config = TrainingConfig(target_metric="P@1")
        result = tune_select(grid, dataset, config)
        assert result.best_weights == (0.9, 0.1)
        assert result.best_score == 1.0
        assert result.per_candidate_scores == (0.0, 1.0)

    def test_single_candidate(self):
        dataset = two_doc_dataset()
        from choquetrank.training import TuningGrid

        grid = TuningGrid(step=0.5, candidates=((0.5, 0.5),))
        result = tune_select(grid, dataset, TrainingConfig(target_metric="P@1"))
        assert result.best_weights == (0.5, 0.5)

    def test_tie_goes_to_lexicographically_smaller(self):
        crit = CriterionSet(("c1", "c2"))
        vectors = (
            CriterionVector("q1", "dA", (0.9, 0.9)),
            CriterionVector("q1", "dB", (0.1, 0.1)),
        )
        dataset = JudgedDataset(
            criteria=crit, vectors=vectors, judgments={("q1", "dA"): 1, ("q1", "dB"): 0}
        )
        grid = generate_grid(crit, 0.1)
        result = tune_select(grid, dataset, TrainingConfig(target_metric="P@1"))
        assert result.best_weights == (0.1, 0.9)

    def test_empty_dataset_rejected(self):
        crit = CriterionSet(("c1",))
        dataset = JudgedDataset(criteria=crit, vectors=(), judgments={})
        grid = generate_grid(crit, 0.1)
        with pytest.raises(DegenerateTrainingError, match="no queries"):
            tune_select(grid, dataset, TrainingConfig(target_metric="P@1"))

    def test_unjudged_data_rejected(self):
        crit = CriterionSet(("c1", "c2"))
        dataset = JudgedDataset(
            criteria=crit,
            vectors=(CriterionVector("q1", "dA", (0.5, 0.5)),),
            judgments={},
        )
        grid = generate_grid(crit, 0.1)
        with pytest.raises(DegenerateTrainingError, match="metric undefined"):
            tune_select(grid, dataset, TrainingConfig(target_metric="P@1"))

    def test_thread_count_does_not_change_result(self):
        dataset = generate_synthetic(
            n_queries=8, docs_per_query=30, n_criteria=2,
            truth=AggregatorSpec(kind="andMin"), noise=0.02,
            relevance_quantile=0.8, seed=5,
        )
        grid = generate_grid(dataset.criteria, 0.1)
        config = TrainingConfig(target_metric="P@5")
        serial = tune_select(grid, dataset, config, threads=1)
        parallel = tune_select(grid, dataset, config, threads=8)
        assert serial == parallel

    def test_rank_then_eval_reproduces_tuned_metric_exactly(self, tmp_path):
        # Writing a run file with the tuned capacity and evaluating it must
        # give bit-identical means: metrics depend only on ranking order,
        # which the 6-decimal score rounding never reshuffles.
        from choquetrank import build_report, parse_run_file, rank_query, write_run_file

        dataset = generate_synthetic(
            n_queries=8, docs_per_query=30, n_criteria=2,
            truth=AggregatorSpec(kind="andMin"), noise=0.02,
            relevance_quantile=0.8, seed=5,
        )
        grid = generate_grid(dataset.criteria, 0.1)
        config = TrainingConfig(target_metric="P@5")
        tuned = tune_select(grid, dataset, config)
        spec = AggregatorSpec(kind="choquet", capacity=tuned.best_capacity)
        rankings = [rank_query(v, spec) for v in dataset.by_query().values()]
        path = tmp_path / "mu_star.run"
        write_run_file(rankings, "t", path)
        replayed = build_report(parse_run_file(path), dataset.judgments, ["P@5"])
        assert replayed.means["P@5"] == tuned.best_score


class TestBuildTargets:
    def test_max_min_interpolation(self):
        crit = CriterionSet(("c1", "c2"))
        # Fused scores under the symmetric additive capacity: A .7, B .9, C .4
        vectors = (
            CriterionVector("q1", "A", (0.7, 0.7)),
            CriterionVector("q1", "B", (0.9, 0.9)),
            CriterionVector("q1", "C", (0.4, 0.4)),
        )
        judgments = {("q1", "A"): 1, ("q1", "B"): 0, ("q1", "C"): 1}
        dataset = JudgedDataset(criteria=crit, vectors=vectors, judgments=judgments)
        mu = capacity_from_weights(crit, (0.5, 0.5))
        result = build_targets(dataset, mu, top_k=3)
        targets = {s.vector.doc_id: s.target for s in result.samples}
        assert targets == pytest.approx({"A": 0.9, "B": 0.4, "C": 0.9})

    def test_all_relevant_keeps_list_maximum(self):
        crit = CriterionSet(("c1",))
        vectors = tuple(
            CriterionVector("q1", f"d{i}", (s,)) for i, s in enumerate((0.2, 0.8, 0.5))
        )
        judgments = {("q1", v.doc_id): 1 for v in vectors}
        dataset = JudgedDataset(criteria=crit, vectors=vectors, judgments=judgments)
        mu = capacity_from_weights(crit, (1.0,))
        result = build_targets(dataset, mu, top_k=3)
        assert all(s.target == pytest.approx(0.8) for s in result.samples)

    def test_single_relevant_document(self):
        crit = CriterionSet(("c1",))
        dataset = JudgedDataset(
            criteria=crit,
            vectors=(CriterionVector("q1", "d1", (0.6,)),),
            judgments={("q1", "d1"): 1},
        )
        mu = capacity_from_weights(crit, (1.0,))
        result = build_targets(dataset, mu, top_k=5)
        assert result.samples[0].target == pytest.approx(0.6)

    def test_top_k_truncates(self):
        crit = CriterionSet(("c1",))
        vectors = tuple(
            CriterionVector("q1", f"d{i}", (s,))
            for i, s in enumerate((0.9, 0.7, 0.5, 0.3))
        )
        judgments = {("q1", v.doc_id): 0 for v in vectors}
        judgments[("q1", "d0")] = 1
        dataset = JudgedDataset(criteria=crit, vectors=vectors, judgments=judgments)
        mu = capacity_from_weights(crit, (1.0,))
        result = build_targets(dataset, mu, top_k=2)
        assert len(result.samples) == 2
        assert {s.vector.doc_id for s in result.samples} == {"d0", "d1"}

    def test_judged_query_without_documents_is_counted(self):
        crit = CriterionSet(("c1",))
        dataset = JudgedDataset(
            criteria=crit,
            vectors=(CriterionVector("q1", "d1", (0.6,)),),
            judgments={("q1", "d1"): 1, ("q2", "dX"): 1},
        )
        mu = capacity_from_weights(crit, (1.0,))
        result = build_targets(dataset, mu, top_k=5)
        assert result.skipped_queries == 1
        assert len(result.samples) == 1


class TestLeastSquaresFit:
    def test_recovers_additive_capacity(self):
        rng = np.random.default_rng(21)
        crit = CriterionSet(("a", "b", "c"))
        truth = capacity_from_weights(crit, (0.5, 0.3, 0.2))
        vectors = vectors_covering_all_orderings(crit, 10, rng)
        samples = samples_from_capacity(truth, vectors)
        fit = least_squares_fit(samples, crit, TrainingConfig(ridge=0.0))
        np.testing.assert_allclose(fit.capacity.values, truth.values, atol=1e-6)
        assert fit.rmse <= 1e-9
        assert fit.unidentified == ()

    def test_min_function_recovery_beats_any_linear_model(self):
        rng = np.random.default_rng(22)
        crit = CriterionSet(("a", "b", "c"))
        vectors = vectors_covering_all_orderings(crit, 20, rng)
        samples = [
            TrainingSample(vector=v, target=min(v.scores)) for v in vectors
        ]
        fit = least_squares_fit(samples, crit, TrainingConfig(ridge=0.0))
        for mask, value in fit.capacity.proper_subset_items():
            assert abs(value) <= 1e-6, mask
        assert fit.rmse <= 1e-6

        # Brute force over the tuning grid plus an unconstrained linear fit:
        # no weighted sum approximates the min this well.
        X = np.array([v.scores for v in vectors])
        y = np.array([s.target for s in samples])
        best = np.inf
        for weights in generate_grid(crit, 0.1).candidates:
            best = min(best, np.sqrt(np.mean((X @ np.array(weights) - y) ** 2)))
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        best = min(best, float(np.sqrt(np.mean((X @ coef - y) ** 2))))
        assert best > 0.05

    def test_consistency_random_monotone_capacity(self):
        rng = np.random.default_rng(24)
        crit = CriterionSet(("a", "b", "c"))
        for _ in range(5):
            truth = random_monotone_capacity(rng, crit.names)
            vectors = vectors_covering_all_orderings(crit, 40, rng)
            samples = samples_from_capacity(truth, vectors)
            fit = least_squares_fit(samples, crit, TrainingConfig(ridge=0.0))
            np.testing.assert_allclose(fit.capacity.values, truth.values, atol=1e-6)

    def test_empty_samples_rejected(self):
        with pytest.raises(ValueError, match="at least one sample"):
            least_squares_fit([], CriterionSet(("a", "b")), TrainingConfig())

    def test_rank_deficiency_without_ridge_is_error(self):
        crit = CriterionSet(("a", "b"))
        # Every vector has a < b, so the coordinate for {a} never appears.
        vectors = [
            CriterionVector("q1", f"d{i}", (lo, hi))
            for i, (lo, hi) in enumerate([(0.1, 0.9), (0.2, 0.7), (0.3, 0.8), (0.4, 0.6)])
        ]
        samples = [TrainingSample(vector=v, target=v.scores[1]) for v in vectors]
        with pytest.raises(RankDeficientError, match="rank"):
            least_squares_fit(samples, crit, TrainingConfig(ridge=0.0))

    def test_ridge_holds_unidentified_coordinates_at_init(self):
        crit = CriterionSet(("a", "b"))
        vectors = [
            CriterionVector("q1", f"d{i}", (lo, hi))
            for i, (lo, hi) in enumerate([(0.1, 0.9), (0.2, 0.7), (0.3, 0.8), (0.4, 0.6)])
        ]
        samples = [TrainingSample(vector=v, target=v.scores[1]) for v in vectors]
        init = capacity_from_weights(crit, (0.3, 0.7))
        fit = least_squares_fit(samples, crit, TrainingConfig(ridge=1e-8), init=init)
        assert fit.unidentified == ("a",)
        assert fit.capacity.subset_value(("a",)) == pytest.approx(0.3, abs=1e-6)
        # The identified coordinate explains max = b exactly: mu({b}) = 1.
        assert fit.capacity.subset_value(("b",)) == pytest.approx(1.0, abs=1e-4)

    def test_residual_orthogonal_to_design_columns(self):
        # Normal-equations check against an independently built design.
        rng = np.random.default_rng(26)
        crit = CriterionSet(("a", "b"))
        vectors = [
            CriterionVector("q1", f"d{i}", tuple(rng.random(2))) for i in range(30)
        ]
        targets = rng.random(30)
        samples = [
            TrainingSample(vector=v, target=float(t)) for v, t in zip(vectors, targets)
        ]
        fit = least_squares_fit(samples, crit, TrainingConfig(ridge=0.0))

        design = np.zeros((30, 2))  # columns: mu({a}), mu({b})
        offset = np.zeros(30)
        for r, v in enumerate(vectors):
            lo, hi = sorted(v.scores)
            offset[r] = lo
            top = 0 if v.scores[0] >= v.scores[1] else 1
            design[r, top] = hi - lo
        residual = (
            design @ np.array([fit.capacity.value(0b01), fit.capacity.value(0b10)])
            + offset
            - targets
        )
        assert np.all(np.abs(design.T @ residual) <= 1e-8)

    def test_refit_on_own_predictions_is_fixed_point(self):
        rng = np.random.default_rng(28)
        crit = CriterionSet(("a", "b", "c"))
        vectors = vectors_covering_all_orderings(crit, 15, rng)
        targets = rng.random(len(vectors))
        samples = [
            TrainingSample(vector=v, target=float(t)) for v, t in zip(vectors, targets)
        ]
        first = least_squares_fit(samples, crit, TrainingConfig(ridge=0.0))
        replay = [
            TrainingSample(vector=v, target=choquet_score(v, first.capacity))
            for v in vectors
        ]
        second = least_squares_fit(replay, crit, TrainingConfig(ridge=0.0))
        np.testing.assert_allclose(
            second.capacity.values, first.capacity.values, atol=1e-9
        )

    def test_monotone_constraint_yields_valid_fuzzy_measure(self):
        rng = np.random.default_rng(30)
        crit = CriterionSet(("a", "b"))
        vectors = [
            CriterionVector("q1", f"d{i}", tuple(rng.random(2))) for i in range(60)
        ]
        # Targets that push the singleton coordinates negative.
        samples = [
            TrainingSample(vector=v, target=max(0.0, min(v.scores) - 0.3))
            for v in vectors
        ]
        unconstrained = least_squares_fit(samples, crit, TrainingConfig(ridge=0.0))
        assert not unconstrained.capacity.monotone
        constrained = least_squares_fit(
            samples, crit, TrainingConfig(ridge=0.0, monotone_constraint=True)
        )
        assert constrained.capacity.monotone
        assert validate_capacity(constrained.capacity, require_monotone=True).ok

    def test_boundaries_always_exact(self):
        rng = np.random.default_rng(32)
        crit = CriterionSet(("a", "b"))
        vectors = [
            CriterionVector("q1", f"d{i}", tuple(rng.random(2))) for i in range(20)
        ]
        samples = [TrainingSample(vector=v, target=0.4) for v in vectors]
        fit = least_squares_fit(samples, crit, TrainingConfig())
        assert fit.capacity.value(0) == 0.0
        assert fit.capacity.value(crit.full_mask) == 1.0


class TestTwoAdditiveFit:
    def test_recovers_two_additive_truth(self):
        from choquetrank import TwoAdditiveCapacity, expand_two_additive

        rng = np.random.default_rng(34)
        crit = CriterionSet(("a", "b", "c", "d"))
        truth = expand_two_additive(
            TwoAdditiveCapacity(
                crit,
                (0.3, 0.25, 0.2, 0.15),
                {("a", "b"): 0.1, ("c", "d"): -0.1, ("a", "c"): 0.1},
            )
        )
        vectors = vectors_covering_all_orderings(crit, 12, rng)
        samples = samples_from_capacity(truth, vectors)
        fit = least_squares_fit(
            samples, crit, TrainingConfig(ridge=0.0, two_additive=True)
        )
        np.testing.assert_allclose(fit.capacity.values, truth.values, atol=1e-6)
        assert fit.rmse <= 1e-8
        assert fit.capacity.value(crit.full_mask) == 1.0

    def test_two_additive_cannot_express_third_order(self):
        # The three-way minimum needs a third-order term; the 2-additive
        # fit keeps a residual while the full fit does not.
        rng = np.random.default_rng(36)
        crit = CriterionSet(("a", "b", "c"))
        vectors = vectors_covering_all_orderings(crit, 30, rng)
        samples = [TrainingSample(vector=v, target=min(v.scores)) for v in vectors]
        restricted = least_squares_fit(
            samples, crit, TrainingConfig(ridge=0.0, two_additive=True)
        )
        full = least_squares_fit(samples, crit, TrainingConfig(ridge=0.0))
        assert full.rmse <= 1e-9
        assert restricted.rmse > 0.01


class TestTrainPipeline:
    def test_min_truth_end_to_end(self):
        dataset = generate_synthetic(
            n_queries=12, docs_per_query=60, n_criteria=2,
            truth=AggregatorSpec(kind="andMin"), noise=0.02,
            relevance_quantile=0.9, seed=3,
        )
        config = TrainingConfig(target_metric="P@5", top_k=60, step=0.1)
        report = train_pipeline(dataset, config)
        assert len(report.grid.candidates) == 9
        assert len(report.per_candidate_scores) == 9
        assert report.mu_star_score == max(report.per_candidate_scores)
        assert report.sample_count == 12 * 60
        assert report.mu_double_star.value(0) == 0.0
        assert set(report.shapley) == {"c1", "c2"}
        assert ("c1", "c2") in report.interactions

    def test_weighted_sum_truth_keeps_interactions_small(self):
        dataset = generate_synthetic(
            n_queries=20, docs_per_query=60, n_criteria=2,
            truth=AggregatorSpec(kind="weightedSum", weights=(0.5, 0.5)),
            noise=0.02, relevance_quantile=0.5, seed=1,
        )
        config = TrainingConfig(target_metric="P@5", top_k=60)
        report = train_pipeline(dataset, config)
        assert abs(report.interactions[("c1", "c2")]) <= 0.1

    def test_no_relevant_documents_is_degenerate(self):
        crit = CriterionSet(("c1", "c2"))
        vectors = (CriterionVector("q1", "d1", (0.5, 0.5)),)
        dataset = JudgedDataset(
            criteria=crit, vectors=vectors, judgments={("q1", "d1"): 0}
        )
        with pytest.raises(DegenerateTrainingError, match="no relevant"):
            train_pipeline(dataset, TrainingConfig(target_metric="P@1"))

    def test_monotone_mode_produces_fuzzy_measure(self):
        dataset = generate_synthetic(
            n_queries=10, docs_per_query=40, n_criteria=2,
            truth=AggregatorSpec(kind="andMin"), noise=0.02,
            relevance_quantile=0.85, seed=9,
        )
        config = TrainingConfig(
            target_metric="P@5", top_k=40, monotone_constraint=True
        )
        report = train_pipeline(dataset, config)
        assert report.mu_double_star.monotone
        assert validate_capacity(report.mu_double_star, require_monotone=True).ok

    def test_thread_count_invariant(self):
        dataset = generate_synthetic(
            n_queries=10, docs_per_query=40, n_criteria=3,
            truth=AggregatorSpec(kind="andMin"), noise=0.02,
            relevance_quantile=0.85, seed=15,
        )
        config = TrainingConfig(target_metric="P@10", top_k=40)
        one = train_pipeline(dataset, config, threads=1)
        many = train_pipeline(dataset, config, threads=8)
        assert one.best_weights == many.best_weights
        np.testing.assert_array_equal(
            one.mu_double_star.values, many.mu_double_star.values
        )


class TestTrainingConfig:
    def test_validation(self):
        with pytest.raises(Exception):
            TrainingConfig(target_metric="P@0")
        with pytest.raises(ValueError, match="top_k"):
            TrainingConfig(top_k=0)
        with pytest.raises(ValueError, match="step"):
            TrainingConfig(step=0.6)
        with pytest.raises(ValueError, match="ridge"):
            TrainingConfig(ridge=-1.0)

    def test_sample_target_must_be_finite(self):
        v = CriterionVector("q", "d", (0.5,))
        with pytest.raises(ValueError, match="finite"):
            TrainingSample(vector=v, target=float("inf"))
