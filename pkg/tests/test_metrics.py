"""Metric tests: frozen scalar examples, algebraic identities, Monte-Carlo oracles."""

import math

import numpy as np
import pytest

from probsaint.errors import ConfigurationError, ShapeError
from probsaint.metrics import (
    MetricReport,
    bucketed_report,
    buckets_to_csv,
    confidence_scores,
    coverage,
    evaluate_predictions,
    interval_plot_csv,
    knn_baseline,
    mae_metric,
    mape_metric,
    nll_metric,
)
from probsaint.model import GaussianPrediction
from probsaint.pipeline import EncodedBatch


def preds_from(mu, sigma):
    out = []
    for m, s in zip(mu, sigma):
        c = 1.0 - s / m if m > 0 else None
        out.append(GaussianPrediction(float(m), float(s), c, excluded=m <= 0))
    return out


class TestNll:
    def test_perfect_unit_variance_is_zero(self):
        assert nll_metric([5.0, 7.0], [5.0, 7.0], [1.0, 1.0]) == 0.0

    def test_scalar_example(self):
        # residual 2, variance 4: 0.5*(ln 4 + 4/4) = 0.5*ln4 + 0.5
        expected = 0.5 * (math.log(4.0) + 1.0)
        assert abs(expected - 1.1931471805599453) < 1e-15
        assert abs(nll_metric([2.0], [0.0], [4.0]) - expected) < 1e-15

    def test_clamp_path(self):
        # sigma^2 = 0 clamps to eps: 0.5*ln(1e-6)
        expected = 0.5 * math.log(1e-6)
        assert abs(expected - (-6.907755278982137)) < 1e-12
        assert abs(nll_metric([3.0], [3.0], [0.0], eps=1e-6) - expected) < 1e-15

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            nll_metric([1.0], [1.0, 2.0], [1.0])

    def test_minimized_at_squared_residual(self):
        """For fixed residual r, the per-sample loss over sigma^2 >= eps is
        minimized at sigma^2 = max(r^2, eps): verified by grid scan."""
        eps = 1e-6
        for r in (0.0, 0.3, 2.5):
            grid = np.concatenate([np.geomspace(eps, 100.0, 4000), [max(r * r, eps)]])
            losses = 0.5 * (np.log(np.maximum(grid, eps)) + r**2 / np.maximum(grid, eps))
            best = grid[np.argmin(losses)]
            assert abs(best - max(r * r, eps)) <= max(r * r, eps) * 0.01 + 1e-12


class TestPointMetrics:
    def test_perfect_prediction(self):
        assert mae_metric([5.0], [5.0]) == 0.0
        assert mape_metric([5.0], [5.0]) == 0.0

    def test_simple_arithmetic(self):
        assert mae_metric([100.0], [90.0]) == 10.0
        assert abs(mape_metric([100.0], [90.0]) - 0.10) < 1e-15

    def test_mape_blowup_at_zero_target(self):
        assert mape_metric([0.0], [1.0], eps=1e-8) == 1e8

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        y, mu = rng.uniform(1, 10, 50), rng.uniform(1, 10, 50)
        perm = rng.permutation(50)
        assert mae_metric(y, mu) == mae_metric(y[perm], mu[perm])
        assert mape_metric(y, mu) == mape_metric(y[perm], mu[perm])
        s2 = rng.uniform(0.5, 2.0, 50)
        assert abs(nll_metric(y, mu, s2) - nll_metric(y[perm], mu[perm], s2[perm])) < 1e-12


class TestConfidence:
    def test_zero_sigma_full_confidence(self):
        c, excluded = confidence_scores(preds_from([100.0], [0.0]))
        assert c[0] == 1.0 and not excluded[0]

    def test_direct_arithmetic(self):
        c, _ = confidence_scores(preds_from([20000.0], [1000.0]))
        assert abs(c[0] - 0.95) < 1e-12

    def test_negative_mu_excluded(self):
        c, excluded = confidence_scores(preds_from([-5.0], [1.0]))
        assert excluded[0] and np.isnan(c[0])


class TestBuckets:
    def test_single_bucket_when_all_equal(self):
        preds = preds_from([100.0] * 5, [10.0] * 5)
        buckets = bucketed_report([100.0] * 5, preds)
        populated = [b for b in buckets if b.n]
        assert len(populated) == 1 and populated[0].n == 5

    def test_half_open_convention(self):
        preds = preds_from([100.0], [5.0])  # C = 0.95
        buckets = bucketed_report([100.0], preds, bucket_edges=[0.9, 0.95, 1.0])
        assert buckets[0].n == 0 and buckets[1].n == 1

    def test_weighted_recombination_matches_overall_mape(self):
        rng = np.random.default_rng(4)
        y = rng.uniform(5000, 30000, 400)
        mu = y * rng.uniform(0.9, 1.1, 400)
        sigma = rng.uniform(100, 4000, 400)
        preds = preds_from(mu, sigma)
        buckets = bucketed_report(y, preds)
        total = sum(b.n for b in buckets)
        assert total == 400
        recombined = sum(b.n * b.mape for b in buckets if b.n) / total
        assert abs(recombined - mape_metric(y, mu)) < 1e-9

    def test_empty_bucket_reported_with_null_mape(self):
        preds = preds_from([100.0], [5.0])
        buckets = bucketed_report([100.0], preds, bucket_edges=[0.0, 0.5, 0.9, 1.0])
        assert buckets[0].n == 0 and buckets[0].mape is None
        assert "confidence_lo" in buckets_to_csv(buckets).splitlines()[0]

    def test_edges_must_increase(self):
        with pytest.raises(ConfigurationError):
            bucketed_report([1.0], preds_from([1.0], [0.1]), bucket_edges=[0.5, 0.5])


class TestCoverage:
    def test_perfect_fit(self):
        preds = preds_from([10.0, 20.0], [1.0, 1.0])
        assert coverage([10.0, 20.0], preds, k=0.001) == 1.0

    def test_gaussian_monte_carlo(self):
        """Exact normal data: coverage(1) approaches 0.6827."""
        rng = np.random.default_rng(8)
        n = 100_000
        mu = rng.uniform(100, 200, n)
        sigma = rng.uniform(5, 20, n)
        y = rng.normal(mu, sigma)
        preds = preds_from(mu, sigma)
        assert abs(coverage(y, preds, 1.0) - 0.6827) < 0.02
        assert abs(coverage(y, preds, 2.0) - 0.9545) < 0.01

    def test_large_k_limit(self):
        rng = np.random.default_rng(9)
        y = rng.uniform(10, 20, 100)
        preds = preds_from(rng.uniform(10, 20, 100), rng.uniform(0.1, 1.0, 100))
        assert coverage(y, preds, 1e9) == 1.0


def batch_from_arrays(num, cats, target):
    m = len(target)
    return EncodedBatch(
        cat_indices=np.asarray(cats, dtype=np.int64).reshape(m, -1),
        num_values=np.asarray(num, dtype=np.float64).reshape(m, -1),
        target=np.asarray(target, dtype=np.float64),
        target_raw=np.asarray(target, dtype=np.float64),
        sale_dates=[None] * m,
        cat_columns=["c"],
        num_columns=["x"],
        source_indices=np.arange(m),
    )


class TestKnn:
    def test_exact_self_match(self):
        train = batch_from_arrays([[0.0], [1.0], [2.0]], [[1], [1], [2]], [10.0, 20.0, 30.0])
        test = batch_from_arrays([[1.0]], [[1]], [0.0])
        assert knn_baseline(train, test, k=1)[0] == 20.0

    def test_k_equals_train_size_gives_global_mean(self):
        train = batch_from_arrays([[0.0], [1.0], [2.0]], [[1], [1], [2]], [10.0, 20.0, 30.0])
        test = batch_from_arrays([[5.0]], [[1]], [0.0])
        assert knn_baseline(train, test, k=3)[0] == 20.0

    def test_hand_computed_two_neighbors(self):
        # 1-D training points 0,1,2,3,10 with targets 0,10,20,30,100
        train = batch_from_arrays(
            [[0.0], [1.0], [2.0], [3.0], [10.0]], [[1]] * 5, [0.0, 10.0, 20.0, 30.0, 100.0]
        )
        test = batch_from_arrays([[1.2]], [[1]], [0.0])
        # nearest two are x=1 (d=0.04) and x=2 (d=0.64): mean target 15
        assert knn_baseline(train, test, k=2)[0] == 15.0

    def test_categorical_mismatch_penalty(self):
        train = batch_from_arrays([[0.0], [0.5]], [[1], [2]], [10.0, 99.0])
        test = batch_from_arrays([[0.0]], [[1]], [0.0])
        # same-category neighbor wins despite the numeric tie-break
        assert knn_baseline(train, test, k=1)[0] == 10.0

    def test_k_too_large_rejected(self):
        train = batch_from_arrays([[0.0]], [[1]], [10.0])
        with pytest.raises(ConfigurationError):
            knn_baseline(train, train, k=2)


class TestReport:
    def test_round_trip(self):
        rng = np.random.default_rng(2)
        y = rng.uniform(5000, 30000, 100)
        preds = preds_from(y * rng.uniform(0.95, 1.05, 100), rng.uniform(100, 2000, 100))
        report = evaluate_predictions(y, preds)
        back = MetricReport.from_json(report.to_json())
        assert back == report

    def test_interval_csv_sorted_descending(self):
        y = [10.0, 30.0, 20.0]
        preds = preds_from([11.0, 29.0, 21.0], [1.0, 1.0, 1.0])
        lines = interval_plot_csv(y, preds).splitlines()
        ys = [float(l.split(",")[1]) for l in lines[1:]]
        assert ys == sorted(ys, reverse=True)

    def test_bucket_counts_account_for_exclusions(self):
        y = [100.0, 50.0, 80.0]
        preds = preds_from([100.0, -5.0, 80.0], [5.0, 1.0, 4.0])
        report = evaluate_predictions(y, preds)
        assert report.n == 3 and report.n_excluded == 1
        assert sum(b.n for b in report.buckets) == report.n - report.n_excluded
