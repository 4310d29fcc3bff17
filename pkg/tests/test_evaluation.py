import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from schedperf.checkpoint import Checkpoint
from schedperf.dataset import generate_dataset, read_dataset
from schedperf.errors import DataFormatError
from schedperf.evaluation import (
    evaluate,
    pairwise_ranking,
    percent_errors,
    predict_records,
    r_squared,
)
from schedperf.training import TrainConfig, train


class TestPercentErrors:
    def test_perfect(self):
        assert percent_errors(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == (0.0, 0.0)

    def test_single_sample(self):
        mean, mx = percent_errors(np.array([110.0]), np.array([100.0]))
        assert mean == pytest.approx(10.0)
        assert mx == pytest.approx(10.0)

    def test_mean_and_max(self):
        mean, mx = percent_errors(np.array([110.0, 100.0]), np.array([100.0, 50.0]))
        assert mean == pytest.approx(55.0)
        assert mx == pytest.approx(100.0)

    def test_rejects_length_mismatch(self):
        with pytest.raises(DataFormatError):
            percent_errors(np.array([1.0]), np.array([1.0, 2.0]))

    def test_order_invariant(self):
        rng = np.random.default_rng(0)
        preds, truths = rng.uniform(1, 10, 20), rng.uniform(1, 10, 20)
        perm = rng.permutation(20)
        assert percent_errors(preds, truths) == percent_errors(preds[perm], truths[perm])


class TestRSquared:
    def test_perfect_is_one(self):
        assert r_squared(np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0, 3.0])) == 1.0

    def test_predicting_mean_is_zero(self):
        truths = np.array([1.0, 2.0, 3.0])
        assert r_squared(np.full(3, 2.0), truths) == pytest.approx(0.0)

    def test_worked_example(self):
        assert r_squared(np.array([1.0, 2.0, 4.0]), np.array([1.0, 2.0, 3.0])) == pytest.approx(0.5)

    def test_degenerate_truths_rejected(self):
        with pytest.raises(DataFormatError):
            r_squared(np.array([1.0, 2.0]), np.array([3.0, 3.0]))


class TestPairwiseRanking:
    def test_single_correct_pair(self):
        report = pairwise_ranking({"g": [(3.0, 1.0), (4.0, 2.0)]})
        assert report.groups[0].n_pairs == 1
        assert report.groups[0].n_correct == 1
        assert report.average_pct_correct == 100.0

    def test_full_inversion(self):
        report = pairwise_ranking({"g": [(3.0, 1.0), (2.0, 2.0), (1.0, 3.0)]})
        assert report.groups[0].n_correct == 0
        assert report.groups[0].n_pairs == 3

    def test_five_of_six(self):
        pairs = [(1.0, 1.0), (2.0, 2.0), (4.0, 3.0), (3.0, 4.0)]
        report = pairwise_ranking({"g": pairs})
        assert report.groups[0].n_pairs == 6
        assert report.groups[0].n_correct == 5
        assert report.average_pct_correct == pytest.approx(100 * 5 / 6)

    def test_truth_ties_discarded(self):
        report = pairwise_ranking({"g": [(1.0, 2.0), (3.0, 2.0), (2.0, 5.0)]})
        assert report.groups[0].n_pairs == 2

    def test_prediction_ties_incorrect(self):
        report = pairwise_ranking({"g": [(1.0, 1.0), (1.0, 2.0)]})
        assert report.groups[0].n_correct == 0
        assert report.groups[0].n_pairs == 1

    def test_small_groups_skipped(self):
        report = pairwise_ranking({"a": [(1.0, 1.0)], "b": [(1.0, 1.0), (2.0, 2.0)]})
        assert [g.group_id for g in report.groups] == ["b"]

    def test_all_groups_small_is_error(self):
        with pytest.raises(DataFormatError):
            pairwise_ranking({"a": [(1.0, 1.0)]})

    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_invariant_under_monotone_transforms(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 12))
        preds = rng.uniform(0.1, 100.0, size=n)
        truths = rng.uniform(0.1, 100.0, size=n)
        base = pairwise_ranking({"g": list(zip(preds, truths))})
        for transform in (lambda x: 3.0 * x + 7.0, np.log, lambda x: x**3):
            warped = pairwise_ranking({"g": list(zip(transform(preds), truths))})
            assert warped.groups[0].n_correct == base.groups[0].n_correct
            assert warped.groups[0].n_pairs == base.groups[0].n_pairs


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "eval.jsonl"
    generate_dataset(str(path), num_pipelines=6, schedules_per_pipeline=5, seed=21)
    _, records = read_dataset(str(path))
    result = train(records, TrainConfig(epochs=2, batch_size=8, seed=0))
    ckpt = Checkpoint(
        kind="gcn", params=result.params, norm_stats=result.norm_stats, config_hash="t"
    )
    return ckpt, records


class TestEvaluate:
    def test_smoke_on_train_split(self, trained):
        ckpt, records = trained
        report = evaluate(ckpt, records, split="train")
        assert report.metrics.n_samples == sum(r.split_tag == "train" for r in records)
        assert report.metrics.mean_pct_error <= report.metrics.max_pct_error
        assert report.metrics.r_squared <= 1.0

    def test_report_serialization_deterministic(self, trained):
        ckpt, records = trained
        a = evaluate(ckpt, records, split="eval").to_json()
        b = evaluate(ckpt, records, split="eval").to_json()
        assert a == b
        payload = json.loads(a)
        assert payload["format_version"] == "1"
        assert {"metrics", "ranking", "split"} <= set(payload)

    def test_single_pipeline_split(self, trained):
        ckpt, records = trained
        eval_id = next(r.pipeline_id for r in records if r.split_tag == "eval")
        subset = [r for r in records if r.pipeline_id == eval_id]
        report = evaluate(ckpt, subset, split="eval")
        assert len(report.ranking.groups) == 1

    def test_baseline_comparison_table(self, trained, tmp_path):
        ckpt, records = trained
        baseline_result = train(
            records, TrainConfig(epochs=1, batch_size=8, seed=0, model="baseline")
        )
        baseline = Checkpoint(
            kind="baseline", params=baseline_result.params, norm_stats=None, config_hash="t"
        )
        report = evaluate(ckpt, records, split="eval", baseline=baseline)
        assert report.baseline_metrics is not None
        assert report.baseline_ranking is not None

    def test_predictions_positive(self, trained):
        ckpt, records = trained
        assert np.all(predict_records(ckpt, records[:16]) > 0)

    def test_missing_split_rejected(self, trained):
        ckpt, records = trained
        only_train = [r for r in records if r.split_tag == "train"]
        with pytest.raises(DataFormatError):
            evaluate(ckpt, only_train, split="eval")
