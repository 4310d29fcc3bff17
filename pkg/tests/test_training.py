import numpy as np
import pytest

from schedperf.dataset import generate_dataset, read_dataset
from schedperf.errors import ConfigError, DataFormatError
from schedperf.model import init_model_params
from schedperf.training import (
    AdagradState,
    TrainConfig,
    adagrad_step,
    compute_loss,
    train,
)


class TestComputeLoss:
    def test_perfect_prediction_gives_zero_loss(self):
        terms = compute_loss(10.0, np.full(10, 10.0), best_runtime=5.0)
        assert terms.rel_error == 0.0
        assert terms.value == 0.0

    def test_best_schedule_has_unit_quality_weight(self):
        measurements = np.array([4.0, 4.0, 4.0])
        terms = compute_loss(5.0, measurements, best_runtime=4.0)
        assert terms.quality_weight == pytest.approx(1.0)

    def test_worked_example(self):
        # constant measurements of 10, prediction 12, pipeline best 5
        terms = compute_loss(12.0, np.full(10, 10.0), best_runtime=5.0, beta_epsilon=1e-3)
        assert terms.rel_error == pytest.approx(0.2)
        assert terms.quality_weight == pytest.approx(0.5)
        assert terms.precision_weight == pytest.approx(100.0)
        assert terms.value == pytest.approx(10.0)

    def test_literal_variant(self):
        terms = compute_loss(12.0, np.full(4, 10.0), best_runtime=10.0, xi_literal=True)
        assert terms.rel_error == pytest.approx(1.2)

    def test_rejects_nonpositive_measurements(self):
        with pytest.raises(DataFormatError):
            compute_loss(1.0, np.array([1.0, -2.0]), best_runtime=1.0)

    def test_quality_weight_ordering(self):
        # equal rel error and equal measurement std: the faster schedule weighs more
        rng = np.random.default_rng(0)
        for _ in range(200):
            fast_mean = float(rng.uniform(1.0, 10.0))
            slow_mean = fast_mean * float(rng.uniform(1.5, 4.0))
            spread = float(rng.uniform(0.05, 0.2))
            fast = np.array([fast_mean - spread, fast_mean + spread])
            slow = np.array([slow_mean - spread, slow_mean + spread])
            rel = float(rng.uniform(0.05, 0.5))
            best = fast_mean
            lf = compute_loss(fast_mean * (1 + rel), fast, best)
            ls = compute_loss(slow_mean * (1 + rel), slow, best)
            assert lf.rel_error == pytest.approx(ls.rel_error)
            assert lf.precision_weight == pytest.approx(ls.precision_weight)
            assert lf.value > ls.value

    def test_precision_weight_ordering(self):
        # equal rel error and quality: noisier measurements weigh less
        rng = np.random.default_rng(1)
        for _ in range(200):
            mean = float(rng.uniform(1.0, 20.0))
            lo = float(rng.uniform(0.01, 0.1)) * mean
            hi = lo * float(rng.uniform(1.5, 5.0))
            tight = np.array([mean - lo, mean + lo])
            loose = np.array([mean - hi, mean + hi])
            pred = mean * 1.3
            lt = compute_loss(pred, tight, best_runtime=mean)
            ll = compute_loss(pred, loose, best_runtime=mean)
            assert lt.value > ll.value


class TestAdagrad:
    def test_zero_gradient_zero_decay_is_noop(self):
        params = init_model_params(0)
        before = {n: a.copy() for n, a, _ in params.named_tensors()}
        grads = {n: np.zeros_like(a) for n, a, _ in params.named_tensors(trainable_only=True)}
        adagrad_step(params, grads, AdagradState(), TrainConfig(weight_decay=0.0))
        for name, arr, _ in params.named_tensors():
            np.testing.assert_array_equal(arr, before[name])

    def test_first_step_size_is_learning_rate(self):
        params = init_model_params(0)
        before = params.w_out.copy()
        grads = {n: np.ones_like(a) for n, a, _ in params.named_tensors(trainable_only=True)}
        cfg = TrainConfig(learning_rate=0.0075, weight_decay=0.0)
        adagrad_step(params, grads, AdagradState(), cfg)
        np.testing.assert_allclose(before - params.w_out, 0.0075, rtol=1e-9)

    def test_accumulators_monotone(self):
        params = init_model_params(0)
        state = AdagradState()
        rng = np.random.default_rng(2)
        prev = None
        for _ in range(5):
            grads = {
                n: rng.normal(size=a.shape)
                for n, a, _ in params.named_tensors(trainable_only=True)
            }
            adagrad_step(params, grads, state, TrainConfig())
            total = sum(float(a.sum()) for a in state.accumulators.values())
            if prev is not None:
                assert total >= prev
            prev = total

    def test_weight_decay_only_touches_weights(self):
        params = init_model_params(0)
        state = AdagradState()
        grads = {n: np.zeros_like(a) for n, a, _ in params.named_tensors(trainable_only=True)}
        biases_before = params.b_inv.copy()
        bn_before = params.convs[0].bn_gamma.copy()
        weights_before = params.w_inv.copy()
        adagrad_step(params, grads, state, TrainConfig(weight_decay=0.1))
        np.testing.assert_array_equal(params.b_inv, biases_before)
        np.testing.assert_array_equal(params.convs[0].bn_gamma, bn_before)
        assert np.any(params.w_inv != weights_before)


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "tiny.jsonl"
    generate_dataset(str(path), num_pipelines=6, schedules_per_pipeline=4, seed=5)
    _, records = read_dataset(str(path))
    return records


class TestTrain:
    def test_zero_learning_rate_leaves_parameters(self, tiny_dataset):
        cfg = TrainConfig(learning_rate=0.0, weight_decay=0.0, epochs=2, batch_size=4, seed=3)
        result = train(tiny_dataset, cfg)
        fresh = init_model_params(3)
        for (name, arr, _), (_, arr0, _) in zip(
            result.params.named_tensors(trainable_only=True),
            fresh.named_tensors(trainable_only=True),
        ):
            np.testing.assert_array_equal(arr, arr0, err_msg=name)

    def test_deterministic_given_seed(self, tiny_dataset):
        cfg = TrainConfig(epochs=2, batch_size=4, seed=9)
        a = train(tiny_dataset, cfg)
        b = train(tiny_dataset, cfg)
        for (name, ta, _), (_, tb, _) in zip(
            a.params.named_tensors(), b.params.named_tensors()
        ):
            np.testing.assert_array_equal(ta, tb, err_msg=name)
        assert a.log == b.log

    def test_log_schema(self, tiny_dataset):
        result = train(tiny_dataset, TrainConfig(epochs=2, batch_size=4, seed=1))
        assert len(result.log) == 2
        for entry in result.log:
            assert set(entry) == {"epoch", "train_loss", "eval_loss", "eval_r2"}

    def test_train_loss_decreases_on_average(self, tiny_dataset):
        result = train(tiny_dataset, TrainConfig(epochs=8, batch_size=4, seed=2))
        first, last = result.log[0]["train_loss"], result.log[-1]["train_loss"]
        assert last < first

    def test_baseline_model_trains(self, tiny_dataset):
        result = train(
            tiny_dataset, TrainConfig(epochs=2, batch_size=4, seed=1, model="baseline")
        )
        assert result.norm_stats is None
        assert len(result.log) == 2

    def test_requires_two_train_pipelines(self, tiny_dataset):
        one_pipeline = [r for r in tiny_dataset if r.pipeline_id == tiny_dataset[0].pipeline_id]
        with pytest.raises(DataFormatError):
            train(one_pipeline, TrainConfig(epochs=1))

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            TrainConfig(epochs=0).validate()
        with pytest.raises(ConfigError):
            TrainConfig(model="tree").validate()
