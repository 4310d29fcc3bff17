"""Loss, Adagrad optimizer, and the training loop.

The per-sample loss is the product of three terms: the absolute relative
error of the prediction against the mean measured run time, a quality
weight (best mean run time of the pipeline divided by this schedule's mean,
so accurate predictions matter most on good schedules), and a precision
weight (inverse standard deviation of the measurements, floored at a
relative epsilon so noise-free oracles stay finite).

The relative-error term defaults to |yhat/ybar - 1|. A literal variant
|yhat/ybar| is available behind ``xi_literal`` for comparison experiments;
it is minimized by predicting zero, which is why it is not the default.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dataset import SampleRecord, best_runtime_by_pipeline, split_samples
from .errors import ConfigError, DataFormatError
from .evaluation import r_squared
from .features import NormStats, fit_norm_stats
from .graph import normalize_adjacency
from .model import (
    BaselineParams,
    GraphBatch,
    ModelParams,
    backward,
    baseline_backward,
    baseline_forward,
    forward,
    init_baseline_params,
    init_model_params,
    pool_raw_features,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossTerms:
    """The three loss factors and their product for one sample."""

    rel_error: float         # |yhat/ybar - 1| (or |yhat/ybar| in literal mode)
    quality_weight: float    # best pipeline run time / this schedule's mean, in (0, 1]
    precision_weight: float  # 1 / max(std of measurements, relative floor)
    value: float


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.0075
    weight_decay: float = 0.0001
    epochs: int = 60
    batch_size: int = 32
    seed: int = 0
    beta_epsilon: float = 1e-3
    adagrad_epsilon: float = 1e-10
    xi_literal: bool = False
    model: str = "gcn"  # "gcn" | "baseline"

    def validate(self) -> None:
        for name in ("learning_rate", "weight_decay", "beta_epsilon", "adagrad_epsilon"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        for name in ("epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.model not in ("gcn", "baseline"):
            raise ConfigError(f"model must be 'gcn' or 'baseline', got {self.model!r}")


def compute_loss(
    yhat: float,
    measurements: np.ndarray,
    best_runtime: float,
    beta_epsilon: float = 1e-3,
    xi_literal: bool = False,
) -> LossTerms:
    """Loss terms for one prediction against one sample's measurements."""
    measurements = np.asarray(measurements, dtype=np.float64)
    if measurements.size == 0 or np.any(measurements <= 0):
        raise DataFormatError("measurements must be non-empty and strictly positive")
    ybar = float(measurements.mean())
    ratio = yhat / ybar
    rel = abs(ratio) if xi_literal else abs(ratio - 1.0)
    quality = best_runtime / ybar
    precision = 1.0 / max(float(measurements.std()), beta_epsilon * ybar)
    return LossTerms(
        rel_error=rel,
        quality_weight=quality,
        precision_weight=precision,
        value=rel * quality * precision,
    )


def _loss_batch(
    yhat: np.ndarray,
    ybar: np.ndarray,
    std: np.ndarray,
    best: np.ndarray,
    beta_epsilon: float,
    xi_literal: bool,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized per-sample losses and d(loss)/d(yhat)."""
    ratio = yhat / ybar
    weight = (best / ybar) / np.maximum(std, beta_epsilon * ybar)
    if xi_literal:
        losses = np.abs(ratio) * weight
        dyhat = np.sign(ratio) * weight / ybar
    else:
        losses = np.abs(ratio - 1.0) * weight
        dyhat = np.sign(ratio - 1.0) * weight / ybar
    return losses, dyhat


# ---------------------------------------------------------------------------
# Adagrad
# ---------------------------------------------------------------------------


@dataclass
class AdagradState:
    accumulators: dict[str, np.ndarray] = field(default_factory=dict)


def adagrad_step(
    params: ModelParams | BaselineParams,
    grads: dict[str, np.ndarray],
    state: AdagradState,
    config: TrainConfig,
) -> None:
    """In-place Adagrad update with L2-in-gradient weight decay.

    Decay applies to weight matrices only, never to biases or batch-norm
    parameters. Accumulators grow monotonically by the squared gradient.
    """
    for name, arr, decays in params.named_tensors(trainable_only=True):
        g = grads[name].reshape(arr.shape)
        if decays and config.weight_decay > 0.0:
            g = g + config.weight_decay * arr
        acc = state.accumulators.setdefault(name, np.zeros_like(arr))
        acc += g * g
        arr -= config.learning_rate * g / (np.sqrt(acc) + config.adagrad_epsilon)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    params: ModelParams | BaselineParams
    norm_stats: NormStats | None
    log: list[dict]
    best_epoch: int


@dataclass
class _Prepared:
    """Per-sample arrays shared by the train and eval passes."""

    records: list[SampleRecord]
    ybar: np.ndarray
    std: np.ndarray
    best: np.ndarray


def _prepare(records: list[SampleRecord], best_by_pipeline: dict[str, float]) -> _Prepared:
    ybar = np.array([r.mean_runtime for r in records])
    std = np.array([r.runtime_std for r in records])
    best = np.array([best_by_pipeline[r.pipeline_id] for r in records])
    return _Prepared(records=records, ybar=ybar, std=std, best=best)


def _fit_train_norm(train: list[SampleRecord]) -> NormStats:
    inv_rows = np.vstack([r.invariant for r in train])
    dep_rows = np.vstack([r.dependent for r in train])
    return fit_norm_stats(inv_rows, dep_rows)


class _GcnRunner:
    """Batch assembly + forward/backward for the graph model."""

    def __init__(self, stats: NormStats, seed: int):
        self.stats = stats
        self.params = init_model_params(seed)
        self._block_cache: dict[str, np.ndarray] = {}

    def _batch(self, records: list[SampleRecord]) -> GraphBatch:
        blocks = []
        for r in records:
            block = self._block_cache.get(r.pipeline_id)
            if block is None:
                block = normalize_adjacency(r.graph).matrix
                self._block_cache[r.pipeline_id] = block
            blocks.append(block)
        sizes = np.array([b.shape[0] for b in blocks], dtype=np.int64)
        starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        return GraphBatch(
            blocks=blocks,
            starts=starts,
            sizes=sizes,
            inv=self.stats.normalize_invariant(np.vstack([r.invariant for r in records])),
            dep=self.stats.normalize_dependent(np.vstack([r.dependent for r in records])),
        )

    def train_step(self, records: list[SampleRecord]) -> tuple[np.ndarray, object]:
        batch = self._batch(records)
        yhat, trace = forward(batch, self.params, mode="train")
        return yhat, trace

    def backward(self, trace, dyhat: np.ndarray) -> dict[str, np.ndarray]:
        return backward(trace, dyhat, self.params)

    def predict(self, records: list[SampleRecord], chunk: int = 256) -> np.ndarray:
        out = []
        for at in range(0, len(records), chunk):
            yhat, _ = forward(self._batch(records[at : at + chunk]), self.params, mode="eval")
            out.append(yhat)
        return np.concatenate(out) if out else np.zeros(0)


class _BaselineRunner:
    """Pooled-feature MLP with the same training interface."""

    def __init__(self, train: list[SampleRecord], seed: int):
        self.params = init_baseline_params(seed)
        pooled = np.vstack([pool_raw_features(r.invariant, r.dependent) for r in train])
        self.params.pooled_mean = pooled.mean(axis=0)
        self.params.pooled_std = np.maximum(pooled.std(axis=0), 1e-6)
        self._cache: dict[int, np.ndarray] = {}

    def _pooled(self, records: list[SampleRecord]) -> np.ndarray:
        rows = [
            self._cache.setdefault(id(r), pool_raw_features(r.invariant, r.dependent))
            for r in records
        ]
        return (np.vstack(rows) - self.params.pooled_mean) / self.params.pooled_std

    def train_step(self, records: list[SampleRecord]) -> tuple[np.ndarray, object]:
        return baseline_forward(self._pooled(records), self.params, want_trace=True)

    def backward(self, trace, dyhat: np.ndarray) -> dict[str, np.ndarray]:
        return baseline_backward(trace, dyhat, self.params)

    def predict(self, records: list[SampleRecord], chunk: int = 4096) -> np.ndarray:
        out = []
        for at in range(0, len(records), chunk):
            yhat, _ = baseline_forward(self._pooled(records[at : at + chunk]), self.params)
            out.append(yhat)
        return np.concatenate(out) if out else np.zeros(0)


def train(records: list[SampleRecord], config: TrainConfig) -> TrainResult:
    """Train on the 'train' split, select the best epoch by eval loss."""
    config.validate()
    train_recs = split_samples(records, "train")
    eval_recs = split_samples(records, "eval")
    if len({r.pipeline_id for r in train_recs}) < 2:
        raise DataFormatError("training requires at least 2 pipelines in the train split")

    best_by_pipeline = best_runtime_by_pipeline(records)
    tr = _prepare(train_recs, best_by_pipeline)
    ev = _prepare(eval_recs, best_by_pipeline) if eval_recs else None

    if config.model == "gcn":
        stats: NormStats | None = _fit_train_norm(train_recs)
        runner: _GcnRunner | _BaselineRunner = _GcnRunner(stats, config.seed)
    else:
        stats = None
        runner = _BaselineRunner(train_recs, config.seed)

    opt_state = AdagradState()
    shuffle_rng = np.random.default_rng(config.seed)
    log: list[dict] = []
    best_eval = np.inf
    best_epoch = -1
    best_params = runner.params.copy()

    n = len(train_recs)
    for epoch in range(config.epochs):
        perm = shuffle_rng.permutation(n)
        epoch_losses: list[float] = []
        for at in range(0, n, config.batch_size):
            idx = perm[at : at + config.batch_size]
            batch_recs = [train_recs[i] for i in idx]
            yhat, trace = runner.train_step(batch_recs)
            losses, dyhat = _loss_batch(
                yhat, tr.ybar[idx], tr.std[idx], tr.best[idx],
                config.beta_epsilon, config.xi_literal,
            )
            grads = runner.backward(trace, dyhat / len(idx))
            adagrad_step(runner.params, grads, opt_state, config)
            epoch_losses.append(float(losses.mean()))

        entry: dict = {"epoch": epoch, "train_loss": float(np.mean(epoch_losses))}
        if ev is not None:
            eval_yhat = runner.predict(ev.records)
            eval_losses, _ = _loss_batch(
                eval_yhat, ev.ybar, ev.std, ev.best, config.beta_epsilon, config.xi_literal
            )
            entry["eval_loss"] = float(eval_losses.mean())
            entry["eval_r2"] = float(r_squared(eval_yhat, ev.ybar))
            selection = entry["eval_loss"]
        else:
            selection = entry["train_loss"]
        log.append(entry)
        logger.info("epoch %d: %s", epoch, entry)

        if selection < best_eval:
            best_eval = selection
            best_epoch = epoch
            best_params = runner.params.copy()

    return TrainResult(params=best_params, norm_stats=stats, log=log, best_epoch=best_epoch)
