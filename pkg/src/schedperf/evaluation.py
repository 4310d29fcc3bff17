"""Prediction-accuracy metrics and the pairwise schedule-ranking harness.

Measured truth is always the mean of a sample's N run-time measurements.
Ranking groups schedules by pipeline: a pair counts as correct when the
predicted ordering matches the measured ordering; measured ties are
discarded from the denominator and predicted ties count as incorrect.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass

import numpy as np

from .checkpoint import Checkpoint
from .dataset import SampleRecord, group_by_pipeline, split_samples
from .errors import DataFormatError, IncompatibleArtifactError
from .model import (
    BaselineParams,
    GraphBatch,
    ModelParams,
    baseline_forward,
    forward,
    pool_raw_features,
)

logger = logging.getLogger(__name__)

REPORT_FORMAT_VERSION = "1"


@dataclass(frozen=True)
class Metrics:
    mean_pct_error: float
    max_pct_error: float
    r_squared: float
    n_samples: int


@dataclass(frozen=True)
class GroupRanking:
    group_id: str
    n_pairs: int
    n_correct: int
    pct_correct: float


@dataclass(frozen=True)
class RankingReport:
    groups: tuple[GroupRanking, ...]
    average_pct_correct: float


def percent_errors(predictions: np.ndarray, truths: np.ndarray) -> tuple[float, float]:
    """Mean and max of 100 * |yhat - ybar| / ybar."""
    predictions = np.asarray(predictions, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if predictions.shape != truths.shape or predictions.size == 0:
        raise DataFormatError(
            f"predictions {predictions.shape} and truths {truths.shape} must match and be non-empty"
        )
    if np.any(truths <= 0):
        raise DataFormatError("truths must be strictly positive")
    errors = 100.0 * np.abs(predictions - truths) / truths
    return float(errors.mean()), float(errors.max())


def r_squared(predictions: np.ndarray, truths: np.ndarray) -> float:
    """Coefficient of determination, 1 - SS_res / SS_tot."""
    predictions = np.asarray(predictions, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if predictions.shape != truths.shape or predictions.size < 2:
        raise DataFormatError("r_squared needs two equally sized arrays of length >= 2")
    ss_tot = float(((truths - truths.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise DataFormatError("r_squared undefined: truths have zero variance")
    ss_res = float(((truths - predictions) ** 2).sum())
    return 1.0 - ss_res / ss_tot


def pairwise_ranking(
    groups: dict[str, list[tuple[float, float]]]
) -> RankingReport:
    """Fraction of within-group (prediction, truth) pairs ordered consistently."""
    out: list[GroupRanking] = []
    for group_id in sorted(groups):
        pairs = groups[group_id]
        if len(pairs) < 2:
            logger.warning("ranking group %s has < 2 schedules; skipped", group_id)
            continue
        yhat = np.array([p[0] for p in pairs])
        ybar = np.array([p[1] for p in pairs])
        n_pairs = 0
        n_correct = 0
        for a in range(len(pairs)):
            dt = ybar[a] - ybar[a + 1 :]
            dp = yhat[a] - yhat[a + 1 :]
            keep = dt != 0.0
            n_pairs += int(keep.sum())
            n_correct += int((np.sign(dp[keep]) == np.sign(dt[keep])).sum())
        pct = 100.0 * n_correct / n_pairs if n_pairs else 0.0
        out.append(GroupRanking(group_id, n_pairs, n_correct, pct))
    if not out:
        raise DataFormatError("pairwise_ranking needs at least one group with >= 2 schedules")
    avg = float(np.mean([g.pct_correct for g in out]))
    return RankingReport(groups=tuple(out), average_pct_correct=avg)


# ---------------------------------------------------------------------------
# Checkpoint-driven evaluation
# ---------------------------------------------------------------------------


def predict_records(ckpt: Checkpoint, records: list[SampleRecord], chunk: int = 256) -> np.ndarray:
    """Eval-mode predictions for a list of samples."""
    if ckpt.kind == "gcn":
        params = ckpt.params
        assert isinstance(params, ModelParams)
        stats = ckpt.norm_stats
        if stats is None:
            raise IncompatibleArtifactError("gcn checkpoint lacks normalization statistics")
        out = []
        for at in range(0, len(records), chunk):
            part = records[at : at + chunk]
            batch = GraphBatch.build(
                [r.graph for r in part],
                [stats.normalize_invariant(r.invariant) for r in part],
                [stats.normalize_dependent(r.dependent) for r in part],
            )
            yhat, _ = forward(batch, params, mode="eval")
            out.append(yhat)
        return np.concatenate(out) if out else np.zeros(0)
    params = ckpt.params
    assert isinstance(params, BaselineParams)
    pooled = np.vstack([pool_raw_features(r.invariant, r.dependent) for r in records])
    x = (pooled - params.pooled_mean) / params.pooled_std
    yhat, _ = baseline_forward(x, params)
    return yhat


@dataclass(frozen=True)
class EvalReport:
    split: str
    metrics: Metrics
    ranking: RankingReport
    baseline_metrics: Metrics | None = None
    baseline_ranking: RankingReport | None = None

    def to_json(self) -> str:
        payload = {
            "format_version": REPORT_FORMAT_VERSION,
            "split": self.split,
            "metrics": asdict(self.metrics),
            "ranking": asdict(self.ranking),
        }
        if self.baseline_metrics is not None:
            payload["baseline_metrics"] = asdict(self.baseline_metrics)
        if self.baseline_ranking is not None:
            payload["baseline_ranking"] = asdict(self.baseline_ranking)
        return json.dumps(payload, sort_keys=True, indent=2)


def _metrics_and_ranking(
    records: list[SampleRecord], predictions: np.ndarray
) -> tuple[Metrics, RankingReport]:
    truths = np.array([r.mean_runtime for r in records])
    mean_err, max_err = percent_errors(predictions, truths)
    r2 = r_squared(predictions, truths)
    groups: dict[str, list[tuple[float, float]]] = {}
    for rec, yhat, ybar in zip(records, predictions, truths):
        groups.setdefault(rec.pipeline_id, []).append((float(yhat), float(ybar)))
    ranking = pairwise_ranking(groups)
    return Metrics(mean_err, max_err, r2, len(records)), ranking


def evaluate(
    ckpt: Checkpoint,
    records: list[SampleRecord],
    split: str = "eval",
    baseline: Checkpoint | None = None,
) -> EvalReport:
    """Metrics plus per-pipeline ranking for one split, optionally vs a baseline."""
    selected = split_samples(records, split)
    if not selected:
        raise DataFormatError(f"no records in split {split!r}")
    metrics, ranking = _metrics_and_ranking(selected, predict_records(ckpt, selected))
    report = EvalReport(split=split, metrics=metrics, ranking=ranking)
    if baseline is not None:
        bmetrics, branking = _metrics_and_ranking(
            selected, predict_records(baseline, selected)
        )
        report = EvalReport(
            split=split, metrics=metrics, ranking=ranking,
            baseline_metrics=bmetrics, baseline_ranking=branking,
        )
    return report


def ranking_for_groups(records: list[SampleRecord], predictions: np.ndarray) -> RankingReport:
    """RankingReport over all provided records grouped by pipeline id."""
    groups: dict[str, list[tuple[float, float]]] = {}
    for rec, yhat in zip(records, predictions):
        groups.setdefault(rec.pipeline_id, []).append((float(yhat), rec.mean_runtime))
    return pairwise_ranking(groups)


__all__ = [
    "Metrics", "GroupRanking", "RankingReport", "EvalReport",
    "percent_errors", "r_squared", "pairwise_ranking",
    "predict_records", "evaluate", "ranking_for_groups",
    "group_by_pipeline",
]
