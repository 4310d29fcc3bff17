"""
Training and evaluating the performance model
==============================================

Trains the graph model and the feed-forward baseline on a small synthetic
dataset, then compares percentage error, R-squared, and pairwise schedule
ranking on the held-out pipelines. Desk-scale settings keep this under a
minute; see the acceptance suite for the full-scale run.
"""
import os
import tempfile

import numpy as np

from schedperf.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from schedperf.dataset import generate_dataset, read_dataset, split_samples
from schedperf.evaluation import evaluate, predict_records
from schedperf.training import TrainConfig, compute_loss, train

###############################################################################
# The training objective
# ----------------------
# Each sample's loss is rel_error x quality x precision: accurate
# predictions matter most on fast, cleanly measured schedules.

terms = compute_loss(yhat=12.0, measurements=np.full(10, 10.0), best_runtime=5.0)
print("loss terms for (prediction 12, measurements 10x10, pipeline best 5):")
print(f"  rel_error={terms.rel_error}, quality={terms.quality_weight}, "
      f"precision={terms.precision_weight}, loss={terms.value}")

###############################################################################
# Train both models
# -----------------

work = tempfile.mkdtemp()
data = os.path.join(work, "demo.jsonl")
generate_dataset(data, num_pipelines=30, schedules_per_pipeline=12, seed=5)
_, records = read_dataset(data)

gcn = train(records, TrainConfig(epochs=12, batch_size=16, seed=0))
mlp = train(records, TrainConfig(epochs=12, batch_size=16, seed=0, model="baseline"))
print(f"\ngcn best epoch {gcn.best_epoch}; final log entry: {gcn.log[-1]}")

###############################################################################
# Checkpoints round-trip through a deterministic container
# ---------------------------------------------------------

ckpt_path = os.path.join(work, "gcn.ckpt")
save_checkpoint(ckpt_path, gcn.params, gcn.norm_stats, config_hash="demo")
ckpt = load_checkpoint(ckpt_path)

###############################################################################
# Side-by-side evaluation
# -----------------------

baseline_ckpt = Checkpoint(kind="baseline", params=mlp.params, norm_stats=None, config_hash="demo")
report = evaluate(ckpt, records, split="eval", baseline=baseline_ckpt)
m, b = report.metrics, report.baseline_metrics
print(f"\n{'':14}{'graph model':>14}{'baseline':>12}")
print(f"{'mean % err':14}{m.mean_pct_error:>14.1f}{b.mean_pct_error:>12.1f}")
print(f"{'max % err':14}{m.max_pct_error:>14.1f}{b.max_pct_error:>12.1f}")
print(f"{'R^2':14}{m.r_squared:>14.3f}{b.r_squared:>12.3f}")
print(f"{'ranking %':14}{report.ranking.average_pct_correct:>14.1f}"
      f"{report.baseline_ranking.average_pct_correct:>12.1f}")

###############################################################################
# Per-schedule predictions
# ------------------------

ev = split_samples(records, "eval")[:5]
for rec, yhat in zip(ev, predict_records(ckpt, ev)):
    print(f"{rec.schedule_id}: predicted {yhat:8.2f} ms, measured {rec.mean_runtime:8.2f} ms")
